use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment accumulators for a fixed, ordered list of parameter tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    first: Vec<DenseMatrix>,
    second: Vec<DenseMatrix>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[&DenseMatrix]) -> Self {
        let zeros: Vec<DenseMatrix> =
            params.iter().map(|p| DenseMatrix::zeros(p.rows(), p.cols())).collect();
        Self { first: zeros.clone(), second: zeros, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Parameters are left untouched when any
    /// gradient entry is non-finite.
    pub fn step(&mut self, params: &mut [&mut DenseMatrix], grads: &[DenseMatrix], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Shape {
                op: "adam_step",
                detail: format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.first.len()
                ),
            });
        }
        if lr.is_nan() || lr <= 0.0 {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            p.same_shape("adam_step", g)?;
            self.first[i].same_shape("adam_step", g)?;
            if !g.is_finite() {
                return Err(Error::Diverged {
                    epoch: self.step as usize,
                    detail: format!("non-finite gradient in parameter slot {i}"),
                });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        for ((p, g), (m, v)) in
            params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let p = p.as_mut_slice();
            let g = g.as_slice();
            let m = m.as_mut_slice();
            let v = v.as_mut_slice();
            for j in 0..p.len() {
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * g[j];
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = DenseMatrix::filled(2, 2, 0.3);
        let before = p.clone();
        let mut st = AdamState::new(&[&p]);
        st.step(&mut [&mut p], &[DenseMatrix::zeros(2, 2)], 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_unit_gradient() {
        let mut p = DenseMatrix::scalar(1.0);
        let mut st = AdamState::new(&[&p]);
        st.step(&mut [&mut p], &[DenseMatrix::scalar(1.0)], 1e-3).unwrap();
        // m_hat = v_hat = 1 after bias correction
        let expected = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((p.item() - expected).abs() < 1e-15);
        assert!((1.0 - p.item() - 9.99999e-4).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let g = DenseMatrix::from_rows(&[vec![0.3, -1.2], vec![2.0, 1e-4]]);
        let run = || {
            let mut p = DenseMatrix::filled(2, 2, 0.5);
            let mut st = AdamState::new(&[&p]);
            for _ in 0..3 {
                st.step(&mut [&mut p], std::slice::from_ref(&g), 1e-2).unwrap();
            }
            (p, st)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a.as_slice(), b.as_slice());
        assert_eq!(sa, sb);
    }

    #[test]
    fn nan_gradient_rejected() {
        let mut p = DenseMatrix::scalar(1.0);
        let mut st = AdamState::new(&[&p]);
        let err = st.step(&mut [&mut p], &[DenseMatrix::scalar(f64::NAN)], 1e-3).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
        assert_eq!(p.item(), 1.0);
        assert_eq!(st.step_count(), 0);
    }
}
