//! End-to-end reverse-mode gradients against central finite differences.

mod common;

use common::{rand_m, random_window, registry, rng};
use evograph::teacher::{loss_and_gradients, objective_value, soft_adjacency, Objective, PreparedWindow};
use evograph::{EgadModel, ModelConfig, Role};
use proptest::prelude::*;

const STEP: f64 = 1e-5;

/// Worst relative error over every coordinate, plus the largest gradient.
fn check(model: &EgadModel, window: &PreparedWindow, obj: Objective<'_>) -> (f64, f64) {
    check_with_floor(model, window, obj, 0.0)
}

/// Like [`check`], but differences below `floor` count as agreement: a
/// central difference at this step cannot resolve gradients that small.
fn check_with_floor(model: &EgadModel, window: &PreparedWindow, obj: Objective<'_>, floor: f64) -> (f64, f64) {
    let (_, grads) = loss_and_gradients(model, window, obj).unwrap();
    let mut worst = 0.0f64;
    let mut largest = 0.0f64;
    let mut probe = model.clone();
    for (pi, g) in grads.iter().enumerate() {
        for idx in 0..g.len() {
            let orig = model.params()[pi].as_slice()[idx];
            probe.params_mut()[pi].as_mut_slice()[idx] = orig + STEP;
            let up = objective_value(&probe, window, obj).unwrap();
            probe.params_mut()[pi].as_mut_slice()[idx] = orig - STEP;
            let down = objective_value(&probe, window, obj).unwrap();
            probe.params_mut()[pi].as_mut_slice()[idx] = orig;
            let fd = (up - down) / (2.0 * STEP);
            let an = g.as_slice()[idx];
            let scale = an.abs().max(fd.abs());
            if scale > 0.0 && (an - fd).abs() > floor {
                worst = worst.max((an - fd).abs() / scale);
            }
            largest = largest.max(an.abs());
        }
    }
    (worst, largest)
}

fn instance(seed: u64, cfg: ModelConfig, n: usize) -> (EgadModel, PreparedWindow, usize) {
    let mut r = rng(seed);
    let window = random_window(&mut r, n, cfg.window + 1, n * 2 / 3);
    let last = window.last().unwrap().n();
    let mut model = EgadModel::new(cfg, registry(n)).unwrap();
    for p in model.params_mut() {
        let (rows, cols) = p.shape();
        *p = rand_m(&mut r, rows, cols, 1.0);
    }
    (model, PreparedWindow::new(&window).unwrap(), last)
}

#[test]
fn teacher_loss_gradients_on_pinned_shape() {
    let cfg = ModelConfig { window: 3, heads: 2, hidden_dim: 8, embed_dim: 4, ..ModelConfig::teacher() };
    let (model, window, _) = instance(7, cfg, 12);
    let (worst, largest) = check(&model, &window, Objective::Reconstruction);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
    assert!(largest > 1e-3);
}

#[test]
fn distillation_gradients_wrt_student_leaves() {
    let cfg = ModelConfig { window: 2, heads: 1, hidden_dim: 6, embed_dim: 3, role: Role::Student, ..ModelConfig::student() };
    let (model, window, last) = instance(8, cfg, 10);
    let soft = soft_adjacency(&rand_m(&mut rng(9), last, 5, 1.0));
    for gamma in [0.0, 0.3, 0.5, 1.0] {
        let (worst, _) = check(&model, &window, Objective::Distillation { soft_targets: &soft, gamma });
        assert!(worst < 1e-4, "gamma {gamma}: worst relative error {worst:e}");
    }
}

#[test]
fn gradients_are_bit_deterministic() {
    let (model, window, _) = instance(3, ModelConfig { window: 2, heads: 2, hidden_dim: 6, embed_dim: 3, ..ModelConfig::teacher() }, 9);
    let a = loss_and_gradients(&model, &window, Objective::Reconstruction).unwrap();
    let b = loss_and_gradients(&model, &window, Objective::Reconstruction).unwrap();
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    for (x, y) in a.1.iter().zip(&b.1) {
        assert!(x.as_slice().iter().zip(y.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_shapes_pass_finite_differences(
        seed in any::<u64>(),
        l in 0usize..3,
        h in 1usize..3,
        d2 in 1usize..4,
        n in 3usize..9,
    ) {
        let cfg = ModelConfig { window: l, heads: h, hidden_dim: 4, embed_dim: d2, ..ModelConfig::teacher() };
        let (model, window, _) = instance(seed, cfg, n);
        let (worst, _) = check_with_floor(&model, &window, Objective::Reconstruction, 1e-8);
        prop_assert!(worst < 1e-4, "worst relative error {worst:e}");
    }
}
