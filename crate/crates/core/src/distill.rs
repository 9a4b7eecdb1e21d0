//! Teacher-to-student distillation.
//!
//! The student minimizes `(1 - gamma) * L_T + gamma * L_S`, where `L_S` is
//! its own reconstruction error on the last snapshot and `L_T` is the RMS
//! deviation of its soft reconstruction `sigmoid(Z_S Z_S^T)` from the frozen
//! teacher's `sigmoid(Z_T Z_T^T)`. Comparing reconstructions rather than raw
//! embeddings lets the two models use different embedding widths.

use crate::config::{ModelConfig, Role};
use crate::error::{shape_err, Error, Result};
use crate::gcn::Embeddings;
use crate::graph::SnapshotGraph;
use crate::matrix::DenseMatrix;
use crate::teacher::{fit, soft_adjacency, EgadModel, Objective, PreparedWindow, TrainedModel};

/// Mean squared row norm of the student's embeddings when distillation
/// starts. The student's W2 is rescaled to reach it: from the small default
/// scale the narrow single-head student barely moves in 200 epochs.
pub const STUDENT_START_SCALE: f64 = 1.0;

/// Frozen teacher plus the student's configuration.
#[derive(Clone, Debug)]
pub struct DistillationBundle {
    teacher: EgadModel,
    teacher_embeddings: Embeddings,
    soft_targets: DenseMatrix,
    pub student_cfg: ModelConfig,
}

impl DistillationBundle {
    pub fn new(teacher: EgadModel, teacher_embeddings: Embeddings, student_cfg: ModelConfig) -> Result<Self> {
        student_cfg.validate()?;
        teacher.validate()?;
        if student_cfg.role != Role::Student {
            return Err(Error::Config(format!("student config has role {}", student_cfg.role)));
        }
        if student_cfg.window != teacher.config.window {
            return Err(Error::Config(format!(
                "student window {} differs from teacher window {}",
                student_cfg.window, teacher.config.window
            )));
        }
        let soft_targets = soft_adjacency(&teacher_embeddings.z);
        Ok(Self { teacher, teacher_embeddings, soft_targets, student_cfg })
    }

    /// Builds the bundle from a teacher checkpoint, recomputing its
    /// embeddings on `window`.
    pub fn from_teacher(teacher: EgadModel, window: &[SnapshotGraph], student_cfg: ModelConfig) -> Result<Self> {
        let prepared = PreparedWindow::new(window)?;
        if prepared.len() != teacher.config.window + 1 {
            return Err(Error::Config(format!(
                "window of {} snapshots does not fit teacher with l={}",
                prepared.len(),
                teacher.config.window
            )));
        }
        let z = teacher.embed(&prepared)?;
        Self::new(teacher, z, student_cfg)
    }

    pub fn teacher(&self) -> &EgadModel {
        &self.teacher
    }

    pub fn teacher_embeddings(&self) -> &Embeddings {
        &self.teacher_embeddings
    }

    pub fn gamma(&self) -> f64 {
        self.student_cfg.gamma
    }

    /// Cached `sigmoid(Z_T Z_T^T)`.
    pub fn soft_targets(&self) -> &DenseMatrix {
        &self.soft_targets
    }
}

/// Untracked distillation loss for fixed embeddings.
pub fn distillation_loss(z_s: &DenseMatrix, z_t: &DenseMatrix, g: &SnapshotGraph, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    if z_s.rows() != g.n() || z_t.rows() != g.n() {
        return shape_err(
            "distillation_loss",
            format!("student {} rows, teacher {} rows, {} nodes", z_s.rows(), z_t.rows(), g.n()),
        );
    }
    let s = soft_adjacency(z_s);
    let t = soft_adjacency(z_t);
    let a = g.dense_adjacency();
    let rms = |x: &DenseMatrix, y: &DenseMatrix| -> f64 {
        let ss: f64 = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q) * (p - q)).sum();
        (ss / x.len() as f64).sqrt()
    };
    let teacher_term = rms(&s, &t);
    let own = rms(&s, &a);
    Ok((1.0 - gamma) * teacher_term + gamma * own)
}

/// Trains the student on `window`, which must span the same snapshots the
/// teacher embeddings were computed on.
pub fn distill_student(bundle: &DistillationBundle, window: &[SnapshotGraph]) -> Result<TrainedModel> {
    let prepared = PreparedWindow::new(window)?;
    if prepared.last_nodes() != bundle.teacher_embeddings.nodes.as_slice() {
        return Err(Error::Config(
            "teacher embeddings do not cover the window's last snapshot".into(),
        ));
    }
    if prepared.len() != bundle.student_cfg.window + 1 {
        return Err(Error::Config(format!(
            "window of {} snapshots for l={}",
            prepared.len(),
            bundle.student_cfg.window
        )));
    }
    let mut student = EgadModel::new(bundle.student_cfg.clone(), bundle.teacher.registry.clone())?;
    student.calibrate_to(&prepared, STUDENT_START_SCALE)?;
    fit(
        student,
        &prepared,
        Objective::Distillation { soft_targets: &bundle.soft_targets, gamma: bundle.gamma() },
    )
}
