use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Teacher,
    Student,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Teacher => "teacher",
            Role::Student => "student",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "teacher" => Ok(Role::Teacher),
            "student" => Ok(Role::Student),
            other => Err(Error::Config(format!("unknown role {other:?}"))),
        }
    }
}

/// Hyperparameters of one evolving-attention GCN chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Number of previous snapshots chained before the current one (`l`).
    pub window: usize,
    /// Attention heads per transition (`h`).
    pub heads: usize,
    /// First-layer width (`d1`).
    pub hidden_dim: usize,
    /// Embedding width (`d2`).
    pub embed_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Weight of the student's own reconstruction term in the distillation
    /// loss. Ignored for teachers.
    pub gamma: f64,
    pub seed: u64,
    pub role: Role,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::teacher()
    }
}

impl ModelConfig {
    /// Desk-scale teacher: l=3, h=3, d1=32, d2=16, Adam at 1e-3 for 200 epochs.
    pub fn teacher() -> Self {
        Self {
            window: 3,
            heads: 3,
            hidden_dim: 32,
            embed_dim: 16,
            learning_rate: 1e-3,
            epochs: 200,
            gamma: 0.5,
            seed: 0,
            role: Role::Teacher,
        }
    }

    /// Compressed student: a single head and narrow layers.
    pub fn student() -> Self {
        Self { heads: 1, hidden_dim: 8, embed_dim: 4, role: Role::Student, ..Self::teacher() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.heads == 0 {
            return fail("heads must be >= 1".into());
        }
        if self.embed_dim == 0 || self.embed_dim > self.hidden_dim {
            return fail(format!(
                "need 0 < embed_dim <= hidden_dim, got {} and {}",
                self.embed_dim, self.hidden_dim
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        Ok(())
    }
}
