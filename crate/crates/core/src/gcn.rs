//! Two-layer graph convolution, `Z = Â ReLU(Â X W1) W2`.
//!
//! Snapshots without node features use identity features, in which case
//! `X W1` is just the rows of the global first-layer matrix that belong to
//! the snapshot's nodes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{shape_err, Error, Result};
use crate::graph::{NodeId, SnapshotGraph};
use crate::matrix::DenseMatrix;
use crate::tape::{Tape, Var};

/// First- and second-layer weights of one GCN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    /// `n_global x d1` with identity features, `m x d1` otherwise.
    pub w1: DenseMatrix,
    /// `d1 x d2`.
    pub w2: DenseMatrix,
}

/// Row-aligned node embeddings for one snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embeddings {
    pub z: DenseMatrix,
    pub nodes: Vec<NodeId>,
}

impl Embeddings {
    pub fn new(z: DenseMatrix, nodes: Vec<NodeId>) -> Result<Self> {
        if z.rows() != nodes.len() {
            return shape_err("embeddings", format!("{} rows for {} nodes", z.rows(), nodes.len()));
        }
        Ok(Self { z, nodes })
    }

    pub fn dim(&self) -> usize {
        self.z.cols()
    }

    /// Embedding row of `id`, assuming `nodes` is sorted (as snapshot node
    /// lists are).
    pub fn get(&self, id: NodeId) -> Result<&[f64]> {
        self.nodes
            .binary_search(&id)
            .map(|i| self.z.row(i))
            .map_err(|_| Error::UnknownNode(id.0))
    }
}

/// How the first layer sees a snapshot's nodes.
#[derive(Clone, Debug)]
pub enum GcnInput {
    /// Identity features: select these rows of a global `W1`.
    Identity(Arc<Vec<usize>>),
    /// Explicit `n_k x m` features, multiplied into `W1`.
    Features(DenseMatrix),
}

/// Identity features for featureless snapshots; explicit features pass
/// through untouched.
pub fn identity_features(g: &SnapshotGraph) -> GcnInput {
    match g.features() {
        Some(x) => GcnInput::Features(x.clone()),
        None => GcnInput::Identity(Arc::new(g.node_indices())),
    }
}

/// Records the two-layer forward pass on `tape` and returns `Z`.
pub fn gcn_forward_on(tape: &mut Tape, a_hat: Var, input: &GcnInput, w1: Var, w2: Var) -> Result<Var> {
    let n = tape.value(a_hat).rows();
    let xw = match input {
        GcnInput::Identity(idx) => {
            if idx.len() != n {
                return shape_err("gcn_forward", format!("{} node ids for {n}x{n} adjacency", idx.len()));
            }
            tape.gather_rows(w1, idx.clone())?
        }
        GcnInput::Features(x) => {
            let x = tape.constant(x.clone());
            tape.matmul(x, w1)?
        }
    };
    let h = tape.matmul(a_hat, xw)?;
    let h = tape.relu(h);
    let h = tape.matmul(a_hat, h)?;
    tape.matmul(h, w2)
}

/// Untracked forward pass.
pub fn gcn_forward(a_hat: &DenseMatrix, input: &GcnInput, params: &GcnParams) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let a = tape.constant(a_hat.clone());
    let w1 = tape.constant(params.w1.clone());
    let w2 = tape.constant(params.w2.clone());
    let z = gcn_forward_on(&mut tape, a, input, w1, w2)?;
    Ok(tape.value(z).clone())
}

/// Trainable parameters of an evolving chain over `n_global` nodes: the
/// first snapshot's free `W1`, one `W2` per snapshot, and per-transition,
/// per-head attention `(H, a)`.
pub fn count_params(cfg: &ModelConfig, n_global: usize) -> u64 {
    let (n, l, h) = (n_global as u64, cfg.window as u64, cfg.heads as u64);
    let (d1, d2) = (cfg.hidden_dim as u64, cfg.embed_dim as u64);
    n * d1 + (l + 1) * d1 * d2 + l * h * (d1 * d1 + 2 * d1)
}
