//! Edge-weighted multi-head self-attention that carries first-layer GCN
//! weights from one snapshot to the next.
//!
//! For a node `u` of snapshot `k` and each neighbor `v` (including `u`
//! itself, with self-weight 1) the score is
//! `sigmoid(A_k(u,v) * a^T [H w(u) || H w(v)])`, softmax-normalized over the
//! neighborhood. Each head aggregates `sum_v alpha(u,v) H w(v)`; heads are
//! averaged and passed through ELU.
//! Rows of nodes absent from the snapshot are carried over unchanged.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::graph::SnapshotGraph;
use crate::matrix::DenseMatrix;
use crate::tape::{Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionHeadParams {
    /// Shared transform, `d1 x d1`.
    pub h: DenseMatrix,
    /// Scoring vector as a `2*d1 x 1` column.
    pub a: DenseMatrix,
}

impl AttentionHeadParams {
    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    fn check(&self) -> Result<()> {
        let d = self.h.rows();
        if self.h.cols() != d || self.a.shape() != (2 * d, 1) {
            return shape_err(
                "attention_head",
                format!("H {:?} with a {:?}", self.h.shape(), self.a.shape()),
            );
        }
        Ok(())
    }
}

/// The `h` heads used for one transition `k-1 -> k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionParams {
    pub heads: Vec<AttentionHeadParams>,
}

/// Per-snapshot constants for attention: neighborhood mask and weights.
#[derive(Clone, Debug)]
pub struct AttentionContext {
    pub(crate) idx: Arc<Vec<usize>>,
    pub(crate) weights: DenseMatrix,
    pub(crate) mask: Arc<Vec<bool>>,
}

impl AttentionContext {
    pub fn new(g: &SnapshotGraph) -> Self {
        let n = g.n();
        let mut weights = g.dense_adjacency();
        let mut mask = vec![false; n * n];
        for i in 0..n {
            weights.set(i, i, 1.0);
            mask[i * n + i] = true;
        }
        for e in g.edges() {
            let i = g.local_index(e.u).expect("validated endpoint");
            let j = g.local_index(e.v).expect("validated endpoint");
            mask[i * n + j] = true;
            mask[j * n + i] = true;
        }
        Self { idx: Arc::new(g.node_indices()), weights, mask: Arc::new(mask) }
    }

    pub fn n(&self) -> usize {
        self.idx.len()
    }
}

/// Records one head. `prev` holds the previous weights restricted to the
/// snapshot's nodes (`n_k x d1`). Returns `(alpha, z)`.
fn head_on(
    tape: &mut Tape,
    ctx: &AttentionContext,
    h: Var,
    a: Var,
    prev: Var,
) -> Result<(Var, Var)> {
    let d = tape.value(h).rows();
    let n = ctx.n();
    let ht = tape.transpose(h);
    let proj = tape.matmul(prev, ht)?;
    let a_src = tape.gather_rows(a, Arc::new((0..d).collect()))?;
    let a_dst = tape.gather_rows(a, Arc::new((d..2 * d).collect()))?;
    let s_src = tape.matmul(proj, a_src)?;
    let s_dst = tape.matmul(proj, a_dst)?;
    let ones_row = tape.constant(DenseMatrix::filled(1, n, 1.0));
    let ones_col = tape.constant(DenseMatrix::filled(n, 1, 1.0));
    let src = tape.matmul(s_src, ones_row)?;
    let s_dst_t = tape.transpose(s_dst);
    let dst = tape.matmul(ones_col, s_dst_t)?;
    let logits = tape.add(src, dst)?;
    let w = tape.constant(ctx.weights.clone());
    let weighted = tape.hadamard(w, logits)?;
    let scores = tape.sigmoid(weighted);
    let alpha = tape.masked_softmax_row(scores, ctx.mask.clone())?;
    let z = tape.matmul(alpha, proj)?;
    Ok((alpha, z))
}

/// Records one transition: returns the new global first-layer weights
/// (`n_global x d1`).
pub fn evolve_on(
    tape: &mut Tape,
    ctx: &AttentionContext,
    heads: &[(Var, Var)],
    w_prev: Var,
) -> Result<Var> {
    if heads.is_empty() {
        return shape_err("evolve_weights", "no attention heads");
    }
    let prev = tape.gather_rows(w_prev, ctx.idx.clone())?;
    let mut sum: Option<Var> = None;
    for &(h, a) in heads {
        let (_, z) = head_on(tape, ctx, h, a, prev)?;
        sum = Some(match sum {
            None => z,
            Some(s) => tape.add(s, z)?,
        });
    }
    let mean = tape.scale(sum.expect("non-empty heads"), 1.0 / heads.len() as f64);
    let act = tape.elu(mean);
    tape.overwrite_rows(w_prev, act, ctx.idx.clone())
}

fn check_prev(g: &SnapshotGraph, w_prev: &DenseMatrix, d: usize) -> Result<()> {
    if w_prev.cols() != d {
        return shape_err("attention", format!("W_prev has {} cols, head dim {d}", w_prev.cols()));
    }
    if let Some(last) = g.nodes().last() {
        if last.0 >= w_prev.rows() {
            return shape_err(
                "attention",
                format!("node {} has no row in W_prev ({} rows)", last.0, w_prev.rows()),
            );
        }
    }
    Ok(())
}

/// Attention coefficients in local node order; row `u` is zero outside
/// `u`'s neighborhood and sums to one inside it.
pub fn attention_coefficients(
    g: &SnapshotGraph,
    head: &AttentionHeadParams,
    w_prev: &DenseMatrix,
) -> Result<DenseMatrix> {
    head.check()?;
    check_prev(g, w_prev, head.dim())?;
    let ctx = AttentionContext::new(g);
    let mut tape = Tape::new();
    let h = tape.constant(head.h.clone());
    let a = tape.constant(head.a.clone());
    let w = tape.constant(w_prev.clone());
    let prev = tape.gather_rows(w, ctx.idx.clone())?;
    let (alpha, _) = head_on(&mut tape, &ctx, h, a, prev)?;
    Ok(tape.value(alpha).clone())
}

/// Untracked transition from `w_prev` to the snapshot's first-layer weights.
pub fn evolve_weights(
    g: &SnapshotGraph,
    t: &TransitionParams,
    w_prev: &DenseMatrix,
) -> Result<DenseMatrix> {
    let d = t.heads.first().map_or(0, AttentionHeadParams::dim);
    for head in &t.heads {
        head.check()?;
        if head.dim() != d {
            return shape_err("evolve_weights", "heads disagree on d1");
        }
    }
    check_prev(g, w_prev, d)?;
    let ctx = AttentionContext::new(g);
    let mut tape = Tape::new();
    let heads: Vec<(Var, Var)> = t
        .heads
        .iter()
        .map(|hp| (tape.constant(hp.h.clone()), tape.constant(hp.a.clone())))
        .collect();
    let w = tape.constant(w_prev.clone());
    let out = evolve_on(&mut tape, &ctx, &heads, w)?;
    Ok(tape.value(out).clone())
}
