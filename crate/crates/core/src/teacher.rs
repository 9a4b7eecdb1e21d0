//! The evolving chain of `l + 1` GCNs and its training loop.
//!
//! The first GCN of the window owns a free first-layer matrix over every
//! node of the event. Each later GCN derives its first layer from the
//! previous one through attention, so only the initial `W1`, the per-GCN
//! `W2` and the per-transition attention heads are trainable. The loss is
//! taken on the last snapshot only.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::attention::{evolve_on, AttentionContext, AttentionHeadParams, TransitionParams};
use crate::config::{ModelConfig, Role};
use crate::error::{shape_err, Error, Result};
use crate::gcn::{count_params, gcn_forward_on, identity_features, Embeddings, GcnInput};
use crate::graph::{normalize_adjacency, NodeRegistry, SnapshotGraph};
use crate::matrix::DenseMatrix;
use crate::tape::{sigmoid, Tape, Var};

/// Trainable state of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgadModel {
    pub config: ModelConfig,
    /// Free first-layer weights of the first GCN, `n_global x d1`.
    pub w1: DenseMatrix,
    /// Second-layer weights, one per GCN in the window.
    pub w2: Vec<DenseMatrix>,
    /// Attention parameters, one entry per transition.
    pub transitions: Vec<TransitionParams>,
    pub registry: NodeRegistry,
}

/// Half-width of the W2 initialization range.
pub const W2_RANGE: f64 = 1.0;

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, r: f64) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-r..=r)).collect();
    DenseMatrix::from_vec(rows, cols, data).expect("sized buffer")
}

impl EgadModel {
    /// Seeded initialization, drawn in the order W1 (rows by node id), W2,
    /// then (H, a) per head. W1, H and a are uniform in `[-1/sqrt(d1), 1/sqrt(d1)]`.
    /// W2 is uniform in `[-1, 1]`: each attention transition averages over a
    /// neighbourhood and shrinks the signal several-fold, and a small W2
    /// leaves `Z` near zero, where `sigmoid(Z Z^T)` sits at 0.5 and training
    /// stalls.
    pub fn new(config: ModelConfig, registry: NodeRegistry) -> Result<Self> {
        config.validate()?;
        if registry.is_empty() {
            return Err(Error::Config("model needs at least one registered node".into()));
        }
        let (d1, d2) = (config.hidden_dim, config.embed_dim);
        let r = 1.0 / (d1 as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w1 = uniform(&mut rng, registry.len(), d1, r);
        let w2 = (0..=config.window).map(|_| uniform(&mut rng, d1, d2, W2_RANGE)).collect();
        let transitions = (0..config.window)
            .map(|_| TransitionParams {
                heads: (0..config.heads)
                    .map(|_| AttentionHeadParams {
                        h: uniform(&mut rng, d1, d1, r),
                        a: uniform(&mut rng, 2 * d1, 1, r),
                    })
                    .collect(),
            })
            .collect();
        Ok(Self { config, w1, w2, transitions, registry })
    }

    pub fn n_global(&self) -> usize {
        self.registry.len()
    }

    /// Trainable tensors in a fixed order (W1, W2..., then H, a per head).
    pub fn params(&self) -> Vec<&DenseMatrix> {
        let mut out = vec![&self.w1];
        out.extend(self.w2.iter());
        for t in &self.transitions {
            for h in &t.heads {
                out.push(&h.h);
                out.push(&h.a);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut out = vec![&mut self.w1];
        out.extend(self.w2.iter_mut());
        for t in &mut self.transitions {
            for h in &mut t.heads {
                out.push(&mut h.h);
                out.push(&mut h.a);
            }
        }
        out
    }

    /// Names matching [`EgadModel::params`] order.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = vec!["w1".to_string()];
        out.extend((0..self.w2.len()).map(|j| format!("w2.{j}")));
        for (t, tr) in self.transitions.iter().enumerate() {
            for j in 0..tr.heads.len() {
                out.push(format!("h.{t}.{j}"));
                out.push(format!("a.{t}.{j}"));
            }
        }
        out
    }

    /// Scalar count of trainable entries, by enumeration.
    pub fn num_trainable(&self) -> u64 {
        self.params().iter().map(|p| p.len() as u64).sum()
    }

    /// Checks tensor shapes against the config.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let c = &self.config;
        let (d1, d2) = (c.hidden_dim, c.embed_dim);
        let bad = |what: String| shape_err::<()>("model", what);
        if self.w1.shape() != (self.registry.len(), d1) {
            return bad(format!("w1 {:?}, expected ({}, {d1})", self.w1.shape(), self.registry.len()));
        }
        if self.w2.len() != c.window + 1 || self.w2.iter().any(|w| w.shape() != (d1, d2)) {
            return bad(format!("expected {} w2 tensors of ({d1}, {d2})", c.window + 1));
        }
        if self.transitions.len() != c.window {
            return bad(format!("{} transitions for window {}", self.transitions.len(), c.window));
        }
        for t in &self.transitions {
            if t.heads.len() != c.heads
                || t.heads.iter().any(|h| h.h.shape() != (d1, d1) || h.a.shape() != (2 * d1, 1))
            {
                return bad(format!("transition heads do not match h={} d1={d1}", c.heads));
            }
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint of every parameter bit (FNV-1a).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params() {
            for v in p.as_slice() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Rescales each W2 so that the embeddings it produces on `window` have
    /// mean squared row norm `target`. Returns the applied factors. Snapshots
    /// whose embeddings are exactly zero are left alone.
    pub fn calibrate_to(&mut self, window: &PreparedWindow, target: f64) -> Result<Vec<f64>> {
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::Config(format!("calibration target must be positive, got {target}")));
        }
        check_window(self, window)?;
        let zs = {
            let mut tape = Tape::new();
            let leaves = Leaves::record(&mut tape, self, false);
            let zs = forward_on(&mut tape, &leaves, window)?;
            zs.iter().map(|&z| tape.value(z).clone()).collect::<Vec<_>>()
        };
        let mut factors = Vec::with_capacity(zs.len());
        for (w2, z) in self.w2.iter_mut().zip(&zs) {
            let ms = z.as_slice().iter().map(|v| v * v).sum::<f64>() / z.rows().max(1) as f64;
            let f = if ms > 0.0 { (target / ms).sqrt() } else { 1.0 };
            *w2 = w2.scale(f);
            factors.push(f);
        }
        Ok(factors)
    }

    /// Embeddings of the window's last snapshot, without recording gradients.
    pub fn embed(&self, window: &PreparedWindow) -> Result<Embeddings> {
        let mut tape = Tape::new();
        let leaves = Leaves::record(&mut tape, self, false);
        let zs = forward_on(&mut tape, &leaves, window)?;
        let last = window.snapshots.last().expect("non-empty window");
        Embeddings::new(tape.value(*zs.last().expect("non-empty")).clone(), last.nodes.clone())
    }
}

/// Constants derived once per window.
#[derive(Clone, Debug)]
pub struct PreparedWindow {
    pub(crate) snapshots: Vec<PreparedSnapshot>,
}

#[derive(Clone, Debug)]
pub(crate) struct PreparedSnapshot {
    pub(crate) a_hat: DenseMatrix,
    pub(crate) input: GcnInput,
    pub(crate) attention: AttentionContext,
    /// Dense adjacency with zero diagonal; the reconstruction target.
    pub(crate) target: DenseMatrix,
    pub(crate) nodes: Vec<crate::graph::NodeId>,
}

impl PreparedWindow {
    pub fn new(window: &[SnapshotGraph]) -> Result<Self> {
        if window.is_empty() {
            return Err(Error::Config("empty window".into()));
        }
        let snapshots = window
            .iter()
            .map(|g| {
                let input = identity_features(g);
                if matches!(input, GcnInput::Features(_)) {
                    return Err(Error::Config(format!(
                        "snapshot {} carries explicit features; the evolving chain needs identity features",
                        g.index()
                    )));
                }
                Ok(PreparedSnapshot {
                    a_hat: normalize_adjacency(g)?,
                    input,
                    attention: AttentionContext::new(g),
                    target: g.dense_adjacency(),
                    nodes: g.nodes().to_vec(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { snapshots })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Reconstruction target of the last snapshot.
    pub fn last_target(&self) -> &DenseMatrix {
        &self.snapshots.last().expect("non-empty").target
    }

    pub fn last_nodes(&self) -> &[crate::graph::NodeId] {
        &self.snapshots.last().expect("non-empty").nodes
    }

    fn max_node(&self) -> Option<usize> {
        self.snapshots.iter().filter_map(|s| s.nodes.last()).map(|n| n.0).max()
    }
}

pub(crate) struct Leaves {
    w1: Var,
    w2: Vec<Var>,
    heads: Vec<Vec<(Var, Var)>>,
}

impl Leaves {
    pub(crate) fn record(tape: &mut Tape, m: &EgadModel, trainable: bool) -> Self {
        let leaf = |t: &mut Tape, x: &DenseMatrix| {
            if trainable {
                t.param(x.clone())
            } else {
                t.constant(x.clone())
            }
        };
        let w1 = leaf(tape, &m.w1);
        let w2 = m.w2.iter().map(|w| leaf(tape, w)).collect();
        let heads = m
            .transitions
            .iter()
            .map(|t| t.heads.iter().map(|h| (leaf(tape, &h.h), leaf(tape, &h.a))).collect())
            .collect();
        Self { w1, w2, heads }
    }

    /// Leaves in [`EgadModel::params`] order.
    pub(crate) fn ordered(&self) -> Vec<Var> {
        let mut out = vec![self.w1];
        out.extend(&self.w2);
        for t in &self.heads {
            for &(h, a) in t {
                out.push(h);
                out.push(a);
            }
        }
        out
    }
}

/// Records the chain and returns `Z` for every snapshot of the window.
pub(crate) fn forward_on(tape: &mut Tape, leaves: &Leaves, window: &PreparedWindow) -> Result<Vec<Var>> {
    if window.len() != leaves.w2.len() {
        return Err(Error::Config(format!(
            "window has {} snapshots, model expects {}",
            window.len(),
            leaves.w2.len()
        )));
    }
    let mut w = leaves.w1;
    let mut zs = Vec::with_capacity(window.len());
    for (j, snap) in window.snapshots.iter().enumerate() {
        if j > 0 {
            w = evolve_on(tape, &snap.attention, &leaves.heads[j - 1], w)?;
        }
        let a = tape.constant(snap.a_hat.clone());
        zs.push(gcn_forward_on(tape, a, &snap.input, w, leaves.w2[j])?);
    }
    Ok(zs)
}

/// Records `sigmoid(Z Z^T)`.
pub(crate) fn soft_adjacency_on(tape: &mut Tape, z: Var) -> Result<Var> {
    let zt = tape.transpose(z);
    let g = tape.matmul(z, zt)?;
    Ok(tape.sigmoid(g))
}

/// Untracked `sigmoid(Z Z^T)`.
pub fn soft_adjacency(z: &DenseMatrix) -> DenseMatrix {
    z.matmul(&z.transpose()).expect("square product").map(sigmoid)
}

/// `sqrt(mean over all n_k^2 ordered pairs of (sigmoid(Z Z^T) - A)^2)`,
/// with a zero diagonal target.
pub fn reconstruction_loss(z: &DenseMatrix, g: &SnapshotGraph) -> Result<f64> {
    if z.rows() != g.n() {
        return shape_err("reconstruction_loss", format!("{} rows for {} nodes", z.rows(), g.n()));
    }
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let s = soft_adjacency_on(&mut tape, zv)?;
    let t = tape.constant(g.dense_adjacency());
    let l = tape.rms_diff(s, t)?;
    Ok(tape.value(l).item())
}

/// What the chain is trained to minimize.
#[derive(Clone, Copy, Debug)]
pub enum Objective<'a> {
    /// Reconstruct the last snapshot's adjacency.
    Reconstruction,
    /// `(1 - gamma) * rms(S - soft_targets) + gamma * reconstruction`.
    Distillation { soft_targets: &'a DenseMatrix, gamma: f64 },
}

fn objective_on(
    tape: &mut Tape,
    z: Var,
    target: &DenseMatrix,
    objective: Objective<'_>,
) -> Result<Var> {
    let s = soft_adjacency_on(tape, z)?;
    let t = tape.constant(target.clone());
    let own = tape.rms_diff(s, t)?;
    match objective {
        Objective::Reconstruction => Ok(own),
        Objective::Distillation { soft_targets, gamma } => {
            let st = tape.constant(soft_targets.clone());
            let dev = tape.rms_diff(s, st)?;
            let dev = tape.scale(dev, 1.0 - gamma);
            let own = tape.scale(own, gamma);
            tape.add(dev, own)
        }
    }
}

fn check_window(model: &EgadModel, window: &PreparedWindow) -> Result<()> {
    model.validate()?;
    if window.len() != model.config.window + 1 {
        return Err(Error::Config(format!(
            "window of {} snapshots for l={}",
            window.len(),
            model.config.window
        )));
    }
    if let Some(max) = window.max_node() {
        if max >= model.n_global() {
            return shape_err("model", format!("node {max} beyond W1 rows {}", model.n_global()));
        }
    }
    Ok(())
}

/// Loss value and gradients for every trainable tensor, in
/// [`EgadModel::params`] order.
pub fn loss_and_gradients(
    model: &EgadModel,
    window: &PreparedWindow,
    objective: Objective<'_>,
) -> Result<(f64, Vec<DenseMatrix>)> {
    check_window(model, window)?;
    let mut tape = Tape::new();
    let leaves = Leaves::record(&mut tape, model, true);
    let zs = forward_on(&mut tape, &leaves, window)?;
    let loss = objective_on(&mut tape, *zs.last().expect("non-empty"), window.last_target(), objective)?;
    let grads = tape.backward(loss)?;
    let g = leaves.ordered().into_iter().map(|v| grads.get_or_zeros(&tape, v)).collect();
    Ok((tape.value(loss).item(), g))
}

/// Loss value only.
pub fn objective_value(model: &EgadModel, window: &PreparedWindow, objective: Objective<'_>) -> Result<f64> {
    check_window(model, window)?;
    let mut tape = Tape::new();
    let leaves = Leaves::record(&mut tape, model, false);
    let zs = forward_on(&mut tape, &leaves, window)?;
    let loss = objective_on(&mut tape, *zs.last().expect("non-empty"), window.last_target(), objective)?;
    Ok(tape.value(loss).item())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Loss before the update of each epoch.
    pub losses: Vec<f64>,
    pub seconds: Vec<f64>,
    /// [`EgadModel::fingerprint`] of the final parameters.
    pub final_fingerprint: u64,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: EgadModel,
    pub trace: TrainingTrace,
    /// Embeddings of the window's last snapshot under the final parameters.
    pub embeddings: Embeddings,
}

/// Runs `model.config.epochs` full-batch Adam steps on `objective`.
pub fn fit(mut model: EgadModel, window: &PreparedWindow, objective: Objective<'_>) -> Result<TrainedModel> {
    check_window(&model, window)?;
    let epochs = model.config.epochs;
    let lr = model.config.learning_rate;
    let mut adam = AdamState::new(&model.params());
    let mut losses = Vec::with_capacity(epochs);
    let mut seconds = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let start = Instant::now();
        let (loss, grads) = loss_and_gradients(&model, window, objective)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, detail: format!("loss is {loss}") });
        }
        adam.step(&mut model.params_mut(), &grads, lr).map_err(|e| match e {
            Error::Diverged { detail, .. } => Error::Diverged { epoch, detail },
            other => other,
        })?;
        losses.push(loss);
        seconds.push(start.elapsed().as_secs_f64());
        log::trace!("epoch {epoch}: loss {loss:.6}");
    }
    let embeddings = model.embed(window)?;
    let trace = TrainingTrace { losses, seconds, final_fingerprint: model.fingerprint() };
    Ok(TrainedModel { model, trace, embeddings })
}

/// Trains a fresh chain on `window` (length `l + 1`) to reconstruct its last
/// snapshot.
pub fn train_teacher(window: &[SnapshotGraph], registry: &NodeRegistry, cfg: &ModelConfig) -> Result<TrainedModel> {
    if cfg.role != Role::Teacher {
        return Err(Error::Config(format!("train_teacher called with role {}", cfg.role)));
    }
    let prepared = PreparedWindow::new(window)?;
    let model = EgadModel::new(cfg.clone(), registry.clone())?;
    fit(model, &prepared, Objective::Reconstruction)
}

/// Continues training from existing parameters (e.g. the model of the
/// previous snapshot index) instead of a fresh initialization.
pub fn train_teacher_warm(window: &[SnapshotGraph], init: EgadModel) -> Result<TrainedModel> {
    let prepared = PreparedWindow::new(window)?;
    fit(init, &prepared, Objective::Reconstruction)
}

/// Parameter count predicted for `model`'s config and node count.
pub fn expected_params(model: &EgadModel) -> u64 {
    count_params(&model.config, model.n_global())
}
