//! Link-prediction evaluation.
//!
//! The target set is every connection present at `k + 1` that the training
//! window never observed, restricted to pairs whose endpoints both exist at
//! `k` (other viewers have no embedding). It is split 20/80 into validation
//! and test links; only the test links are scored.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::config::{ModelConfig, Role};
use crate::distill::{distill_student, DistillationBundle};
use crate::error::{Error, Result};
use crate::gcn::{count_params, Embeddings};
use crate::graph::{build_window, unobserved_links, EventSequence, Link, LinkSet, NodeId, SnapshotGraph, WEIGHT_EPSILON};
use crate::matrix::DenseMatrix;
use crate::tape::{sigmoid, Tape};
use crate::teacher::train_teacher;

/// Smallest target set that can be split.
pub const MIN_LINKS: usize = 5;
pub const DEFAULT_TRIALS: usize = 5;
const MLP_EPOCHS: usize = 200;
const MLP_LR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub validation: LinkSet,
    pub test: LinkSet,
}

/// Seeded 20/80 partition; validation receives `round(0.2 * |O|)` links.
pub fn split_links(o: &LinkSet, seed: u64) -> Result<Split> {
    if o.len() < MIN_LINKS {
        return Err(Error::InsufficientLinks { found: o.len(), required: MIN_LINKS });
    }
    let mut links = o.links().to_vec();
    links.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (0.2 * o.len() as f64).round() as usize;
    let test = links.split_off(n_val);
    Ok(Split { validation: LinkSet::from_links(links)?, test: LinkSet::from_links(test)? })
}

/// Unobserved links at `k + 1` whose endpoints are both present at `k`.
pub fn scorable_links(event: &EventSequence, k: usize, l: usize) -> Result<LinkSet> {
    let all = unobserved_links(event, k, l)?;
    let g = event.snapshot(k)?;
    LinkSet::from_links(all.iter().filter(|x| g.contains(x.u) && g.contains(x.v)).copied().collect())
}

fn dot(z: &Embeddings, u: NodeId, v: NodeId) -> Result<f64> {
    let a = z.get(u)?;
    let b = z.get(v)?;
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// `sigmoid(z_u . z_v)`, on the same scale as the training targets.
pub fn score_dot(z: &Embeddings, u: NodeId, v: NodeId) -> Result<f64> {
    Ok(sigmoid(dot(z, u, v)?))
}

/// The bare inner product, for comparison with the unsquashed formula.
pub fn score_raw_dot(z: &Embeddings, u: NodeId, v: NodeId) -> Result<f64> {
    dot(z, u, v)
}

/// Hadamard-product decoder: `sigmoid(relu((z_u * z_v) W1 + b1) w2 + b2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpScorer {
    pub hidden_w: DenseMatrix,
    pub hidden_b: DenseMatrix,
    pub out_w: DenseMatrix,
    pub out_b: DenseMatrix,
    trained: bool,
}

impl MlpScorer {
    pub fn hidden_width(d: usize) -> usize {
        d.div_ceil(2)
    }

    /// Seeded uniform init in `+-1/sqrt(fan_in)`; must be trained before use.
    pub fn untrained(d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("MLP input dimension must be >= 1".into()));
        }
        let hw = Self::hidden_width(d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |r: usize, c: usize, fan_in: usize| {
            let b = 1.0 / (fan_in as f64).sqrt();
            DenseMatrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-b..b)).collect())
        };
        Ok(Self {
            hidden_w: init(d, hw, d)?,
            hidden_b: init(1, hw, d)?,
            out_w: init(hw, 1, hw)?,
            out_b: init(1, 1, hw)?,
            trained: false,
        })
    }

    /// A ready-to-use scorer from explicit weights.
    pub fn from_parts(hidden_w: DenseMatrix, hidden_b: DenseMatrix, out_w: DenseMatrix, out_b: DenseMatrix) -> Result<Self> {
        let hw = hidden_w.cols();
        if hidden_b.rows() != 1 || hidden_b.cols() != hw || out_w.rows() != hw || out_w.cols() != 1 || out_b.len() != 1 {
            return Err(Error::Shape {
                op: "MlpScorer::from_parts",
                detail: format!(
                    "hidden {:?}, bias {:?}, out {:?}, out bias {:?}",
                    hidden_w.shape(),
                    hidden_b.shape(),
                    out_w.shape(),
                    out_b.shape()
                ),
            });
        }
        Ok(Self { hidden_w, hidden_b, out_w, out_b, trained: true })
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn input_dim(&self) -> usize {
        self.hidden_w.rows()
    }

    fn forward(&self, x: &[f64]) -> f64 {
        let hw = self.hidden_w.cols();
        let mut out = self.out_b.item();
        for j in 0..hw {
            let mut h = self.hidden_b.get(0, j);
            for (i, xi) in x.iter().enumerate() {
                h += xi * self.hidden_w.get(i, j);
            }
            out += h.max(0.0) * self.out_w.get(j, 0);
        }
        sigmoid(out)
    }

    pub fn score(&self, z: &Embeddings, u: NodeId, v: NodeId) -> Result<f64> {
        if !self.trained {
            return Err(Error::Contract("MLP scorer used before training".into()));
        }
        if z.dim() != self.input_dim() {
            return Err(Error::Shape {
                op: "MlpScorer::score",
                detail: format!("embedding dim {} vs scorer input {}", z.dim(), self.input_dim()),
            });
        }
        let a = z.get(u)?;
        let b = z.get(v)?;
        let x: Vec<f64> = a.iter().zip(b).map(|(p, q)| p * q).collect();
        Ok(self.forward(&x))
    }

    /// Full-batch Adam on the window's observed edges (latest weight per
    /// pair) plus as many seeded random non-edges with target epsilon.
    /// Only pairs with both endpoints embedded take part.
    pub fn train(mut self, z: &Embeddings, window: &[SnapshotGraph], seed: u64) -> Result<Self> {
        let embedded: BTreeSet<NodeId> = z.nodes.iter().copied().collect();
        let mut observed = std::collections::BTreeMap::new();
        for g in window {
            for e in g.edges() {
                observed.insert(e.pair(), e.weight);
            }
        }
        let mut pairs: Vec<(NodeId, NodeId, f64)> = observed
            .iter()
            .filter(|((u, v), _)| embedded.contains(u) && embedded.contains(v))
            .map(|(&(u, v), &w)| (u, v, w))
            .collect();
        let positives = pairs.len();
        let n = z.nodes.len();
        let max_negatives = n * n.saturating_sub(1) / 2 - positives;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = BTreeSet::new();
        while seen.len() < positives.min(max_negatives) {
            let a = z.nodes[rng.random_range(0..n)];
            let b = z.nodes[rng.random_range(0..n)];
            let key = (a.min(b), a.max(b));
            if a != b && !observed.contains_key(&key) && seen.insert(key) {
                pairs.push((key.0, key.1, WEIGHT_EPSILON));
            }
        }
        if pairs.is_empty() {
            return Err(Error::InsufficientLinks { found: 0, required: 1 });
        }

        let d = self.input_dim();
        let mut x = DenseMatrix::zeros(pairs.len(), d);
        let mut t = DenseMatrix::zeros(pairs.len(), 1);
        for (r, &(u, v, w)) in pairs.iter().enumerate() {
            let (a, b) = (z.get(u)?, z.get(v)?);
            for c in 0..d {
                x.set(r, c, a[c] * b[c]);
            }
            t.set(r, 0, w);
        }
        let ones = DenseMatrix::filled(pairs.len(), 1, 1.0);
        let mut adam = AdamState::new(&[&self.hidden_w, &self.hidden_b, &self.out_w, &self.out_b]);
        for epoch in 0..MLP_EPOCHS {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let ov = tape.constant(ones.clone());
            let hw = tape.param(self.hidden_w.clone());
            let hb = tape.param(self.hidden_b.clone());
            let ow = tape.param(self.out_w.clone());
            let ob = tape.param(self.out_b.clone());
            let pre = tape.matmul(xv, hw)?;
            let bias = tape.matmul(ov, hb)?;
            let pre = tape.add(pre, bias)?;
            let h = tape.relu(pre);
            let o = tape.matmul(h, ow)?;
            let obias = tape.matmul(ov, ob)?;
            let o = tape.add(o, obias)?;
            let y = tape.sigmoid(o);
            let tv = tape.constant(t.clone());
            let loss = tape.rms_diff(y, tv)?;
            if !tape.value(loss).item().is_finite() {
                return Err(Error::Diverged { epoch, detail: "MLP scorer loss is not finite".into() });
            }
            let grads = tape.backward(loss)?;
            let g: Vec<DenseMatrix> = [hw, hb, ow, ob].iter().map(|&p| grads.get_or_zeros(&tape, p)).collect();
            adam.step(&mut [&mut self.hidden_w, &mut self.hidden_b, &mut self.out_w, &mut self.out_b], &g, MLP_LR)?;
        }
        self.trained = true;
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Dot,
    RawDot,
    Mlp,
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorerKind::Dot => "dot",
            ScorerKind::RawDot => "raw_dot",
            ScorerKind::Mlp => "mlp",
        })
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(ScorerKind::Dot),
            "raw_dot" | "raw-dot" => Ok(ScorerKind::RawDot),
            "mlp" => Ok(ScorerKind::Mlp),
            other => Err(Error::Config(format!("unknown scorer {other:?} (expected dot, raw_dot or mlp)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
}

pub fn metrics(preds: &[f64], truths: &[f64]) -> Result<Metrics> {
    if preds.is_empty() || preds.len() != truths.len() {
        return Err(Error::Contract(format!(
            "metrics need equal non-empty inputs, got {} predictions and {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let n = preds.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (p, t) in preds.iter().zip(truths) {
        let e = p - t;
        se += e * e;
        ae += e.abs();
    }
    Ok(Metrics { rmse: (se / n).sqrt(), mae: ae / n })
}

/// Mean normalized weight over every edge of the window.
pub fn mean_window_weight(window: &[SnapshotGraph]) -> Result<f64> {
    let ws: Vec<f64> = window.iter().flat_map(|g| g.edges().iter().map(|e| e.weight)).collect();
    if ws.is_empty() {
        return Err(Error::EmptyEvent);
    }
    Ok(ws.iter().sum::<f64>() / ws.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// `student / teacher` parameters, kept exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressionRatio {
    pub student: u64,
    pub teacher: u64,
}

impl CompressionRatio {
    pub fn new(student: u64, teacher: u64) -> Result<Self> {
        if teacher == 0 {
            return Err(Error::Config("teacher has no parameters".into()));
        }
        Ok(Self { student, teacher })
    }

    pub fn ratio(&self) -> Ratio<u64> {
        Ratio::new(self.student, self.teacher)
    }

    /// Percentage rounded up, so the student's relative size is never
    /// understated: 133/918 gives "15:100".
    pub fn per_hundred(&self) -> u64 {
        let num = u128::from(self.student) * 100;
        let den = u128::from(self.teacher);
        num.div_ceil(den) as u64
    }

    pub fn presentation(&self) -> String {
        format!("{}:100", self.per_hundred())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub trials: usize,
    pub seed: u64,
    /// Reuse `seed` in every trial instead of deriving one per trial.
    #[serde(default)]
    pub repeat_seed: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { trials: DEFAULT_TRIALS, seed: 0, repeat_seed: false }
    }
}

impl EvalOptions {
    pub fn trial_seeds(&self) -> Vec<u64> {
        (0..self.trials as u64)
            .map(|t| if self.repeat_seed { self.seed } else { derive_seed(self.seed, t) })
            .collect()
    }
}

/// SplitMix64 step; decorrelates nearby seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeds used inside one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub trial: u64,
    pub teacher: u64,
    pub student: u64,
    pub split: u64,
    pub scorer: u64,
}

impl TrialSeeds {
    pub fn from_trial(trial: u64) -> Self {
        Self {
            trial,
            teacher: derive_seed(trial, 1),
            student: derive_seed(trial, 2),
            split: derive_seed(trial, 3),
            scorer: derive_seed(trial, 4),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seeds: TrialSeeds,
    pub n_validation: usize,
    pub n_test: usize,
    pub teacher: Metrics,
    pub student: Metrics,
    pub baseline: Metrics,
    pub teacher_loss_first: f64,
    pub teacher_loss_last: f64,
    pub student_loss_first: f64,
    pub student_loss_last: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub rmse: MeanStd,
    pub mae: MeanStd,
}

impl ModelSummary {
    fn of(ms: impl Iterator<Item = Metrics> + Clone) -> Self {
        Self {
            rmse: MeanStd::of(&ms.clone().map(|m| m.rmse).collect::<Vec<_>>()),
            mae: MeanStd::of(&ms.map(|m| m.mae).collect::<Vec<_>>()),
        }
    }
}

/// Wall-clock and host details, kept apart from the numeric payload.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub created_unix_seconds: u64,
    pub host: String,
    pub version: String,
}

impl ReportMeta {
    pub fn now() -> Self {
        let created_unix_seconds = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let host = std::env::var("HOSTNAME").unwrap_or_default();
        Self { created_unix_seconds, host, version: env!("CARGO_PKG_VERSION").to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub event: String,
    pub k: usize,
    pub window: usize,
    pub scorer: ScorerKind,
    pub teacher: ModelSummary,
    pub student: ModelSummary,
    pub baseline: ModelSummary,
    pub param_count_teacher: u64,
    pub param_count_student: u64,
    pub compression_ratio: CompressionRatio,
    pub compression_presentation: String,
    pub split_seeds: Vec<u64>,
    pub trials: Vec<TrialRecord>,
    pub meta: ReportMeta,
}

impl EvalReport {
    /// The report with `meta` blanked; equal inputs give equal payloads.
    pub fn payload(&self) -> EvalReport {
        EvalReport { meta: ReportMeta::default(), ..self.clone() }
    }
}

fn predict(kind: ScorerKind, z: &Embeddings, mlp: Option<&MlpScorer>, links: &LinkSet) -> Result<Vec<f64>> {
    links
        .iter()
        .map(|l| match kind {
            ScorerKind::Dot => score_dot(z, l.u, l.v),
            ScorerKind::RawDot => score_raw_dot(z, l.u, l.v),
            ScorerKind::Mlp => mlp
                .ok_or_else(|| Error::Contract("MLP scorer used before training".into()))?
                .score(z, l.u, l.v),
        })
        .collect()
}

fn check_configs(teacher_cfg: &ModelConfig, student_cfg: &ModelConfig) -> Result<()> {
    teacher_cfg.validate()?;
    student_cfg.validate()?;
    if teacher_cfg.role != Role::Teacher || student_cfg.role != Role::Student {
        return Err(Error::Config("expected a teacher config and a student config".into()));
    }
    if teacher_cfg.window != student_cfg.window {
        return Err(Error::Config(format!(
            "teacher window {} differs from student window {}",
            teacher_cfg.window, student_cfg.window
        )));
    }
    Ok(())
}

struct TrialOutcome {
    record_base: TrialRecord,
    per_scorer: Vec<(Metrics, Metrics)>,
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    index: usize,
    seeds: TrialSeeds,
    window: &[SnapshotGraph],
    targets: &LinkSet,
    registry: &crate::graph::NodeRegistry,
    teacher_cfg: &ModelConfig,
    student_cfg: &ModelConfig,
    scorers: &[ScorerKind],
) -> Result<TrialOutcome> {
    let split = split_links(targets, seeds.split)?;
    let truths: Vec<f64> = split.test.iter().map(|l| l.weight).collect();
    let baseline_value = mean_window_weight(window)?;
    let baseline = metrics(&vec![baseline_value; truths.len()], &truths)?;

    let tcfg = ModelConfig { seed: seeds.teacher, ..teacher_cfg.clone() };
    let teacher = train_teacher(window, registry, &tcfg)?;
    let scfg = ModelConfig { seed: seeds.student, ..student_cfg.clone() };
    let bundle = DistillationBundle::new(teacher.model.clone(), teacher.embeddings.clone(), scfg)?;
    let student = distill_student(&bundle, window)?;

    let needs_mlp = scorers.contains(&ScorerKind::Mlp);
    let mlp_for = |z: &Embeddings, salt: u64| -> Result<Option<MlpScorer>> {
        if !needs_mlp {
            return Ok(None);
        }
        let s = derive_seed(seeds.scorer, salt);
        Ok(Some(MlpScorer::untrained(z.dim(), s)?.train(z, window, s)?))
    };
    let t_mlp = mlp_for(&teacher.embeddings, 0)?;
    let s_mlp = mlp_for(&student.embeddings, 1)?;

    let mut per_scorer = Vec::with_capacity(scorers.len());
    for &kind in scorers {
        let tm = metrics(&predict(kind, &teacher.embeddings, t_mlp.as_ref(), &split.test)?, &truths)?;
        let sm = metrics(&predict(kind, &student.embeddings, s_mlp.as_ref(), &split.test)?, &truths)?;
        per_scorer.push((tm, sm));
    }
    let first = |v: &[f64]| v.first().copied().unwrap_or(f64::NAN);
    let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
    let placeholder = Metrics { rmse: f64::NAN, mae: f64::NAN };
    Ok(TrialOutcome {
        record_base: TrialRecord {
            trial: index,
            seeds,
            n_validation: split.validation.len(),
            n_test: split.test.len(),
            teacher: placeholder,
            student: placeholder,
            baseline,
            teacher_loss_first: first(&teacher.trace.losses),
            teacher_loss_last: last(&teacher.trace.losses),
            student_loss_first: first(&student.trace.losses),
            student_loss_last: last(&student.trace.losses),
        },
        per_scorer,
    })
}

/// Runs the full protocol at snapshot `k`, once per trial, and scores the
/// same trained models with every requested scorer. Returns one report per
/// scorer, in the order given.
pub fn run_evaluation_multi(
    event: &EventSequence,
    k: usize,
    teacher_cfg: &ModelConfig,
    student_cfg: &ModelConfig,
    opts: &EvalOptions,
    scorers: &[ScorerKind],
) -> Result<Vec<EvalReport>> {
    check_configs(teacher_cfg, student_cfg)?;
    if opts.trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    if scorers.is_empty() {
        return Err(Error::Config("no scorer selected".into()));
    }
    let l = teacher_cfg.window;
    let window = build_window(event, k, l)?;
    let targets = scorable_links(event, k, l)?;
    if targets.len() < MIN_LINKS {
        return Err(Error::InsufficientLinks { found: targets.len(), required: MIN_LINKS });
    }
    let seeds: Vec<TrialSeeds> = opts.trial_seeds().into_iter().map(TrialSeeds::from_trial).collect();
    let outcomes = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| run_trial(i, s, window, &targets, event.registry(), teacher_cfg, student_cfg, scorers))
        .collect::<Result<Vec<_>>>()?;

    let n_global = event.n_global();
    let tp = count_params(teacher_cfg, n_global);
    let sp = count_params(student_cfg, n_global);
    let ratio = CompressionRatio::new(sp, tp)?;
    let meta = ReportMeta::now();
    Ok(scorers
        .iter()
        .enumerate()
        .map(|(si, &kind)| {
            let trials: Vec<TrialRecord> = outcomes
                .iter()
                .map(|o| TrialRecord { teacher: o.per_scorer[si].0, student: o.per_scorer[si].1, ..o.record_base.clone() })
                .collect();
            EvalReport {
                event: event.name().to_string(),
                k,
                window: l,
                scorer: kind,
                teacher: ModelSummary::of(trials.iter().map(|t| t.teacher)),
                student: ModelSummary::of(trials.iter().map(|t| t.student)),
                baseline: ModelSummary::of(trials.iter().map(|t| t.baseline)),
                param_count_teacher: tp,
                param_count_student: sp,
                compression_ratio: ratio,
                compression_presentation: ratio.presentation(),
                split_seeds: trials.iter().map(|t| t.seeds.split).collect(),
                trials,
                meta: meta.clone(),
            }
        })
        .collect())
}

pub fn run_evaluation(
    event: &EventSequence,
    k: usize,
    teacher_cfg: &ModelConfig,
    student_cfg: &ModelConfig,
    opts: &EvalOptions,
    scorer: ScorerKind,
) -> Result<EvalReport> {
    let mut v = run_evaluation_multi(event, k, teacher_cfg, student_cfg, opts, &[scorer])?;
    Ok(v.remove(0))
}

/// The nine distillation weights 0.1, 0.2, ..., 0.9.
pub fn gamma_grid() -> Vec<f64> {
    (1..=9).map(|i| f64::from(i) / 10.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub rmse: MeanStd,
    pub mae: MeanStd,
    pub runs: usize,
}

/// Student test error for each gamma, averaged over the snapshots `ks` and
/// the trials. Each trial's teacher is trained once and shared by all
/// gammas, so the rows differ only in the distillation weight.
pub fn sweep_gamma(
    event: &EventSequence,
    ks: &[usize],
    teacher_cfg: &ModelConfig,
    student_cfg: &ModelConfig,
    opts: &EvalOptions,
    gammas: &[f64],
    scorer: ScorerKind,
) -> Result<Vec<GammaRow>> {
    check_configs(teacher_cfg, student_cfg)?;
    if ks.is_empty() || gammas.is_empty() || opts.trials == 0 {
        return Err(Error::Config("sweep needs at least one snapshot, gamma and trial".into()));
    }
    let l = teacher_cfg.window;
    let seeds: Vec<TrialSeeds> = opts.trial_seeds().into_iter().map(TrialSeeds::from_trial).collect();
    let jobs: Vec<(usize, TrialSeeds)> = ks.iter().flat_map(|&k| seeds.iter().map(move |&s| (k, s))).collect();

    // results[job][gamma]
    let results = jobs
        .par_iter()
        .map(|&(k, s)| -> Result<Vec<Metrics>> {
            let window = build_window(event, k, l)?;
            let split = split_links(&scorable_links(event, k, l)?, s.split)?;
            let truths: Vec<f64> = split.test.iter().map(|x| x.weight).collect();
            let teacher = train_teacher(window, event.registry(), &ModelConfig { seed: s.teacher, ..teacher_cfg.clone() })?;
            gammas
                .iter()
                .map(|&gamma| {
                    let scfg = ModelConfig { seed: s.student, gamma, ..student_cfg.clone() };
                    let bundle = DistillationBundle::new(teacher.model.clone(), teacher.embeddings.clone(), scfg)?;
                    let student = distill_student(&bundle, window)?;
                    let mlp = if scorer == ScorerKind::Mlp {
                        let z = &student.embeddings;
                        Some(MlpScorer::untrained(z.dim(), s.scorer)?.train(z, window, s.scorer)?)
                    } else {
                        None
                    };
                    metrics(&predict(scorer, &student.embeddings, mlp.as_ref(), &split.test)?, &truths)
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(gammas
        .iter()
        .enumerate()
        .map(|(gi, &gamma)| {
            let ms: Vec<Metrics> = results.iter().map(|r| r[gi]).collect();
            GammaRow {
                gamma,
                rmse: MeanStd::of(&ms.iter().map(|m| m.rmse).collect::<Vec<_>>()),
                mae: MeanStd::of(&ms.iter().map(|m| m.mae).collect::<Vec<_>>()),
                runs: ms.len(),
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HparamAxis {
    /// Embedding size `d`.
    Dim,
    /// Window length `l`.
    Window,
    /// Attention heads `h`.
    Heads,
}

impl HparamAxis {
    pub fn values(self) -> Vec<usize> {
        match self {
            HparamAxis::Dim => vec![16, 32, 64, 128, 256],
            HparamAxis::Window | HparamAxis::Heads => (1..=5).collect(),
        }
    }

    /// Applies `value` to a config. For the size axis the hidden width
    /// grows with `d` when needed so that it never falls below it.
    pub fn apply(self, cfg: &ModelConfig, value: usize) -> ModelConfig {
        let mut c = cfg.clone();
        match self {
            HparamAxis::Dim => {
                c.embed_dim = value;
                c.hidden_dim = c.hidden_dim.max(value);
            }
            HparamAxis::Window => c.window = value,
            HparamAxis::Heads => c.heads = value,
        }
        c
    }
}

impl fmt::Display for HparamAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HparamAxis::Dim => "d",
            HparamAxis::Window => "l",
            HparamAxis::Heads => "h",
        })
    }
}

impl FromStr for HparamAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d" | "dim" => Ok(HparamAxis::Dim),
            "l" | "window" => Ok(HparamAxis::Window),
            "h" | "heads" => Ok(HparamAxis::Heads),
            other => Err(Error::Config(format!("unknown axis {other:?} (expected d, l or h)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HparamRow {
    pub axis: HparamAxis,
    pub value: usize,
    pub teacher: ModelSummary,
    pub student: ModelSummary,
    pub param_count_teacher: u64,
    pub param_count_student: u64,
}

/// Varies one axis at a time on both models, keeping the others at their
/// configured values. Window lengths that do not fit before `k` are skipped.
pub fn sweep_hparam(
    event: &EventSequence,
    k: usize,
    teacher_cfg: &ModelConfig,
    student_cfg: &ModelConfig,
    opts: &EvalOptions,
    axes: &[HparamAxis],
    scorer: ScorerKind,
) -> Result<Vec<HparamRow>> {
    let mut rows = vec![];
    for &axis in axes {
        for value in axis.values() {
            let t = axis.apply(teacher_cfg, value);
            let s = axis.apply(student_cfg, value);
            if t.window > k {
                log::warn!("skipping l={} at k={k}: window does not fit", t.window);
                continue;
            }
            let r = run_evaluation(event, k, &t, &s, opts, scorer)?;
            rows.push(HparamRow {
                axis,
                value,
                teacher: r.teacher,
                student: r.student,
                param_count_teacher: r.param_count_teacher,
                param_count_student: r.param_count_student,
            });
        }
    }
    Ok(rows)
}

/// Every edge of the training window, for leakage checks.
pub fn window_pairs(window: &[SnapshotGraph]) -> BTreeSet<(NodeId, NodeId)> {
    window.iter().flat_map(|g| g.edges().iter().map(|e| e.pair())).collect()
}

/// Whether `links` avoids every edge of `window`.
pub fn is_leak_free(links: &LinkSet, window: &[SnapshotGraph]) -> bool {
    let seen = window_pairs(window);
    links.iter().all(|l: &Link| !seen.contains(&(l.u, l.v)))
}
