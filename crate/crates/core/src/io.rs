//! On-disk formats.
//!
//! An event directory holds `manifest.json` plus one CSV per snapshot, each
//! line `u,v,weight` with integer raw viewer ids and a positive raw
//! throughput. Reports are JSON plus a flat CSV; training traces are CSV
//! with columns `epoch,loss,seconds`. Run configurations are TOML.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::{ModelConfig, Role};
use crate::error::{Error, Result};
use crate::eval::{derive_seed, EvalOptions, EvalReport, GammaRow, HparamRow, ScorerKind};
use crate::graph::{normalize_weights, EventSequence, RawEvent};
use crate::sim::SimConfig;
use crate::teacher::{EgadModel, TrainingTrace};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Snapshot length of the recorded events, in seconds.
pub const DEFAULT_SNAPSHOT_SECONDS: u64 = 600;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventManifest {
    pub name: String,
    pub num_snapshots: usize,
    pub snapshot_seconds: u64,
    pub weight_unit: String,
    /// Snapshot files relative to the manifest, in time order.
    pub files: Vec<String>,
}

impl EventManifest {
    pub fn validate(&self) -> Result<()> {
        if self.files.len() != self.num_snapshots {
            return Err(Error::Config(format!(
                "manifest lists {} files for {} snapshots",
                self.files.len(),
                self.num_snapshots
            )));
        }
        Ok(())
    }
}

pub fn read_manifest(path: &Path) -> Result<EventManifest> {
    let m: EventManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    m.validate()?;
    Ok(m)
}

/// Parses one snapshot file. `file` only labels errors. An optional
/// `u,v,weight` header line, blank lines and `#` comments are allowed.
pub fn parse_snapshot_csv(text: &str, file: &str) -> Result<Vec<(u64, u64, f64)>> {
    let mut edges = Vec::new();
    let mut seen: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut header_allowed = true;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fail = |detail: String| Error::Parse { file: file.to_string(), line, detail };
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let record: Vec<&str> = content.split(',').map(str::trim).collect();
        if std::mem::take(&mut header_allowed) && record == ["u", "v", "weight"] {
            continue;
        }
        if record.len() != 3 {
            return Err(fail(format!("expected 3 fields `u,v,weight`, found {}", record.len())));
        }
        let id = |s: &str| s.parse::<u64>().map_err(|_| fail(format!("invalid viewer id {s:?}")));
        let u = id(record[0])?;
        let v = id(record[1])?;
        let w: f64 = record[2].parse().map_err(|_| fail(format!("invalid weight {:?}", record[2])))?;
        if !(w.is_finite() && w > 0.0) {
            return Err(fail(format!("weight must be positive and finite, got {w}")));
        }
        if u == v {
            return Err(fail(format!("self-loop on viewer {u}")));
        }
        if seen.insert((u.min(v), u.max(v)), line).is_some() {
            return Err(Error::DuplicateEdge { file: file.to_string(), line, u, v });
        }
        edges.push((u, v, w));
    }
    Ok(edges)
}

/// Reads the raw (unnormalized) event behind a manifest.
pub fn load_raw_event(manifest_path: &Path) -> Result<RawEvent> {
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut lists = Vec::with_capacity(manifest.files.len());
    for f in &manifest.files {
        let path = dir.join(f);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        lists.push(parse_snapshot_csv(&text, f)?);
    }
    RawEvent::from_edge_lists(manifest.name, lists)
}

pub fn load_event(manifest_path: &Path) -> Result<EventSequence> {
    normalize_weights(load_raw_event(manifest_path)?)
}

fn snapshot_file(k: usize) -> String {
    format!("snapshot_{k:03}.csv")
}

/// Writes raw edge lists in the canonical layout. This is also the entry
/// point for converting other dataset layouts: parse them into lists and
/// call this.
pub fn write_edge_lists(name: &str, lists: &[Vec<(u64, u64, f64)>], dir: &Path, weight_unit: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(lists.len());
    for (k, list) in lists.iter().enumerate() {
        let mut sorted: Vec<(u64, u64, f64)> = list.iter().map(|&(u, v, w)| (u.min(v), u.max(v), w)).collect();
        sorted.sort_by_key(|e| (e.0, e.1));
        let mut text = String::with_capacity(sorted.len() * 24);
        for (u, v, w) in sorted {
            // `{}` prints the shortest string that parses back to the same f64
            text.push_str(&format!("{u},{v},{w}\n"));
        }
        let f = snapshot_file(k);
        fs::write(dir.join(&f), text)?;
        files.push(f);
    }
    let manifest = EventManifest {
        name: name.to_string(),
        num_snapshots: lists.len(),
        snapshot_seconds: DEFAULT_SNAPSHOT_SECONDS,
        weight_unit: weight_unit.to_string(),
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}

/// Raw edge lists of a raw event, using its registry's raw ids.
pub fn raw_edge_lists(raw: &RawEvent) -> Vec<Vec<(u64, u64, f64)>> {
    raw.snapshots
        .iter()
        .map(|g| g.edges().iter().map(|e| (raw.registry.raw_ids()[e.u.0], raw.registry.raw_ids()[e.v.0], e.weight)).collect())
        .collect()
}

/// Writes `event` with its original raw weights; loading the result gives
/// back an identical event.
pub fn export_event(event: &EventSequence, dir: &Path, weight_unit: &str) -> Result<PathBuf> {
    let ids = event.registry().raw_ids();
    let lists = event
        .snapshots()
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let raw = event.raw_weights(k)?;
            Ok(g.edges().iter().zip(raw).map(|(e, &w)| (ids[e.u.0], ids[e.v.0], w)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    write_edge_lists(event.name(), &lists, dir, weight_unit)
}

pub fn export_raw_event(raw: &RawEvent, dir: &Path, weight_unit: &str) -> Result<PathBuf> {
    write_edge_lists(&raw.name, &raw_edge_lists(raw), dir, weight_unit)
}

/// Where the event comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Path to a manifest, relative to the config file.
    Manifest(PathBuf),
    /// Generate a synthetic event in memory.
    Simulate(SimConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub scorers: Vec<ScorerKind>,
    pub trials: usize,
    /// Snapshots to evaluate; defaults to the last evaluable one.
    pub ks: Option<Vec<usize>>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { scorers: vec![ScorerKind::Dot], trials: crate::eval::DEFAULT_TRIALS, ks: None }
    }
}

/// A fully resolved run: model sections are complete and every seed is
/// derived from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub teacher: ModelConfig,
    pub student: ModelConfig,
    pub eval: EvalSettings,
    pub data: DataSource,
    pub output_dir: PathBuf,
}

/// The file form: model sections only list what differs from the defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    teacher: toml::Table,
    #[serde(default)]
    student: toml::Table,
    #[serde(default)]
    eval: EvalSettings,
    data: DataSource,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn overlay(base: ModelConfig, table: toml::Table, section: &str) -> Result<ModelConfig> {
    let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(format!("{section}: {e}")))?;
    for (k, v) in table {
        if !merged.contains_key(&k) {
            return Err(Error::Config(format!("unknown key {k:?} in [{section}]")));
        }
        merged.insert(k, v);
    }
    Ok(merged.try_into()?)
}

impl RunConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let file: RunConfigFile = toml::from_str(text)?;
        let teacher = overlay(ModelConfig::teacher(), file.teacher, "teacher")?;
        let student = overlay(ModelConfig::student(), file.student, "student")?;
        let data = match file.data {
            DataSource::Manifest(p) => DataSource::Manifest(base_dir.join(p)),
            sim => sim,
        };
        let output_dir = base_dir.join(file.output_dir);
        let mut cfg = Self { seed: file.seed, teacher, student, eval: file.eval, data, output_dir };
        cfg.reseed(file.seed);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_toml(&text, path.parent().unwrap_or_else(|| Path::new(".")))
    }

    /// Derives every seed in the run from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.teacher.seed = derive_seed(seed, 101);
        self.student.seed = derive_seed(seed, 102);
        if let DataSource::Simulate(sim) = &mut self.data {
            sim.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.teacher.validate()?;
        self.student.validate()?;
        if self.teacher.role != Role::Teacher || self.student.role != Role::Student {
            return Err(Error::Config("[teacher] and [student] must keep their roles".into()));
        }
        if self.teacher.window != self.student.window {
            return Err(Error::Config(format!(
                "student window {} must equal teacher window {}",
                self.student.window, self.teacher.window
            )));
        }
        if self.eval.trials == 0 || self.eval.scorers.is_empty() {
            return Err(Error::Config("eval needs at least one trial and one scorer".into()));
        }
        match &self.data {
            DataSource::Manifest(p) if !p.is_file() => {
                Err(Error::Config(format!("manifest {} does not exist", p.display())))
            }
            DataSource::Simulate(sim) => sim.validate(),
            _ => Ok(()),
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions { trials: self.eval.trials, seed: self.seed, repeat_seed: false }
    }

    /// Loads or generates the event.
    pub fn event(&self) -> Result<EventSequence> {
        match &self.data {
            DataSource::Manifest(p) => load_event(p),
            DataSource::Simulate(sim) => normalize_weights(crate::sim::simulate_event(sim)?),
        }
    }

    /// Requested snapshot indices, defaulting to the last evaluable one.
    pub fn ks(&self, event: &EventSequence) -> Result<Vec<usize>> {
        match &self.eval.ks {
            Some(ks) if !ks.is_empty() => Ok(ks.clone()),
            _ => default_k(event).map(|k| vec![k]),
        }
    }
}

/// `K - 2`, the last snapshot that still has a successor to predict.
pub fn default_k(event: &EventSequence) -> Result<usize> {
    event.len().checked_sub(2).ok_or(Error::OutOfRange { k: 0, len: event.len() })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn write_report_json(path: &Path, report: &EvalReport) -> Result<()> {
    write_json(path, report)
}

pub fn read_report_json(path: &Path) -> Result<EvalReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

/// One row per trial, model and metric.
pub fn write_report_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["event", "k", "scorer", "trial", "model", "metric", "value"])?;
    for r in reports {
        for t in &r.trials {
            for (model, m) in [("teacher", t.teacher), ("student", t.student), ("baseline", t.baseline)] {
                for (metric, v) in [("rmse", m.rmse), ("mae", m.mae)] {
                    w.write_record([
                        r.event.clone(),
                        r.k.to_string(),
                        r.scorer.to_string(),
                        t.trial.to_string(),
                        model.to_string(),
                        metric.to_string(),
                        v.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(path: &Path, trace: &TrainingTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "loss", "seconds"])?;
    for (i, (l, s)) in trace.losses.iter().zip(&trace.seconds).enumerate() {
        w.write_record([i.to_string(), l.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_gamma_csv(path: &Path, rows: &[GammaRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["gamma", "rmse_mean", "rmse_std", "mae_mean", "mae_std", "runs"])?;
    for r in rows {
        w.write_record([
            r.gamma.to_string(),
            r.rmse.mean.to_string(),
            r.rmse.std.to_string(),
            r.mae.mean.to_string(),
            r.mae.std.to_string(),
            r.runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_hparam_csv(path: &Path, rows: &[HparamRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["axis", "value", "model", "rmse_mean", "rmse_std", "mae_mean", "mae_std", "params"])?;
    for r in rows {
        for (model, s, p) in [("teacher", &r.teacher, r.param_count_teacher), ("student", &r.student, r.param_count_student)] {
            w.write_record([
                r.axis.to_string(),
                r.value.to_string(),
                model.to_string(),
                s.rmse.mean.to_string(),
                s.rmse.std.to_string(),
                s.mae.mean.to_string(),
                s.mae.std.to_string(),
                p.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_checkpoint(path: &Path, model: &EgadModel) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, checkpoint::save(model)?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<EgadModel> {
    checkpoint::load(&fs::read(path)?)
}
