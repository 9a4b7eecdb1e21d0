use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use evograph::distill::{distill_student, DistillationBundle};
use evograph::eval::{gamma_grid, run_evaluation_multi, sweep_gamma, sweep_hparam, HparamAxis, ScorerKind};
use evograph::io::{self, DataSource, RunConfig};
use evograph::teacher::train_teacher_warm;
use evograph::{train_teacher, Error};

#[derive(Parser)]
#[command(name = "evograph", version, about = "Evolving-attention GCN link-weight prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event and write it as an event directory.
    Simulate(Common),
    /// Train the teacher on one window; writes a checkpoint and trace.
    TrainTeacher {
        #[command(flatten)]
        common: Common,
        /// Start from this checkpoint (e.g. the model trained at k-1)
        /// instead of a fresh initialization.
        #[arg(long)]
        warm_start: Option<PathBuf>,
    },
    /// Distill a student from a teacher checkpoint.
    Distill {
        #[command(flatten)]
        common: Common,
        /// Teacher checkpoint (defaults to `<out>/teacher.ckpt`).
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Full protocol: train, distill and score over several trials.
    Evaluate(Common),
    /// Student error for gamma = 0.1, 0.2, ..., 0.9.
    SweepGamma(Common),
    /// Vary d, l or h one at a time.
    SweepHparam {
        #[command(flatten)]
        common: Common,
        /// Axes to sweep: d, l, h (default: all three).
        #[arg(long, value_delimiter = ',')]
        axis: Vec<HparamAxis>,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    config: PathBuf,
    /// Base seed; every other seed is derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Distillation weight for the student.
    #[arg(long)]
    gamma: Option<f64>,
    /// Snapshot indices to evaluate (comma separated).
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Scorers: dot, raw_dot, mlp (comma separated).
    #[arg(long, value_delimiter = ',')]
    scorer: Vec<ScorerKind>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for trials and sweeps.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)
            .with_context(|| format!("loading config {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            cfg.reseed(seed);
        }
        if let Some(g) = self.gamma {
            cfg.student.gamma = g;
        }
        if !self.k.is_empty() {
            cfg.eval.ks = Some(self.k.clone());
        }
        if let Some(t) = self.trials {
            cfg.eval.trials = t;
        }
        if !self.scorer.is_empty() {
            cfg.eval.scorers = self.scorer.clone();
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate().context("invalid run configuration")?;
        if let Some(jobs) = self.jobs {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global()
                .context("configuring worker pool")?;
        }
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate(c) => simulate(&c.resolve()?),
        Command::TrainTeacher { common, warm_start } => train(&common.resolve()?, warm_start.as_deref()),
        Command::Distill { common, teacher } => {
            let cfg = common.resolve()?;
            let path = teacher.unwrap_or_else(|| cfg.output_dir.join("teacher.ckpt"));
            distill(&cfg, &path)
        }
        Command::Evaluate(c) => evaluate(&c.resolve()?),
        Command::SweepGamma(c) => gamma(&c.resolve()?),
        Command::SweepHparam { common, axis } => {
            let axes = if axis.is_empty() { vec![HparamAxis::Dim, HparamAxis::Window, HparamAxis::Heads] } else { axis };
            hparam(&common.resolve()?, &axes)
        }
    }
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let DataSource::Simulate(sim) = &cfg.data else {
        bail!("`simulate` needs a [data.simulate] section in the config");
    };
    let raw = evograph::sim::simulate_event(sim).context("simulating event")?;
    let dir = cfg.output_dir.join("event");
    let manifest = io::export_raw_event(&raw, &dir, "kbps").context("writing event")?;
    log::info!("wrote {} snapshots to {}", raw.snapshots.len(), manifest.display());
    Ok(())
}

/// The first requested snapshot and its training window.
fn first_k(cfg: &RunConfig, event: &evograph::EventSequence) -> Result<usize> {
    let ks = cfg.ks(event)?;
    if ks.len() > 1 {
        log::warn!("using k={} only; this command trains a single window", ks[0]);
    }
    Ok(ks[0])
}

fn train(cfg: &RunConfig, warm_start: Option<&Path>) -> Result<()> {
    let event = cfg.event().context("loading event")?;
    let k = first_k(cfg, &event)?;
    let window = event.window(k, cfg.teacher.window)?;
    let trained = match warm_start {
        None => train_teacher(window, event.registry(), &cfg.teacher),
        Some(path) => {
            let init = io::read_checkpoint(path).with_context(|| format!("reading {}", path.display()))?;
            if init.registry != *event.registry() {
                bail!("warm-start checkpoint was trained on a different event");
            }
            train_teacher_warm(window, init)
        }
    }
    .context("training teacher")?;
    save_model(cfg, "teacher", &trained)
}

fn distill(cfg: &RunConfig, teacher_path: &Path) -> Result<()> {
    let event = cfg.event().context("loading event")?;
    let k = first_k(cfg, &event)?;
    let teacher = io::read_checkpoint(teacher_path)
        .with_context(|| format!("reading teacher checkpoint {}", teacher_path.display()))?;
    if teacher.registry != *event.registry() {
        bail!("teacher checkpoint was trained on a different event");
    }
    let window = event.window(k, teacher.config.window)?;
    let bundle = DistillationBundle::from_teacher(teacher, window, cfg.student.clone())?;
    let student = distill_student(&bundle, window).context("distilling student")?;
    save_model(cfg, "student", &student)
}

fn save_model(cfg: &RunConfig, name: &str, trained: &evograph::TrainedModel) -> Result<()> {
    let ckpt = cfg.output_dir.join(format!("{name}.ckpt"));
    io::write_checkpoint(&ckpt, &trained.model)?;
    io::write_trace_csv(&cfg.output_dir.join(format!("{name}_trace.csv")), &trained.trace)?;
    let losses = &trained.trace.losses;
    log::info!(
        "{name}: {} parameters, loss {:.6} -> {:.6}, checkpoint {}",
        trained.model.num_trainable(),
        losses.first().copied().unwrap_or(f64::NAN),
        losses.last().copied().unwrap_or(f64::NAN),
        ckpt.display()
    );
    Ok(())
}

fn evaluate(cfg: &RunConfig) -> Result<()> {
    let event = cfg.event().context("loading event")?;
    let opts = cfg.eval_options();
    let mut all = vec![];
    for k in cfg.ks(&event)? {
        match run_evaluation_multi(&event, k, &cfg.teacher, &cfg.student, &opts, &cfg.eval.scorers) {
            Ok(reports) => all.extend(reports),
            Err(Error::InsufficientLinks { found, required }) => {
                log::warn!("skipping k={k}: {found} scorable links, need {required}");
            }
            Err(e) => return Err(e).with_context(|| format!("evaluating k={k}")),
        }
    }
    if all.is_empty() {
        bail!("no snapshot had enough links to evaluate");
    }
    for r in &all {
        let path = cfg.output_dir.join(format!("report_k{}_{}.json", r.k, r.scorer));
        io::write_report_json(&path, r)?;
        log::info!(
            "k={} {}: teacher rmse {:.4}, student rmse {:.4}, baseline rmse {:.4}, params {}",
            r.k,
            r.scorer,
            r.teacher.rmse.mean,
            r.student.rmse.mean,
            r.baseline.rmse.mean,
            r.compression_presentation
        );
    }
    io::write_report_csv(&cfg.output_dir.join("reports.csv"), &all)?;
    Ok(())
}

fn gamma(cfg: &RunConfig) -> Result<()> {
    let event = cfg.event().context("loading event")?;
    let ks = cfg.ks(&event)?;
    let scorer = cfg.eval.scorers[0];
    let rows = sweep_gamma(&event, &ks, &cfg.teacher, &cfg.student, &cfg.eval_options(), &gamma_grid(), scorer)
        .context("gamma sweep")?;
    io::write_gamma_csv(&cfg.output_dir.join("gamma_sweep.csv"), &rows)?;
    io::write_json(&cfg.output_dir.join("gamma_sweep.json"), &rows)?;
    for r in &rows {
        log::info!("gamma {:.1}: rmse {:.4} +- {:.4}", r.gamma, r.rmse.mean, r.rmse.std);
    }
    Ok(())
}

fn hparam(cfg: &RunConfig, axes: &[HparamAxis]) -> Result<()> {
    let event = cfg.event().context("loading event")?;
    let k = first_k(cfg, &event)?;
    let scorer = cfg.eval.scorers[0];
    let rows = sweep_hparam(&event, k, &cfg.teacher, &cfg.student, &cfg.eval_options(), axes, scorer)
        .context("hyper-parameter sweep")?;
    io::write_hparam_csv(&cfg.output_dir.join("hparam_sweep.csv"), &rows)?;
    io::write_json(&cfg.output_dir.join("hparam_sweep.json"), &rows)?;
    for r in &rows {
        log::info!("{}={}: teacher rmse {:.4}, student rmse {:.4}", r.axis, r.value, r.teacher.rmse.mean, r.student.rmse.mean);
    }
    Ok(())
}
