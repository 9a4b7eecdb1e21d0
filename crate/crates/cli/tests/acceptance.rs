//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

// The oracles are deliberately written as plain index loops.
#![allow(clippy::needless_range_loop)]

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use evograph::attention::{attention_coefficients, evolve_weights, AttentionHeadParams, TransitionParams};
use evograph::eval::{
    gamma_grid, is_leak_free, MIN_LINKS, run_evaluation, scorable_links, split_links, sweep_gamma, CompressionRatio,
    EvalOptions, EvalReport, ScorerKind,
};
use evograph::gcn::{gcn_forward, identity_features, GcnParams};
use evograph::graph::{normalize_adjacency, normalize_weights, Edge};
use evograph::sim::{simulate_event, Arrival, SimConfig};
use evograph::teacher::{loss_and_gradients, objective_value, reconstruction_loss, Objective, PreparedWindow};
use evograph::{checkpoint, count_params, io, DenseMatrix, EgadModel, ModelConfig, NodeId, NodeRegistry, SnapshotGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", Duration::from_secs(30), gradients),
        ("oracles", Duration::from_secs(60), oracles),
        ("attention stochasticity", Duration::MAX, stochasticity),
        ("parameter accounting", Duration::MAX, accounting),
        ("desk-scale learning", Duration::from_secs(300), learning),
        ("distillation quality", Duration::MAX, distillation),
        ("gamma sweep shape", Duration::from_secs(1800), gamma_shape),
        ("protocol hygiene", Duration::MAX, hygiene),
        ("determinism", Duration::MAX, determinism),
        ("persistence", Duration::MAX, persistence),
    ];
    // ACCEPTANCE_ONLY=1,5 runs a subset while iterating.
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let mut o = run();
        let took = start.elapsed();
        if took > *budget {
            o.pass = false;
            o.detail += &format!("; over the {}s budget", budget.as_secs());
        }
        failed += usize::from(!o.pass);
        println!(
            "criterion {:>2} {:<24} {} ({:.1}s) {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            o.detail
        );
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------- helpers

fn rand_m(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// A snapshot over a random subset of `0..n_global`, with some isolated nodes.
fn random_snapshot(rng: &mut ChaCha8Rng, index: usize, n_global: usize, n: usize, p: f64) -> SnapshotGraph {
    let mut ids: Vec<usize> = (0..n_global).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    ids.truncate(n);
    let mut edges = vec![];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push(Edge::new(NodeId(ids[i]), NodeId(ids[j]), rng.random_range(0.05..0.95)));
            }
        }
    }
    SnapshotGraph::new(index, ids.into_iter().map(NodeId).collect(), edges, None).unwrap()
}

fn registry(n: usize) -> NodeRegistry {
    let mut r = NodeRegistry::new();
    for raw in 0..n as u64 {
        r.intern(raw);
    }
    r
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Neighbors of local node `i` including itself, with the self weight 1.
fn neighborhood(g: &SnapshotGraph, i: usize) -> Vec<(usize, f64)> {
    let nodes = g.nodes();
    let mut out = vec![(i, 1.0)];
    for (j, &v) in nodes.iter().enumerate() {
        if let Some(w) = g.weight(nodes[i], v) {
            out.push((j, w));
        }
    }
    out
}

fn oracle_normalize(g: &SnapshotGraph) -> Vec<Vec<f64>> {
    let n = g.n();
    let nodes = g.nodes();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j { 1.0 } else { g.weight(nodes[i], nodes[j]).unwrap_or(0.0) };
        }
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            a[i][j] /= deg[i].sqrt() * deg[j].sqrt();
        }
    }
    a
}

fn oracle_gcn(g: &SnapshotGraph, w1: &DenseMatrix, w2: &DenseMatrix) -> Vec<Vec<f64>> {
    let a = oracle_normalize(g);
    let n = g.n();
    let (d1, d2) = (w1.cols(), w2.cols());
    let nodes = g.nodes();
    let mut h = vec![vec![0.0; d1]; n];
    for i in 0..n {
        for c in 0..d1 {
            let mut s = 0.0;
            for j in 0..n {
                s += a[i][j] * w1.get(nodes[j].0, c);
            }
            h[i][c] = s.max(0.0);
        }
    }
    let mut ah = vec![vec![0.0; d1]; n];
    for i in 0..n {
        for c in 0..d1 {
            for j in 0..n {
                ah[i][c] += a[i][j] * h[j][c];
            }
        }
    }
    let mut z = vec![vec![0.0; d2]; n];
    for i in 0..n {
        for c in 0..d2 {
            for k in 0..d1 {
                z[i][c] += ah[i][k] * w2.get(k, c);
            }
        }
    }
    z
}

/// Dense `n x n` coefficients in local order.
fn oracle_alpha(g: &SnapshotGraph, head: &AttentionHeadParams, w: &DenseMatrix) -> Vec<Vec<f64>> {
    let n = g.n();
    let d = head.h.rows();
    let nodes = g.nodes();
    let proj = |u: usize| -> Vec<f64> {
        (0..d).map(|r| (0..d).map(|c| head.h.get(r, c) * w.get(nodes[u].0, c)).sum()).collect()
    };
    let mut alpha = vec![vec![0.0; n]; n];
    for i in 0..n {
        let hi = proj(i);
        let src: f64 = (0..d).map(|c| head.a.get(c, 0) * hi[c]).sum();
        let nb = neighborhood(g, i);
        let scores: Vec<f64> = nb
            .iter()
            .map(|&(j, wt)| {
                let hj = proj(j);
                let dst: f64 = (0..d).map(|c| head.a.get(d + c, 0) * hj[c]).sum();
                sig(wt * (src + dst)).exp()
            })
            .collect();
        let total: f64 = scores.iter().sum();
        for (&(j, _), s) in nb.iter().zip(&scores) {
            alpha[i][j] = s / total;
        }
    }
    alpha
}

fn oracle_evolve(g: &SnapshotGraph, t: &TransitionParams, w: &DenseMatrix) -> DenseMatrix {
    let n = g.n();
    let d = w.cols();
    let nodes = g.nodes();
    let mut out = w.clone();
    let mut acc = vec![vec![0.0; d]; n];
    for head in &t.heads {
        let alpha = oracle_alpha(g, head, w);
        for i in 0..n {
            for j in 0..n {
                if alpha[i][j] == 0.0 {
                    continue;
                }
                for r in 0..d {
                    let hj: f64 = (0..d).map(|c| head.h.get(r, c) * w.get(nodes[j].0, c)).sum();
                    acc[i][r] += alpha[i][j] * hj;
                }
            }
        }
    }
    let h = t.heads.len() as f64;
    for i in 0..n {
        for r in 0..d {
            out.set(nodes[i].0, r, elu(acc[i][r] / h));
        }
    }
    out
}

fn oracle_reconstruction(z: &DenseMatrix, g: &SnapshotGraph) -> f64 {
    let n = g.n();
    let nodes = g.nodes();
    let mut ss = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = (0..z.cols()).map(|c| z.get(i, c) * z.get(j, c)).sum();
            let target = if i == j { 0.0 } else { g.weight(nodes[i], nodes[j]).unwrap_or(0.0) };
            ss += (sig(dot) - target).powi(2);
        }
    }
    (ss / (n * n) as f64).sqrt()
}

fn max_diff(a: &DenseMatrix, b: &[Vec<f64>]) -> f64 {
    let mut m = 0.0f64;
    for (i, row) in b.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m = m.max((a.get(i, j) - v).abs());
        }
    }
    m
}

/// The synthetic event shared by the learning criteria.
fn desk_event(seed: u64) -> evograph::EventSequence {
    let cfg = SimConfig { seed, ..SimConfig::default() };
    assert_eq!((cfg.arrival, cfg.offices, cfg.viewers_total, cfg.snapshots), (Arrival::FrontLoaded, 4, 80, 8));
    normalize_weights(simulate_event(&cfg).unwrap()).unwrap()
}

const DESK_K: usize = 6;

fn desk_report() -> &'static EvalReport {
    use std::sync::OnceLock;
    static REPORT: OnceLock<EvalReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let opts = EvalOptions { trials: 5, seed: 0, repeat_seed: false };
        run_evaluation(&desk_event(0), DESK_K, &ModelConfig::teacher(), &ModelConfig::student(), &opts, ScorerKind::Dot)
            .unwrap()
    })
}

// -------------------------------------------------------------- criteria

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 12;
    let window: Vec<SnapshotGraph> = (0..4)
        .map(|k| {
            let m = rng.random_range(8..=n);
            random_snapshot(&mut rng, k, n, m, 0.35)
        })
        .collect();
    let prepared = PreparedWindow::new(&window).unwrap();
    let cfg = ModelConfig { window: 3, heads: 2, hidden_dim: 8, embed_dim: 4, ..ModelConfig::teacher() };
    let mut model = EgadModel::new(cfg, registry(n)).unwrap();
    for p in model.params_mut() {
        let (r, c) = p.shape();
        // Unit scale keeps the chain away from both sigmoid saturation
        // and vanishing attention gradients.
        *p = rand_m(&mut rng, r, c, 1.0);
    }
    let last = window.last().unwrap().n();
    let soft = evograph::teacher::soft_adjacency(&rand_m(&mut rng, last, 3, 1.0));
    let objectives = [
        ("reconstruction", Objective::Reconstruction),
        ("distillation", Objective::Distillation { soft_targets: &soft, gamma: 0.5 }),
    ];
    let step = 1e-5;
    let mut worst = 0.0f64;
    let mut coords = 0;
    let mut largest = 0.0f64;
    for (_, obj) in objectives {
        let (_, grads) = loss_and_gradients(&model, &prepared, obj).unwrap();
        for (pi, g) in grads.iter().enumerate() {
            for idx in 0..g.len() {
                let mut probe = model.clone();
                let orig = probe.params()[pi].as_slice()[idx];
                probe.params_mut()[pi].as_mut_slice()[idx] = orig + step;
                let up = objective_value(&probe, &prepared, obj).unwrap();
                probe.params_mut()[pi].as_mut_slice()[idx] = orig - step;
                let down = objective_value(&probe, &prepared, obj).unwrap();
                let fd = (up - down) / (2.0 * step);
                let an = g.as_slice()[idx];
                // Coordinates whose gradient is exactly zero on both sides
                // (rows of nodes absent from the window) have no scale.
                let scale = an.abs().max(fd.abs());
                let rel = if scale == 0.0 { 0.0 } else { (an - fd).abs() / scale };
                worst = worst.max(rel);
                largest = largest.max(an.abs());
                coords += 1;
            }
        }
    }
    // A saturated instance would pass with all-zero gradients.
    outcome(
        worst < 1e-4 && largest > 1e-3,
        format!("{coords} coordinates, worst relative error {worst:.2e}, largest |gradient| {largest:.2e}"),
    )
}

fn oracle_instances() -> Vec<(SnapshotGraph, usize, ChaCha8Rng)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..120)
        .map(|i| {
            let n_global = rng.random_range(1..=20);
            let n = rng.random_range(1..=n_global);
            let p = rng.random_range(0.05..0.7);
            let g = random_snapshot(&mut rng, 0, n_global, n, p);
            (g, n_global, ChaCha8Rng::seed_from_u64(1000 + i))
        })
        .collect()
}

fn oracles() -> Outcome {
    let mut worst = [0.0f64; 5];
    let instances = oracle_instances();
    for (g, n_global, mut rng) in instances.clone() {
        let d1 = rng.random_range(1..6);
        let d2 = rng.random_range(1..=d1);
        let a_hat = normalize_adjacency(&g).unwrap();
        worst[0] = worst[0].max(max_diff(&a_hat, &oracle_normalize(&g)));

        let params = GcnParams { w1: rand_m(&mut rng, n_global, d1, 1.0), w2: rand_m(&mut rng, d1, d2, 1.0) };
        let z = gcn_forward(&a_hat, &identity_features(&g), &params).unwrap();
        worst[1] = worst[1].max(max_diff(&z, &oracle_gcn(&g, &params.w1, &params.w2)));

        let heads: Vec<AttentionHeadParams> = (0..rng.random_range(1..4))
            .map(|_| AttentionHeadParams { h: rand_m(&mut rng, d1, d1, 1.0), a: rand_m(&mut rng, 2 * d1, 1, 1.0) })
            .collect();
        let w = rand_m(&mut rng, n_global, d1, 1.0);
        for head in &heads {
            let alpha = attention_coefficients(&g, head, &w).unwrap();
            worst[2] = worst[2].max(max_diff(&alpha, &oracle_alpha(&g, head, &w)));
        }
        let t = TransitionParams { heads };
        let evolved = evolve_weights(&g, &t, &w).unwrap();
        worst[3] = worst[3].max(evolved.max_abs_diff(&oracle_evolve(&g, &t, &w)));

        let r = reconstruction_loss(&z, &g).unwrap();
        worst[4] = worst[4].max((r - oracle_reconstruction(&z, &g)).abs());
    }
    let names = ["normalize", "gcn", "attention", "evolve", "reconstruction"];
    let pass = worst.iter().all(|&w| w < 1e-10);
    let detail = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.1e}")).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("{} instances; max |diff|: {detail}", instances.len()))
}

fn stochasticity() -> Outcome {
    let mut worst = 0.0f64;
    let (mut rows, mut singles, mut single_bad) = (0, 0, 0);
    for (g, n_global, mut rng) in oracle_instances() {
        let d = rng.random_range(1..6);
        let head = AttentionHeadParams { h: rand_m(&mut rng, d, d, 2.0), a: rand_m(&mut rng, 2 * d, 1, 2.0) };
        let w = rand_m(&mut rng, n_global, d, 2.0);
        let alpha = attention_coefficients(&g, &head, &w).unwrap();
        for i in 0..g.n() {
            rows += 1;
            worst = worst.max((alpha.row(i).iter().sum::<f64>() - 1.0).abs());
            if neighborhood(&g, i).len() == 1 {
                singles += 1;
                single_bad += usize::from(alpha.get(i, i) != 1.0);
            }
        }
    }
    outcome(
        worst <= 1e-9 && single_bad == 0 && singles > 0,
        format!("{rows} rows, max |sum - 1| {worst:.1e}; {singles} single-neighbor rows, {single_bad} not exactly 1"),
    )
}

fn accounting() -> Outcome {
    let n_global = 30;
    let mut mismatches = vec![];
    for l in 1..=5 {
        for h in 1..=5 {
            let cfg = ModelConfig { window: l, heads: h, ..ModelConfig::teacher() };
            let model = EgadModel::new(cfg.clone(), registry(n_global)).unwrap();
            let enumerated: usize = model.params().iter().map(|p| p.len()).sum();
            if count_params(&cfg, n_global) != enumerated as u64 || model.num_trainable() != enumerated as u64 {
                mismatches.push((l, h));
            }
        }
    }
    let analytic = |n: u64, l: u64, h: u64, d1: u64, d2: u64| n * d1 + (l + 1) * d1 * d2 + l * h * (d1 * d1 + 2 * d1);
    let (t, s) = (analytic(200, 3, 3, 32, 16), analytic(200, 3, 1, 8, 4));
    let ratio = CompressionRatio::new(count_params(&ModelConfig::student(), 200), count_params(&ModelConfig::teacher(), 200))
        .unwrap()
        .ratio();
    let g = gcd(s, t);
    let exact = *ratio.numer() == s / g && *ratio.denom() == t / g;
    let shown = CompressionRatio::new(133, 918).unwrap().presentation();
    outcome(
        mismatches.is_empty() && exact && shown == "15:100",
        format!("25 (l, h) configs, mismatches {mismatches:?}; ratio {ratio} (analytic {s}/{t}); 0.133/0.918 shown as {shown}"),
    )
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn learning() -> Outcome {
    let r = desk_report();
    let t = r.teacher.rmse.mean;
    let b = r.baseline.rmse.mean;
    let loss_drops = r.trials.iter().all(|x| x.teacher_loss_last < x.teacher_loss_first);
    outcome(
        t <= 0.8 * b && loss_drops,
        format!(
            "teacher rmse {t:.4} vs baseline {b:.4} (ratio {:.3}, need <= 0.8); loss fell in every trial: {loss_drops}; {} test links",
            t / b,
            r.trials[0].n_test
        ),
    )
}

fn distillation() -> Outcome {
    let r = desk_report();
    let (s, t) = (r.student.rmse.mean, r.teacher.rmse.mean);
    let fewer = r.param_count_teacher >= 5 * r.param_count_student;
    outcome(
        s <= 1.05 * t && fewer,
        format!(
            "student rmse {s:.4} vs teacher {t:.4} (ratio {:.3}, need <= 1.05; relative change {:+.1}%); params {} vs {}",
            s / t,
            100.0 * (s - t) / t,
            r.param_count_student,
            r.param_count_teacher
        ),
    )
}

fn gamma_shape() -> Outcome {
    let grid = gamma_grid();
    let mut interior = 0;
    let mut picks = vec![];
    for seed in 0..5 {
        let opts = EvalOptions { trials: 5, seed, repeat_seed: false };
        let rows = sweep_gamma(
            &desk_event(seed),
            &[DESK_K],
            &ModelConfig::teacher(),
            &ModelConfig::student(),
            &opts,
            &grid,
            ScorerKind::Dot,
        )
        .unwrap();
        assert_eq!(rows.len(), 9);
        let best = rows.iter().min_by(|a, b| a.rmse.mean.total_cmp(&b.rmse.mean)).unwrap().gamma;
        interior += usize::from(best > 0.15 && best < 0.85);
        picks.push(format!("{best:.1}"));
    }
    outcome(interior >= 4, format!("best gamma per seed [{}]; interior in {interior}/5", picks.join(", ")))
}

fn hygiene() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut checked, mut bad, mut reports) = (0, 0, 0);
    let arrivals = [Arrival::FrontLoaded, Arrival::Burst, Arrival::Gradual];
    for i in 0..50u64 {
        let cfg = SimConfig {
            seed: 500 + i,
            viewers_total: rng.random_range(30..=80),
            arrival: arrivals[i as usize % 3],
            ..SimConfig::default()
        };
        let event = normalize_weights(simulate_event(&cfg).unwrap()).unwrap();
        for k in 1..event.len() - 1 {
            let l = 1;
            let Ok(links) = scorable_links(&event, k, l) else { continue };
            if links.len() < MIN_LINKS {
                continue;
            }
            let split = split_links(&links, rng.random()).unwrap();
            let mut union: Vec<_> = split.validation.iter().chain(split.test.iter()).map(|x| (x.u, x.v)).collect();
            let total = union.len();
            union.sort();
            union.dedup();
            let all: Vec<_> = links.iter().map(|x| (x.u, x.v)).collect();
            let window = event.window(k, l).unwrap();
            checked += 1;
            if union.len() != total || union != all || !is_leak_free(&split.test, window) {
                bad += 1;
            }
        }
        if i % 10 == 0 {
            let t = ModelConfig { window: 1, heads: 1, hidden_dim: 4, embed_dim: 2, epochs: 2, ..ModelConfig::teacher() };
            let s = ModelConfig { window: 1, hidden_dim: 4, embed_dim: 2, epochs: 2, ..ModelConfig::student() };
            let opts = EvalOptions { trials: 5, seed: i, repeat_seed: false };
            if let Ok(r) = run_evaluation(&event, event.len() - 2, &t, &s, &opts, ScorerKind::Dot) {
                reports += 1;
                let mean = r.trials.iter().map(|x| x.teacher.rmse).sum::<f64>() / 5.0;
                if r.trials.len() != 5 || (r.teacher.rmse.mean - mean).abs() > 1e-12 {
                    bad += 1;
                }
            }
        }
    }
    outcome(
        bad == 0 && checked > 0 && reports > 0,
        format!("{checked} splits over 50 events and {reports} 5-trial reports; {bad} violations"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "seed = 3\n[teacher]\nepochs = 40\n[student]\nepochs = 40\n[eval]\nscorers = [\"dot\", \"mlp\"]\ntrials = 3\n\
         [data.simulate]\nviewers_total = 60\n",
    )
    .unwrap();
    let run = |out: &Path| -> Result<(), String> {
        let st = Command::new(env!("CARGO_BIN_EXE_evograph"))
            .arg("evaluate")
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .env("RUST_LOG", "warn")
            .status()
            .map_err(|e| e.to_string())?;
        if st.success() {
            Ok(())
        } else {
            Err(format!("evaluate exited with {st}"))
        }
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if let Err(e) = run(&a).and_then(|_| run(&b)) {
        return outcome(false, e);
    }
    let payload = |p: &Path| -> String {
        let r = io::read_report_json(p).unwrap();
        serde_json::to_string_pretty(&r.payload()).unwrap()
    };
    let mut files = 0;
    let mut differ = vec![];
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        let (pa, pb) = (a.join(&name), b.join(&name));
        let same = if name.to_string_lossy().ends_with(".json") {
            payload(&pa) == payload(&pb)
        } else {
            fs::read(&pa).unwrap() == fs::read(&pb).unwrap()
        };
        files += 1;
        if !same {
            differ.push(name.to_string_lossy().into_owned());
        }
    }
    outcome(files >= 3 && differ.is_empty(), format!("{files} output files compared; differing: {differ:?}"))
}

fn persistence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let dir = tempfile::tempdir().unwrap();
    let mut bad = vec![];
    for i in 0..20 {
        let n = rng.random_range(5..40);
        let cfg = ModelConfig {
            window: rng.random_range(1..4),
            heads: rng.random_range(1..4),
            hidden_dim: rng.random_range(2..9),
            embed_dim: 2,
            seed: rng.random(),
            ..ModelConfig::teacher()
        };
        let mut model = EgadModel::new(cfg, registry(n)).unwrap();
        for p in model.params_mut() {
            let (r, c) = p.shape();
            *p = rand_m(&mut rng, r, c, 1e3);
        }
        let bits = |m: &EgadModel| m.params().iter().flat_map(|p| p.as_slice().iter().map(|x| x.to_bits())).collect::<Vec<_>>();
        let back = checkpoint::load(&checkpoint::save(&model).unwrap()).unwrap();
        let path = dir.path().join(format!("m{i}.ckpt"));
        io::write_checkpoint(&path, &model).unwrap();
        let from_file = io::read_checkpoint(&path).unwrap();
        if back != model || bits(&back) != bits(&model) || bits(&from_file) != bits(&model) {
            bad.push(format!("checkpoint {i}"));
        }

        let sim = SimConfig {
            seed: rng.random(),
            viewers_total: rng.random_range(10..60),
            snapshots: rng.random_range(2..9),
            ..SimConfig::default()
        };
        let event = normalize_weights(simulate_event(&sim).unwrap()).unwrap();
        let edir = dir.path().join(format!("e{i}"));
        let manifest = io::export_event(&event, &edir, "kbps").unwrap();
        let loaded = io::load_event(&manifest).unwrap();
        let weight_bits = |e: &evograph::EventSequence| -> Vec<u64> {
            e.snapshots().iter().flat_map(|s| s.edges().iter().map(|x| x.weight.to_bits())).collect()
        };
        if loaded != event || weight_bits(&loaded) != weight_bits(&event) {
            bad.push(format!("event {i}"));
        }
    }
    outcome(bad.is_empty(), format!("20 checkpoints and 20 events; mismatches {bad:?}"))
}
