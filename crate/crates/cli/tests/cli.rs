use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn evograph(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evograph"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const SMALL: &str = "seed = 1\noutput_dir = \"out\"\n[teacher]\nepochs = 15\nhidden_dim = 8\nembed_dim = 4\n\
[student]\nepochs = 15\n[data.simulate]\nviewers_total = 60\n";

#[test]
fn missing_or_broken_config_fails_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = evograph(&["evaluate"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = evograph(&["evaluate", "nope.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));

    fs::write(dir.path().join("bad.toml"), "[teacher]\nheads = 0\n[data.simulate]\n").unwrap();
    let out = evograph(&["evaluate", "bad.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("heads"));
}

#[test]
fn simulate_train_distill_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), SMALL).unwrap();
    ok(evograph(&["simulate", "run.toml"], d));
    assert!(d.join("out/event/manifest.json").is_file());

    fs::write(
        d.join("files.toml"),
        SMALL.replace("[data.simulate]\nviewers_total = 60\n", "[data]\nmanifest = \"out/event/manifest.json\"\n"),
    )
    .unwrap();
    ok(evograph(&["train-teacher", "files.toml", "--k", "6"], d));
    ok(evograph(&["distill", "files.toml", "--k", "6", "--gamma", "0.3"], d));
    ok(evograph(&["train-teacher", "files.toml", "--k", "5", "--warm-start", "out/teacher.ckpt", "--out", "warm"], d));
    assert!(d.join("warm/teacher.ckpt").is_file());
    for f in ["teacher.ckpt", "student.ckpt", "teacher_trace.csv", "student_trace.csv"] {
        assert!(d.join("out").join(f).is_file(), "{f}");
    }
    let trace = fs::read_to_string(d.join("out/student_trace.csv")).unwrap();
    assert!(trace.starts_with("epoch,loss,seconds"));
    assert_eq!(trace.lines().count(), 16);

    ok(evograph(&["evaluate", "files.toml", "--trials", "5", "--scorer", "dot,raw_dot", "--out", "eval"], d));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("eval/report_k6_dot.json")).unwrap()).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 5);
    assert!(report["meta"]["created_unix_seconds"].as_u64().is_some());
    assert!(d.join("eval/report_k6_raw_dot.json").is_file());
    let csv = fs::read_to_string(d.join("eval/reports.csv")).unwrap();
    assert!(csv.starts_with("event,k,scorer,trial,model,metric,value"));
}

#[test]
fn distill_rejects_a_checkpoint_from_another_event() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), SMALL).unwrap();
    ok(evograph(&["train-teacher", "run.toml", "--seed", "1"], d));
    let out = evograph(&["distill", "run.toml", "--seed", "2"], d);
    assert!(!out.status.success());
}

#[test]
fn sweeps_write_one_row_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), SMALL.replace("epochs = 15", "epochs = 3")).unwrap();
    ok(evograph(&["sweep-gamma", "run.toml", "--trials", "2", "--jobs", "2"], d));
    let rows = fs::read_to_string(d.join("out/gamma_sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 9);

    ok(evograph(&["sweep-hparam", "run.toml", "--trials", "1", "--axis", "h,l"], d));
    let rows = fs::read_to_string(d.join("out/hparam_sweep.csv")).unwrap();
    // a teacher and a student row per setting; k = 6 fits every l
    assert_eq!(rows.lines().count(), 1 + 2 * (5 + 5));
}
