use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hgrw_core::io::load_graph;
use serde_json::Value;

fn hgrw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgrw"))
        .args(args)
        .env_remove("HGRW_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hgrw(args);
    assert!(
        out.status.success(),
        "hgrw {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

const QUICK_TRAIN: &[&str] = &["--epochs-attr", "5", "--epochs-label", "2", "--hidden-dim", "8"];

#[test]
fn pipeline_on_defaults_raises_relation_homophily() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, model, out, report) = (
        tmp.path().join("ds"),
        tmp.path().join("model.msl"),
        tmp.path().join("rewired"),
        tmp.path().join("report.json"),
    );
    ok(&["synth", "--out", s(&ds)]);
    let inspect = ok(&["inspect", s(&ds)]);
    assert!(inspect.contains("P[r0]P\t5000\t"), "{inspect}");
    assert!(inspect.lines().any(|l| l.starts_with("MH ")));

    ok(&["train", s(&ds), "--out", s(&model)]);
    assert!(model.exists());
    let csv = fs::read_to_string(tmp.path().join("model.msl.loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 230);

    ok(&["rewire", s(&ds), "--model", s(&model), "--out", s(&out)]);
    for f in ["manifest.json", "rewire_plan.tsv", "homophily_report.json", "homophily_report.tsv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }

    ok(&["diag", s(&out), "--report", s(&report), "--baseline", s(&ds)]);
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let rows = v["comparison"]["paths"].as_array().unwrap();
    for name in ["P[r0]P", "P[r1]P"] {
        let row = rows.iter().find(|r| r["metapath"] == name).unwrap();
        let (before, after) = (row["hr_before"].as_f64().unwrap(), row["hr_after"].as_f64().unwrap());
        assert!(after > before, "{name}: {before} -> {after}");
    }
    assert!(v["paths"].as_array().unwrap().iter().all(|p| p["complexity"].is_f64()));
}

#[test]
fn identity_rewire_reproduces_the_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let (ds, model, out) = (tmp.path().join("ds"), tmp.path().join("m"), tmp.path().join("out"));
    ok(&["synth", "--out", s(&ds), "--nodes", "120", "--aux-sizes", "10", "--seed", "4"]);
    let mut train = vec!["train", s(&ds), "--out", s(&model)];
    train.extend(QUICK_TRAIN);
    ok(&train);
    ok(&["rewire", s(&ds), "--model", s(&model), "--out", s(&out), "--edge-budget", "0", "--gamma", "-1"]);
    assert_eq!(load_graph(&ds).unwrap(), load_graph(&out).unwrap());
    let plan = fs::read_to_string(out.join("rewire_plan.tsv")).unwrap();
    assert_eq!(plan.lines().count(), 1);
}

#[test]
fn fixed_seed_training_writes_identical_histories() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    ok(&["synth", "--out", s(&ds), "--nodes", "100"]);
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let model = tmp.path().join(run);
        let mut args = vec!["train", s(&ds), "--out", s(&model), "--seed", "7"];
        args.extend(QUICK_TRAIN);
        ok(&args);
        csvs.push(fs::read(tmp.path().join(format!("{run}.loss.csv"))).unwrap());
        assert!(!fs::read(&model).unwrap().is_empty());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(fs::read(tmp.path().join("a")).unwrap(), fs::read(tmp.path().join("b")).unwrap());
}

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    ok(&["synth", "--out", s(&ds), "--nodes", "60", "--feature-format", "tsv"]);

    assert_eq!(hgrw(&["train"]).status.code(), Some(1));
    assert_eq!(hgrw(&["inspect", s(&ds), "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(hgrw(&["--help"]).status.code(), Some(0));

    let missing = hgrw(&["inspect", s(&tmp.path().join("absent"))]);
    assert_eq!(missing.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&missing.stderr);
    assert_eq!(msg.trim_end().lines().count(), 1, "{msg}");

    let broken = tmp.path().join("broken");
    ok(&["synth", "--out", s(&broken), "--nodes", "60"]);
    fs::write(broken.join("edges_r0.tsv"), "0\t1\n1\t999\n").unwrap();
    let out = hgrw(&["inspect", s(&broken)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));

    let features = ds.join("features_P.tsv");
    let text = fs::read_to_string(&features).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<&str> = lines[1].split('\t').collect();
    fields[0] = "NaN";
    lines[1] = fields.join("\t");
    fs::write(&features, lines.join("\n") + "\n").unwrap();
    let mut args = vec!["train", s(&ds), "--out", "unused"];
    args.extend(QUICK_TRAIN);
    let nan = hgrw(&args);
    assert_eq!(nan.status.code(), Some(3), "{}", String::from_utf8_lossy(&nan.stderr));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    ok(&["synth", "--out", s(&ds), "--nodes", "40"]);
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_hgrw"))
            .args(["inspect", s(&ds)])
            .env("HGRW_THREADS", threads)
            .output()
            .unwrap()
    };
    assert!(run("2").status.success());
    assert_eq!(run("zero").status.code(), Some(1));
    assert_eq!(run("0").status.code(), Some(1));
}
