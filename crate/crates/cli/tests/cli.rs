use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rawsat_core::pipeline::PipelineConfig;

fn rawsat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rawsat"))
        .args(args)
        .env_remove("RAWSAT_LOG")
        .output()
        .expect("spawn rawsat")
}

fn ok(args: &[&str]) -> String {
    let out = rawsat(args);
    assert!(
        out.status.success(),
        "rawsat {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    rawsat(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Every file under `dir`, keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.insert(p.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn noise_fit_prints_params() {
    let out = ok(&["noise-fit", "--dark", "10:20", "--bright", "1000:200"]);
    assert_eq!(out.trim(), r#"{"alpha":0.025,"beta":0.0}"#);

    // 20 dB is an amplitude ratio of 10
    let out = ok(&["noise-fit", "--db", "--dark", "10:20", "--bright", "1000:40"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let alpha = v["alpha"].as_f64().unwrap();
    let beta = v["beta"].as_f64().unwrap();
    // variance alpha*L + beta gives SNR(10) = 10 and SNR(1000) = 100
    assert!((10.0 / (alpha * 10.0 + beta).sqrt() - 10.0).abs() < 1e-9);
    assert!((1000.0 / (alpha * 1000.0 + beta).sqrt() - 100.0).abs() < 1e-9);
}

#[test]
fn noise_fit_rejects_bad_anchors() {
    assert_eq!(code(&["noise-fit", "--dark", "10:20", "--bright", "10:20"]), 2);
    assert_eq!(code(&["noise-fit", "--dark", "ten", "--bright", "1000:200"]), 2);
    assert_eq!(code(&["noise-fit", "--dark", "10:20"]), 2);
}

#[test]
fn evaluate_reproduces_golden_fixture() {
    let fx = repo().join("fixtures/eval");
    let d = tempfile::tempdir().unwrap();
    let stdout = ok(&[
        "evaluate",
        "--gt",
        s(&fx.join("dataset")),
        "--pred",
        s(&fx.join("preds.jsonl")),
        "--out",
        s(d.path()),
    ]);
    let golden: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fx.join("golden.json")).unwrap()).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("report.json")).unwrap()).unwrap();
    for (key, field) in [("mAP50", "map50"), ("mAP50_95", "map50_95"), ("AP95", "ap95"), ("mean_tp_iou", "mean_tp_iou")] {
        let want = golden[key].as_f64().unwrap();
        assert!((summary[key].as_f64().unwrap() - want).abs() <= 1e-12, "{key}");
        assert!((report[field].as_f64().unwrap() - want).abs() <= 1e-12, "{field}");
    }
    let points = report["operating_points"].as_array().unwrap();
    let gold_points = golden["operating_points"].as_array().unwrap();
    assert_eq!(points.len(), gold_points.len());
    for (p, g) in points.iter().zip(gold_points) {
        for (k, i) in [("precision", 0), ("recall", 1), ("f1", 2)] {
            assert!((p[k].as_f64().unwrap() - g[i].as_f64().unwrap()).abs() <= 1e-12);
        }
    }
    assert!(d.path().join("report.csv").is_file());
    assert!(d.path().join("report.svg").is_file());
}

#[test]
fn evaluate_error_exit_codes() {
    let fx = repo().join("fixtures/eval");
    let d = tempfile::tempdir().unwrap();
    let preds = d.path().join("preds.jsonl");
    std::fs::write(
        &preds,
        r#"{"image_id":"x","class_id":77,"confidence":0.5,"bbox":[0,0,4,4]}"#,
    )
    .unwrap();
    let gt = fx.join("dataset");
    let out = d.path().join("r");
    assert_eq!(code(&["evaluate", "--gt", s(&gt), "--pred", s(&preds), "--out", s(&out)]), 3);
    std::fs::write(&preds, "not json\n").unwrap();
    assert_eq!(code(&["evaluate", "--gt", s(&gt), "--pred", s(&preds), "--out", s(&out)]), 3);
    let good = fx.join("preds.jsonl");
    assert_eq!(
        code(&["evaluate", "--gt", s(&gt), "--pred", s(&good), "--out", s(&out), "--formats", "pdf"]),
        2
    );
    assert_eq!(code(&["evaluate", "--gt", s(&gt)]), 2);
}

#[test]
fn stage_commands_chain_into_previews() {
    let d = tempfile::tempdir().unwrap();
    let p = |n: &str| d.path().join(n);
    ok(&["--seed", "3", "synth", "--out", s(&p("g")), "--id", "chain", "--width", "256", "--height", "256", "--objects", "5"]);
    ok(&["degrade", "--input", s(&p("g")), "--out", s(&p("raw")), "--mtf", "0.3"]);
    ok(&["restore", "--input", s(&p("raw")), "--out", s(&p("rest"))]);
    ok(&["pansharpen", "--input", s(&p("rest")), "--out", s(&p("ps")), "--use-restored", "--weights", "1,1,1"]);
    let counts = ok(&[
        "tile", "--input", s(&p("ps")), "--out", s(&p("ds")), "--patch-size", "32", "--mode", "object-centered",
    ]);
    let counts: serde_json::Value = serde_json::from_str(&counts).unwrap();
    let n: u64 = ["train", "val", "test"].iter().map(|k| counts[k]["tiles"].as_u64().unwrap()).sum();
    assert!(n > 0);
    assert!(p("ds").join("manifest.json").is_file());

    let listed = ok(&["preview", "--input", s(&p("ps")), "--out", s(&p("png")), "--variant", "pan,xs,restored,pansharp"]);
    let files: Vec<&str> = listed.lines().collect();
    assert_eq!(files.len(), 5);
    for v in ["pan", "xs", "restored", "pansharp", "panels"] {
        assert!(p("png").join(format!("chain_{v}.png")).is_file(), "{v}");
    }

    assert_eq!(code(&["restore", "--input", s(&p("raw")), "--out", s(&p("x")), "--method", "edsr"]), 2);
    assert_eq!(code(&["tile", "--input", s(&p("ps")), "--out", s(&p("y")), "--mode", "spiral"]), 2);
    assert_eq!(code(&["degrade", "--input", s(&p("nope")), "--out", s(&p("z"))]), 3);
}

fn write_run_config(dir: &Path) -> PathBuf {
    for i in 0..2 {
        ok(&["--seed", &i.to_string(), "synth", "--out", s(&dir.join(format!("g{i}"))), "--id", &format!("g{i}"), "--width", "256", "--height", "256", "--objects", "4"]);
    }
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        r#"
seed = 11
output = "ds"
inputs = ["g0", "g1"]

[degrade.mtf.default]
mtf_at_nyquist = 0.3

[tile]
patch_size = 32
mode = "object-centered"
"#,
    )
    .unwrap();
    cfg
}

#[test]
fn run_is_deterministic_across_thread_counts() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_run_config(d.path());
    let a = d.path().join("a");
    let b = d.path().join("b");
    ok(&["--threads", "1", "run", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["--threads", "3", "run", "--config", s(&cfg), "--out", s(&b)]);
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.contains_key(Path::new("manifest.json")));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    assert!(ta == tb, "output trees differ");

    // a different global seed changes the product
    let c = d.path().join("c");
    ok(&["--seed", "12", "run", "--config", s(&cfg), "--out", s(&c)]);
    assert!(tree(&c) != ta);

    let raw = d.path().join("raw");
    let out = ok(&["run", "--config", s(&cfg), "--out", s(&raw), "--variant", "raw"]);
    assert!(out.contains("\"raw-sim\""));
}

#[test]
fn run_config_errors_exit_2_and_leave_nothing() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.toml");
    std::fs::write(&cfg, "inputs = []\nbogus = 1\n").unwrap();
    assert_eq!(code(&["run", "--config", s(&cfg)]), 2);

    std::fs::write(&cfg, "inputs = [\"g\"]\noutput = \"ds\"\n[restore]\nmethod = \"edsr\"\nweights = \"missing.edsw\"\n").unwrap();
    assert_eq!(code(&["run", "--config", s(&cfg)]), 2);
    assert!(!d.path().join("ds").exists());

    assert_eq!(code(&["run", "--config", s(&cfg), "--variant", "sideways"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
}

#[test]
fn timing_lines_on_stderr() {
    let d = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rawsat"))
        .args(["synth", "--out", s(&d.path().join("g")), "--width", "128", "--height", "128", "--objects", "1"])
        .env("RAWSAT_LOG", "info")
        .output()
        .unwrap();
    assert!(out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let timing: Vec<serde_json::Value> = stderr
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter(|v| v.get("stage").is_some())
        .collect();
    assert_eq!(timing.len(), 1);
    assert_eq!(timing[0]["stage"], "synth");
    assert!(timing[0]["ms"].as_f64().unwrap() >= 0.0);
    // without RAWSAT_LOG nothing below warn is printed
    let quiet = rawsat(&["synth", "--out", s(&d.path().join("h")), "--width", "128", "--height", "128", "--objects", "1"]);
    assert!(quiet.stderr.is_empty());
}

#[test]
fn example_config_parses() {
    let text = std::fs::read_to_string(repo().join("configs/pipeline.toml")).unwrap();
    let cfg = PipelineConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.tile.patch_size, 64);
    assert_eq!(cfg.seed, 7);
}
