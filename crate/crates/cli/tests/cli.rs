use std::path::Path;
use std::process::{Command, Output};

use mocap_core::dataset::{
    write_trial, Balance, BowlSize, Frame, Orientation, Strategy, Trial, TrialMeta, Weight, DEFAULT_FRAME_RATE,
    FEATURES,
};
use serde_json::Value;

fn mocap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mocap")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\n{}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

const BODY: [[f64; 3]; 15] = [
    [-0.08, 0.10, 1.70],
    [0.08, 0.10, 1.70],
    [-0.08, -0.08, 1.68],
    [0.08, -0.08, 1.68],
    [-0.20, 0.00, 1.45],
    [0.20, 0.00, 1.45],
    [0.00, -0.05, 1.50],
    [-0.15, 0.08, 1.00],
    [0.15, 0.08, 1.00],
    [-0.15, -0.08, 1.00],
    [0.15, -0.08, 1.00],
    [-0.25, 0.30, 1.05],
    [0.25, 0.30, 1.05],
    [-0.12, 0.05, 0.05],
    [0.12, 0.05, 0.05],
];

/// Figure that stands still, carries the bowl sideways for 200 frames, then stops.
fn trial(i: usize) -> Trial {
    let meta = TrialMeta {
        participant: format!("p{:02}", i % 4),
        bowl_size: BowlSize::Medium,
        weight: Weight::ALL[i % 3],
        balance: if i % 2 == 0 { Balance::Balanced } else { Balance::Unbalanced },
        orientation: Orientation::Facing,
        strategy: Strategy::ALL[i % 9],
        frame_rate: DEFAULT_FRAME_RATE,
    };
    let salt = 0.01 * i as f64;
    let frames: Vec<Frame> = (0..300)
        .map(|t| {
            let dx = 0.005 * (t.clamp(50, 250) - 50) as f64;
            let mut f = [0.0; FEATURES];
            for (m, b) in BODY.iter().enumerate() {
                let carried = m == 11 || m == 12;
                f[3 * m] = b[0] + salt + if carried { dx } else { 0.3 * dx };
                f[3 * m + 1] = b[1] + 0.002 * (t as f64 * 0.1 + m as f64).sin();
                f[3 * m + 2] = b[2] + if carried { 0.1 * (t as f64 / 300.0) * (1 + i % 3) as f64 } else { 0.0 };
            }
            f[45] = dx + salt;
            f[46] = 0.35;
            f[47] = 1.05 + 0.1 * (t as f64 / 300.0) * (1 + i % 3) as f64;
            f
        })
        .collect();
    Trial::new(format!("trial_{i:03}"), meta, frames).unwrap()
}

fn corpus(dir: &Path, n: usize) {
    for i in 0..n {
        write_trial(&trial(i), dir).unwrap();
    }
}

fn ingest(root: &Path, sampling: &str) -> std::path::PathBuf {
    let trials = root.join("trials");
    std::fs::create_dir_all(&trials).unwrap();
    corpus(&trials, 12);
    let out = root.join(format!("ingest-{sampling}"));
    assert_ok(&mocap(&["ingest", "--input", p(&trials), "--out", p(&out), "--sampling", sampling]));
    out.join("sequences.json")
}

/// Small networks so the tests train in a fraction of a second.
fn small_gan_config(root: &Path, cond: bool) -> std::path::PathBuf {
    let cond_dim = if cond { 6 } else { 0 };
    let cfg = serde_json::json!({
        "epochs": 5,
        "batch": 4,
        "critic_steps": 2,
        "augment_factor": 2,
        "diversity_samples": 0,
        "generator": { "noise_dim": 8, "cond_dim": cond_dim, "base_channels": 8, "filters": [8, 8, 48] },
        "critic": { "cond_dim": cond_dim, "filters": [4, 4, 4] }
    });
    let path = root.join(format!("gan-{cond}.json"));
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(mocap(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(mocap(&["stats", "--bogus"]).status.code(), Some(2));
    assert_eq!(mocap(&["stats"]).status.code(), Some(2));
    assert_eq!(mocap(&["train-gan", "--kind", "gan"]).status.code(), Some(2));
    assert_eq!(mocap(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"inptu": "x"}"#).unwrap();
    assert_eq!(mocap(&["stats", "--config", p(&cfg)]).status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(mocap(&["stats", "--input", p(&missing)]).status.code(), Some(1));
}

#[test]
fn stats_counts_labels() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path(), 12);
    let out = dir.path().join("out");
    let run = mocap(&["stats", "--input", p(dir.path()), "--out", p(&out)]);
    assert_ok(&run);
    assert!(String::from_utf8_lossy(&run.stdout).contains("trials: 12"));
    let stats = read_json(&out.join("stats.json"));
    assert_eq!(stats["trials"], 12);
    assert_eq!(stats["strategy"]["A"], 2);
    assert_eq!(stats["strategy"]["C"], 2);
    assert_eq!(stats["strategy"]["D"], 1);
    assert_eq!(stats["strategy"]["E"], 1);
    assert_eq!(stats["weight"]["heavier"], 4);
    assert_eq!(stats["balanced"], 6);
}

#[test]
fn flags_override_config_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let archive = ingest(dir.path(), "uniform");
    let cfg = small_gan_config(dir.path(), false);
    let out = dir.path().join("gan");
    let run = mocap(&[
        "train-gan", "--config", p(&cfg), "--input", p(&archive), "--out", p(&out), "--epochs", "1", "--seed", "3",
    ]);
    assert_ok(&run);
    let resolved = read_json(&out.join("config.json"));
    assert_eq!(resolved["epochs"], 1);
    assert_eq!(resolved["batch"], 4);
    assert_eq!(resolved["seed"], 3);
    assert_eq!(resolved["gp_lambda"], 10.0);
    assert_eq!(resolved["kind"], "wgan-gp");

    // The resolved file reproduces the run.
    let again = dir.path().join("gan-again");
    assert_ok(&mocap(&["train-gan", "--config", p(&out.join("config.json")), "--out", p(&again)]));
    for f in ["generator.ckpt", "critic.ckpt", "report.json"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn generate_writes_sequences_and_renders() {
    let dir = tempfile::tempdir().unwrap();
    let archive = ingest(dir.path(), "uniform");
    let model = dir.path().join("gan");
    let cfg = small_gan_config(dir.path(), false);
    assert_ok(&mocap(&["train-gan", "--config", p(&cfg), "--input", p(&archive), "--out", p(&model), "--epochs", "1"]));
    let losses = std::fs::read_to_string(model.join("losses.csv")).unwrap();
    assert!(losses.starts_with("generator_step,"));

    let out = dir.path().join("gen");
    let ckpt = model.join("generator.ckpt");
    assert_ok(&mocap(&["generate", "--model", p(&ckpt), "--out", p(&out), "--count", "5", "--render"]));
    for i in 0..5 {
        let csv = std::fs::read_to_string(out.join(format!("seq_{i:03}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 33, "header plus 32 frames");
        let geometry = std::fs::read_to_string(out.join(format!("render_{i:03}/geometry.jsonl"))).unwrap();
        assert_eq!(geometry.lines().count(), 32);
    }
    assert!(!out.join("seq_005.csv").exists());

    let svg = dir.path().join("svg");
    assert_ok(&mocap(&["render", "--input", p(&out.join("seq_000.csv")), "--out", p(&svg), "--format", "svg"]));
    assert!(svg.join("frame_031.svg").exists());
}

#[test]
fn conditional_generation_needs_a_label() {
    let dir = tempfile::tempdir().unwrap();
    let archive = ingest(dir.path(), "uniform");
    let model = dir.path().join("gan");
    let cfg = small_gan_config(dir.path(), true);
    assert_ok(&mocap(&[
        "train-gan", "--config", p(&cfg), "--input", p(&archive), "--out", p(&model), "--kind", "cond-wgan-gp",
        "--epochs", "1",
    ]));
    let ckpt = model.join("generator.ckpt");
    let out = dir.path().join("gen");
    assert_eq!(mocap(&["generate", "--model", p(&ckpt), "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(mocap(&["generate", "--model", p(&ckpt), "--out", p(&out), "--label", "weight=huge"]).status.code(), Some(2));
    assert_ok(&mocap(&["generate", "--model", p(&ckpt), "--out", p(&out), "--label", "weight=heaviest,balance=unbalanced"]));
    assert!(out.join("seq_000.csv").exists());
}

#[test]
fn classifier_train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let archive = ingest(dir.path(), "centered");
    let model = dir.path().join("clf");
    assert_ok(&mocap(&[
        "train-classifier", "--input", p(&archive), "--out", p(&model), "--task", "weight", "--epochs", "2",
        "--augment-factor", "2", "--validation-size", "2", "--batch", "4",
    ]));
    let curve = std::fs::read_to_string(model.join("learning_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);

    let eval = dir.path().join("eval");
    let run = mocap(&["eval-classifier", "--model", p(&model.join("model.ckpt")), "--input", p(&archive), "--out", p(&eval)]);
    assert_ok(&run);
    let report = read_json(&eval.join("evaluation.json"));
    // heavy and heaviest trials only: 4 + 4.
    let total: u64 = report["confusion"]["counts"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 8);
}

#[test]
fn augment_multiplies_the_archive() {
    let dir = tempfile::tempdir().unwrap();
    let archive = ingest(dir.path(), "centered");
    let out = dir.path().join("aug");
    assert_ok(&mocap(&["augment", "--input", p(&archive), "--out", p(&out), "--factor", "3", "--rotate-max", "30"]));
    let aug = read_json(&out.join("sequences.json"));
    assert_eq!(aug["sequences"].as_array().unwrap().len(), 36);
    assert_eq!(read_json(&out.join("config.json"))["augment"]["rotate_range"][1], 30.0);
    let bad = mocap(&["augment", "--input", p(&archive), "--out", p(&out), "--factor", "0"]);
    assert_eq!(bad.status.code(), Some(2));
}
