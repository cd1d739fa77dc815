use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_selectaugment"))
}

/// Small, fast config merged with `extra`.
fn write_config(dir: &Path, extra: Value) -> PathBuf {
    let mut cfg = json!({
        "train_size": 256,
        "test_size": 64,
        "batch_size": 64,
        "epochs": 2,
        "target_hidden": [16, 8],
        "policy_hidden": [16],
        "proxy_hidden": [8],
        "plots": true,
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    let o = bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn one_epoch_of_none_writes_two_steps_and_one_eval() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        json!({"strategy": "none", "epochs": 1, "batch_size": 128}),
    );
    let out = dir.path().join("out");
    run(&["train"], &cfg, &out);
    let (header, rows) = read_csv(&out.join("metrics.csv"));
    assert_eq!(
        header,
        [
            "epoch",
            "iteration",
            "strategy",
            "chosen_ratio",
            "k",
            "reward",
            "loss_original",
            "loss_selected",
            "loss_full",
            "target_train_loss",
            "test_accuracy",
            "wall_ms"
        ]
    );
    assert_eq!(rows.len(), 3);
    assert!(rows[..2].iter().all(|r| r[10].is_empty()));
    assert!(!rows[2][10].is_empty());
    let (sel_header, sel) = read_csv(&out.join("selections.csv"));
    assert_eq!(
        sel_header,
        ["iteration", "sample_id", "class", "score", "selected"]
    );
    assert_eq!(sel.len(), 256);
    assert!(out.join("checkpoint.bin").exists());
    let svg = fs::read_to_string(out.join("ratio_over_time.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn chosen_ratios_stay_in_the_pool() {
    let dir = TempDir::new().unwrap();
    for (intervals, allowed) in [(10usize, 11usize), (1, 2)] {
        let cfg = write_config(dir.path(), json!({"intervals": intervals}));
        let out = dir.path().join(format!("out{intervals}"));
        run(&["train"], &cfg, &out);
        let (_, rows) = read_csv(&out.join("metrics.csv"));
        let mut seen = Vec::new();
        for r in rows.iter().filter(|r| !r[3].is_empty()) {
            let ratio: f64 = r[3].parse().unwrap();
            let scaled = ratio * intervals as f64;
            assert!((scaled - scaled.round()).abs() < 1e-12, "{ratio}");
            assert!((0.0..=1.0).contains(&ratio));
            seen.push(scaled.round() as usize);
        }
        assert!(seen.iter().all(|&i| i < allowed));
    }
}

#[test]
fn resume_reproduces_the_remaining_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        json!({"epochs": 4, "checkpoint_every": 2, "strategy": "selectaugment_plus"}),
    );
    let full = dir.path().join("full");
    run(&["train"], &cfg, &full);
    let resumed = dir.path().join("resumed");
    let o = bin()
        .arg("train")
        .arg("--resume")
        .arg(full.join("checkpoint_epoch2.bin"))
        .arg("--out")
        .arg(&resumed)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["metrics.csv", "selections.csv"] {
        let a = fs::read_to_string(full.join(name)).unwrap();
        let b = fs::read_to_string(resumed.join(name)).unwrap();
        let mut b_lines = b.lines();
        let header = b_lines.next().unwrap();
        let tail: Vec<&str> = b_lines.collect();
        assert!(!tail.is_empty());
        let a_lines: Vec<&str> = a.lines().collect();
        assert_eq!(a_lines[0], header);
        assert_eq!(&a_lines[a_lines.len() - tail.len()..], &tail[..], "{name}");
    }
}

#[test]
fn fixed_extremes_match_all_and_none() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    let metrics = |strategy: &str| {
        let out = dir.path().join(strategy.replace(['(', ')', '.'], "_"));
        let o = bin()
            .args(["train", "--strategy", strategy, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success());
        let (_, mut rows) = read_csv(&out.join("metrics.csv"));
        for r in &mut rows {
            r.remove(2);
        }
        rows
    };
    assert_eq!(metrics("fixed(1.0)"), metrics("all"));
    assert_eq!(metrics("fixed(0.0)"), metrics("none"));
}

#[test]
fn sweep_emits_one_row_per_setting_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), json!({}));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&["sweep", "--intervals", "1,5,10"], &cfg, &a);
    run(&["sweep", "--intervals", "1,5,10"], &cfg, &b);
    let (header, rows) = read_csv(&a.join("sweep.csv"));
    assert_eq!(
        header,
        [
            "intervals",
            "final_test_accuracy",
            "final_test_loss",
            "mean_ratio"
        ]
    );
    let ids: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ids, ["1", "5", "10"]);
    assert_eq!(
        fs::read(a.join("sweep.csv")).unwrap(),
        fs::read(b.join("sweep.csv")).unwrap()
    );
}

#[test]
fn demo_shift_distances_are_finite() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), json!({"shift_bins": 7}));
    let out = dir.path().join("out");
    run(&["demo-shift"], &cfg, &out);
    let (header, rows) = read_csv(&out.join("shift.csv"));
    assert_eq!(
        header,
        ["sample_id", "class", "original", "full", "selected"]
    );
    assert_eq!(rows.len(), 256);
    for r in &rows {
        for v in &r[2..] {
            let d: f64 = v.parse().unwrap();
            assert!(d.is_finite() && d >= 0.0);
        }
    }
    let (_, hist) = read_csv(&out.join("shift_hist.csv"));
    assert_eq!(hist.len(), 7);
    for col in 2..5 {
        let total: usize = hist.iter().map(|r| r[col].parse::<usize>().unwrap()).sum();
        assert_eq!(total, 256);
    }
    assert!(out.join("shift_hist.svg").exists());
}

#[test]
fn oracle_test_reports_every_check() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        json!({"oracle_updates": 50, "oracle_seeds": 2, "oracle_match_threshold": 0.0}),
    );
    let out = dir.path().join("out");
    let o = bin()
        .arg("oracle-test")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    let (header, rows) = read_csv(&out.join("oracle_report.csv"));
    assert_eq!(header, ["check", "passed", "value", "detail"]);
    assert_eq!(rows.len(), 5);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 5);
    for r in &rows[..4] {
        assert_eq!(r[1], "true", "{r:?}");
    }
    assert_eq!(o.status.success(), rows.iter().all(|r| r[1] == "true"));
}

#[test]
fn oversized_oracle_batch_is_refused() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), json!({"oracle_batch": 32}));
    let o = bin()
        .arg("oracle-test")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));
}

#[test]
fn bad_inputs_exit_nonzero_with_a_message() {
    let dir = TempDir::new().unwrap();
    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"epochs": 1, "colour": "blue"}"#).unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let good = write_config(dir.path(), json!({"epochs": 1}));
    let cases: Vec<(PathBuf, PathBuf)> = vec![
        (unknown, dir.path().join("o1")),
        (good, blocker.join("sub")),
    ];
    for (cfg, out) in cases {
        let o = bin()
            .arg("train")
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(!o.status.success());
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
    let o = bin()
        .args(["train", "--strategy", "greedy"])
        .output()
        .unwrap();
    assert!(!o.status.success());
}

#[test]
fn pretrained_policies_initialize_a_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), json!({"pretrain_epochs": 1}));
    let pre = dir.path().join("pre");
    run(&["pretrain"], &cfg, &pre);
    let policies = pre.join("policies.bin");
    assert!(policies.exists());
    let cfg = write_config(
        dir.path(),
        json!({"policy_init": policies.to_str().unwrap()}),
    );
    let out = dir.path().join("warm");
    run(&["train"], &cfg, &out);
    let cold = dir.path().join("cold");
    let cold_cfg = write_config(dir.path(), json!({}));
    run(&["train"], &cold_cfg, &cold);
    // Child scores reflect the loaded weights even when one pretraining
    // epoch leaves the sampled decisions unchanged.
    let (_, warm_rows) = read_csv(&out.join("selections.csv"));
    let (_, cold_rows) = read_csv(&cold.join("selections.csv"));
    assert_eq!(warm_rows.len(), cold_rows.len());
    assert!(warm_rows.iter().zip(&cold_rows).any(|(w, c)| w[3] != c[3]));
}
