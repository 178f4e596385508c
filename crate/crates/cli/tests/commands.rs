use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dynloss(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynloss"))
        .current_dir(dir)
        .env_remove("DYNLOSS_OUT")
        .args(args)
        .output()
        .expect("spawn dynloss")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = dynloss(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn provenance(path: &Path) -> Value {
    let text = fs::read_to_string(path.with_extension("prov.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn gen_data_symmetric_noise_fraction() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(
        dir.path(),
        &[
            "gen-data", "--blobs", "--classes", "10", "--per-class", "200", "--rho", "10",
            "--noise", "sym", "--rate", "0.3", "--seed", "7", "--out", "d.csv",
        ],
    );
    let prov = provenance(&dir.path().join("d.csv"));
    let frac = prov["noisy_fraction"].as_f64().unwrap();
    let n: f64 = 812.0;
    let sd = (0.27f64 * 0.73 / n).sqrt();
    assert!((frac - 0.27).abs() <= 3.0 * sd, "noisy fraction {frac}");
}

#[test]
fn gen_data_zero_rate_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(
        dir.path(),
        &["gen-data", "--blobs", "--classes", "4", "--noise", "sym", "--rate", "0", "--out", "d.csv"],
    );
    assert_eq!(provenance(&dir.path().join("d.csv"))["noisy_fraction"], 0.0);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["gen-data", "--blobs"][..],
        &["gen-data", "--blobs", "--classes", "3", "--noise", "asym", "--rate", "0.2", "--pairs", "0:5"],
        &["gen-data", "--blobs", "--classes", "3", "--rate", "0.2"],
        &["gen-data"],
        &["no-such-command"],
    ] {
        let out = dynloss(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
    assert!(!dir.path().join("data.csv").exists());
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(dir.path(), &["gen-data", "--blobs", "--classes", "3", "--out", "d.csv"]);
    fs::write(dir.path().join("c.json"), r#"{"epochs": 3, "learning_rate": 0.1}"#).unwrap();
    let out = dynloss(dir.path(), &["train", "--config", "c.json", "--data", "d.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));

    let out = dynloss(dir.path(), &["train", "--data", "d.csv", "--m1-frac", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("m1_frac"));
}

#[test]
fn ce_on_clean_blobs_and_checkpoint_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok_json(
        d,
        &["gen-data", "--blobs", "--classes", "5", "--per-class", "100", "--seed", "3", "--out", "d.csv", "--holdout", "h.csv"],
    );
    let summary = ok_json(
        d,
        &["train", "--data", "d.csv", "--holdout", "h.csv", "--baseline", "ce", "--epochs", "15", "--out", "run"],
    );
    let last = summary["last_test_acc"].as_f64().unwrap();
    assert!(last >= 0.95, "final accuracy {last}");

    let lines = fs::read_to_string(d.join("run/metrics.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 15);
    let eval = ok_json(d, &["eval", "--checkpoint", "run/checkpoint_last.json", "--data", "h.csv"]);
    assert_eq!(eval["accuracy"].as_f64().unwrap(), last);
}

#[test]
fn manifest_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok_json(
        d,
        &["gen-data", "--blobs", "--classes", "4", "--per-class", "60", "--noise", "sym", "--rate", "0.3", "--out", "d.csv", "--holdout", "h.csv"],
    );
    ok_json(
        d,
        &["train", "--data", "d.csv", "--holdout", "h.csv", "--epochs", "5", "--warmup-epochs", "1", "--batch-size", "32", "--rank-bins", "10", "--out", "a"],
    );
    ok_json(d, &["train", "--manifest", "a/manifest.json", "--out", "b"]);
    for file in ["metrics.jsonl", "inspection.jsonl", "checkpoint_last.json"] {
        assert_eq!(
            fs::read(d.join("a").join(file)).unwrap(),
            fs::read(d.join("b").join(file)).unwrap(),
            "{file} differs"
        );
    }

    // A changed dataset is refused.
    ok_json(d, &["gen-data", "--blobs", "--classes", "4", "--per-class", "60", "--seed", "9", "--out", "d.csv"]);
    let out = dynloss(d, &["train", "--manifest", "a/manifest.json", "--out", "c"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inspect_untrained_corrector_reports_no_crossing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok_json(d, &["gen-data", "--blobs", "--classes", "3", "--per-class", "40", "--out", "d.csv"]);
    // One warmup epoch leaves the corrector at its initialization.
    ok_json(
        d,
        &["train", "--data", "d.csv", "--epochs", "2", "--warmup-epochs", "1", "--batch-size", "16", "--rank-bins", "10", "--meta-lr", "0", "--out", "run"],
    );
    let summary = ok_json(d, &["inspect", "--checkpoint", "run/checkpoint_last.json", "--data", "d.csv", "--out", "ins"]);
    assert_eq!(summary["crossings"], serde_json::json!(["none", "none", "none"]));

    let table = fs::read_to_string(d.join("ins/g_table.csv")).unwrap();
    let mut rows = table.lines();
    assert_eq!(rows.next().unwrap(), "bin,class_0,class_1,class_2");
    let values: Vec<f64> = rows
        .flat_map(|r| r.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .collect();
    assert_eq!(values.len(), 30);
    assert!(values.iter().all(|&g| g >= 0.9));
    let fractions = fs::read_to_string(d.join("ins/clean_fraction.csv")).unwrap();
    assert!(fractions.lines().skip(1).all(|l| l.ends_with("none,none")));

    // Dimension mismatch is a runtime failure.
    ok_json(d, &["gen-data", "--blobs", "--classes", "4", "--dims", "3", "--out", "x.csv"]);
    let out = dynloss(d, &["inspect", "--checkpoint", "run/checkpoint_last.json", "--data", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_sampling_rows_and_degenerate_case() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok_json(d, &["gen-data", "--blobs", "--classes", "3", "--per-class", "60", "--out", "d.csv"]);
    ok_json(d, &["compare-sampling", "--data", "d.csv", "--seeds", "1", "--out", "one"]);
    let table = fs::read_to_string(d.join("one/dispersion.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);

    fs::write(d.join("c.json"), r#"{"m0_frac": 1.0, "m1_frac": 0.5}"#).unwrap();
    let summary = ok_json(
        d,
        &["compare-sampling", "--data", "d.csv", "--config", "c.json", "--seeds", "2", "--out", "deg"],
    );
    let means = &summary["mean_dispersion"];
    assert_eq!(means["hierarchical"], means["naive"]);
}

#[test]
fn out_root_env_relocates_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    fs::create_dir(&root).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dynloss"))
        .current_dir(dir.path())
        .env("DYNLOSS_OUT", &root)
        .args(["gen-data", "--blobs", "--classes", "2", "--out", "d.csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(root.join("d.csv").exists());
}
