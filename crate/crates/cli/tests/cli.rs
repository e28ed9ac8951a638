//! CLI behavior: exit codes, the external-score calibration path, and
//! model round trips through the filesystem.

use std::process::Command;

fn npc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_npc"))
}

#[test]
fn minsize_reports_reference_values() {
    let out = npc()
        .args(["minsize", "--alpha", "0.05", "--delta", "0.05"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["n_min"], 59);
}

#[test]
fn insufficient_sample_exits_3_with_guidance() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let model = dir.path().join("m.json");
    assert!(npc()
        .args(["generate", "--model", "sim1", "--n", "40", "--seed", "1"])
        .arg("--out")
        .arg(&data)
        .status()
        .unwrap()
        .success());
    let out = npc()
        .args(["fit", "--alpha", "0.05", "--delta", "0.05"])
        .arg("--data")
        .arg(&data)
        .arg("--out-model")
        .arg(&model)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("n_min = 59"), "stderr: {err}");
}

#[test]
fn validation_failure_exits_2() {
    let out = npc()
        .args(["minsize", "--alpha", "1.5", "--delta", "0.05"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_exits_4() {
    let out = npc()
        .args([
            "band", "--data", "/nonexistent/x.csv", "--delta", "0.1",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn external_scores_calibrate_a_threshold_only() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    let model = dir.path().join("m.json");
    let mut text = String::from("score,label\n");
    for i in 0..80 {
        text.push_str(&format!("{}.0,0\n", i));
        text.push_str(&format!("{}.5,1\n", i + 40));
    }
    std::fs::write(&scores, text).unwrap();
    let out = npc()
        .args(["fit", "--alpha", "0.1", "--delta", "0.1"])
        .arg("--scores")
        .arg(&scores)
        .arg("--out-model")
        .arg(&model)
        .output()
        .unwrap();
    assert!(out.status.success());
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(saved["ensemble"]["members"][0]["model"]["kind"], "external");
    // splitting makes no sense without a scorer to refit
    let out = npc()
        .args(["fit", "--alpha", "0.1", "--delta", "0.1", "--splits", "3"])
        .arg("--scores")
        .arg(&scores)
        .arg("--out-model")
        .arg(&model)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_predict_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let model = dir.path().join("m.json");
    let preds = dir.path().join("p.csv");
    assert!(npc()
        .args(["generate", "--model", "sim1", "--n", "400", "--seed", "2"])
        .arg("--out")
        .arg(&data)
        .status()
        .unwrap()
        .success());
    assert!(npc()
        .args(["fit", "--alpha", "0.1", "--delta", "0.1", "--base", "gnb", "--seed", "6"])
        .arg("--data")
        .arg(&data)
        .arg("--out-model")
        .arg(&model)
        .status()
        .unwrap()
        .success());
    let out = npc()
        .arg("evaluate")
        .arg("--model")
        .arg(&model)
        .arg("--data")
        .arg(&data)
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // in-sample estimate of a calibrated threshold stays near the target
    assert!(report["type1_hat"].as_f64().unwrap() <= 0.15);

    assert!(npc()
        .arg("predict")
        .arg("--model")
        .arg(&model)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&preds)
        .status()
        .unwrap()
        .success());
    let text = std::fs::read_to_string(&preds).unwrap();
    assert_eq!(text.lines().next(), Some("prediction"));
    assert_eq!(text.lines().count(), 401);
    assert!(text.lines().skip(1).all(|l| l == "0" || l == "1"));
}

#[test]
fn compare_band_with_itself_has_no_dominance() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let band = dir.path().join("b.csv");
    let dom = dir.path().join("dom.csv");
    assert!(npc()
        .args(["generate", "--model", "sim1", "--n", "300", "--seed", "8"])
        .arg("--out")
        .arg(&data)
        .status()
        .unwrap()
        .success());
    assert!(npc()
        .args(["band", "--delta", "0.1", "--splits", "2", "--seed", "1", "--grid-size", "100"])
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&band)
        .status()
        .unwrap()
        .success());
    assert!(npc()
        .args(["compare", "--grid-size", "100"])
        .arg("--first")
        .arg(&band)
        .arg("--second")
        .arg(&band)
        .arg("--out")
        .arg(&dom)
        .status()
        .unwrap()
        .success());
    let text = std::fs::read_to_string(&dom).unwrap();
    assert_eq!(text.trim(), "alpha_lo,alpha_hi,winner");
}
