use std::path::Path;
use std::process::{Command, Output};

fn medmam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medmam")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{"d": 8, "epochs": 2, "seed": 3,
            "synth": {{"n_samples": 300, "d": 8, "seed": 3}}{extra}}}"#
    );
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&medmam(&["--help"])), 0);
    assert_eq!(code(&medmam(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&medmam(&[])), 1);
    assert_eq!(code(&medmam(&["frobnicate"])), 1);
    assert_eq!(code(&medmam(&["geomaudit", "--trials", "many"])), 1);
}

#[test]
fn unknown_config_key_is_a_contract_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#", "learning_rate": 0.1"#);
    let o = medmam(&["train", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let report = dir.path().join("report.json");
    let ckpt = dir.path().join("best.json");
    let o = medmam(&[
        "train",
        "--config",
        &cfg,
        "--report",
        report.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let ck: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&ckpt).unwrap()).unwrap();
    assert_eq!(ck["format"], 1);
    assert!(ck["params"].as_object().unwrap().values().all(|p| p["data"].is_string()));

    let o = medmam(&["eval", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let e: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(e["metrics"], r["test"]);
}

#[test]
fn eval_on_exported_data_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let ckpt = dir.path().join("best.json");
    assert_eq!(
        code(&medmam(&["train", "--config", &cfg, "--checkpoint", ckpt.to_str().unwrap()])),
        0
    );

    let synth = dir.path().join("synth.json");
    std::fs::write(&synth, r#"{"n_samples": 40, "d": 8}"#).unwrap();
    let data = dir.path().join("data.jsonl");
    let o = medmam(&["gen-data", "--config", synth.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_to_string(&data).unwrap().lines().count(), 40);
    let o = medmam(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(&synth, r#"{"n_samples": 40, "d": 4}"#).unwrap();
    assert_eq!(
        code(&medmam(&["gen-data", "--config", synth.to_str().unwrap(), "--out", data.to_str().unwrap()])),
        0
    );
    let o = medmam(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn gen_data_to_stdout_is_json_lines() {
    let o = medmam(&["gen-data", "--seed", "5"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 3000);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first["label"].is_string() || first["label"].is_number());
}

#[test]
fn ablate_writes_csv_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let csv = dir.path().join("table.csv");
    let o = medmam(&[
        "ablate",
        "--config",
        &cfg,
        "--arms",
        "x1-x2,concat",
        "--seeds",
        "1,2",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("arm,seed,"));
    // Header, four runs, then one mean row per arm.
    assert_eq!(text.lines().count(), 7);
    assert_eq!(code(&medmam(&["ablate", "--config", &cfg, "--arms", "nonsense"])), 1);
}

#[test]
fn divergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#", "lr_main": 1e300, "lr_stub": 1e300"#);
    let o = medmam(&["train", "--config", &cfg]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn geomaudit_and_gradcheck_write_json() {
    let o = medmam(&["geomaudit", "--trials", "50"]);
    assert_eq!(code(&o), 0);
    let a: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(a["per_curvature"].as_array().unwrap().len(), 3);

    let o = medmam(&["gradcheck", "--seeds", "2", "--step", "1e-5", "--tolerance", "1e-3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let g: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(g["passed"], true);
    // An impossible tolerance fails the check with a contract exit code.
    assert_eq!(code(&medmam(&["gradcheck", "--seeds", "1", "--tolerance", "0"])), 1);
}
