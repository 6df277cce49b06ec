use std::path::Path;
use std::process::{Command, Output};

fn mmicl(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mmicl"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("MMICL_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

const TINY_FIG2: &str = r#"{
  "experiment": "fig2",
  "seed": 3,
  "N": 40,
  "L_tr": 20,
  "T": 3,
  "L_te_grid": [4, 32],
  "n_test_prompts": 25,
  "optim": {"max_steps": 100}
}"#;

const TINY_LANDSCAPE: &str = r#"{"experiment": "landscape", "T": 4, "grid": {"resolution": 9}}"#;

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn check_passes() {
    let out = mmicl(&["check"], None);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", r#"{"N": 0}"#);
    let garbled = write_config(dir.path(), "garbled.json", "{not json");
    let good = write_config(dir.path(), "good.json", TINY_LANDSCAPE);
    let out_dir = dir.path().join("o");
    let out_dir = out_dir.to_str().unwrap();
    for args in [
        vec!["run", "--config", &bad, "--out", out_dir],
        vec!["run", "--config", &garbled, "--out", out_dir],
        vec!["run", "--config", "/no/such/file.json", "--out", out_dir],
        vec!["run", "--config", &good, "--experiment", "fig9", "--out", out_dir],
        vec!["run", "--config", &good, "--format", "xml", "--out", out_dir],
        vec!["run", "--no-such-flag"],
    ] {
        let out = mmicl(&args, None);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn run_writes_outputs_and_flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "l.json", TINY_LANDSCAPE);
    let out_dir = dir.path().join("out");
    let out = mmicl(
        &["run", "--config", &cfg, "--seed", "42", "--format", "json", "--out", out_dir.to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("landscape.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 42);
    let echoed: mmicl::experiments::ExperimentConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    assert_eq!(echoed.hash(), meta["config_hash"].as_str().unwrap());
    let data: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("landscape.json")).unwrap()).unwrap();
    assert_eq!(data["population"]["loss"].as_array().unwrap().len(), 81);
    assert!(out_dir.join("landscape.timing.json").exists());
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "f.json", TINY_FIG2);
    let mut bytes = Vec::new();
    for threads in ["1", "4"] {
        let out_dir = dir.path().join(format!("t{threads}"));
        let out = mmicl(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()], Some(threads));
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        bytes.push((
            std::fs::read(out_dir.join("fig2.csv")).unwrap(),
            std::fs::read(out_dir.join("fig2.meta.json")).unwrap(),
        ));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn default_config_round_trips() {
    let out = mmicl(&["config", "--experiment", "fig3"], None);
    assert_eq!(out.status.code(), Some(0));
    let cfg = mmicl::experiments::ExperimentConfig::from_json_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(cfg.experiment, mmicl::experiments::ExperimentKind::Fig3);
}
