use std::path::Path;
use std::process::{Command, Output};

fn gce(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gce"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("gce runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const CONFIG: &str = r#"{
    "dataset": {"kind": "synthetic", "n": 240, "d": 2, "c": 3, "separation": 8.0, "seed": 1},
    "noise": {"kind": "uniform", "eta": 0.2},
    "train": {"epochs": 6, "batch_size": 16, "learning_rate": 0.05, "momentum": 0.9,
              "loss": {"kind": "lq", "q": 0.7}},
    "repetitions": 2,
    "base_seed": 5,
    "output_dir": "out"
}"#;

#[test]
fn synth_then_inject() {
    let dir = tempfile::tempdir().unwrap();
    let o = gce(&["synth", "--n", "100", "--d", "2", "--c", "3", "--seed", "4", "--out", "blobs.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = gce(
        &["inject", "--input", "blobs.csv", "--noise", r#"{"kind":"uniform","eta":0.4}"#, "--out", "noisy.csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let header = std::fs::read_to_string(dir.path().join("noisy.csv")).unwrap();
    assert!(header.starts_with("f0,f1,label,noisy_label,clean_label,corrupted,open_set\n"));
    // Injecting into an already corrupted file is refused as a config error.
    let o = gce(&["inject", "--input", "noisy.csv", "--noise", r#"{"kind":"uniform","eta":0.4}"#, "--out", "x.csv"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn train_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), CONFIG).unwrap();
    let mut summaries = Vec::new();
    for out in ["a", "b"] {
        let o = gce(&["train", "--config", "cfg.json", "--output-dir", out], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        summaries.push(std::fs::read(dir.path().join(out).join("summary.json")).unwrap());
        assert!(dir.path().join(out).join("metrics/rep1.jsonl").exists());
    }
    assert_eq!(summaries[0], summaries[1]);
}

#[test]
fn acs_train_with_threshold_flag() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), CONFIG).unwrap();
    let o = gce(&["acs-train", "--config", "cfg.json", "--k", "0.5", "--repetitions", "1"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = std::fs::read_to_string(dir.path().join("out/metrics/rep0.jsonl")).unwrap();
    assert!(metrics.contains(r#""event":"prune""#));
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), CONFIG).unwrap();
    let o = gce(
        &["sweep", "--config", "cfg.json", "--q-grid", "0,0.7", "--eta-grid", "0.2,0.4", "--losses", "lq,mae", "--repetitions", "1", "--epochs", "2"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "eta,cce,lq(q=0.7),mae");
    assert_eq!(lines.len(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = CONFIG.replace("\"repetitions\"", "\"unknown_key\": 1, \"repetitions\"");
    std::fs::write(dir.path().join("bad.json"), bad).unwrap();
    assert_eq!(code(&gce(&["train", "--config", "bad.json"], dir.path())), 2);
    assert_eq!(code(&gce(&["train", "--config", "missing.json"], dir.path())), 3);
    assert_eq!(code(&gce(&["verify", "no-such-check"], dir.path())), 2);
    assert_eq!(code(&gce(&["verify", "tightness"], dir.path())), 1);

    let o = gce(&["verify", "cce-limit", "surrogate", "--out", "reports"], dir.path());
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 2);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("reports/surrogate.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!(dir.path().join("reports/cce-limit.json").is_file());
}

#[test]
fn gradcheck_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = gce(&["gradcheck", "--loss", r#"{"kind":"truncated_lq","q":0.7,"k":0.5}"#, "--hidden", "5", "--cases", "20"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("max relative error"));
}
