use gce_core::config::{ExperimentConfig, NoiseSpec};
use gce_core::data::{load_csv, synth_blobs, write_csv, write_noisy_csv, CsvData};
use gce_core::experiment::{corrupt_dataset, run_experiment, write_outputs};
use gce_core::loss::lq_value;
use gce_core::model::Classifier;
use gce_core::verify::{run_check, run_suite, Check, LossProbe, DEFAULT_SEED};
use gce_core::{LossConfig, ProbVector};
use serde_json::Value;

#[test]
fn csv_files_round_trip_through_injection() {
    let dir = tempfile::tempdir().unwrap();
    let clean_path = dir.path().join("blobs.csv");
    let noisy_path = dir.path().join("noisy.csv");
    let ds = synth_blobs(300, 3, 4, 6.0, 8).unwrap();
    write_csv(&clean_path, &ds).unwrap();
    let CsvData::Clean(loaded) = load_csv(&clean_path).unwrap() else {
        panic!("expected a clean file")
    };
    assert_eq!(loaded, ds);

    let noisy = corrupt_dataset(&loaded, &NoiseSpec::Circular { eta: 0.3 }, 4).unwrap();
    write_noisy_csv(&noisy_path, &noisy).unwrap();
    let CsvData::Noisy(back) = load_csv(&noisy_path).unwrap() else {
        panic!("expected a noisy file")
    };
    assert_eq!(back, noisy);
    assert_eq!(back.clean_labels(), ds.labels());
    assert!(back.corrupted_count() > 0);
}

#[test]
fn experiment_writes_versioned_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{
            "dataset": {{"kind": "synthetic", "n": 300, "d": 2, "c": 3, "separation": 10.0, "seed": 2}},
            "noise": {{"kind": "uniform", "eta": 0.0}},
            "train": {{"epochs": 5, "batch_size": 16, "learning_rate": 0.05, "momentum": 0.9, "loss": {{"kind": "cce"}}}},
            "repetitions": 2,
            "output_dir": {:?}
        }}"#,
        dir.path()
    );
    let cfg = ExperimentConfig::from_json(&text).unwrap();
    let out = run_experiment(&cfg, 1).unwrap();
    write_outputs(&out, &cfg.output_dir).unwrap();

    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["v"], 1);
    assert_eq!(summary["succeeded"], 2);
    assert_eq!(summary["config_hash"], cfg.hash());
    assert!(summary["best_val_test_accuracy"]["mean"].as_f64().unwrap() >= 0.95);

    let runs = std::fs::read_to_string(dir.path().join("runs.jsonl")).unwrap();
    assert_eq!(runs.lines().count(), 2);
    for rep in 0..2 {
        let metrics = std::fs::read_to_string(dir.path().join(format!("metrics/rep{rep}.jsonl"))).unwrap();
        let lines: Vec<Value> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 5);
        assert!(lines.iter().all(|l| l["v"] == 1));
        let acc = lines[4]["test_accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let clf = Classifier::new(3, 4, &[6, 5], 17).unwrap();
    let back = Classifier::from_json(&clf.to_json().unwrap()).unwrap();
    let x = [0.3, -1.2, 2.0];
    assert_eq!(clf.forward(&x).unwrap(), back.forward(&x).unwrap());
}

fn halved_q(cfg: &LossConfig, f: &[f64], y: usize) -> f64 {
    match cfg {
        LossConfig::Lq { q } => lq_value(q / 2.0, f[y]),
        LossConfig::TruncatedLq { q, k } => lq_value(q / 2.0, f[y].max(*k)),
        other => other.loss(&ProbVector::new(f.to_vec()).unwrap(), y).unwrap(),
    }
}

#[test]
fn misread_exponent_is_caught() {
    let probe = LossProbe::new(&halved_q);
    let bounds = run_check(Check::LqBounds, DEFAULT_SEED, probe).unwrap();
    let grads = run_check(Check::Gradcheck, DEFAULT_SEED, probe).unwrap();
    assert!(!bounds.passed);
    assert!(!grads.passed);
    assert!(bounds.failures.iter().any(|f| f.contains("above upper bound")));
}

#[test]
fn selector_runs_only_the_named_check() {
    let reports = run_suite(&["cce-limit".parse().unwrap()], DEFAULT_SEED, LossProbe::default(), 1).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].check, "cce-limit");
    assert!(reports[0].passed);
}
