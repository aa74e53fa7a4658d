//! Repeated train/evaluate runs, summaries and loss-by-noise sweeps.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::acs::{acs_train, AcsConfig, AcsEvent, PruneSummary};
use crate::config::{AcsSchedule, ExperimentConfig, NoiseSpec};
use crate::data::{Dataset, NoisyDataset};
use crate::error::{Error, Result};
use crate::io::{to_json_lines, write_atomic};
use crate::loss::{LossConfig, LossKind};
use crate::noise::{inject_noise, inject_open_set, NoiseModel};
use crate::rng::{rng_from_seed, stage_seed};
use crate::train::{best_val_epoch, train, DataSplits, EpochMetrics, TrainConfig, METRICS_VERSION};

/// Outcome of one repetition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub v: u32,
    pub config_hash: String,
    pub repetition: usize,
    /// Seed the training stage ran with.
    pub seed: u64,
    pub loss: String,
    pub noise_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    /// Fraction of training rows whose label was corrupted.
    pub train_corruption: f64,
    pub best_val_epoch: Option<usize>,
    pub best_val_test_accuracy: Option<f64>,
    pub final_test_accuracy: Option<f64>,
    pub epochs: Vec<EpochMetrics>,
    pub prunes: Vec<PruneSummary>,
}

impl RunRecord {
    fn failed(hash: &str, repetition: usize, seed: u64, cfg: &ExperimentConfig, err: &Error) -> Self {
        RunRecord {
            v: METRICS_VERSION,
            config_hash: hash.to_string(),
            repetition,
            seed,
            loss: cfg.train.loss.label(),
            noise_rate: cfg.noise.eta(),
            error: Some(err.to_string()),
            train_size: 0,
            val_size: 0,
            test_size: 0,
            train_corruption: 0.0,
            best_val_epoch: None,
            best_val_test_accuracy: None,
            final_test_accuracy: None,
            epochs: Vec::new(),
            prunes: Vec::new(),
        }
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// Mean and sample standard deviation of a set of values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub values: Vec<f64>,
}

impl Stat {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
        let std = mean.map(|m| {
            if n < 2 {
                0.0
            } else {
                (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            }
        });
        Stat { n, mean, std, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub repetition: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub v: u32,
    pub config_hash: String,
    pub loss: String,
    pub noise_rate: f64,
    pub repetitions: usize,
    pub succeeded: usize,
    pub failures: Vec<Failure>,
    pub best_val_test_accuracy: Stat,
    pub final_test_accuracy: Stat,
}

impl Summary {
    pub fn from_records(cfg: &ExperimentConfig, records: &[RunRecord]) -> Self {
        let ok: Vec<&RunRecord> = records.iter().filter(|r| r.succeeded()).collect();
        Summary {
            v: METRICS_VERSION,
            config_hash: cfg.hash(),
            loss: cfg.train.loss.label(),
            noise_rate: cfg.noise.eta(),
            repetitions: records.len(),
            succeeded: ok.len(),
            failures: records
                .iter()
                .filter_map(|r| {
                    r.error.as_ref().map(|e| Failure {
                        repetition: r.repetition,
                        error: e.clone(),
                    })
                })
                .collect(),
            best_val_test_accuracy: Stat::from_values(
                ok.iter().filter_map(|r| r.best_val_test_accuracy).collect(),
            ),
            final_test_accuracy: Stat::from_values(
                ok.iter().filter_map(|r| r.final_test_accuracy).collect(),
            ),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
    /// Per-repetition metrics lines, in repetition order.
    pub metrics: Vec<Vec<MetricsLine>>,
}

/// One line of a metrics file.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MetricsLine {
    Epoch(EpochMetrics),
    Acs(AcsEvent),
}

/// Data for one repetition: clean test rows split off first, then noise
/// injected into the remaining pool, which is split into train and val.
#[derive(Debug, Clone)]
pub struct PreparedSplits {
    pub splits: DataSplits,
    /// Indices into the source dataset of the test rows.
    pub test_indices: Vec<usize>,
}

fn round_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Build the splits for repetition `rep` from the pristine `source`.
pub fn prepare_splits(
    cfg: &ExperimentConfig,
    source: &Dataset,
    noise: &NoiseModel,
    rep: usize,
) -> Result<PreparedSplits> {
    let n = source.len();
    if n < 3 {
        return Err(Error::Data(format!("need at least 3 rows to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(stage_seed(cfg.base_seed, rep as u64, "split")));
    let n_test = round_count(cfg.test_fraction, n);
    let (test_idx, pool_idx) = order.split_at(n_test);
    let mut test_indices = test_idx.to_vec();
    test_indices.sort_unstable();
    let test = NoisyDataset::from_clean(&source.subset(&test_indices));

    let pool = source.subset(pool_idx);
    let noise_seed = stage_seed(cfg.base_seed, rep as u64, "noise");
    let noisy_pool = match noise {
        NoiseModel::OpenSet { eta, outlier } => inject_open_set(&pool, *eta, outlier, noise_seed)?,
        closed => inject_noise(&pool, closed, noise_seed)?,
    };
    let n_val = round_count(cfg.validation_fraction, pool.len());
    let val_idx: Vec<usize> = (0..n_val).collect();
    let train_idx: Vec<usize> = (n_val..pool.len()).collect();
    Ok(PreparedSplits {
        splits: DataSplits {
            train: noisy_pool.subset(&train_idx),
            val: Some(noisy_pool.subset(&val_idx)),
            test: Some(test),
        },
        test_indices,
    })
}

fn run_once(
    cfg: &ExperimentConfig,
    hash: &str,
    source: &Dataset,
    noise: &NoiseModel,
    rep: usize,
) -> Result<(RunRecord, Vec<MetricsLine>)> {
    let prepared = prepare_splits(cfg, source, noise, rep)?;
    let splits = &prepared.splits;
    let seed = stage_seed(cfg.base_seed, rep as u64, "train");
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let (epochs, prunes, lines) = match (&cfg.acs, &cfg.train.loss) {
        (Some(schedule), LossConfig::TruncatedLq { q, k }) => {
            let acs_cfg = AcsConfig {
                warmup_epochs: schedule.warmup_epochs,
                prune_interval: schedule.prune_interval,
                total_epochs: cfg.train.epochs,
                k: *k,
                q: *q,
                record_masks: schedule.record_masks,
            };
            let out = acs_train(splits, &cfg.hidden, &train_cfg, &acs_cfg)?;
            let epochs: Vec<EpochMetrics> = out.epochs().cloned().collect();
            let prunes: Vec<PruneSummary> = out.prunes().cloned().collect();
            let lines = out.history.into_iter().map(MetricsLine::Acs).collect();
            (epochs, prunes, lines)
        }
        (Some(_), _) => return Err(Error::config("acs training needs a truncated_lq loss")),
        (None, _) => {
            let out = train(splits, &cfg.hidden, &train_cfg)?;
            let lines = out.history.iter().cloned().map(MetricsLine::Epoch).collect();
            (out.history, Vec::new(), lines)
        }
    };
    let best = best_val_epoch(&epochs);
    let train_set = &splits.train;
    let record = RunRecord {
        v: METRICS_VERSION,
        config_hash: hash.to_string(),
        repetition: rep,
        seed,
        loss: cfg.train.loss.label(),
        noise_rate: cfg.noise.eta(),
        error: None,
        train_size: train_set.len(),
        val_size: splits.val.as_ref().map_or(0, NoisyDataset::len),
        test_size: prepared.test_indices.len(),
        train_corruption: train_set.corrupted_count() as f64 / train_set.len().max(1) as f64,
        best_val_epoch: best,
        best_val_test_accuracy: best.and_then(|e| epochs[e].test_accuracy),
        final_test_accuracy: epochs.last().and_then(|m| m.test_accuracy),
        epochs,
        prunes,
    };
    Ok((record, lines))
}

/// Map `f` over `items` on a pool of `jobs` threads, keeping input order.
pub fn par_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if jobs <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

/// Run every repetition of `cfg`. A repetition that fails is recorded with its
/// error and the others proceed; configuration and dataset errors abort.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    cfg.validate_static()?;
    let source = cfg.dataset.load(Path::new("."))?;
    run_experiment_on(cfg, &source, jobs)
}

/// [`run_experiment`] on an already loaded source dataset.
pub fn run_experiment_on(
    cfg: &ExperimentConfig,
    source: &Dataset,
    jobs: usize,
) -> Result<ExperimentOutcome> {
    cfg.validate_static()?;
    let c = source.n_classes();
    let noise = cfg.noise.resolve(c)?;
    cfg.train.validate(c)?;
    let hash = cfg.hash();
    let reps: Vec<usize> = (0..cfg.repetitions).collect();
    let results = par_map(jobs, &reps, |&rep| {
        match run_once(cfg, &hash, source, &noise, rep) {
            Ok(pair) => pair,
            Err(e) => {
                let seed = stage_seed(cfg.base_seed, rep as u64, "train");
                (RunRecord::failed(&hash, rep, seed, cfg, &e), Vec::new())
            }
        }
    })?;
    let (records, metrics): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let summary = Summary::from_records(cfg, &records);
    Ok(ExperimentOutcome {
        records,
        summary,
        metrics,
    })
}

/// Write `runs.jsonl`, `summary.json` and `metrics/rep{r}.jsonl` under `dir`.
pub fn write_outputs(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    write_atomic(&dir.join("runs.jsonl"), to_json_lines(&outcome.records)?.as_bytes())?;
    write_atomic(&dir.join("summary.json"), outcome.summary.to_json().as_bytes())?;
    for (rep, lines) in outcome.metrics.iter().enumerate() {
        let path = dir.join("metrics").join(format!("rep{rep}.jsonl"));
        write_atomic(&path, to_json_lines(lines)?.as_bytes())?;
    }
    Ok(())
}

/// One column of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepVariant {
    pub label: String,
    pub loss: Option<LossConfig>,
    /// Forward correction takes the true transition matrix of each noise level.
    pub forward: bool,
}

/// Grid of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub q_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
    pub loss_kinds: Vec<LossKind>,
    /// Threshold of truncated variants.
    pub k: f64,
}

/// Expand loss kinds into columns. `q = 0` in the Lq grid is cross entropy.
pub fn sweep_variants(spec: &SweepSpec) -> Result<Vec<SweepVariant>> {
    let mut out: Vec<SweepVariant> = Vec::new();
    let mut push = |loss: Option<LossConfig>, forward: bool| {
        let label = match &loss {
            Some(l) => l.label(),
            None => "forward_cce".to_string(),
        };
        if !out.iter().any(|v| v.label == label) {
            out.push(SweepVariant { label, loss, forward });
        }
    };
    for kind in &spec.loss_kinds {
        match kind {
            LossKind::Cce => push(Some(LossConfig::Cce), false),
            LossKind::Mae => push(Some(LossConfig::Mae), false),
            LossKind::Lq => {
                for &q in &spec.q_grid {
                    if q == 0.0 {
                        push(Some(LossConfig::Cce), false);
                    } else {
                        push(Some(LossConfig::lq(q)?), false);
                    }
                }
            }
            LossKind::TruncatedLq => {
                for &q in spec.q_grid.iter().filter(|&&q| q > 0.0 && q < 1.0) {
                    push(Some(LossConfig::truncated_lq(q, spec.k)?), false);
                }
            }
            LossKind::ForwardCce => push(None, true),
        }
    }
    if out.is_empty() {
        return Err(Error::config("sweep has no loss variants"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub eta: f64,
    pub variant: String,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

impl SweepCell {
    /// `mean ± std` of best-validation-epoch test accuracy, or `failed`.
    pub fn display(&self) -> String {
        match &self.summary {
            Some(Summary {
                best_val_test_accuracy: Stat { mean: Some(m), std: Some(s), .. },
                ..
            }) => format!("{m:.4} ± {s:.4}"),
            _ => "failed".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub etas: Vec<f64>,
    pub variants: Vec<String>,
    /// Row-major `etas x variants`.
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn cell(&self, eta_index: usize, variant_index: usize) -> &SweepCell {
        &self.cells[eta_index * self.variants.len() + variant_index]
    }

    /// Rows are noise rates, columns are loss variants.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["eta".to_string()];
        header.extend(self.variants.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (i, eta) in self.etas.iter().enumerate() {
            let mut row = vec![eta.to_string()];
            row.extend((0..self.variants.len()).map(|j| self.cell(i, j).display()));
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn cell_config(
    base: &ExperimentConfig,
    eta: f64,
    variant: &SweepVariant,
    c: usize,
) -> Result<ExperimentConfig> {
    let noise = base.noise.with_eta(eta)?;
    let loss = match &variant.loss {
        Some(l) => l.clone(),
        None => LossConfig::forward_cce(noise.resolve(c)?.transition_matrix(c)?)?,
    };
    let acs = match loss {
        LossConfig::TruncatedLq { .. } => Some(
            base.acs
                .clone()
                .unwrap_or_else(|| AcsSchedule::default_for(base.train.epochs)),
        ),
        _ => None,
    };
    let slug: String = variant
        .label
        .chars()
        .map(|ch| if ch.is_ascii_alphanumeric() || ch == '.' { ch } else { '_' })
        .collect();
    Ok(ExperimentConfig {
        noise,
        train: TrainConfig {
            loss,
            ..base.train.clone()
        },
        acs,
        output_dir: base.output_dir.join(format!("eta{eta}_{slug}")),
        ..base.clone()
    })
}

/// Run `base` for every `(eta, variant)` pair. A failing cell is marked and
/// the sweep continues.
pub fn sweep(base: &ExperimentConfig, spec: &SweepSpec, jobs: usize) -> Result<(SweepTable, Vec<(PathBuf, ExperimentOutcome)>)> {
    base.validate_static()?;
    if spec.eta_grid.is_empty() {
        return Err(Error::config("eta grid is empty"));
    }
    let variants = sweep_variants(spec)?;
    let source = base.dataset.load(Path::new("."))?;
    let c = source.n_classes();
    let pairs: Vec<(f64, SweepVariant)> = spec
        .eta_grid
        .iter()
        .flat_map(|&eta| variants.iter().map(move |v| (eta, v.clone())))
        .collect();
    let results = par_map(jobs, &pairs, |(eta, variant)| {
        let run = cell_config(base, *eta, variant, c)
            .and_then(|cfg| run_experiment_on(&cfg, &source, 1).map(|o| (cfg.output_dir, o)));
        match run {
            Ok((dir, outcome)) => {
                let cell = SweepCell {
                    eta: *eta,
                    variant: variant.label.clone(),
                    summary: Some(outcome.summary.clone()),
                    error: None,
                };
                (cell, Some((dir, outcome)))
            }
            Err(e) => (
                SweepCell {
                    eta: *eta,
                    variant: variant.label.clone(),
                    summary: None,
                    error: Some(e.to_string()),
                },
                None,
            ),
        }
    })?;
    let mut cells = Vec::with_capacity(results.len());
    let mut outcomes = Vec::new();
    for (cell, outcome) in results {
        cells.push(cell);
        outcomes.extend(outcome);
    }
    Ok((
        SweepTable {
            etas: spec.eta_grid.clone(),
            variants: variants.into_iter().map(|v| v.label).collect(),
            cells,
        },
        outcomes,
    ))
}

/// Corrupt a whole dataset with the configured noise (seeded by
/// `(base_seed, 0, "noise")`), for inspection or export.
pub fn corrupt_dataset(source: &Dataset, noise: &NoiseSpec, seed: u64) -> Result<NoisyDataset> {
    match noise.resolve(source.n_classes())? {
        NoiseModel::OpenSet { eta, outlier } => inject_open_set(source, eta, &outlier, seed),
        closed => inject_noise(source, &closed, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BlobSpec, DatasetSource};

    fn base(eta: f64, loss: LossConfig, reps: usize) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSource::Synthetic(BlobSpec {
                n: 400,
                d: 2,
                c: 3,
                separation: 8.0,
                seed: 4,
            }),
            validation_fraction: 0.1,
            test_fraction: 0.25,
            noise: NoiseSpec::Uniform { eta },
            hidden: vec![],
            train: TrainConfig {
                momentum: 0.9,
                ..TrainConfig::new(15, 16, 0.05, loss)
            },
            acs: None,
            repetitions: reps,
            base_seed: 9,
            output_dir: PathBuf::from("unused"),
        }
    }

    #[test]
    fn stat_uses_sample_std() {
        let s = Stat::from_values(vec![1.0, 2.0, 3.0]);
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.std, Some(1.0));
        assert_eq!(Stat::from_values(vec![0.5]).std, Some(0.0));
        assert_eq!(Stat::from_values(vec![]).mean, None);
    }

    #[test]
    fn test_split_is_never_corrupted() {
        for noise in [
            NoiseSpec::Uniform { eta: 0.6 },
            NoiseSpec::Circular { eta: 0.4 },
            NoiseSpec::OpenSet { eta: 0.3, outlier: Default::default() },
        ] {
            let cfg = ExperimentConfig { noise, ..base(0.0, LossConfig::Cce, 1) };
            let source = cfg.dataset.load(Path::new(".")).unwrap();
            let model = cfg.noise.resolve(3).unwrap();
            for rep in 0..3 {
                let p = prepare_splits(&cfg, &source, &model, rep).unwrap();
                let test = p.splits.test.as_ref().unwrap();
                assert_eq!(test.corrupted_count(), 0);
                for (j, &i) in p.test_indices.iter().enumerate() {
                    assert_eq!(test.noisy_labels()[j], source.labels()[i]);
                    assert_eq!(test.row(j), source.row(i));
                }
                let sizes = p.splits.train.len() + p.splits.val.as_ref().unwrap().len() + test.len();
                assert_eq!(sizes, 400);
                assert_eq!(test.len(), 100);
                assert_eq!(p.splits.val.as_ref().unwrap().len(), 30);
            }
        }
    }

    #[test]
    fn clean_cce_run_is_accurate_and_deterministic() {
        let cfg = base(0.0, LossConfig::Cce, 2);
        let a = run_experiment(&cfg, 1).unwrap();
        assert_eq!(a.summary.succeeded, 2);
        assert_eq!(a.summary.best_val_test_accuracy.n, 2);
        assert!(a.summary.best_val_test_accuracy.mean.unwrap() >= 0.95);
        let b = run_experiment(&cfg, 2).unwrap();
        assert_eq!(a.summary.to_json(), b.summary.to_json());
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn failing_repetition_is_recorded() {
        let mut cfg = base(0.0, LossConfig::Cce, 1);
        // The first update overflows the parameters.
        cfg.train.learning_rate = f64::MAX / 2.0;
        let out = run_experiment(&cfg, 1).unwrap();
        assert_eq!(out.summary.succeeded, 0);
        assert_eq!(out.summary.failures.len(), 1);
        assert_eq!(out.summary.best_val_test_accuracy.mean, None);
    }

    #[test]
    fn acs_run_records_prunes() {
        let mut cfg = base(0.3, LossConfig::truncated_lq(0.7, 0.5).unwrap(), 1);
        cfg.acs = Some(AcsSchedule { warmup_epochs: 5, prune_interval: 5, record_masks: false });
        let out = run_experiment(&cfg, 1).unwrap();
        let r = &out.records[0];
        assert!(r.succeeded(), "{:?}", r.error);
        assert_eq!(r.prunes.len(), 2);
        assert_eq!(r.epochs.len(), 15);
        assert_eq!(out.metrics[0].len(), 17);
    }

    #[test]
    fn variants_dispatch_q_zero_to_cce() {
        let spec = SweepSpec {
            q_grid: vec![0.0, 0.7],
            eta_grid: vec![0.2],
            loss_kinds: vec![LossKind::Cce, LossKind::Lq, LossKind::TruncatedLq, LossKind::ForwardCce],
            k: 0.5,
        };
        let labels: Vec<String> = sweep_variants(&spec).unwrap().into_iter().map(|v| v.label).collect();
        assert_eq!(labels, vec!["cce", "lq(q=0.7)", "truncated_lq(q=0.7,k=0.5)", "forward_cce"]);
    }

    #[test]
    fn sweep_table_shape() {
        let mut cfg = base(0.0, LossConfig::Cce, 1);
        cfg.train.epochs = 3;
        let spec = SweepSpec {
            q_grid: vec![0.0, 0.7],
            eta_grid: vec![0.0, 0.4],
            loss_kinds: vec![LossKind::Lq, LossKind::ForwardCce],
            k: 0.5,
        };
        let (table, outcomes) = sweep(&cfg, &spec, 1).unwrap();
        assert_eq!(table.cells.len(), 2 * 3);
        assert_eq!(outcomes.len(), 6);
        let text = table.to_csv().unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "eta,cce,lq(q=0.7),forward_cce");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,"));
        // A one-cell sweep agrees with the plain experiment.
        let single = run_experiment(&cell_config(&cfg, 0.4, &sweep_variants(&spec).unwrap()[1], 3).unwrap(), 1).unwrap();
        assert_eq!(Some(&single.summary), table.cell(1, 1).summary.as_ref());
    }
}
