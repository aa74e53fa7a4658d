//! Experiment configuration documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{load_csv, synth_blobs, CsvData, Dataset};
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::noise::{preset_circular, preset_pair_flip, FlipPair, NoiseModel, OutlierSpec, TransitionMatrix};
use crate::train::TrainConfig;

/// Gaussian-blob dataset parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub separation: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(BlobSpec),
    Csv { path: PathBuf },
}

impl DatasetSource {
    /// The pristine labelled dataset. For a corrupted CSV this is the
    /// `clean_label` column.
    pub fn load(&self, base_dir: &Path) -> Result<Dataset> {
        match self {
            DatasetSource::Synthetic(b) => synth_blobs(b.n, b.d, b.c, b.separation, b.seed),
            DatasetSource::Csv { path } => {
                let path = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                match load_csv(&path)? {
                    CsvData::Clean(d) => Ok(d),
                    CsvData::Noisy(d) => Dataset::new(
                        d.features().to_vec(),
                        d.n_features(),
                        d.clean_labels().to_vec(),
                        d.n_classes(),
                    ),
                }
            }
        }
    }
}

/// Noise model as written in a config: the raw models plus the pair-flip and
/// circular presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    None,
    Uniform {
        eta: f64,
    },
    ClassDependent {
        eta: f64,
        transition: TransitionMatrix,
    },
    PairFlip {
        eta: f64,
        pairs: Vec<FlipPair>,
    },
    Circular {
        eta: f64,
    },
    OpenSet {
        eta: f64,
        #[serde(default)]
        outlier: OutlierSpec,
    },
}

impl NoiseSpec {
    pub fn eta(&self) -> f64 {
        match self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Uniform { eta }
            | NoiseSpec::ClassDependent { eta, .. }
            | NoiseSpec::PairFlip { eta, .. }
            | NoiseSpec::Circular { eta }
            | NoiseSpec::OpenSet { eta, .. } => *eta,
        }
    }

    /// The same spec at a different rate. A raw class-dependent matrix has no
    /// rate parameter to scale and is rejected.
    pub fn with_eta(&self, eta: f64) -> Result<NoiseSpec> {
        Ok(match self {
            NoiseSpec::None | NoiseSpec::Uniform { .. } => NoiseSpec::Uniform { eta },
            NoiseSpec::ClassDependent { .. } => {
                return Err(Error::config(
                    "a raw class-dependent matrix cannot be swept over eta; use a preset",
                ))
            }
            NoiseSpec::PairFlip { pairs, .. } => NoiseSpec::PairFlip {
                eta,
                pairs: pairs.clone(),
            },
            NoiseSpec::Circular { .. } => NoiseSpec::Circular { eta },
            NoiseSpec::OpenSet { outlier, .. } => NoiseSpec::OpenSet {
                eta,
                outlier: outlier.clone(),
            },
        })
    }

    pub fn resolve(&self, c: usize) -> Result<NoiseModel> {
        let model = match self {
            NoiseSpec::None => NoiseModel::Uniform { eta: 0.0 },
            NoiseSpec::Uniform { eta } => NoiseModel::Uniform { eta: *eta },
            NoiseSpec::ClassDependent { eta, transition } => NoiseModel::ClassDependent {
                eta: *eta,
                transition: transition.clone(),
            },
            NoiseSpec::PairFlip { eta, pairs } => preset_pair_flip(pairs, *eta, c)?,
            NoiseSpec::Circular { eta } => preset_circular(*eta, c)?,
            NoiseSpec::OpenSet { eta, outlier } => NoiseModel::OpenSet {
                eta: *eta,
                outlier: outlier.clone(),
            },
        };
        model.validate(c)?;
        Ok(model)
    }
}

/// Pruning schedule for ACS training. Threshold and exponent come from the
/// truncated loss in the training config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcsSchedule {
    pub warmup_epochs: usize,
    pub prune_interval: usize,
    #[serde(default)]
    pub record_masks: bool,
}

impl AcsSchedule {
    /// A third of the run as warm-up and twelve pruning intervals per run.
    pub fn default_for(epochs: usize) -> Self {
        AcsSchedule {
            warmup_epochs: epochs / 3,
            prune_interval: (epochs / 12).max(1),
            record_masks: false,
        }
    }
}

fn default_validation_fraction() -> f64 {
    0.1
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_repetitions() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Fraction of the non-test pool held out (with noisy labels) for model
    /// selection.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Fraction of the dataset held out with clean labels for testing.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub noise: NoiseSpec,
    /// Hidden-layer widths; empty for a linear softmax model.
    #[serde(default)]
    pub hidden: Vec<usize>,
    /// Training recipe. Its `seed` is replaced per repetition by a seed
    /// derived from `base_seed`.
    pub train: TrainConfig,
    #[serde(default)]
    pub acs: Option<AcsSchedule>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.validate_static()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks that do not need the dataset.
    pub fn validate_static(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(Error::config("validation_fraction must lie in (0, 0.5]"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("test_fraction must lie in (0, 1)"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden widths must be at least 1"));
        }
        if let Some(a) = &self.acs {
            if !matches!(self.train.loss, LossConfig::TruncatedLq { .. }) {
                return Err(Error::config("acs training needs a truncated_lq loss"));
            }
            if a.prune_interval == 0 || a.warmup_epochs > self.train.epochs {
                return Err(Error::config(
                    "acs needs prune_interval >= 1 and warmup_epochs <= train.epochs",
                ));
            }
        }
        if let DatasetSource::Synthetic(b) = &self.dataset {
            if b.n < b.c || !(b.separation > 0.0) {
                return Err(Error::config("synthetic dataset needs n >= c and separation > 0"));
            }
        }
        self.train.loss.validate_params()
    }

    /// SHA-256 of the config's canonical JSON form, leaving out
    /// `output_dir` so the same experiment hashes alike wherever it is written.
    pub fn hash(&self) -> String {
        let identity = ExperimentConfig {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let text = serde_json::to_string(&identity).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "dataset": {"kind": "synthetic", "n": 200, "d": 2, "c": 3, "separation": 5.0, "seed": 1},
        "noise": {"kind": "uniform", "eta": 0.2},
        "train": {"epochs": 3, "batch_size": 16, "learning_rate": 0.1, "loss": {"kind": "lq", "q": 0.7}},
        "repetitions": 2
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(SAMPLE).unwrap();
        assert_eq!(cfg.validation_fraction, 0.1);
        assert_eq!(cfg.test_fraction, 0.2);
        assert_eq!(cfg.repetitions, 2);
        assert!(cfg.hidden.is_empty());
        assert_eq!(cfg.hash(), ExperimentConfig::from_json(SAMPLE).unwrap().hash());
        assert_eq!(cfg.hash().len(), 64);
        let moved = ExperimentConfig { output_dir: "elsewhere".into(), ..cfg.clone() };
        assert_eq!(moved.hash(), cfg.hash());
        let reseeded = ExperimentConfig { base_seed: 1, ..cfg.clone() };
        assert_ne!(reseeded.hash(), cfg.hash());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let extra = SAMPLE.replacen("\"repetitions\"", "\"bogus\": 1, \"repetitions\"", 1);
        assert!(matches!(ExperimentConfig::from_json(&extra), Err(Error::Config(_))));
        let bad = SAMPLE.replacen("\"repetitions\": 2", "\"repetitions\": 0", 1);
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = SAMPLE.replacen("\"repetitions\": 2", "\"validation_fraction\": 0.7", 1);
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let acs = SAMPLE.replacen(
            "\"repetitions\": 2",
            "\"acs\": {\"warmup_epochs\": 1, \"prune_interval\": 1}",
            1,
        );
        assert!(ExperimentConfig::from_json(&acs).is_err());
    }

    #[test]
    fn presets_resolve() {
        let spec = NoiseSpec::PairFlip {
            eta: 0.3,
            pairs: vec![FlipPair::one_way(2, 0)],
        };
        let NoiseModel::ClassDependent { transition, .. } = spec.resolve(3).unwrap() else {
            panic!("expected class-dependent model")
        };
        assert_eq!(transition[2], vec![0.3, 0.0, 0.7]);
        assert_eq!(spec.with_eta(0.1).unwrap().eta(), 0.1);
        assert_eq!(NoiseSpec::None.resolve(4).unwrap(), NoiseModel::Uniform { eta: 0.0 });
        assert!(NoiseSpec::Uniform { eta: 1.2 }.resolve(3).is_err());
    }

    #[test]
    fn default_schedule() {
        let s = AcsSchedule::default_for(120);
        assert_eq!((s.warmup_epochs, s.prune_interval), (40, 10));
        assert_eq!(AcsSchedule::default_for(5).prune_interval, 1);
    }
}
