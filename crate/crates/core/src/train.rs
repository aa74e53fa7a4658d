//! Mini-batch SGD with momentum, weight decay and step learning-rate schedule.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::acs::SampleMask;
use crate::data::NoisyDataset;
use crate::error::{Error, Result};
use crate::loss::{argmax, LossConfig};
use crate::model::{Classifier, Workspace};
use crate::rng::{rng_from_seed, stage_seed};

/// Schema version written into every metrics line.
pub const METRICS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    /// `(epoch, divisor)`: from `epoch` on, the learning rate is divided by
    /// `divisor` (cumulatively with earlier entries).
    #[serde(default)]
    pub lr_schedule: Vec<(usize, f64)>,
    #[serde(default)]
    pub seed: u64,
    pub loss: LossConfig,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, learning_rate: f64, loss: LossConfig) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            momentum: 0.0,
            weight_decay: 0.0,
            lr_schedule: Vec::new(),
            seed: 0,
            loss,
        }
    }

    pub fn validate(&self, c: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay must be finite and non-negative"));
        }
        if self.lr_schedule.iter().any(|&(_, d)| !(d > 0.0 && d.is_finite())) {
            return Err(Error::config("learning-rate divisors must be positive"));
        }
        self.loss.validate(c)
    }

    /// Learning rate in effect during `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.lr_schedule
            .iter()
            .filter(|&&(e, _)| epoch >= e)
            .fold(self.learning_rate, |lr, &(_, d)| lr / d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Summary of a classifier on one split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub split: Split,
    pub n: usize,
    /// Mean training loss against the observed labels.
    pub loss: f64,
    /// Agreement with the clean labels on the test split and with the
    /// observed labels otherwise.
    pub accuracy: f64,
    pub clean_accuracy: f64,
    pub observed_accuracy: f64,
    /// Mean `f_label` over rows whose observed label is correct.
    pub avg_softmax_correct: Option<f64>,
    /// Mean `f_label` over corrupted rows.
    pub avg_softmax_wrong: Option<f64>,
}

fn mean(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

pub fn evaluate(
    clf: &Classifier,
    data: &NoisyDataset,
    split: Split,
    loss: &LossConfig,
) -> Result<Evaluation> {
    check_data(clf, data)?;
    loss.validate(clf.n_classes())?;
    let mut ws = Workspace::default();
    let (mut loss_sum, mut clean_hits, mut obs_hits) = (0.0, 0usize, 0usize);
    let (mut good_sum, mut good_n, mut bad_sum, mut bad_n) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..data.len() {
        clf.forward_ws(data.row(i), &mut ws);
        let probs = ws.probs();
        let obs = data.noisy_labels()[i];
        let pred = argmax(probs);
        loss_sum += loss.loss_raw(probs, obs);
        clean_hits += usize::from(pred == data.clean_labels()[i]);
        obs_hits += usize::from(pred == obs);
        if data.corrupted()[i] {
            bad_sum += probs[obs];
            bad_n += 1;
        } else {
            good_sum += probs[obs];
            good_n += 1;
        }
    }
    let n = data.len();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let clean_accuracy = frac(clean_hits);
    let observed_accuracy = frac(obs_hits);
    Ok(Evaluation {
        split,
        n,
        loss: mean(loss_sum, n).unwrap_or(0.0),
        accuracy: if split == Split::Test {
            clean_accuracy
        } else {
            observed_accuracy
        },
        clean_accuracy,
        observed_accuracy,
        avg_softmax_correct: mean(good_sum, good_n),
        avg_softmax_wrong: mean(bad_sum, bad_n),
    })
}

fn check_data(clf: &Classifier, data: &NoisyDataset) -> Result<()> {
    if data.n_features() != clf.n_features() {
        return Err(Error::shape(format!(
            "data has {} features, model expects {}",
            data.n_features(),
            clf.n_features()
        )));
    }
    if data.n_classes() > clf.n_classes() {
        return Err(Error::shape(format!(
            "data has {} classes, model outputs {}",
            data.n_classes(),
            clf.n_classes()
        )));
    }
    Ok(())
}

/// Training, validation and test data. Validation labels may be noisy; test
/// labels are clean.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplits {
    pub train: NoisyDataset,
    pub val: Option<NoisyDataset>,
    pub test: Option<NoisyDataset>,
}

impl DataSplits {
    pub fn train_only(train: NoisyDataset) -> Self {
        DataSplits {
            train,
            val: None,
            test: None,
        }
    }
}

/// Per-epoch learning-dynamics record, computed after the epoch's updates on
/// the full (unmasked) splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub v: u32,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub avg_softmax_correct: Option<f64>,
    pub avg_softmax_wrong: Option<f64>,
    pub active_samples: usize,
    pub learning_rate: f64,
    /// Set when every training sample was masked out and no update happened.
    pub skipped: bool,
}

/// Classifier plus optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    classifier: Classifier,
    velocity: Vec<f64>,
    grad: Vec<f64>,
    ws: Workspace,
}

impl Trainer {
    pub fn new(classifier: Classifier) -> Self {
        let n = classifier.n_params();
        Trainer {
            classifier,
            velocity: vec![0.0; n],
            grad: vec![0.0; n],
            ws: Workspace::default(),
        }
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    pub fn into_classifier(self) -> Classifier {
        self.classifier
    }

    /// One pass over the masked-in training rows in a shuffled order drawn
    /// from `(cfg.seed, epoch)`, followed by evaluation on every split.
    pub fn train_epoch(
        &mut self,
        splits: &DataSplits,
        mask: Option<&SampleMask>,
        cfg: &TrainConfig,
        epoch: usize,
    ) -> Result<EpochMetrics> {
        let train = &splits.train;
        check_data(&self.classifier, train)?;
        cfg.validate(self.classifier.n_classes())?;
        let mut order: Vec<usize> = match mask {
            Some(m) => {
                if m.len() != train.len() {
                    return Err(Error::shape(format!(
                        "mask has {} entries, training set has {}",
                        m.len(),
                        train.len()
                    )));
                }
                m.indices().collect()
            }
            None => (0..train.len()).collect(),
        };
        let active = order.len();
        let lr = cfg.learning_rate_at(epoch);
        let mut rng = rng_from_seed(stage_seed(cfg.seed, epoch as u64, "shuffle"));
        order.shuffle(&mut rng);

        for batch in order.chunks(cfg.batch_size) {
            self.grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                self.classifier.forward_ws(train.row(i), &mut self.ws);
                self.classifier.backward_ws(
                    &mut self.ws,
                    train.noisy_labels()[i],
                    &cfg.loss,
                    scale,
                    &mut self.grad,
                );
            }
            let params = self.classifier.params_mut();
            for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(&self.grad) {
                *v = cfg.momentum * *v + g + cfg.weight_decay * *p;
                *p -= lr * *v;
            }
        }
        if self.classifier.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!("parameters diverged in epoch {epoch}")));
        }

        let tr = evaluate(&self.classifier, train, Split::Train, &cfg.loss)?;
        let val = splits
            .val
            .as_ref()
            .map(|d| evaluate(&self.classifier, d, Split::Val, &cfg.loss))
            .transpose()?;
        let test = splits
            .test
            .as_ref()
            .map(|d| evaluate(&self.classifier, d, Split::Test, &cfg.loss))
            .transpose()?;
        Ok(EpochMetrics {
            v: METRICS_VERSION,
            epoch,
            train_loss: tr.loss,
            train_accuracy: tr.accuracy,
            val_accuracy: val.map(|e| e.accuracy),
            test_accuracy: test.map(|e| e.accuracy),
            avg_softmax_correct: tr.avg_softmax_correct,
            avg_softmax_wrong: tr.avg_softmax_wrong,
            active_samples: active,
            learning_rate: lr,
            skipped: active == 0,
        })
    }
}

/// Tracks the parameters at the epoch of highest validation accuracy; the
/// first epoch wins ties. Without a validation split every epoch counts as
/// an improvement, so the snapshot follows the latest parameters.
#[derive(Debug, Clone, Default)]
pub struct BestSnapshot {
    best: Option<(usize, f64, Classifier)>,
}

impl BestSnapshot {
    pub fn observe(&mut self, metrics: &EpochMetrics, clf: &Classifier) {
        let score = metrics.val_accuracy.unwrap_or(f64::INFINITY);
        let improved = match &self.best {
            None => true,
            Some((_, best, _)) => score > *best || metrics.val_accuracy.is_none(),
        };
        if improved {
            self.best = Some((metrics.epoch, score, clf.clone()));
        }
    }

    pub fn epoch(&self) -> Option<usize> {
        self.best.as_ref().map(|b| b.0)
    }

    pub fn classifier(&self) -> Option<&Classifier> {
        self.best.as_ref().map(|b| &b.2)
    }
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub classifier: Classifier,
    pub best_epoch: Option<usize>,
    pub best_classifier: Option<Classifier>,
    pub history: Vec<EpochMetrics>,
}

/// Train a fresh classifier, initialised from `(cfg.seed, "init")`, for
/// `cfg.epochs` epochs on the full training set.
pub fn train(splits: &DataSplits, hidden: &[usize], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let c = splits.train.n_classes();
    let clf = Classifier::new(
        splits.train.n_features(),
        c,
        hidden,
        stage_seed(cfg.seed, 0, "init"),
    )?;
    cfg.validate(c)?;
    let mut trainer = Trainer::new(clf);
    let mut best = BestSnapshot::default();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let m = trainer.train_epoch(splits, None, cfg, epoch)?;
        best.observe(&m, trainer.classifier());
        history.push(m);
    }
    Ok(TrainOutcome {
        best_epoch: best.epoch(),
        best_classifier: best.classifier().cloned(),
        classifier: trainer.into_classifier(),
        history,
    })
}

/// Index of the first epoch with maximal validation accuracy, or the last
/// epoch when no validation accuracy was recorded.
pub fn best_val_epoch(history: &[EpochMetrics]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in history.iter().enumerate() {
        if let Some(v) = m.val_accuracy {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|b| b.0).or_else(|| history.len().checked_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_blobs, Dataset, NoisyDataset};
    use crate::noise::{inject_noise, NoiseModel};
    use approx::assert_abs_diff_eq;

    fn blobs(n: usize, sep: f64, seed: u64) -> NoisyDataset {
        NoisyDataset::from_clean(&synth_blobs(n, 2, 3, sep, seed).unwrap())
    }

    fn sgd(epochs: usize, loss: LossConfig) -> TrainConfig {
        TrainConfig {
            momentum: 0.9,
            seed: 11,
            ..TrainConfig::new(epochs, 16, 0.05, loss)
        }
    }

    #[test]
    fn schedule_divides_cumulatively() {
        let cfg = TrainConfig {
            lr_schedule: vec![(40, 10.0), (80, 10.0)],
            ..TrainConfig::new(120, 1, 0.1, LossConfig::Cce)
        };
        assert_abs_diff_eq!(cfg.learning_rate_at(0), 0.1);
        assert_abs_diff_eq!(cfg.learning_rate_at(40), 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(cfg.learning_rate_at(119), 0.001, epsilon = 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::new(1, 0, 0.1, LossConfig::Cce);
        assert!(cfg.validate(3).is_err());
        cfg.batch_size = 1;
        cfg.momentum = 1.0;
        assert!(cfg.validate(3).is_err());
        cfg.momentum = 0.5;
        assert!(cfg.validate(3).is_ok());
        let json = r#"{"epochs":1,"batch_size":2,"learning_rate":0.1,"loss":{"kind":"cce"},"bogus":1}"#;
        assert!(serde_json::from_str::<TrainConfig>(json).is_err());
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let data = DataSplits::train_only(blobs(60, 4.0, 1));
        let cfg = TrainConfig { learning_rate: 0.0, ..sgd(1, LossConfig::Cce) };
        let clf = Classifier::new(2, 3, &[4], 2).unwrap();
        let mut t = Trainer::new(clf.clone());
        let before = evaluate(&clf, &data.train, Split::Train, &cfg.loss).unwrap();
        let m = t.train_epoch(&data, None, &cfg, 0).unwrap();
        assert_eq!(t.classifier(), &clf);
        assert_eq!(m.train_loss, before.loss);
    }

    #[test]
    fn full_mask_equals_no_mask() {
        let data = DataSplits::train_only(blobs(90, 3.0, 1));
        let cfg = sgd(3, LossConfig::Lq { q: 0.7 });
        let clf = Classifier::new(2, 3, &[5], 4).unwrap();
        let mut a = Trainer::new(clf.clone());
        let mut b = Trainer::new(clf);
        let ones = SampleMask::all_ones(90);
        for e in 0..3 {
            let ma = a.train_epoch(&data, None, &cfg, e).unwrap();
            let mb = b.train_epoch(&data, Some(&ones), &cfg, e).unwrap();
            assert_eq!(ma, mb);
        }
        assert_eq!(a.classifier(), b.classifier());
    }

    #[test]
    fn empty_mask_skips_update() {
        let data = DataSplits::train_only(blobs(30, 3.0, 1));
        let clf = Classifier::new(2, 3, &[], 4).unwrap();
        let mut t = Trainer::new(clf.clone());
        let m = t
            .train_epoch(&data, Some(&SampleMask::all_zeros(30)), &sgd(1, LossConfig::Cce), 0)
            .unwrap();
        assert!(m.skipped);
        assert_eq!(m.active_samples, 0);
        assert_eq!(t.classifier(), &clf);
        assert!(t.train_epoch(&data, Some(&SampleMask::all_ones(29)), &sgd(1, LossConfig::Cce), 0).is_err());
    }

    #[test]
    fn active_samples_is_popcount() {
        let data = DataSplits::train_only(blobs(40, 3.0, 1));
        let mask = SampleMask::new((0..40).map(|i| i % 3 != 0).collect());
        let mut t = Trainer::new(Classifier::new(2, 3, &[], 0).unwrap());
        let m = t.train_epoch(&data, Some(&mask), &sgd(1, LossConfig::Cce), 0).unwrap();
        assert_eq!(m.active_samples, mask.count());
    }

    #[test]
    fn single_sample_loss_goes_to_zero() {
        let ds = Dataset::new(vec![1.0, -0.5], 2, vec![2], 3).unwrap();
        let data = DataSplits::train_only(NoisyDataset::from_clean(&ds));
        let cfg = TrainConfig::new(400, 1, 0.5, LossConfig::Cce);
        let out = train(&data, &[], &cfg).unwrap();
        let losses: Vec<f64> = out.history.iter().map(|m| m.train_loss).collect();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(*losses.last().unwrap() < 0.01);
    }

    #[test]
    fn training_is_reproducible() {
        let data = DataSplits::train_only(blobs(120, 2.0, 5));
        let cfg = sgd(4, LossConfig::Lq { q: 0.5 });
        let a = train(&data, &[8], &cfg).unwrap();
        let b = train(&data, &[8], &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.classifier, b.classifier);
    }

    #[test]
    fn separable_blobs_train_with_cce_and_lq() {
        let train_set = blobs(300, 10.0, 2);
        let test = NoisyDataset::from_clean(&synth_blobs(300, 2, 3, 10.0, 3).unwrap());
        let data = DataSplits { train: train_set, val: None, test: Some(test) };
        for loss in [LossConfig::Cce, LossConfig::Lq { q: 0.7 }] {
            let out = train(&data, &[], &sgd(30, loss)).unwrap();
            let last = out.history.last().unwrap();
            assert!(last.train_accuracy >= 0.95);
            assert!(last.test_accuracy.unwrap() >= 0.99);
        }
    }

    #[test]
    fn evaluation_examples() {
        let ds = synth_blobs(50, 5, 10, 5.0, 1).unwrap();
        // All-zero parameters give the uniform prediction.
        let mut clf = Classifier::new(5, 10, &[], 0).unwrap();
        clf.params_mut().fill(0.0);
        let noisy = inject_noise(&ds, &NoiseModel::Uniform { eta: 0.5 }, 3).unwrap();
        let e = evaluate(&clf, &noisy, Split::Train, &LossConfig::Cce).unwrap();
        assert_abs_diff_eq!(e.avg_softmax_correct.unwrap(), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(e.avg_softmax_wrong.unwrap(), 0.1, epsilon = 1e-12);
        let clean = NoisyDataset::from_clean(&ds);
        let e = evaluate(&clf, &clean, Split::Test, &LossConfig::Cce).unwrap();
        assert_eq!(e.avg_softmax_wrong, None);
    }

    #[test]
    fn best_epoch_takes_first_maximum() {
        let m = |epoch, val| EpochMetrics {
            v: 1,
            epoch,
            train_loss: 0.0,
            train_accuracy: 0.0,
            val_accuracy: val,
            test_accuracy: None,
            avg_softmax_correct: None,
            avg_softmax_wrong: None,
            active_samples: 0,
            learning_rate: 0.0,
            skipped: false,
        };
        let h = vec![m(0, Some(0.5)), m(1, Some(0.7)), m(2, Some(0.7)), m(3, Some(0.6))];
        assert_eq!(best_val_epoch(&h), Some(1));
        let h = vec![m(0, None), m(1, None)];
        assert_eq!(best_val_epoch(&h), Some(1));
        assert_eq!(best_val_epoch(&[]), None);
    }
}
