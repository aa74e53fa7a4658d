//! Alternating optimisation of binary sample weights and parameters for the
//! truncated Lq objective.
//!
//! With weights fixed, the parameters follow a number of SGD epochs on the
//! weighted Lq loss. With parameters fixed, the optimal weights are closed
//! form: keep a sample iff its observed-label probability is at least `k`.

use serde::{Deserialize, Serialize};

use crate::data::NoisyDataset;
use crate::error::{Error, Result};
use crate::loss::{lq_value, LossConfig};
use crate::model::{Classifier, Workspace};
use crate::rng::stage_seed;
use crate::train::{BestSnapshot, DataSplits, EpochMetrics, TrainConfig, Trainer};

/// Binary per-sample weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleMask(Vec<bool>);

impl SampleMask {
    pub fn new(bits: Vec<bool>) -> Self {
        SampleMask(bits)
    }

    pub fn all_ones(n: usize) -> Self {
        SampleMask(vec![true; n])
    }

    pub fn all_zeros(n: usize) -> Self {
        SampleMask(vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// Number of kept samples.
    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Indices of kept samples, ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// `'1'`/`'0'` string, one character per sample.
    pub fn to_bits(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcsConfig {
    /// Epochs trained on the full set before the first pruning step.
    pub warmup_epochs: usize,
    /// Epochs between pruning steps.
    pub prune_interval: usize,
    pub total_epochs: usize,
    pub k: f64,
    pub q: f64,
    /// Store the full mask with every pruning event.
    #[serde(default)]
    pub record_masks: bool,
}

impl AcsConfig {
    pub fn validate(&self, c: usize) -> Result<()> {
        if self.warmup_epochs > self.total_epochs {
            return Err(Error::config("warmup_epochs exceeds total_epochs"));
        }
        if self.prune_interval == 0 {
            return Err(Error::config("prune_interval must be at least 1"));
        }
        if c < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        // k below 1/c is allowed here: it only makes pruning rarer.
        check_qk(self.q, self.k)
    }

    /// Whether a pruning step runs before epoch `epoch`.
    pub fn prunes_before(&self, epoch: usize) -> bool {
        epoch >= self.warmup_epochs && (epoch - self.warmup_epochs).is_multiple_of(self.prune_interval)
    }
}

fn observed_probs(clf: &Classifier, data: &NoisyDataset) -> Result<Vec<f64>> {
    if data.n_features() != clf.n_features() || data.n_classes() > clf.n_classes() {
        return Err(Error::shape("classifier and data shapes disagree"));
    }
    let mut ws = Workspace::default();
    Ok((0..data.len())
        .map(|i| {
            clf.forward_ws(data.row(i), &mut ws);
            ws.probs()[data.noisy_labels()[i]]
        })
        .collect())
}

fn check_qk(q: f64, k: f64) -> Result<()> {
    LossConfig::truncated_lq(q, k).map(|_| ())
}

/// Keep sample `i` iff `probs[i] >= k`.
pub fn mask_from_probs(probs: &[f64], k: f64) -> SampleMask {
    SampleMask(probs.iter().map(|&p| p >= k).collect())
}

/// The optimal weights at fixed parameters: `w_i = 1` iff `f_{y~_i} >= k`,
/// which is iff `L_q(f_{y~_i}) <= L_q(k)`.
pub fn pruning_step(clf: &Classifier, data: &NoisyDataset, q: f64, k: f64) -> Result<SampleMask> {
    check_qk(q, k)?;
    Ok(mask_from_probs(&observed_probs(clf, data)?, k))
}

/// `sum_i [w_i L_q(f_i) + (1 - w_i) L_q(k)]`.
pub fn truncated_objective_value(
    clf: &Classifier,
    data: &NoisyDataset,
    mask: &SampleMask,
    q: f64,
    k: f64,
) -> Result<f64> {
    check_qk(q, k)?;
    if mask.len() != data.len() {
        return Err(Error::shape(format!(
            "mask has {} entries, data has {}",
            mask.len(),
            data.len()
        )));
    }
    let cap = lq_value(q, k);
    Ok(observed_probs(clf, data)?
        .iter()
        .zip(mask.as_slice())
        .map(|(&p, &w)| if w { lq_value(q, p) } else { cap })
        .sum())
}

/// Bookkeeping for one pruning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub epoch: usize,
    /// Epoch whose parameters were used to compute the mask.
    pub snapshot_epoch: Option<usize>,
    pub retained: usize,
    pub retained_corrupted: usize,
    pub pruned: usize,
    pub pruned_corrupted: usize,
    /// The new mask was empty and the previous one was kept.
    pub collapsed: bool,
    /// Surrogate objective at the snapshot parameters, before and after the
    /// weight update.
    pub objective_before: f64,
    pub objective_after: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AcsEvent {
    Epoch(EpochMetrics),
    Prune(PruneSummary),
}

#[derive(Debug, Clone)]
pub struct AcsOutcome {
    pub classifier: Classifier,
    pub best_epoch: Option<usize>,
    pub best_classifier: Option<Classifier>,
    pub final_mask: SampleMask,
    pub history: Vec<AcsEvent>,
}

impl AcsOutcome {
    pub fn epochs(&self) -> impl Iterator<Item = &EpochMetrics> {
        self.history.iter().filter_map(|e| match e {
            AcsEvent::Epoch(m) => Some(m),
            AcsEvent::Prune(_) => None,
        })
    }

    pub fn prunes(&self) -> impl Iterator<Item = &PruneSummary> {
        self.history.iter().filter_map(|e| match e {
            AcsEvent::Prune(p) => Some(p),
            AcsEvent::Epoch(_) => None,
        })
    }
}

fn summarize(epoch: usize, mask: &SampleMask, data: &NoisyDataset) -> PruneSummary {
    let mut s = PruneSummary {
        epoch,
        snapshot_epoch: None,
        retained: 0,
        retained_corrupted: 0,
        pruned: 0,
        pruned_corrupted: 0,
        collapsed: false,
        objective_before: 0.0,
        objective_after: 0.0,
        mask: None,
    };
    for (&keep, &bad) in mask.as_slice().iter().zip(data.corrupted()) {
        match (keep, bad) {
            (true, false) => s.retained += 1,
            (true, true) => {
                s.retained += 1;
                s.retained_corrupted += 1
            }
            (false, false) => s.pruned += 1,
            (false, true) => {
                s.pruned += 1;
                s.pruned_corrupted += 1
            }
        }
    }
    s
}

/// Train with all samples for `warmup_epochs`, then before every
/// `prune_interval`-th epoch recompute the mask from the best-validation
/// snapshot and keep training on the kept samples with the Lq loss.
///
/// The classifier is initialised and shuffled exactly as in
/// [`crate::train::train`]; `train_cfg.epochs` and `train_cfg.loss` are
/// replaced by `acs_cfg.total_epochs` and `Lq(acs_cfg.q)`. If a pruning step
/// would drop every sample, the previous mask is kept and pruning stops.
pub fn acs_train(
    splits: &DataSplits,
    hidden: &[usize],
    train_cfg: &TrainConfig,
    acs_cfg: &AcsConfig,
) -> Result<AcsOutcome> {
    let data = &splits.train;
    let c = data.n_classes();
    acs_cfg.validate(c)?;
    let cfg = TrainConfig {
        epochs: acs_cfg.total_epochs,
        loss: LossConfig::lq(acs_cfg.q)?,
        ..train_cfg.clone()
    };
    cfg.validate(c)?;
    let clf = Classifier::new(data.n_features(), c, hidden, stage_seed(cfg.seed, 0, "init"))?;
    let mut trainer = Trainer::new(clf);
    let mut best = BestSnapshot::default();
    let mut mask = SampleMask::all_ones(data.len());
    let mut frozen = false;
    let mut history = Vec::new();

    for epoch in 0..acs_cfg.total_epochs {
        if !frozen && acs_cfg.prunes_before(epoch) {
            let snap = best.classifier().unwrap_or(trainer.classifier());
            let probs = observed_probs(snap, data)?;
            let cap = lq_value(acs_cfg.q, acs_cfg.k);
            let objective = |m: &SampleMask| -> f64 {
                probs
                    .iter()
                    .zip(m.as_slice())
                    .map(|(&p, &w)| if w { lq_value(acs_cfg.q, p) } else { cap })
                    .sum()
            };
            let proposed = mask_from_probs(&probs, acs_cfg.k);
            let before = objective(&mask);
            let collapsed = proposed.count() == 0;
            if collapsed {
                frozen = true;
            } else {
                mask = proposed;
            }
            let mut s = summarize(epoch, &mask, data);
            s.snapshot_epoch = best.epoch();
            s.collapsed = collapsed;
            s.objective_before = before;
            s.objective_after = objective(&mask);
            if acs_cfg.record_masks {
                s.mask = Some(mask.to_bits());
            }
            history.push(AcsEvent::Prune(s));
        }
        let m = trainer.train_epoch(splits, Some(&mask), &cfg, epoch)?;
        best.observe(&m, trainer.classifier());
        history.push(AcsEvent::Epoch(m));
    }
    Ok(AcsOutcome {
        best_epoch: best.epoch(),
        best_classifier: best.classifier().cloned(),
        classifier: trainer.into_classifier(),
        final_mask: mask,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::loss::LossConfig;
    use crate::noise::{inject_noise, NoiseModel};
    use crate::train::train;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn acs(k: f64, warmup: usize, total: usize) -> AcsConfig {
        AcsConfig {
            warmup_epochs: warmup,
            prune_interval: 2,
            total_epochs: total,
            k,
            q: 0.7,
            record_masks: false,
        }
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            momentum: 0.9,
            seed: 3,
            ..TrainConfig::new(0, 16, 0.05, LossConfig::Cce)
        }
    }

    #[test]
    fn threshold_rule_and_ties() {
        let m = mask_from_probs(&[0.5, 0.49, 0.9, 0.1], 0.5);
        assert_eq!(m.as_slice(), &[true, false, true, false]);
        assert_eq!(m.count(), 2);
        assert_eq!(m.to_bits(), "1010");
        assert_eq!(m.indices().collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn uniform_classifier_prunes_everything() {
        let ds = NoisyDataset::from_clean(&synth_blobs(40, 5, 10, 4.0, 1).unwrap());
        let mut clf = Classifier::new(5, 10, &[], 0).unwrap();
        clf.params_mut().fill(0.0);
        let m = pruning_step(&clf, &ds, 0.7, 0.5).unwrap();
        assert_eq!(m.count(), 0);
        let v = truncated_objective_value(&clf, &ds, &m, 0.7, 0.5).unwrap();
        assert_abs_diff_eq!(v, 40.0 * lq_value(0.7, 0.5), epsilon = 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(acs(0.5, 5, 4).validate(3).is_err());
        assert!(AcsConfig { prune_interval: 0, ..acs(0.5, 1, 4) }.validate(3).is_err());
        assert!(AcsConfig { k: 0.0, ..acs(0.5, 1, 4) }.validate(3).is_err());
        assert!(AcsConfig { q: 1.0, ..acs(0.5, 1, 4) }.validate(3).is_err());
        assert!(acs(0.5, 1, 4).validate(3).is_ok());
        assert!(acs(0.5, 2, 10).prunes_before(2));
        assert!(!acs(0.5, 2, 10).prunes_before(3));
        assert!(acs(0.5, 2, 10).prunes_before(4));
        assert!(!acs(0.5, 2, 10).prunes_before(1));
    }

    #[test]
    fn vanishing_k_matches_plain_lq_training() {
        let ds = synth_blobs(150, 2, 3, 3.0, 2).unwrap();
        let noisy = inject_noise(&ds, &NoiseModel::Uniform { eta: 0.3 }, 1).unwrap();
        let splits = DataSplits::train_only(noisy);
        let a = acs_train(&splits, &[6], &cfg(), &AcsConfig { k: 1e-300, ..acs(0.5, 2, 8) }).unwrap();
        assert!(a.prunes().all(|p| p.pruned == 0));
        let plain = TrainConfig { epochs: 8, loss: LossConfig::Lq { q: 0.7 }, ..cfg() };
        let b = train(&splits, &[6], &plain).unwrap();
        assert_eq!(a.classifier, b.classifier);
        assert_eq!(a.epochs().cloned().collect::<Vec<_>>(), b.history);
    }

    #[test]
    fn history_is_reproducible_and_objective_monotone() {
        let ds = synth_blobs(200, 2, 3, 3.0, 2).unwrap();
        let noisy = inject_noise(&ds, &NoiseModel::Uniform { eta: 0.4 }, 1).unwrap();
        let splits = DataSplits::train_only(noisy);
        let a = acs_train(&splits, &[], &cfg(), &acs(0.4, 3, 12)).unwrap();
        let b = acs_train(&splits, &[], &cfg(), &acs(0.4, 3, 12)).unwrap();
        assert_eq!(a.history, b.history);
        assert!(a.prunes().count() >= 4);
        for p in a.prunes() {
            assert!(p.objective_after <= p.objective_before + 1e-12);
            assert_eq!(p.retained + p.pruned, 200);
        }
        for m in a.epochs() {
            assert!(m.active_samples <= 200);
        }
    }

    #[test]
    fn collapse_keeps_previous_mask() {
        let labels = (0..60).map(|i| i % 3).collect();
        let ds = crate::data::Dataset::new(vec![0.0; 120], 2, labels, 3).unwrap();
        let splits = DataSplits::train_only(NoisyDataset::from_clean(&ds));
        // Zero features and zero learning rate keep every prediction uniform.
        let frozen = TrainConfig { learning_rate: 0.0, ..cfg() };
        let out = acs_train(&splits, &[], &frozen, &AcsConfig { k: 0.9, ..acs(0.9, 1, 6) }).unwrap();
        let first = out.prunes().next().unwrap();
        assert!(first.collapsed);
        assert_eq!(first.retained, 60);
        assert_eq!(out.prunes().count(), 1);
        assert_eq!(out.final_mask, SampleMask::all_ones(60));
    }

    #[test]
    fn recorded_masks_serialize() {
        let ds = NoisyDataset::from_clean(&synth_blobs(20, 2, 3, 6.0, 2).unwrap());
        let splits = DataSplits::train_only(ds);
        let out = acs_train(&splits, &[], &cfg(), &AcsConfig { record_masks: true, ..acs(0.4, 1, 3) }).unwrap();
        let p = out.prunes().next().unwrap();
        assert_eq!(p.mask.as_ref().unwrap().len(), 20);
        let line = serde_json::to_string(&AcsEvent::Prune(p.clone())).unwrap();
        assert!(line.starts_with("{\"event\":\"prune\""));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn optimal_mask_gives_truncated_sum(seed in any::<u64>(), k in 0.34f64..0.95, q in 0.05f64..0.95) {
            let ds = synth_blobs(30, 3, 3, 2.0, seed).unwrap();
            let noisy = inject_noise(&ds, &NoiseModel::Uniform { eta: 0.3 }, seed).unwrap();
            let clf = Classifier::new(3, 3, &[4], seed ^ 5).unwrap();
            let mask = pruning_step(&clf, &noisy, q, k).unwrap();
            let surrogate = truncated_objective_value(&clf, &noisy, &mask, q, k).unwrap();
            let trunc = LossConfig::TruncatedLq { q, k };
            let direct: f64 = (0..noisy.len())
                .map(|i| trunc.loss(&clf.forward(noisy.row(i)).unwrap(), noisy.noisy_labels()[i]).unwrap())
                .sum();
            prop_assert!((surrogate - direct).abs() < 1e-12);
            // No other mask does better.
            let flipped = SampleMask::new(mask.as_slice().iter().map(|b| !b).collect());
            prop_assert!(surrogate <= truncated_objective_value(&clf, &noisy, &flipped, q, k).unwrap());
        }
    }
}
