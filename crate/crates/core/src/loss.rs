//! Loss functions on softmax outputs and their analytic gradients.
//!
//! Five losses are supported: categorical cross entropy (CCE), mean absolute
//! error (MAE), the Lq loss `(1 - f_y^q) / q`, the truncated Lq loss (flat at
//! `L_q(k)` once `f_y <= k`), and forward-corrected CCE which mixes the
//! prediction through a known label-noise confusion matrix.
//!
//! Gradients are available with respect to the probability vector and with
//! respect to the pre-softmax logits, so training code never needs autodiff.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower floor applied to a probability before it enters a logarithm or a
/// negative power.
pub const PROB_FLOOR: f64 = 1e-12;

/// Absolute tolerance on the sum of a probability vector.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point on the probability simplex: `c` nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::domain("probability vector must be non-empty"));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::domain(format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::domain(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(ProbVector(probs))
    }

    /// Numerically stable softmax of `logits`.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::domain("empty logit vector"));
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numeric("non-finite logit".into()));
        }
        let mut out = vec![0.0; logits.len()];
        softmax_into(logits, &mut out);
        Ok(ProbVector(out))
    }

    pub fn uniform(c: usize) -> Self {
        ProbVector(vec![1.0 / c as f64; c])
    }

    pub fn one_hot(c: usize, j: usize) -> Self {
        let mut v = vec![0.0; c];
        v[j] = 1.0;
        ProbVector(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }

    /// Index of the largest entry (first one on ties).
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = j;
        }
    }
    best
}

/// Softmax with max-logit subtraction. Inputs are assumed finite.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    debug_assert_eq!(logits.len(), out.len());
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `L_q(p) = (1 - p^q) / q`, evaluated as `-expm1(q ln p) / q` so that it stays
/// accurate for very small `q` and is exactly `1/q` at `p = 0`.
pub fn lq_value(q: f64, p: f64) -> f64 {
    -(q * p.ln()).exp_m1() / q
}

/// Discriminant of [`LossConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Cce,
    Mae,
    Lq,
    TruncatedLq,
    ForwardCce,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Cce => "cce",
            LossKind::Mae => "mae",
            LossKind::Lq => "lq",
            LossKind::TruncatedLq => "truncated_lq",
            LossKind::ForwardCce => "forward_cce",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cce" => Ok(LossKind::Cce),
            "mae" => Ok(LossKind::Mae),
            "lq" => Ok(LossKind::Lq),
            "truncated_lq" | "trunc" | "trunc_lq" => Ok(LossKind::TruncatedLq),
            "forward_cce" | "forward" => Ok(LossKind::ForwardCce),
            other => Err(Error::config(format!("unknown loss kind `{other}`"))),
        }
    }
}

/// A loss family together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossConfig {
    Cce,
    Mae,
    Lq { q: f64 },
    TruncatedLq { q: f64, k: f64 },
    /// `confusion[i][j] = p(noisy = j | clean = i)`, rows sum to one.
    ForwardCce { confusion: Vec<Vec<f64>> },
}

fn check_q_lq(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("Lq exponent q = {q} must lie in (0, 1]")))
    }
}

fn check_q_trunc(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "truncated Lq exponent q = {q} must lie in (0, 1)"
        )))
    }
}

fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("truncation threshold k = {k} must lie in (0, 1)")))
    }
}

/// Checks that `m` is a `c x c` row-stochastic matrix.
pub fn check_row_stochastic(m: &[Vec<f64>], c: Option<usize>) -> Result<()> {
    let n = m.len();
    if n == 0 {
        return Err(Error::config("empty matrix"));
    }
    if let Some(c) = c {
        if n != c {
            return Err(Error::config(format!("matrix has {n} rows, expected {c}")));
        }
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(Error::config(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::config(format!("row {i} has an entry outside [0, 1]")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::config(format!("row {i} sums to {s}, not 1")));
        }
    }
    Ok(())
}

impl LossConfig {
    pub fn lq(q: f64) -> Result<Self> {
        check_q_lq(q)?;
        Ok(LossConfig::Lq { q })
    }

    pub fn truncated_lq(q: f64, k: f64) -> Result<Self> {
        check_q_trunc(q)?;
        check_k(k)?;
        Ok(LossConfig::TruncatedLq { q, k })
    }

    pub fn forward_cce(confusion: Vec<Vec<f64>>) -> Result<Self> {
        check_row_stochastic(&confusion, None)?;
        Ok(LossConfig::ForwardCce { confusion })
    }

    pub fn kind(&self) -> LossKind {
        match self {
            LossConfig::Cce => LossKind::Cce,
            LossConfig::Mae => LossKind::Mae,
            LossConfig::Lq { .. } => LossKind::Lq,
            LossConfig::TruncatedLq { .. } => LossKind::TruncatedLq,
            LossConfig::ForwardCce { .. } => LossKind::ForwardCce,
        }
    }

    /// Short human-readable label, e.g. `lq(q=0.7)`.
    pub fn label(&self) -> String {
        match self {
            LossConfig::Cce => "cce".into(),
            LossConfig::Mae => "mae".into(),
            LossConfig::Lq { q } => format!("lq(q={q})"),
            LossConfig::TruncatedLq { q, k } => format!("truncated_lq(q={q},k={k})"),
            LossConfig::ForwardCce { .. } => "forward_cce".into(),
        }
    }

    /// Validate parameters that do not depend on the class count.
    pub fn validate_params(&self) -> Result<()> {
        match self {
            LossConfig::Cce | LossConfig::Mae => Ok(()),
            LossConfig::Lq { q } => check_q_lq(*q),
            LossConfig::TruncatedLq { q, k } => {
                check_q_trunc(*q)?;
                check_k(*k)
            }
            LossConfig::ForwardCce { confusion } => check_row_stochastic(confusion, None),
        }
    }

    /// Full validation against a class count: additionally requires
    /// `k >= 1/c` for the truncated loss and a `c x c` confusion matrix.
    pub fn validate(&self, c: usize) -> Result<()> {
        if c < 2 {
            return Err(Error::config(format!("need at least 2 classes, got {c}")));
        }
        self.validate_params()?;
        match self {
            LossConfig::TruncatedLq { k, .. } if *k < 1.0 / c as f64 => Err(Error::config(
                format!("truncation threshold k = {k} is below 1/c = {}", 1.0 / c as f64),
            )),
            LossConfig::ForwardCce { confusion } => check_row_stochastic(confusion, Some(c)),
            _ => Ok(()),
        }
    }

    fn check_inputs(&self, f: &ProbVector, label: usize) -> Result<()> {
        self.validate_params()?;
        check_label(f, label)?;
        if let LossConfig::ForwardCce { confusion } = self {
            if confusion.len() != f.len() {
                return Err(Error::config(format!(
                    "confusion matrix is {0}x{0} but prediction has {1} classes",
                    confusion.len(),
                    f.len()
                )));
            }
        }
        Ok(())
    }

    /// Loss of prediction `f` against `label`.
    pub fn loss(&self, f: &ProbVector, label: usize) -> Result<f64> {
        self.check_inputs(f, label)?;
        Ok(self.loss_raw(f.as_slice(), label))
    }

    /// Loss without validation; callers guarantee a valid config and label.
    pub(crate) fn loss_raw(&self, f: &[f64], label: usize) -> f64 {
        match self {
            LossConfig::Cce => -f[label].max(PROB_FLOOR).ln(),
            LossConfig::Mae => 2.0 - 2.0 * f[label],
            LossConfig::Lq { q } => lq_value(*q, f[label]),
            LossConfig::TruncatedLq { q, k } => {
                let p = f[label];
                if p <= *k {
                    lq_value(*q, *k)
                } else {
                    lq_value(*q, p)
                }
            }
            LossConfig::ForwardCce { confusion } => {
                -forward_mixture(confusion, f, label).max(PROB_FLOOR).ln()
            }
        }
    }

    /// Gradient of the loss with respect to the logits `z`, where `f = softmax(z)`
    /// is passed in as `probs`. Written into `out`.
    pub(crate) fn logit_grad_raw(&self, probs: &[f64], label: usize, out: &mut [f64]) {
        let p = probs[label];
        // Single-index losses: dL/dz = w * (f - e_label) with a per-loss weight w.
        let weight = match self {
            LossConfig::Cce => 1.0,
            LossConfig::Mae => 2.0 * p,
            LossConfig::Lq { q } => p.max(PROB_FLOOR).powf(*q),
            LossConfig::TruncatedLq { q, k } => {
                if p <= *k {
                    0.0
                } else {
                    p.powf(*q)
                }
            }
            LossConfig::ForwardCce { confusion } => {
                let s = forward_mixture(confusion, probs, label).max(PROB_FLOOR);
                // dL/df_j = -T[j][label] / s; dL/dz_m = f_m (g_m - <g, f>).
                let mut dot = 0.0;
                for (j, &f) in probs.iter().enumerate() {
                    dot += -confusion[j][label] / s * f;
                }
                for (m, o) in out.iter_mut().enumerate() {
                    *o = probs[m] * (-confusion[m][label] / s - dot);
                }
                return;
            }
        };
        for (m, o) in out.iter_mut().enumerate() {
            *o = weight * probs[m];
        }
        out[label] -= weight;
    }
}

fn check_label(f: &ProbVector, label: usize) -> Result<()> {
    if label < f.len() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "label {label} out of range for {} classes",
            f.len()
        )))
    }
}

fn forward_mixture(confusion: &[Vec<f64>], f: &[f64], noisy_label: usize) -> f64 {
    confusion
        .iter()
        .zip(f)
        .map(|(row, &fi)| row[noisy_label] * fi)
        .sum()
}

/// `-ln f_label`, with `f_label` floored at [`PROB_FLOOR`].
pub fn cce_loss(f: &ProbVector, label: usize) -> Result<f64> {
    LossConfig::Cce.loss(f, label)
}

/// `2 - 2 f_label`, the L1 distance from `f` to the one-hot label vector.
pub fn mae_loss(f: &ProbVector, label: usize) -> Result<f64> {
    LossConfig::Mae.loss(f, label)
}

/// `(1 - f_label^q) / q` for `q` in `(0, 1]`.
pub fn lq_loss(q: f64, f: &ProbVector, label: usize) -> Result<f64> {
    LossConfig::lq(q)?.loss(f, label)
}

/// Truncated Lq: `L_q(k)` when `f_label <= k`, otherwise `L_q(f_label)`.
pub fn truncated_lq_loss(q: f64, k: f64, f: &ProbVector, label: usize) -> Result<f64> {
    LossConfig::truncated_lq(q, k)?.loss(f, label)
}

/// Forward-corrected cross entropy `-ln(sum_i confusion[i][noisy] f_i)`.
pub fn forward_cce_loss(
    confusion: &[Vec<f64>],
    f: &ProbVector,
    noisy_label: usize,
) -> Result<f64> {
    check_row_stochastic(confusion, Some(f.len()))?;
    check_label(f, noisy_label)?;
    Ok(-forward_mixture(confusion, f.as_slice(), noisy_label)
        .max(PROB_FLOOR)
        .ln())
}

/// Gradient of the loss with respect to the probability vector `f`.
pub fn loss_grad_wrt_probs(config: &LossConfig, f: &ProbVector, label: usize) -> Result<Vec<f64>> {
    config.check_inputs(f, label)?;
    let c = f.len();
    let p = f.get(label);
    let mut g = vec![0.0; c];
    match config {
        LossConfig::Cce => g[label] = -1.0 / p.max(PROB_FLOOR),
        LossConfig::Mae => g[label] = -2.0,
        LossConfig::Lq { q } => g[label] = -p.max(PROB_FLOOR).powf(q - 1.0),
        LossConfig::TruncatedLq { q, k } => {
            // Flat side of the kink at p == k.
            if p > *k {
                g[label] = -p.powf(q - 1.0);
            }
        }
        LossConfig::ForwardCce { confusion } => {
            let s = forward_mixture(confusion, f.as_slice(), label).max(PROB_FLOOR);
            for (j, gj) in g.iter_mut().enumerate() {
                *gj = -confusion[j][label] / s;
            }
        }
    }
    Ok(g)
}

/// Gradient of the loss with respect to the logits, `softmax(logits) = f`.
pub fn loss_grad_wrt_logits(config: &LossConfig, logits: &[f64], label: usize) -> Result<Vec<f64>> {
    let f = ProbVector::from_logits(logits)?;
    config.check_inputs(&f, label)?;
    let mut out = vec![0.0; logits.len()];
    config.logit_grad_raw(f.as_slice(), label, &mut out);
    Ok(out)
}

/// Sum of the loss over every possible label, `sum_j L(f, j)`.
pub fn class_sum(config: &LossConfig, f: &ProbVector) -> Result<f64> {
    config.check_inputs(f, 0)?;
    Ok(class_sum_raw(config, f.as_slice()))
}

pub(crate) fn class_sum_raw(config: &LossConfig, f: &[f64]) -> f64 {
    (0..f.len()).map(|j| config.loss_raw(f, j)).sum()
}
