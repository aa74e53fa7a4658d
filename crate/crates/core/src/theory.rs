//! Bound constants for the Lq family and exact, enumeration-based checks of the
//! noise-robustness results on finite problems.
//!
//! Risks here are exact expectations over a finite sample and the label-noise
//! distribution. Nothing is estimated by sampling except the simplex draws in
//! [`symmetry_check`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::{class_sum_raw, lq_value, LossConfig, ProbVector};
use crate::noise::{build_transition_matrix, check_diagonal_dominance, NoiseModel, TransitionMatrix};
use crate::rng::{rng_from_seed, sample_simplex};
use rand::Rng;

/// Slack applied to every bound comparison.
pub const BOUND_SLACK: f64 = 1e-9;

/// Observed range of a quantity against a claimed band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub lower: f64,
    pub upper: f64,
    pub witness_min: f64,
    pub witness_max: f64,
    pub samples: usize,
    pub violated: bool,
}

impl BoundReport {
    fn new(lower: f64, upper: f64, witness_min: f64, witness_max: f64, samples: usize) -> Self {
        let violated = witness_min < lower - BOUND_SLACK || witness_max > upper + BOUND_SLACK;
        BoundReport {
            lower,
            upper,
            witness_min,
            witness_max,
            samples,
            violated,
        }
    }
}

/// A labelled sample over a finite input space `0..n_inputs`. Several samples
/// may share an input, with equal or different labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TabularDataset {
    n_inputs: usize,
    c: usize,
    samples: Vec<(usize, usize)>,
}

impl TabularDataset {
    pub fn new(n_inputs: usize, c: usize, samples: Vec<(usize, usize)>) -> Result<Self> {
        if c < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        if samples.is_empty() {
            return Err(Error::config("dataset has no samples"));
        }
        for &(x, y) in &samples {
            if x >= n_inputs || y >= c {
                return Err(Error::domain(format!(
                    "sample ({x}, {y}) outside {n_inputs} inputs x {c} classes"
                )));
            }
        }
        Ok(TabularDataset { n_inputs, c, samples })
    }

    /// `n` samples with inputs and labels drawn uniformly.
    pub fn random(n_inputs: usize, n: usize, c: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let samples = (0..n)
            .map(|_| (rng.random_range(0..n_inputs), rng.random_range(0..c)))
            .collect();
        Self::new(n_inputs, c, samples)
    }

    /// `n` samples whose label is a fixed function of the input, so a one-hot
    /// table has zero clean risk under any loss that vanishes at `f_y = 1`.
    pub fn random_consistent(n_inputs: usize, n: usize, c: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let label_of: Vec<usize> = (0..n_inputs).map(|_| rng.random_range(0..c)).collect();
        let samples = (0..n)
            .map(|_| {
                let x = rng.random_range(0..n_inputs);
                (x, label_of[x])
            })
            .collect();
        Self::new(n_inputs, c, samples)
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_classes(&self) -> usize {
        self.c
    }

    pub fn samples(&self) -> &[(usize, usize)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Empirical clean-label frequencies.
    pub fn class_marginals(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.c];
        for &(_, y) in &self.samples {
            m[y] += 1.0 / self.samples.len() as f64;
        }
        m
    }

    /// Per input, the expected number of samples carrying each label after
    /// passing the clean labels through `t` (the identity when `t` is `None`).
    fn label_weights(&self, t: Option<&TransitionMatrix>) -> Vec<Vec<f64>> {
        let mut w = vec![vec![0.0; self.c]; self.n_inputs];
        for &(x, y) in &self.samples {
            match t {
                None => w[x][y] += 1.0,
                Some(t) => {
                    for (j, p) in t[y].iter().enumerate() {
                        w[x][j] += p;
                    }
                }
            }
        }
        w
    }
}

/// Lookup-table classifier: one probability vector per input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TabularClassifier {
    outputs: Vec<ProbVector>,
}

impl TabularClassifier {
    pub fn new(outputs: Vec<ProbVector>) -> Result<Self> {
        let c = outputs.first().map(ProbVector::len).unwrap_or(0);
        if outputs.iter().any(|p| p.len() != c) {
            return Err(Error::shape("table rows have different class counts"));
        }
        Ok(TabularClassifier { outputs })
    }

    /// Each row drawn uniformly from the simplex.
    pub fn random(n_inputs: usize, c: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let outputs = (0..n_inputs)
            .map(|_| ProbVector::new(sample_simplex(&mut rng, c)).expect("simplex sample"))
            .collect();
        TabularClassifier { outputs }
    }

    pub fn outputs(&self) -> &[ProbVector] {
        &self.outputs
    }

    pub fn output(&self, x: usize) -> &ProbVector {
        &self.outputs[x]
    }
}

fn check_pair(ds: &TabularDataset, clf: &TabularClassifier, config: &LossConfig) -> Result<()> {
    if clf.outputs.len() != ds.n_inputs {
        return Err(Error::shape(format!(
            "classifier covers {} inputs, dataset has {}",
            clf.outputs.len(),
            ds.n_inputs
        )));
    }
    if clf.outputs.iter().any(|p| p.len() != ds.c) {
        return Err(Error::shape("classifier and dataset class counts differ"));
    }
    config.validate_params()
}

/// `R(f) = (1/n) sum_i L(f(x_i), y_i)`.
pub fn clean_risk(ds: &TabularDataset, config: &LossConfig, clf: &TabularClassifier) -> Result<f64> {
    check_pair(ds, clf, config)?;
    Ok(ds
        .samples
        .iter()
        .map(|&(x, y)| config.loss_raw(clf.outputs[x].as_slice(), y))
        .sum::<f64>()
        / ds.len() as f64)
}

/// `R^eta(f) = (1/n) sum_i sum_j t[y_i][j] L(f(x_i), j)`, the exact expected
/// risk when each label is resampled independently from its transition row.
pub fn noisy_risk(
    ds: &TabularDataset,
    config: &LossConfig,
    t: &TransitionMatrix,
    clf: &TabularClassifier,
) -> Result<f64> {
    check_pair(ds, clf, config)?;
    crate::loss::check_row_stochastic(t, Some(ds.c))?;
    Ok(ds
        .samples
        .iter()
        .map(|&(x, y)| {
            let f = clf.outputs[x].as_slice();
            t[y].iter().enumerate().map(|(j, p)| p * config.loss_raw(f, j)).sum::<f64>()
        })
        .sum::<f64>()
        / ds.len() as f64)
}

/// Largest number of joint label outcomes [`noisy_risk_enumerated`] will visit.
pub const MAX_ENUMERATED_OUTCOMES: usize = 1 << 22;

/// The same quantity as [`noisy_risk`], computed by walking every joint noisy
/// labelling of the sample and weighting its empirical risk by its probability.
pub fn noisy_risk_enumerated(
    ds: &TabularDataset,
    config: &LossConfig,
    t: &TransitionMatrix,
    clf: &TabularClassifier,
) -> Result<f64> {
    check_pair(ds, clf, config)?;
    crate::loss::check_row_stochastic(t, Some(ds.c))?;
    let n = ds.len();
    let c = ds.c;
    let total = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(c));
    match total {
        Some(m) if m <= MAX_ENUMERATED_OUTCOMES => {}
        _ => {
            return Err(Error::Size(format!(
                "{c}^{n} noisy labellings exceed the enumeration limit"
            )))
        }
    }
    let mut noisy = vec![0usize; n];
    let mut expected = 0.0;
    loop {
        let mut prob = 1.0;
        let mut risk = 0.0;
        for (i, &(x, y)) in ds.samples.iter().enumerate() {
            prob *= t[y][noisy[i]];
            risk += config.loss_raw(clf.outputs[x].as_slice(), noisy[i]);
        }
        if prob > 0.0 {
            expected += prob * risk / n as f64;
        }
        // Odometer increment over {0..c}^n.
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(expected);
            }
            noisy[pos] += 1;
            if noisy[pos] < c {
                break;
            }
            noisy[pos] = 0;
            pos += 1;
        }
    }
}

/// Mean over the sample of `sum_j L(f(x_i), j)`.
pub fn expected_class_sum(
    ds: &TabularDataset,
    config: &LossConfig,
    clf: &TabularClassifier,
) -> Result<f64> {
    check_pair(ds, clf, config)?;
    Ok(ds
        .samples
        .iter()
        .map(|&(x, _)| class_sum_raw(config, clf.outputs[x].as_slice()))
        .sum::<f64>()
        / ds.len() as f64)
}

fn check_c(c: usize) -> Result<()> {
    if c < 2 {
        Err(Error::config(format!("need at least 2 classes, got {c}")))
    } else {
        Ok(())
    }
}

/// Range of `sum_j L_q(f, j)` over the simplex:
/// `((c - c^(1-q)) / q, (c - 1) / q)`.
pub fn lq_class_sum_bounds(c: usize, q: f64) -> Result<(f64, f64)> {
    check_c(c)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::config(format!("q = {q} must lie in (0, 1]")));
    }
    let cf = c as f64;
    Ok(((cf - cf.powf(1.0 - q)) / q, (cf - 1.0) / q))
}

/// Bounds on the class sum of the truncated Lq loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncBounds {
    pub lower: f64,
    pub upper: f64,
    pub d_tilde: f64,
}

fn check_trunc(c: usize, q: f64, k: f64) -> Result<()> {
    check_c(c)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::config(format!("q = {q} must lie in (0, 1)")));
    }
    if !(k >= 1.0 / c as f64 && k < 1.0) {
        return Err(Error::config(format!(
            "k = {k} must lie in [1/c, 1) = [{}, 1)",
            1.0 / c as f64
        )));
    }
    Ok(())
}

/// `d~ = max(1, (1-q)^(1/q) / k)`: the continuous number of classes above the
/// threshold that minimises the truncated class sum.
pub fn d_tilde(q: f64, k: f64) -> f64 {
    ((1.0 - q).powf(1.0 / q) / k).max(1.0)
}

/// Value of the truncated class sum when mass is split evenly over `d` classes
/// above the threshold: `d L_q(1/d) + (c - d) L_q(k)`.
pub fn trunc_split_value(c: usize, q: f64, k: f64, d: f64) -> f64 {
    d * lq_value(q, 1.0 / d) + (c as f64 - d) * lq_value(q, k)
}

/// Range of `sum_j L_trunc(f, j)` over the simplex.
pub fn trunc_class_sum_bounds(c: usize, q: f64, k: f64) -> Result<TruncBounds> {
    check_trunc(c, q, k)?;
    let d = d_tilde(q, k);
    Ok(TruncBounds {
        lower: trunc_split_value(c, q, k, d),
        upper: c as f64 * lq_value(q, k),
        d_tilde: d,
    })
}

/// Whether the truncated band is narrower than the untruncated one:
/// `d [L_q(k) - L_q(1/d)] < (c^(1-q) - 1) / q`.
pub fn tightness_condition(c: usize, q: f64, k: f64) -> bool {
    let (lhs, rhs) = tightness_sides(c, q, k);
    lhs < rhs
}

/// Both sides of [`tightness_condition`].
pub fn tightness_sides(c: usize, q: f64, k: f64) -> (f64, f64) {
    let d = d_tilde(q, k);
    let lhs = d * (lq_value(q, k) - lq_value(q, 1.0 / d));
    let rhs = ((c as f64).powf(1.0 - q) - 1.0) / q;
    (lhs, rhs)
}

/// The band a loss's class sum is compared against: the class-sum bounds for
/// Lq and truncated Lq, and the degenerate band at the uniform prediction for
/// MAE and the unbounded cross-entropy losses.
pub fn class_sum_band(config: &LossConfig, c: usize) -> Result<(f64, f64)> {
    config.validate(c)?;
    match config {
        LossConfig::Lq { q } => lq_class_sum_bounds(c, *q),
        LossConfig::TruncatedLq { q, k } => {
            let b = trunc_class_sum_bounds(c, *q, *k)?;
            Ok((b.lower, b.upper))
        }
        LossConfig::Mae => {
            let v = 2.0 * c as f64 - 2.0;
            Ok((v, v))
        }
        LossConfig::Cce | LossConfig::ForwardCce { .. } => {
            let v = class_sum_raw(config, ProbVector::uniform(c).as_slice());
            Ok((v, v))
        }
    }
}

/// Sample `trials` points uniformly from the simplex and record the range of
/// the class sum against [`class_sum_band`].
pub fn symmetry_check(config: &LossConfig, c: usize, trials: usize, seed: u64) -> Result<BoundReport> {
    if trials == 0 {
        return Err(Error::config("trials must be at least 1"));
    }
    let (lower, upper) = class_sum_band(config, c)?;
    let mut rng = rng_from_seed(seed);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..trials {
        let f = sample_simplex(&mut rng, c);
        let s = class_sum_raw(config, &f);
        lo = lo.min(s);
        hi = hi.max(s);
    }
    Ok(BoundReport::new(lower, upper, lo, hi, trials))
}

fn check_eta(c: usize, eta: f64) -> Result<()> {
    let max = 1.0 - 1.0 / c as f64;
    if !(0.0..=max + 1e-12).contains(&eta) {
        return Err(Error::config(format!(
            "eta = {eta} outside [0, 1 - 1/c] = [0, {max}]"
        )));
    }
    Ok(())
}

/// Constants of the uniform-noise risk bounds:
/// `A = eta (c^(1-q) - 1) / (q (c-1))`, `A' = eta (1 - c^(1-q)) / (q (c - 1 - eta c))`.
pub fn uniform_gap_constants(c: usize, q: f64, eta: f64) -> Result<(f64, f64)> {
    lq_class_sum_bounds(c, q)?;
    check_eta(c, eta)?;
    let cf = c as f64;
    let spread = cf.powf(1.0 - q) - 1.0;
    let a = eta * spread / (q * (cf - 1.0));
    let num = -eta * spread;
    let den = q * (cf - 1.0 - eta * cf);
    let a_prime = if num == 0.0 {
        0.0
    } else if den <= 0.0 {
        f64::NEG_INFINITY
    } else {
        num / den
    };
    Ok((a, a_prime))
}

/// Constant of the class-dependent risk bound:
/// `B = ((c^(1-q) - 1) / q) sum_i marginal_i retention_i`.
pub fn class_dependent_gap_constant(c: usize, q: f64, retention: &[f64], marginals: &[f64]) -> Result<f64> {
    lq_class_sum_bounds(c, q)?;
    if retention.len() != c || marginals.len() != c {
        return Err(Error::config(format!(
            "expected {c} retention and marginal entries, got {} and {}",
            retention.len(),
            marginals.len()
        )));
    }
    if retention.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::config("retention entries must lie in (0, 1]"));
    }
    ProbVector::new(marginals.to_vec()).map_err(|e| Error::config(format!("marginals: {e}")))?;
    let cf = c as f64;
    let weight: f64 = retention.iter().zip(marginals).map(|(r, m)| r * m).sum();
    Ok((cf.powf(1.0 - q) - 1.0) / q * weight)
}

/// `|R^eta(f) - [(1 - eta c/(c-1)) R(f) + eta/(c-1) E(class sum)]|` under
/// uniform noise, with `R^eta` computed by enumerating every noisy labelling.
pub fn noisy_risk_identity_check(
    ds: &TabularDataset,
    config: &LossConfig,
    eta: f64,
    clf: &TabularClassifier,
) -> Result<f64> {
    let c = ds.c;
    let t = build_transition_matrix(&NoiseModel::Uniform { eta }, c)?;
    let noisy = noisy_risk_enumerated(ds, config, &t, clf)?;
    let clean = clean_risk(ds, config, clf)?;
    let sum = expected_class_sum(ds, config, clf)?;
    let cf = c as f64;
    let affine = (1.0 - eta * cf / (cf - 1.0)) * clean + eta / (cf - 1.0) * sum;
    Ok((noisy - affine).abs())
}

/// Largest instance the exhaustive search accepts.
pub const MAX_BRUTE_INPUTS: usize = 8;
pub const MAX_BRUTE_CLASSES: usize = 4;
pub const GRID_STEPS: [f64; 3] = [0.05, 0.1, 0.2];

/// All points of the simplex with coordinates in multiples of `1/m`, in
/// ascending lexicographic order of their coordinates.
pub fn simplex_grid(c: usize, m: usize) -> Vec<Vec<f64>> {
    fn rec(c: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == c {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in 0..=left {
            prefix.push(v);
            rec(c, left - v, prefix, out);
            prefix.pop();
        }
    }
    let mut ints = Vec::new();
    rec(c, m, &mut Vec::with_capacity(c), &mut ints);
    ints.into_iter()
        .map(|v| v.into_iter().map(|a| a as f64 / m as f64).collect())
        .collect()
}

fn grid_divisions(step: f64) -> Result<usize> {
    GRID_STEPS
        .iter()
        .find(|&&s| (s - step).abs() < 1e-12)
        .map(|s| (1.0 / s).round() as usize)
        .ok_or_else(|| Error::config(format!("grid step {step} not one of {GRID_STEPS:?}")))
}

/// The table that minimises the exact clean risk, or the exact noisy risk
/// when `noise` is given, over the grid of step `grid_step`. The risk
/// separates over inputs, so each input is minimised on its own; ties go to
/// the lexicographically smallest grid point.
pub fn brute_force_risk_minimizer(
    ds: &TabularDataset,
    config: &LossConfig,
    noise: Option<&NoiseModel>,
    grid_step: f64,
) -> Result<TabularClassifier> {
    if ds.n_inputs > MAX_BRUTE_INPUTS || ds.c > MAX_BRUTE_CLASSES {
        return Err(Error::Size(format!(
            "{} inputs x {} classes exceeds the {MAX_BRUTE_INPUTS} x {MAX_BRUTE_CLASSES} search limit",
            ds.n_inputs, ds.c
        )));
    }
    config.validate(ds.c)?;
    let m = grid_divisions(grid_step)?;
    let t = noise.map(|n| build_transition_matrix(n, ds.c)).transpose()?;
    let weights = ds.label_weights(t.as_ref());
    let grid = simplex_grid(ds.c, m);
    let per_point: Vec<Vec<f64>> = grid
        .iter()
        .map(|f| (0..ds.c).map(|j| config.loss_raw(f, j)).collect())
        .collect();
    let outputs = weights
        .iter()
        .map(|w| {
            let mut best = 0;
            let mut best_val = f64::INFINITY;
            for (g, losses) in per_point.iter().enumerate() {
                let v: f64 = w.iter().zip(losses).map(|(a, b)| a * b).sum();
                if v < best_val {
                    best_val = v;
                    best = g;
                }
            }
            ProbVector::new(grid[best].clone())
        })
        .collect::<Result<Vec<_>>>()?;
    TabularClassifier::new(outputs)
}

/// Continuous minimum over the simplex of `sum_j w_j L_q(f_j)`, attained at
/// `f_j ∝ w_j^(1/(1-q))` for `q < 1` and at the heaviest label for `q = 1`.
fn lq_weighted_min(q: f64, w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        let max = w.iter().copied().fold(0.0, f64::max);
        return (total - max) / q;
    }
    let e = 1.0 / (1.0 - q);
    let z: f64 = w.iter().map(|&a| a.powf(e)).sum();
    w.iter().map(|&a| a * lq_value(q, a.powf(e) / z)).sum()
}

/// Exact minimum of the (noisy, if `t` is given) Lq risk over all tables.
pub fn continuous_min_risk(ds: &TabularDataset, q: f64, t: Option<&TransitionMatrix>) -> f64 {
    ds.label_weights(t)
        .iter()
        .map(|w| lq_weighted_min(q, w))
        .sum::<f64>()
        / ds.len() as f64
}

/// Outcome of comparing grid-searched clean and noisy risk minimisers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskGapReport {
    pub risk_clean_fstar: f64,
    pub risk_clean_fhat: f64,
    pub risk_noisy_fstar: f64,
    pub risk_noisy_fhat: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "A_prime")]
    pub a_prime: f64,
    #[serde(rename = "B")]
    pub b: Option<f64>,
    /// How far the grid minima sit above the continuous minima, for the clean
    /// and noisy risks; added to the upper bounds.
    pub grid_slack: f64,
    pub hypothesis_violations: Vec<String>,
    pub bound_violations: Vec<String>,
    pub passed: bool,
}

impl RiskGapReport {
    pub fn clean_gap(&self) -> f64 {
        self.risk_clean_fstar - self.risk_clean_fhat
    }

    pub fn noisy_gap(&self) -> f64 {
        self.risk_noisy_fstar - self.risk_noisy_fhat
    }
}

/// Find `f*` (clean) and `f^` (noisy) by grid search and check the gap bounds.
///
/// Uniform noise checks `0 <= R^eta(f*) - R^eta(f^) <= A` and
/// `A' <= R(f*) - R(f^) <= 0`. Class-dependent noise checks
/// `0 <= R^eta(f*) - R^eta(f^) <= B` and reports whether the diagonal-dominance
/// and zero-clean-risk hypotheses hold. Upper bounds and `A'` carry
/// [`BOUND_SLACK`] plus the grid slack.
pub fn verify_risk_gap(
    ds: &TabularDataset,
    config: &LossConfig,
    noise: &NoiseModel,
    grid_step: f64,
) -> Result<RiskGapReport> {
    let q = match config {
        LossConfig::Lq { q } => *q,
        other => {
            return Err(Error::Unsupported(format!(
                "risk-gap bounds are stated for Lq, got {}",
                other.label()
            )))
        }
    };
    let c = ds.c;
    let t = build_transition_matrix(noise, c)?;
    let f_star = brute_force_risk_minimizer(ds, config, None, grid_step)?;
    let f_hat = brute_force_risk_minimizer(ds, config, Some(noise), grid_step)?;
    let risk_clean_fstar = clean_risk(ds, config, &f_star)?;
    let risk_clean_fhat = clean_risk(ds, config, &f_hat)?;
    let risk_noisy_fstar = noisy_risk(ds, config, &t, &f_star)?;
    let risk_noisy_fhat = noisy_risk(ds, config, &t, &f_hat)?;
    let grid_slack = (risk_clean_fstar - continuous_min_risk(ds, q, None))
        .max(risk_noisy_fhat - continuous_min_risk(ds, q, Some(&t)))
        .max(0.0);

    let mut hypothesis_violations = Vec::new();
    let mut bound_violations = Vec::new();
    let noisy_gap = risk_noisy_fstar - risk_noisy_fhat;
    let clean_gap = risk_clean_fstar - risk_clean_fhat;
    let tol = BOUND_SLACK + grid_slack;
    if noisy_gap < -BOUND_SLACK {
        bound_violations.push(format!("noisy-risk gap {noisy_gap} < 0"));
    }

    let (a, a_prime, b) = match noise {
        NoiseModel::Uniform { eta } => {
            if *eta > 1.0 - 1.0 / c as f64 {
                hypothesis_violations.push(format!("eta = {eta} > 1 - 1/c"));
                (f64::NAN, f64::NAN, None)
            } else {
                let (a, a_prime) = uniform_gap_constants(c, q, *eta)?;
                if noisy_gap > a + tol {
                    bound_violations.push(format!("noisy-risk gap {noisy_gap} > A = {a}"));
                }
                if clean_gap > BOUND_SLACK {
                    bound_violations.push(format!("clean-risk gap {clean_gap} > 0"));
                }
                if clean_gap < a_prime - tol {
                    bound_violations.push(format!("clean-risk gap {clean_gap} < A' = {a_prime}"));
                }
                (a, a_prime, None)
            }
        }
        NoiseModel::ClassDependent { transition, .. } => {
            let dom = check_diagonal_dominance(transition);
            if !dom.holds {
                hypothesis_violations.push(format!(
                    "transition is not diagonally dominant at {:?}",
                    dom.violations
                ));
            }
            if risk_clean_fstar > BOUND_SLACK {
                hypothesis_violations.push(format!(
                    "minimum clean risk {risk_clean_fstar} is not zero on the grid"
                ));
            }
            let retention: Vec<f64> = (0..c).map(|i| transition[i][i]).collect();
            let b = if retention.iter().all(|&r| r > 0.0) {
                let b = class_dependent_gap_constant(c, q, &retention, &ds.class_marginals())?;
                if noisy_gap > b + tol {
                    bound_violations.push(format!("noisy-risk gap {noisy_gap} > B = {b}"));
                }
                Some(b)
            } else {
                hypothesis_violations.push("a class is never kept clean".into());
                None
            };
            (f64::NAN, f64::NAN, b)
        }
        NoiseModel::OpenSet { .. } => {
            return Err(Error::Unsupported("open-set noise has no risk-gap bound".into()))
        }
    };
    let passed = hypothesis_violations.is_empty() && bound_violations.is_empty();
    Ok(RiskGapReport {
        risk_clean_fstar,
        risk_clean_fhat,
        risk_noisy_fstar,
        risk_noisy_fhat,
        a,
        a_prime,
        b,
        grid_slack,
        hypothesis_violations,
        bound_violations,
        passed,
    })
}
