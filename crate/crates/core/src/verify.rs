//! Numeric verification of the loss bounds, risk-gap bounds and gradients.
//!
//! Every check evaluates losses through a [`LossProbe`], so a deliberately
//! broken loss can be substituted to confirm the checks catch it.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::acs::{pruning_step, truncated_objective_value};
use crate::data::NoisyDataset;
use crate::error::{Error, Result};
use crate::experiment::par_map;
use crate::loss::LossConfig;
use crate::model::Classifier;
use crate::noise::{check_diagonal_dominance, NoiseModel};
use crate::rng::{rng_from_seed, sample_simplex, stage_seed, SeededRng};
use crate::theory::{
    d_tilde, lq_class_sum_bounds, noisy_risk_identity_check, tightness_sides,
    trunc_class_sum_bounds, verify_risk_gap, symmetry_check, TabularClassifier, TabularDataset,
    BOUND_SLACK,
};

pub const REPORT_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 20180521;

pub const GRADCHECK_CASES: usize = 100;
pub const GRADCHECK_TOL: f64 = 1e-5;
/// Gradient cases whose label probability lies this close to the truncation
/// threshold are redrawn; the loss has a kink there.
pub const KINK_MARGIN: f64 = 1e-4;
pub const LIMIT_POINTS: usize = 1000;
pub const LIMIT_TOL: f64 = 1e-4;
pub const BOUND_SAMPLES: usize = 100_000;
pub const WITNESS_TOL: f64 = 1e-6;
pub const IDENTITY_INSTANCES: usize = 50;
pub const EXACT_TOL: f64 = 1e-12;
pub const UNIFORM_GAP_INSTANCES: usize = 20;
pub const CLASS_GAP_INSTANCES: usize = 10;
pub const SURROGATE_PAIRS: usize = 100;

pub const BOUND_CLASSES: [usize; 3] = [2, 10, 100];
pub const LQ_BOUND_Q: [f64; 4] = [0.1, 0.5, 0.7, 1.0];
pub const TRUNC_BOUND_Q: [f64; 3] = [0.1, 0.5, 0.7];

/// Loss evaluation used by the checks: `(config, softmax output, label) -> loss`.
pub type LossFn = dyn Fn(&LossConfig, &[f64], usize) -> f64 + Sync;

#[derive(Clone, Copy)]
pub struct LossProbe<'a> {
    eval: &'a LossFn,
}

fn reference_loss(cfg: &LossConfig, f: &[f64], label: usize) -> f64 {
    cfg.loss_raw(f, label)
}

impl Default for LossProbe<'static> {
    fn default() -> Self {
        LossProbe {
            eval: &reference_loss,
        }
    }
}

impl<'a> LossProbe<'a> {
    pub fn new(eval: &'a LossFn) -> Self {
        LossProbe { eval }
    }

    pub fn loss(&self, cfg: &LossConfig, f: &[f64], label: usize) -> f64 {
        (self.eval)(cfg, f, label)
    }

    pub fn class_sum(&self, cfg: &LossConfig, f: &[f64]) -> f64 {
        (0..f.len()).map(|j| self.loss(cfg, f, j)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Check {
    CceLimit,
    LqBounds,
    TruncatedBounds,
    Tightness,
    Symmetry,
    RiskIdentity,
    UniformGap,
    ClassDependentGap,
    Gradcheck,
    Surrogate,
}

impl Check {
    pub const ALL: [Check; 10] = [
        Check::CceLimit,
        Check::LqBounds,
        Check::TruncatedBounds,
        Check::Tightness,
        Check::Symmetry,
        Check::RiskIdentity,
        Check::UniformGap,
        Check::ClassDependentGap,
        Check::Gradcheck,
        Check::Surrogate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::CceLimit => "cce-limit",
            Check::LqBounds => "lq-bounds",
            Check::TruncatedBounds => "truncated-bounds",
            Check::Tightness => "tightness",
            Check::Symmetry => "symmetry",
            Check::RiskIdentity => "risk-identity",
            Check::UniformGap => "uniform-gap",
            Check::ClassDependentGap => "class-dependent-gap",
            Check::Gradcheck => "gradcheck",
            Check::Surrogate => "surrogate",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Check::ALL.iter().map(|c| c.name()).collect();
                Error::config(format!("unknown check {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Result of one check, serialized as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub v: u32,
    pub check: String,
    pub passed: bool,
    pub parameters: Value,
    pub details: Value,
    /// Violated bounds with their witnesses; empty when the check passes.
    pub failures: Vec<String>,
}

impl CheckReport {
    fn new(check: Check, parameters: Value, details: Value, failures: Vec<String>) -> Self {
        CheckReport {
            v: REPORT_VERSION,
            check: check.name().to_string(),
            passed: failures.is_empty(),
            parameters,
            details,
            failures,
        }
    }
}

pub fn run_check(check: Check, seed: u64, probe: LossProbe<'_>) -> Result<CheckReport> {
    match check {
        Check::CceLimit => check_cce_limit(probe),
        Check::LqBounds => check_lq_bounds(seed, probe),
        Check::TruncatedBounds => check_truncated_bounds(seed, probe),
        Check::Tightness => check_tightness(),
        Check::Symmetry => check_symmetry(seed),
        Check::RiskIdentity => check_risk_identity(seed),
        Check::UniformGap => check_uniform_gap(seed),
        Check::ClassDependentGap => check_class_dependent_gap(seed),
        Check::Gradcheck => check_gradients(seed, probe),
        Check::Surrogate => check_surrogate(seed, probe),
    }
}

/// Run `checks` on up to `jobs` threads; reports come back in input order.
pub fn run_suite(checks: &[Check], seed: u64, probe: LossProbe<'_>, jobs: usize) -> Result<Vec<CheckReport>> {
    par_map(jobs, checks, |&c| run_check(c, seed, probe))?
        .into_iter()
        .collect()
}

/// Cap on the failures listed in a report; the total is always given.
const MAX_LISTED: usize = 20;

fn push_failure(failures: &mut Vec<String>, total: &mut usize, msg: impl FnOnce() -> String) {
    *total += 1;
    if failures.len() < MAX_LISTED {
        failures.push(msg());
    }
}

fn finish_failures(mut failures: Vec<String>, total: usize) -> Vec<String> {
    if total > failures.len() {
        failures.push(format!("... {} more", total - failures.len()));
    }
    failures
}

/// `L_q` at `q = 1e-6` against `-ln f` on an even grid over `[0.01, 1]`.
fn check_cce_limit(probe: LossProbe<'_>) -> Result<CheckReport> {
    let q = 1e-6;
    let cfg = LossConfig::lq(q)?;
    let mut worst: f64 = 0.0;
    let mut worst_f = 1.0;
    for i in 0..LIMIT_POINTS {
        let f = 0.01 + 0.99 * i as f64 / (LIMIT_POINTS - 1) as f64;
        let err = (probe.loss(&cfg, &[f, 1.0 - f], 0) + f.ln()).abs();
        if err > worst {
            worst = err;
            worst_f = f;
        }
    }
    let failures = if worst < LIMIT_TOL {
        vec![]
    } else {
        vec![format!("|L_q - (-ln f)| = {worst:e} at f = {worst_f} exceeds {LIMIT_TOL:e}")]
    };
    Ok(CheckReport::new(
        Check::CceLimit,
        json!({"q": q, "points": LIMIT_POINTS, "range": [0.01, 1.0], "tolerance": LIMIT_TOL}),
        json!({"max_abs_error": worst, "witness_f": worst_f}),
        failures,
    ))
}

#[derive(Debug, Clone, Serialize)]
struct CellReport {
    c: usize,
    q: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<f64>,
    lower: f64,
    upper: f64,
    sample_min: f64,
    sample_max: f64,
    witness_lower: Option<f64>,
    witness_upper: f64,
    violated: bool,
}

struct Cell {
    cfg: LossConfig,
    lower: f64,
    upper: f64,
    min: f64,
    max: f64,
}

impl Cell {
    fn new(cfg: LossConfig, lower: f64, upper: f64) -> Self {
        Cell {
            cfg,
            lower,
            upper,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

/// Draw `BOUND_SAMPLES` Dirichlet(1) points and fold each through every cell.
fn sample_cells(c: usize, cells: &mut [Cell], seed: u64, probe: LossProbe<'_>) {
    let mut rng = rng_from_seed(seed);
    for _ in 0..BOUND_SAMPLES {
        let f = sample_simplex(&mut rng, c);
        for cell in cells.iter_mut() {
            let s = probe.class_sum(&cell.cfg, &f);
            cell.min = cell.min.min(s);
            cell.max = cell.max.max(s);
        }
    }
}

fn one_hot(c: usize) -> Vec<f64> {
    let mut v = vec![0.0; c];
    v[0] = 1.0;
    v
}

/// Even split of the mass over the first `d` classes.
fn even_split(c: usize, d: usize) -> Vec<f64> {
    (0..c).map(|j| if j < d { 1.0 / d as f64 } else { 0.0 }).collect()
}

fn check_cell(
    cell: &Cell,
    witness_lower: Option<f64>,
    witness_upper: f64,
    label: &str,
    failures: &mut Vec<String>,
) -> bool {
    let mut violated = false;
    if cell.min < cell.lower - BOUND_SLACK {
        failures.push(format!("{label}: sampled class sum {} below lower bound {}", cell.min, cell.lower));
        violated = true;
    }
    if cell.max > cell.upper + BOUND_SLACK {
        failures.push(format!("{label}: sampled class sum {} above upper bound {}", cell.max, cell.upper));
        violated = true;
    }
    if let Some(w) = witness_lower {
        if (w - cell.lower).abs() > WITNESS_TOL {
            failures.push(format!("{label}: lower-bound witness {w} is not within {WITNESS_TOL:e} of {}", cell.lower));
            violated = true;
        }
    }
    if (witness_upper - cell.upper).abs() > WITNESS_TOL {
        failures.push(format!(
            "{label}: upper-bound witness {witness_upper} is not within {WITNESS_TOL:e} of {}",
            cell.upper
        ));
        violated = true;
    }
    violated
}

/// Lq class sum against its band; the uniform vector witnesses the lower bound
/// and a one-hot vector the upper bound.
fn check_lq_bounds(seed: u64, probe: LossProbe<'_>) -> Result<CheckReport> {
    let mut failures = Vec::new();
    let mut cells_out = Vec::new();
    for (ci, &c) in BOUND_CLASSES.iter().enumerate() {
        let mut cells = LQ_BOUND_Q
            .iter()
            .map(|&q| {
                let (lo, hi) = lq_class_sum_bounds(c, q)?;
                Ok(Cell::new(LossConfig::lq(q)?, lo, hi))
            })
            .collect::<Result<Vec<_>>>()?;
        sample_cells(c, &mut cells, stage_seed(seed, ci as u64, "lq-bounds"), probe);
        for (cell, &q) in cells.iter().zip(&LQ_BOUND_Q) {
            let wl = probe.class_sum(&cell.cfg, &vec![1.0 / c as f64; c]);
            let wu = probe.class_sum(&cell.cfg, &one_hot(c));
            let violated = check_cell(cell, Some(wl), wu, &format!("c={c} q={q}"), &mut failures);
            cells_out.push(CellReport {
                c,
                q,
                k: None,
                lower: cell.lower,
                upper: cell.upper,
                sample_min: cell.min,
                sample_max: cell.max,
                witness_lower: Some(wl),
                witness_upper: wu,
                violated,
            });
        }
    }
    Ok(CheckReport::new(
        Check::LqBounds,
        json!({"c": BOUND_CLASSES, "q": LQ_BOUND_Q, "samples": BOUND_SAMPLES, "slack": BOUND_SLACK, "witness_tolerance": WITNESS_TOL}),
        json!({"cells": cells_out}),
        failures,
    ))
}

/// Truncated class sum against its band for `k in {1/c, 0.3, 0.5}` (values
/// below `1/c` are skipped). The upper bound is witnessed by the uniform
/// vector. The lower bound is a continuous minimum over the split count `d~`;
/// it is witnessed, and asserted, only where `d~ = 1` (a one-hot vector).
/// Elsewhere the best integer split is reported.
fn check_truncated_bounds(seed: u64, probe: LossProbe<'_>) -> Result<CheckReport> {
    let mut failures = Vec::new();
    let mut cells_out = Vec::new();
    let mut skipped = Vec::new();
    for (ci, &c) in BOUND_CLASSES.iter().enumerate() {
        let mut grid = Vec::new();
        for &q in &TRUNC_BOUND_Q {
            for k in [1.0 / c as f64, 0.3, 0.5] {
                if k < 1.0 / c as f64 || grid.iter().any(|&(gq, gk)| gq == q && gk == k) {
                    skipped.push(json!({"c": c, "q": q, "k": k}));
                    continue;
                }
                grid.push((q, k));
            }
        }
        let mut cells = grid
            .iter()
            .map(|&(q, k)| {
                let b = trunc_class_sum_bounds(c, q, k)?;
                Ok(Cell::new(LossConfig::truncated_lq(q, k)?, b.lower, b.upper))
            })
            .collect::<Result<Vec<_>>>()?;
        sample_cells(c, &mut cells, stage_seed(seed, ci as u64, "truncated-bounds"), probe);
        for (cell, &(q, k)) in cells.iter().zip(&grid) {
            let dt = d_tilde(q, k);
            let wu = probe.class_sum(&cell.cfg, &vec![1.0 / c as f64; c]);
            let split_best = {
                let lo = (dt.floor() as usize).clamp(1, c);
                let hi = (dt.ceil() as usize).clamp(1, c);
                probe
                    .class_sum(&cell.cfg, &even_split(c, lo))
                    .min(probe.class_sum(&cell.cfg, &even_split(c, hi)))
            };
            let wl = (dt == 1.0).then_some(split_best);
            let label = format!("c={c} q={q} k={k}");
            let mut violated = check_cell(cell, wl, wu, &label, &mut failures);
            if split_best < cell.lower - BOUND_SLACK {
                failures.push(format!("{label}: integer split {split_best} below lower bound {}", cell.lower));
                violated = true;
            }
            cells_out.push(json!({
                "cell": CellReport {
                    c,
                    q,
                    k: Some(k),
                    lower: cell.lower,
                    upper: cell.upper,
                    sample_min: cell.min,
                    sample_max: cell.max,
                    witness_lower: wl,
                    witness_upper: wu,
                    violated,
                },
                "d_tilde": dt,
                "best_integer_split": split_best,
            }));
        }
    }
    Ok(CheckReport::new(
        Check::TruncatedBounds,
        json!({"c": BOUND_CLASSES, "q": TRUNC_BOUND_Q, "k": ["1/c", 0.3, 0.5], "samples": BOUND_SAMPLES, "slack": BOUND_SLACK, "witness_tolerance": WITNESS_TOL}),
        json!({"cells": cells_out, "skipped_k_below_1_over_c": skipped}),
        failures,
    ))
}

pub fn tightness_q_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

pub fn tightness_k_grid() -> Vec<f64> {
    (2..=9).map(|i| i as f64 * 0.1).collect()
}

/// Tightness condition over `c in 2..=100`, `q in {0.05, ..., 0.95}` for
/// every `k >= 0.3`, and for `k = 0.2` when `c >= 10`. Cells with `k < 1/c`
/// are outside the loss's domain and skipped.
fn check_tightness() -> Result<CheckReport> {
    let mut failures = Vec::new();
    let mut total = 0usize;
    let mut evaluated = 0usize;
    let mut by_q: Vec<(f64, usize)> = Vec::new();
    for &q in &tightness_q_grid() {
        let mut false_here = 0;
        for c in 2..=100usize {
            for &k in &tightness_k_grid() {
                let in_scope = k >= 0.3 - 1e-12 || (k >= 0.2 - 1e-12 && c >= 10);
                if !in_scope || k < 1.0 / c as f64 {
                    continue;
                }
                evaluated += 1;
                let (lhs, rhs) = tightness_sides(c, q, k);
                if !(lhs < rhs) {
                    false_here += 1;
                    push_failure(&mut failures, &mut total, || {
                        format!("c={c} q={q:.2} k={k:.1}: d~[L_q(k) - L_q(1/d~)] = {lhs:.6} >= {rhs:.6}")
                    });
                }
            }
        }
        by_q.push((q, false_here));
    }
    Ok(CheckReport::new(
        Check::Tightness,
        json!({"c": [2, 100], "q": tightness_q_grid(), "k": tightness_k_grid(), "k_0.2_needs_c_at_least": 10}),
        json!({
            "cells": evaluated,
            "false_cells": total,
            "false_cells_by_q": by_q.iter().map(|(q, n)| json!({"q": q, "false": n})).collect::<Vec<_>>(),
        }),
        finish_failures(failures, total),
    ))
}

/// Symmetric losses have a constant class sum, bounded ones stay in their
/// band, and cross entropy escapes any constant band.
fn check_symmetry(seed: u64) -> Result<CheckReport> {
    let c = 10;
    let trials = 10_000;
    let cases = [
        (LossConfig::Mae, false),
        (LossConfig::lq(0.7)?, false),
        (LossConfig::lq(1.0)?, false),
        (LossConfig::truncated_lq(0.7, 0.5)?, false),
        (LossConfig::Cce, true),
    ];
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for (i, (cfg, expect_violation)) in cases.iter().enumerate() {
        let r = symmetry_check(cfg, c, trials, stage_seed(seed, i as u64, "symmetry"))?;
        if r.violated != *expect_violation {
            failures.push(format!(
                "{}: class sum range [{}, {}] against band [{}, {}], expected violated = {expect_violation}",
                cfg.label(),
                r.witness_min,
                r.witness_max,
                r.lower,
                r.upper
            ));
        }
        details.push(json!({"loss": cfg.label(), "report": r, "expect_violation": expect_violation}));
    }
    Ok(CheckReport::new(
        Check::Symmetry,
        json!({"c": c, "trials": trials}),
        json!({"losses": details}),
        failures,
    ))
}

fn random_loss(rng: &mut SeededRng) -> Result<LossConfig> {
    Ok(match rng.random_range(0..4) {
        0 => LossConfig::Cce,
        1 => LossConfig::Mae,
        2 => LossConfig::lq(rng.random_range(0.05..=1.0))?,
        _ => LossConfig::truncated_lq(rng.random_range(0.05..0.95), rng.random_range(0.5..0.9))?,
    })
}

/// Enumerated noisy risk against its affine decomposition in the clean risk
/// and the expected class sum.
fn check_risk_identity(seed: u64) -> Result<CheckReport> {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut rng = rng_from_seed(stage_seed(seed, 0, "risk-identity"));
    for i in 0..IDENTITY_INSTANCES {
        let c = rng.random_range(2..=4usize);
        let n = rng.random_range(2..=if c == 4 { 7 } else { 8 });
        let n_inputs = rng.random_range(1..=n);
        let eta = rng.random_range(0.0..=1.0 - 1.0 / c as f64);
        let cfg = random_loss(&mut rng)?;
        let ds = TabularDataset::random(n_inputs, n, c, rng.random())?;
        let clf = TabularClassifier::random(n_inputs, c, rng.random());
        let residual = noisy_risk_identity_check(&ds, &cfg, eta, &clf)?;
        worst = worst.max(residual);
        if !(residual < EXACT_TOL) {
            failures.push(format!(
                "instance {i} ({}, c={c}, n={n}, eta={eta}): residual {residual:e}",
                cfg.label()
            ));
        }
    }
    Ok(CheckReport::new(
        Check::RiskIdentity,
        json!({"instances": IDENTITY_INSTANCES, "tolerance": EXACT_TOL}),
        json!({"max_residual": worst}),
        failures,
    ))
}

pub const GAP_Q: [f64; 4] = [0.3, 0.5, 0.7, 1.0];
pub const GAP_ETA: [f64; 5] = [0.1, 0.2, 0.4, 0.5, 0.6];
pub const GAP_GRID_STEP: f64 = 0.05;

/// Grid-searched clean and noisy minimisers under uniform noise with `c = 3`.
fn check_uniform_gap(seed: u64) -> Result<CheckReport> {
    let c = 3;
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for i in 0..UNIFORM_GAP_INSTANCES {
        let q = GAP_Q[i % GAP_Q.len()];
        let eta = GAP_ETA[i % GAP_ETA.len()];
        let n_inputs = 2 + i % 5;
        let s = stage_seed(seed, i as u64, "uniform-gap");
        let ds = TabularDataset::random(n_inputs, 2 * n_inputs, c, s)?;
        let report = verify_risk_gap(&ds, &LossConfig::lq(q)?, &NoiseModel::Uniform { eta }, GAP_GRID_STEP)?;
        for v in report.hypothesis_violations.iter().chain(&report.bound_violations) {
            failures.push(format!("instance {i} (q={q}, eta={eta}, inputs={n_inputs}): {v}"));
        }
        details.push(json!({"instance": i, "q": q, "eta": eta, "inputs": n_inputs, "report": report}));
    }
    Ok(CheckReport::new(
        Check::UniformGap,
        json!({"instances": UNIFORM_GAP_INSTANCES, "c": c, "grid_step": GAP_GRID_STEP, "q": GAP_Q, "eta": GAP_ETA}),
        json!({"instances": details}),
        failures,
    ))
}

/// Random diagonally dominant transition: diagonal in `[0.55, 0.95]`, the rest
/// of each row spread over the other classes.
pub fn random_dominant_transition(c: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..c)
        .map(|i| {
            let keep = rng.random_range(0.55..=0.95);
            let rest = sample_simplex(&mut rng, c - 1);
            let mut row = Vec::with_capacity(c);
            let mut it = rest.into_iter();
            for j in 0..c {
                row.push(if j == i { keep } else { (1.0 - keep) * it.next().unwrap() });
            }
            row
        })
        .collect()
}

/// Class-dependent noise on label-consistent data, where a one-hot table has
/// zero clean risk.
fn check_class_dependent_gap(seed: u64) -> Result<CheckReport> {
    let c = 3;
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for i in 0..CLASS_GAP_INSTANCES {
        let q = GAP_Q[i % GAP_Q.len()];
        let n_inputs = 2 + i % 5;
        let ds = TabularDataset::random_consistent(n_inputs, 2 * n_inputs, c, stage_seed(seed, i as u64, "class-dependent-gap-data"))?;
        let t = random_dominant_transition(c, stage_seed(seed, i as u64, "class-dependent-gap-noise"));
        debug_assert!(check_diagonal_dominance(&t).holds);
        let eta = (0..c).map(|j| 1.0 - t[j][j]).sum::<f64>() / c as f64;
        let noise = NoiseModel::ClassDependent { eta, transition: t.clone() };
        let report = verify_risk_gap(&ds, &LossConfig::lq(q)?, &noise, GAP_GRID_STEP)?;
        for v in report.hypothesis_violations.iter().chain(&report.bound_violations) {
            failures.push(format!("instance {i} (q={q}, inputs={n_inputs}): {v}"));
        }
        details.push(json!({"instance": i, "q": q, "inputs": n_inputs, "transition": t, "report": report}));
    }
    Ok(CheckReport::new(
        Check::ClassDependentGap,
        json!({"instances": CLASS_GAP_INSTANCES, "c": c, "grid_step": GAP_GRID_STEP, "diagonal": [0.55, 0.95]}),
        json!({"instances": details}),
        failures,
    ))
}

fn gradcheck_losses(c: usize, rng: &mut SeededRng) -> Result<Vec<LossConfig>> {
    let confusion = random_dominant_transition(c, rng.random());
    Ok(vec![
        LossConfig::Cce,
        LossConfig::Mae,
        LossConfig::lq(0.3)?,
        LossConfig::lq(0.7)?,
        LossConfig::lq(1.0)?,
        LossConfig::truncated_lq(0.7, 0.5)?,
        LossConfig::forward_cce(confusion)?,
    ])
}

/// Backprop against central differences, normwise relative error, on random
/// linear and one-hidden-layer models.
fn check_gradients(seed: u64, probe: LossProbe<'_>) -> Result<CheckReport> {
    let labels = ["cce", "mae", "lq(q=0.3)", "lq(q=0.7)", "lq(q=1)", "truncated_lq(q=0.7,k=0.5)", "forward_cce"];
    let mut worst = vec![0.0f64; labels.len()];
    let mut redrawn = vec![0usize; labels.len()];
    let mut failed = vec![0usize; labels.len()];
    let mut failures = Vec::new();
    for (li, label) in labels.iter().enumerate() {
        let mut rng = rng_from_seed(stage_seed(seed, li as u64, "gradcheck"));
        let mut case = 0;
        while case < GRADCHECK_CASES {
            let d = rng.random_range(1..=5usize);
            let c = rng.random_range(2..=5usize);
            let hidden = if rng.random_bool(0.5) { vec![] } else { vec![rng.random_range(2..=6usize)] };
            let loss = gradcheck_losses(c, &mut rng)?.swap_remove(li);
            let clf = Classifier::new(d, c, &hidden, rng.random())?;
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = rng.random_range(0..c);
            if let LossConfig::TruncatedLq { k, .. } = loss {
                let fy = clf.forward(&x)?.get(y);
                if (fy - k).abs() < KINK_MARGIN {
                    redrawn[li] += 1;
                    continue;
                }
            }
            let (_, analytic) = clf.loss_gradient(&x, y, &loss)?;
            let numeric = clf.numeric_gradient(&x, y, |f, j| probe.loss(&loss, f, j));
            let gc = crate::model::compare_gradients(&analytic, &numeric);
            worst[li] = worst[li].max(gc.max_rel_error);
            if !(gc.max_rel_error < GRADCHECK_TOL) {
                failed[li] += 1;
                // A few witnesses per loss; the per-loss count is in the details.
                if failed[li] <= 3 {
                    failures.push(format!(
                        "{label} case {case} (d={d}, c={c}, hidden={hidden:?}): relative error {:e}",
                        gc.max_rel_error
                    ));
                }
            }
            case += 1;
        }
    }
    Ok(CheckReport::new(
        Check::Gradcheck,
        json!({"losses": labels, "cases": GRADCHECK_CASES, "tolerance": GRADCHECK_TOL, "kink_margin": KINK_MARGIN}),
        json!({
            "max_rel_error": labels.iter().zip(&worst).map(|(l, w)| json!({"loss": l, "max_rel_error": w})).collect::<Vec<_>>(),
            "redrawn_near_kink": labels.iter().zip(&redrawn).map(|(l, r)| json!({"loss": l, "redrawn": r})).collect::<Vec<_>>(),
            "failed_cases": labels.iter().zip(&failed).map(|(l, n)| json!({"loss": l, "failed": n})).collect::<Vec<_>>(),
        }),
        failures,
    ))
}

fn random_noisy_dataset(rng: &mut SeededRng, d: usize, c: usize, n: usize) -> Result<NoisyDataset> {
    let features: Vec<f64> = (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    NoisyDataset::new(features, d, c, labels.clone(), labels, vec![false; n], vec![false; n])
}

/// The masked surrogate at the optimal mask against the direct truncated sum.
fn check_surrogate(seed: u64, probe: LossProbe<'_>) -> Result<CheckReport> {
    let mut rng = rng_from_seed(stage_seed(seed, 0, "surrogate"));
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..SURROGATE_PAIRS {
        let d = rng.random_range(1..=4usize);
        let c = rng.random_range(2..=6usize);
        let n = rng.random_range(1..=60usize);
        let q = rng.random_range(0.05..0.95);
        let k = rng.random_range(1.0 / c as f64..0.95);
        let hidden = if rng.random_bool(0.5) { vec![] } else { vec![4] };
        let clf = Classifier::new(d, c, &hidden, rng.random())?;
        let data = random_noisy_dataset(&mut rng, d, c, n)?;
        let mask = pruning_step(&clf, &data, q, k)?;
        let surrogate = truncated_objective_value(&clf, &data, &mask, q, k)?;
        let cfg = LossConfig::truncated_lq(q, k)?;
        let direct: f64 = (0..n)
            .map(|r| Ok(probe.loss(&cfg, clf.forward(data.row(r))?.as_slice(), data.noisy_labels()[r])))
            .sum::<Result<f64>>()?;
        let residual = (surrogate - direct).abs();
        worst = worst.max(residual);
        if !(residual < EXACT_TOL) {
            failures.push(format!("pair {i} (q={q}, k={k}, n={n}): surrogate {surrogate} vs direct {direct}"));
        }
    }
    Ok(CheckReport::new(
        Check::Surrogate,
        json!({"pairs": SURROGATE_PAIRS, "tolerance": EXACT_TOL}),
        json!({"max_residual": worst}),
        failures,
    ))
}
