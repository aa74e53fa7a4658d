//! Synthetic label corruption: uniform, class-dependent and open-set noise.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NoisyDataset};
use crate::error::{Error, Result};
use crate::loss::{check_row_stochastic, SIMPLEX_TOL};
use crate::rng::rng_from_seed;

/// `c x c` matrix, `t[i][j] = p(noisy = j | clean = i)`.
pub type TransitionMatrix = Vec<Vec<f64>>;

/// Distribution used to draw features for open-set outliers: a Gaussian
/// mixture whose component means are displaced at least `margin` from every
/// in-set class mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierSpec {
    pub margin: f64,
    pub scale: f64,
    pub components: usize,
}

impl Default for OutlierSpec {
    fn default() -> Self {
        OutlierSpec {
            margin: 6.0,
            scale: 1.0,
            components: 3,
        }
    }
}

impl OutlierSpec {
    fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.scale > 0.0 && self.components >= 1) {
            return Err(Error::config(
                "outlier spec needs margin > 0, scale > 0 and at least one component",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    /// Stay correct with probability `1 - eta`, otherwise flip to one of the
    /// other `c - 1` classes uniformly.
    Uniform { eta: f64 },
    /// Arbitrary row-stochastic transition matrix. `eta` is the nominal rate.
    ClassDependent { eta: f64, transition: TransitionMatrix },
    /// A fraction `eta` of rows is replaced by out-of-distribution features
    /// with uniformly random in-set labels.
    OpenSet {
        eta: f64,
        #[serde(default)]
        outlier: OutlierSpec,
    },
}

/// Outcome of checking `t[i][j] < t[i][i]` for all `j != i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub holds: bool,
    /// Offending `(i, j)` cells.
    pub violations: Vec<(usize, usize)>,
}

pub fn check_diagonal_dominance(t: &[Vec<f64>]) -> DominanceReport {
    let mut violations = Vec::new();
    for (i, row) in t.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if j != i && x >= row[i] {
                violations.push((i, j));
            }
        }
    }
    DominanceReport {
        holds: violations.is_empty(),
        violations,
    }
}

impl NoiseModel {
    pub fn eta(&self) -> f64 {
        match self {
            NoiseModel::Uniform { eta }
            | NoiseModel::ClassDependent { eta, .. }
            | NoiseModel::OpenSet { eta, .. } => *eta,
        }
    }

    pub fn validate(&self, c: usize) -> Result<()> {
        if c < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        let eta = self.eta();
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::config(format!("noise rate eta = {eta} must lie in [0, 1)")));
        }
        match self {
            NoiseModel::Uniform { .. } => Ok(()),
            NoiseModel::ClassDependent { transition, .. } => {
                check_row_stochastic(transition, Some(c))
            }
            NoiseModel::OpenSet { outlier, .. } => outlier.validate(),
        }
    }

    /// Whether the model meets the hypothesis of the uniform-noise risk bound
    /// (`eta <= 1 - 1/c`) or the class-dependent one (diagonal dominance).
    /// Open-set noise has no closed-set transition and always reports `false`.
    pub fn satisfies_bound_hypothesis(&self, c: usize) -> bool {
        match self {
            NoiseModel::Uniform { eta } => *eta <= 1.0 - 1.0 / c as f64,
            NoiseModel::ClassDependent { transition, .. } => {
                check_diagonal_dominance(transition).holds
            }
            NoiseModel::OpenSet { .. } => false,
        }
    }

    pub fn transition_matrix(&self, c: usize) -> Result<TransitionMatrix> {
        build_transition_matrix(self, c)
    }
}

/// The closed-set transition matrix implied by `model`.
pub fn build_transition_matrix(model: &NoiseModel, c: usize) -> Result<TransitionMatrix> {
    model.validate(c)?;
    match model {
        NoiseModel::Uniform { eta } => {
            let off = eta / (c - 1) as f64;
            Ok((0..c)
                .map(|i| (0..c).map(|j| if i == j { 1.0 - eta } else { off }).collect())
                .collect())
        }
        NoiseModel::ClassDependent { transition, .. } => Ok(transition.clone()),
        NoiseModel::OpenSet { .. } => Err(Error::Unsupported(
            "open-set noise has no closed-set transition matrix".into(),
        )),
    }
}

/// One class mapping in a pair-flip preset. `symmetric` also maps
/// `target -> source`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipPair {
    pub source: usize,
    pub target: usize,
    #[serde(default)]
    pub symmetric: bool,
}

impl FlipPair {
    pub fn one_way(source: usize, target: usize) -> Self {
        FlipPair {
            source,
            target,
            symmetric: false,
        }
    }

    pub fn both_ways(a: usize, b: usize) -> Self {
        FlipPair {
            source: a,
            target: b,
            symmetric: true,
        }
    }
}

fn identity(c: usize) -> TransitionMatrix {
    (0..c)
        .map(|i| (0..c).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Class-dependent noise that moves mass `eta` from each mapped source to its
/// target. Unmapped classes keep identity rows.
pub fn preset_pair_flip(pairs: &[FlipPair], eta: f64, c: usize) -> Result<NoiseModel> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::config(format!("noise rate eta = {eta} must lie in [0, 1)")));
    }
    let mut t = identity(c);
    let mut seen = vec![false; c];
    let mut set = |s: usize, d: usize| -> Result<()> {
        if s >= c || d >= c {
            return Err(Error::config(format!("pair {s}->{d} out of range for {c} classes")));
        }
        if s == d {
            return Err(Error::config(format!("pair {s}->{d} maps a class to itself")));
        }
        if seen[s] {
            return Err(Error::config(format!("class {s} appears as a source twice")));
        }
        seen[s] = true;
        t[s][s] = 1.0 - eta;
        t[s][d] = eta;
        Ok(())
    };
    for p in pairs {
        set(p.source, p.target)?;
        if p.symmetric {
            set(p.target, p.source)?;
        }
    }
    Ok(NoiseModel::ClassDependent { eta, transition: t })
}

/// Each class flips into the next one, `i -> (i + 1) mod c`, with probability `eta`.
pub fn preset_circular(eta: f64, c: usize) -> Result<NoiseModel> {
    if c < 2 {
        return Err(Error::config("need at least 2 classes"));
    }
    let pairs: Vec<FlipPair> = (0..c).map(|i| FlipPair::one_way(i, (i + 1) % c)).collect();
    preset_pair_flip(&pairs, eta, c)
}

fn sample_row<R: Rng + ?Sized>(rng: &mut R, row: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // u landed in the rounding gap above the last cumulative sum.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Resample every label independently from its transition row.
pub fn inject_noise(ds: &Dataset, model: &NoiseModel, seed: u64) -> Result<NoisyDataset> {
    if let NoiseModel::OpenSet { .. } = model {
        return Err(Error::Unsupported(
            "open-set noise replaces features; use inject_open_set".into(),
        ));
    }
    let c = ds.n_classes();
    let t = build_transition_matrix(model, c)?;
    let mut rng = rng_from_seed(seed);
    let noisy: Vec<usize> = ds.labels().iter().map(|&y| sample_row(&mut rng, &t[y])).collect();
    let corrupted = noisy.iter().zip(ds.labels()).map(|(a, b)| a != b).collect();
    NoisyDataset::new(
        ds.features().to_vec(),
        ds.n_features(),
        c,
        noisy,
        ds.labels().to_vec(),
        corrupted,
        vec![false; ds.len()],
    )
}

/// Replace `ceil(fraction * n)` randomly chosen rows with outlier features and
/// uniformly random in-set labels.
pub fn inject_open_set(
    ds: &Dataset,
    fraction: f64,
    spec: &OutlierSpec,
    seed: u64,
) -> Result<NoisyDataset> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config(format!("open-set fraction {fraction} must lie in [0, 1)")));
    }
    spec.validate()?;
    let n = ds.len();
    let d = ds.n_features();
    let c = ds.n_classes();
    let count = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;

    let means: Vec<Vec<f64>> = ds.class_means().into_iter().flatten().collect();
    let mut center = vec![0.0; d];
    for m in &means {
        for (a, b) in center.iter_mut().zip(m) {
            *a += b / means.len().max(1) as f64;
        }
    }
    let spread = means
        .iter()
        .map(|m| dist(m, &center))
        .fold(0.0, f64::max);

    let mut rng = rng_from_seed(seed);
    // Component means on a sphere of radius spread + margin around the
    // centroid: each is at least `margin` away from every class mean.
    let components: Vec<Vec<f64>> = (0..spec.components)
        .map(|_| {
            let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            for (x, c0) in u.iter_mut().zip(&center) {
                *x = c0 + (spread + spec.margin) * *x / norm;
            }
            u
        })
        .collect();

    let mut features = ds.features().to_vec();
    let mut noisy = ds.labels().to_vec();
    let mut corrupted = vec![false; n];
    let mut open_set = vec![false; n];
    let mut chosen = sample_indices(&mut rng, n, count).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let comp = &components[rng.random_range(0..components.len())];
        let row = &mut features[i * d..(i + 1) * d];
        for (x, m) in row.iter_mut().zip(comp) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = m + spec.scale * z;
        }
        noisy[i] = rng.random_range(0..c);
        corrupted[i] = true;
        open_set[i] = true;
    }
    NoisyDataset::new(features, d, c, noisy, ds.labels().to_vec(), corrupted, open_set)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Row sums of `t` all within [`SIMPLEX_TOL`] of one.
pub fn is_row_stochastic(t: &[Vec<f64>]) -> bool {
    t.iter()
        .all(|row| (row.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL && row.iter().all(|&x| x >= 0.0))
}

/// Empirical `count[i][j]` of (clean = i, noisy = j) pairs.
pub fn transition_counts(ds: &NoisyDataset) -> Vec<Vec<usize>> {
    let c = ds.n_classes();
    let mut counts = vec![vec![0usize; c]; c];
    for (&y, &z) in ds.clean_labels().iter().zip(ds.noisy_labels()) {
        counts[y][z] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use approx::assert_abs_diff_eq;

    fn labels_only(n: usize, c: usize) -> Dataset {
        Dataset::new(vec![0.0; n], 1, (0..n).map(|i| i % c).collect(), c).unwrap()
    }

    #[test]
    fn uniform_matrix_entries() {
        let t = build_transition_matrix(&NoiseModel::Uniform { eta: 0.4 }, 10).unwrap();
        for (i, row) in t.iter().enumerate() {
            for (j, &tij) in row.iter().enumerate() {
                let expect = if i == j { 0.6 } else { 0.4 / 9.0 };
                assert_abs_diff_eq!(tij, expect, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(t[0][1], 0.044444, epsilon = 1e-6);
        assert!(is_row_stochastic(&t));
        assert_eq!(build_transition_matrix(&NoiseModel::Uniform { eta: 0.0 }, 4).unwrap(), identity(4));
    }

    #[test]
    fn circular_preset() {
        let m = preset_circular(0.3, 5).unwrap();
        let t = build_transition_matrix(&m, 5).unwrap();
        for (i, row) in t.iter().enumerate() {
            for (j, &tij) in row.iter().enumerate() {
                let expect = if i == j {
                    0.7
                } else if j == (i + 1) % 5 {
                    0.3
                } else {
                    0.0
                };
                assert_abs_diff_eq!(tij, expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn pair_flip_rows() {
        let m = preset_pair_flip(&[FlipPair::one_way(9, 1)], 0.3, 10).unwrap();
        let t = build_transition_matrix(&m, 10).unwrap();
        for i in 0..10 {
            if i == 9 {
                assert_abs_diff_eq!(t[9][9], 0.7, epsilon = 1e-15);
                assert_eq!(t[9][1], 0.3);
                assert_abs_diff_eq!(t[9].iter().sum::<f64>(), 1.0, epsilon = 1e-15);
            } else {
                assert_eq!(t[i], identity(10)[i]);
            }
        }
        let m = preset_pair_flip(&[FlipPair::both_ways(3, 5)], 0.4, 10).unwrap();
        let t = build_transition_matrix(&m, 10).unwrap();
        assert_eq!(t[3][5], 0.4);
        assert_eq!(t[5][3], 0.4);
        let m = preset_pair_flip(&[FlipPair::one_way(2, 4)], 0.0, 6).unwrap();
        assert_eq!(build_transition_matrix(&m, 6).unwrap(), identity(6));
    }

    #[test]
    fn pair_flip_rejects_duplicate_sources() {
        let err = preset_pair_flip(&[FlipPair::one_way(1, 2), FlipPair::one_way(1, 3)], 0.2, 5);
        assert!(matches!(err, Err(Error::Config(_))));
        let err = preset_pair_flip(&[FlipPair::both_ways(1, 2), FlipPair::one_way(2, 3)], 0.2, 5);
        assert!(matches!(err, Err(Error::Config(_))));
        assert!(preset_pair_flip(&[FlipPair::one_way(1, 7)], 0.2, 5).is_err());
    }

    #[test]
    fn cifar_style_preset_is_diagonally_dominant_below_half() {
        let pairs = [
            FlipPair::one_way(9, 1),
            FlipPair::one_way(2, 0),
            FlipPair::one_way(4, 7),
            FlipPair::both_ways(3, 5),
        ];
        let m = preset_pair_flip(&pairs, 0.4, 10).unwrap();
        assert!(m.satisfies_bound_hypothesis(10));
        let m = preset_pair_flip(&pairs, 0.5, 10).unwrap();
        let NoiseModel::ClassDependent { transition, .. } = &m else { unreachable!() };
        let report = check_diagonal_dominance(transition);
        assert!(!report.holds);
        assert!(report.violations.contains(&(9, 1)));
    }

    #[test]
    fn open_set_has_no_transition() {
        let m = NoiseModel::OpenSet { eta: 0.2, outlier: OutlierSpec::default() };
        assert!(matches!(build_transition_matrix(&m, 3), Err(Error::Unsupported(_))));
        assert!(inject_noise(&labels_only(10, 2), &m, 0).is_err());
    }

    #[test]
    fn zero_noise_changes_nothing() {
        let ds = synth_blobs(200, 2, 3, 5.0, 1).unwrap();
        let noisy = inject_noise(&ds, &NoiseModel::Uniform { eta: 0.0 }, 3).unwrap();
        assert_eq!(noisy.noisy_labels(), ds.labels());
        assert_eq!(noisy.corrupted_count(), 0);
        assert_eq!(noisy.features(), ds.features());
    }

    #[test]
    fn injection_is_deterministic_and_keeps_features() {
        let ds = synth_blobs(500, 3, 4, 5.0, 1).unwrap();
        let m = NoiseModel::Uniform { eta: 0.5 };
        let a = inject_noise(&ds, &m, 42).unwrap();
        let b = inject_noise(&ds, &m, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.features(), ds.features());
        assert_eq!(a.clean_labels(), ds.labels());
        assert_ne!(a, inject_noise(&ds, &m, 43).unwrap());
    }

    #[test]
    fn uniform_corruption_rate_concentrates() {
        let n = 100_000;
        let ds = labels_only(n, 10);
        let noisy = inject_noise(&ds, &NoiseModel::Uniform { eta: 0.4 }, 7).unwrap();
        let frac = noisy.corrupted_count() as f64 / n as f64;
        let sigma = (0.4f64 * 0.6 / n as f64).sqrt();
        assert!((frac - 0.4).abs() < 3.0 * sigma, "fraction {frac}");
        assert!((frac - 0.4).abs() < 0.01);
    }

    #[test]
    fn open_set_flags_exact_count() {
        let ds = synth_blobs(1000, 4, 5, 5.0, 2).unwrap();
        let out = inject_open_set(&ds, 0.4, &OutlierSpec::default(), 9).unwrap();
        let flagged: Vec<usize> = (0..1000).filter(|&i| out.open_set_flags()[i]).collect();
        assert_eq!(flagged.len(), 400);
        for i in 0..1000 {
            if out.open_set_flags()[i] {
                assert_ne!(out.row(i), ds.row(i));
                assert!(out.corrupted()[i]);
            } else {
                assert_eq!(out.row(i), ds.row(i));
                assert_eq!(out.noisy_labels()[i], ds.labels()[i]);
            }
        }
        let none = inject_open_set(&ds, 0.0, &OutlierSpec::default(), 9).unwrap();
        assert_eq!(none, NoisyDataset::from_clean(&ds));
        assert!(inject_open_set(&ds, 1.0, &OutlierSpec::default(), 9).is_err());
    }

    #[test]
    fn open_set_labels_are_uniform() {
        let c = 5;
        let ds = synth_blobs(20_000, 3, c, 5.0, 2).unwrap();
        let out = inject_open_set(&ds, 0.5, &OutlierSpec::default(), 1).unwrap();
        let mut counts = vec![0usize; c];
        for i in 0..ds.len() {
            if out.open_set_flags()[i] {
                counts[out.noisy_labels()[i]] += 1;
            }
        }
        let m: usize = counts.iter().sum();
        let p = 1.0 / c as f64;
        let sd = (m as f64 * p * (1.0 - p)).sqrt();
        for k in counts {
            assert!((k as f64 - m as f64 * p).abs() < 3.0 * sd, "count {k} of {m}");
        }
    }

    #[test]
    fn outliers_sit_away_from_class_means() {
        let ds = synth_blobs(3000, 4, 6, 4.0, 3).unwrap();
        let spec = OutlierSpec { margin: 8.0, scale: 0.5, components: 2 };
        let out = inject_open_set(&ds, 0.3, &spec, 5).unwrap();
        let means: Vec<Vec<f64>> = ds.class_means().into_iter().flatten().collect();
        let mut outlier_mean = [0.0; 4];
        let mut m = 0.0;
        for i in 0..ds.len() {
            if out.open_set_flags()[i] {
                let nearest = means.iter().map(|mu| dist(mu, out.row(i))).fold(f64::INFINITY, f64::min);
                outlier_mean[0] += nearest;
                m += 1.0;
            }
        }
        // Average distance from an outlier to its nearest class mean is about
        // the margin; in-set rows sit about sqrt(d) = 2 away from their mean.
        assert!(outlier_mean[0] / m > 6.0);
    }
}
