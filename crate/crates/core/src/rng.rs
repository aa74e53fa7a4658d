//! Seed derivation and simplex sampling.
//!
//! Every random draw in the crate starts from an explicit `u64` seed. Child
//! seeds are derived by mixing a parent seed with integer or string tags, so a
//! new stage can be added without shifting the streams of existing stages.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn stage names into integer tags.
fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derive a child seed from a parent seed and a sequence of integer tags.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Derive a child seed for `(base, index, stage)`.
pub fn stage_seed(base: u64, index: u64, stage: &str) -> u64 {
    derive_seed(base, &[index, tag_hash(stage)])
}

/// Draw a point from the symmetric Dirichlet(1) distribution (uniform on the
/// probability simplex) by normalising i.i.d. unit exponentials.
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, c: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..c).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stage_and_index() {
        let a = stage_seed(7, 0, "noise");
        let b = stage_seed(7, 0, "init");
        let c = stage_seed(7, 1, "noise");
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, stage_seed(7, 0, "noise"));
    }

    #[test]
    fn simplex_samples_sum_to_one() {
        let mut rng = rng_from_seed(3);
        for c in [2, 3, 10, 100] {
            let p = sample_simplex(&mut rng, c);
            assert_eq!(p.len(), c);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn simplex_marginal_mean_is_uniform() {
        // Dirichlet(1) marginals have mean 1/c and variance (c-1)/(c^2 (c+1)).
        let mut rng = rng_from_seed(11);
        let c = 4;
        let n = 40_000;
        let mut mean = vec![0.0; c];
        for _ in 0..n {
            for (m, x) in mean.iter_mut().zip(sample_simplex(&mut rng, c)) {
                *m += x / n as f64;
            }
        }
        let sd = ((c as f64 - 1.0) / (c as f64 * c as f64 * (c as f64 + 1.0)) / n as f64).sqrt();
        for m in mean {
            assert!((m - 0.25).abs() < 4.0 * sd, "marginal mean {m}");
        }
    }
}
