//! Seeded sampling primitives shared by training, tuning, and the synthetic
//! generator. Hand-rolled on top of the raw ChaCha stream so the
//! seed-to-sample mapping is fixed for good, independent of `rand` internals.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

/// Unbiased draw from `0..bound` by rejection.
pub(crate) fn uniform_below(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    // 2^64 mod bound; rejecting draws below keeps residue classes even.
    let cutoff = (u64::MAX - bound + 1) % bound;
    loop {
        let r = rng.next_u64();
        if r >= cutoff {
            return r % bound;
        }
    }
}

/// Uniform in `[0, 1)` with 53 random bits.
pub(crate) fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Standard normal via Box-Muller; consumes two uniforms.
pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = unit_uniform(rng);
    let u2 = unit_uniform(rng);
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Two independent standard normals by the polar method; cheaper than two
/// Box-Muller draws in the pixel-synthesis hot loop.
pub(crate) fn standard_normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    loop {
        let a = 2.0 * unit_uniform(rng) - 1.0;
        let b = 2.0 * unit_uniform(rng) - 1.0;
        let s = a * a + b * b;
        if s > 0.0 && s < 1.0 {
            let m = (-2.0 * s.ln() / s).sqrt();
            return (a * m, b * m);
        }
    }
}

/// Draws `k` of `n` indices without replacement, returned ascending.
pub(crate) fn sample_indices(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<u32> {
    debug_assert!(k <= n);
    let mut pool: Vec<u32> = (0..n as u32).collect();
    for i in 0..k {
        let j = i + uniform_below(rng, (n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

/// Derives an independent stream from a parent seed and a label, splitmix
/// style.
pub(crate) fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn uniform_below_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for bound in [1u64, 2, 3, 7, 1000] {
            for _ in 0..200 {
                assert!(uniform_below(&mut rng, bound) < bound);
            }
        }
    }

    #[test]
    fn normal_moments_are_sane() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        let a = derive_seed(7, 1);
        let b = derive_seed(7, 2);
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(7, 1));
    }
}
