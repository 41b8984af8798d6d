//! Deterministic pseudo-random number generation.
//!
//! Everything downstream (world generation, weight init, batch sampling,
//! baseline crops, t-SNE init) must reproduce bit-for-bit across platforms,
//! so the generator is fixed here rather than left to a library default:
//! xoshiro256** seeded through splitmix64. Dataset manifests record the
//! algorithm name so files remain self-describing.
//!
//! Parallel consumers never share a generator. Instead, each logical stream
//! (an episode, a trial) derives its own generator from `(seed, stream id)`
//! via [`Rng::stream`], making output independent of scheduling order.

/// Algorithm identifier written into dataset manifests.
pub const ALGORITHM: &str = "xoshiro256**/splitmix64";

const TWO_POW_NEG53: f64 = 1.0 / (1u64 << 53) as f64;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xoshiro256** generator with splitmix64 seeding and Box-Muller normals.
#[derive(Clone, Debug)]
pub struct Rng {
    s: [u64; 4],
    /// Second Box-Muller variate, held for the next `normal()` call.
    spare_normal: Option<f64>,
}

impl Rng {
    /// Expands a 64-bit seed into full generator state.
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut sm = seed;
        let mut s = [0u64; 4];
        for slot in &mut s {
            *slot = splitmix64(&mut sm);
        }
        // xoshiro state must not be all zero; splitmix64 output for four
        // consecutive states cannot be, but keep the guard explicit.
        if s == [0, 0, 0, 0] {
            s[0] = 1;
        }
        Rng { s, spare_normal: None }
    }

    /// Derives an independent generator for logical stream `stream` under `seed`.
    ///
    /// Mixes both inputs through splitmix64 so nearby (seed, stream) pairs
    /// yield unrelated states. Pure function of its arguments: callers may
    /// create streams in any order, from any thread.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut sm = seed;
        let a = splitmix64(&mut sm);
        let mut sm2 = stream ^ a;
        Rng::seed_from_u64(splitmix64(&mut sm2))
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_NEG53
    }

    /// Uniform integer in [0, n). Rejection-sampled, so exactly unbiased.
    ///
    /// Panics if `n == 0` (a caller bug, not an input error).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) is meaningless");
        // 2^64 mod n, computed in u64 arithmetic; reject the top partial range.
        let m = (u64::MAX % n).wrapping_add(1) % n;
        let threshold = 0u64.wrapping_sub(m);
        loop {
            let x = self.next_u64();
            if m == 0 || x < threshold {
                return x % n;
            }
        }
    }

    /// Standard normal via Box-Muller. Generates pairs; the second variate is
    /// cached so consecutive calls consume uniforms at a fixed, seed-stable rate.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_NEG53;
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Draws an index with probability proportional to `weights[i]`.
    ///
    /// Panics if weights are empty or sum to zero; callers validate first.
    pub fn weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "weighted() needs a positive total weight");
        let mut u = self.next_f64() * total;
        for (i, &w) in weights.iter().enumerate() {
            u -= w;
            if u < 0.0 {
                return i;
            }
        }
        // Rounding can push u marginally past the final cumulative sum; the
        // draw then belongs to the last positively weighted entry.
        weights.iter().rposition(|&w| w > 0.0).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Rng::seed_from_u64(42);
        let mut b = Rng::seed_from_u64(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_seeds_diverge() {
        let mut a = Rng::seed_from_u64(1);
        let mut b = Rng::seed_from_u64(2);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn streams_are_order_independent() {
        // Deriving stream k must not depend on other streams having been drawn.
        let mut direct = Rng::stream(7, 3);
        let _ = Rng::stream(7, 0).next_u64();
        let _ = Rng::stream(7, 1).next_u64();
        let mut after_others = Rng::stream(7, 3);
        for _ in 0..100 {
            assert_eq!(direct.next_u64(), after_others.next_u64());
        }
    }

    #[test]
    fn streams_differ_from_each_other() {
        let mut a = Rng::stream(7, 0);
        let mut b = Rng::stream(7, 1);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn f64_range() {
        let mut rng = Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn below_stays_in_range_and_hits_everything() {
        let mut rng = Rng::seed_from_u64(11);
        let mut seen = [false; 7];
        for _ in 0..10_000 {
            let x = rng.below(7) as usize;
            seen[x] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn below_is_roughly_uniform() {
        let mut rng = Rng::seed_from_u64(12);
        let n = 100_000;
        let k = 10u64;
        let mut counts = vec![0u64; k as usize];
        for _ in 0..n {
            counts[rng.below(k) as usize] += 1;
        }
        // Binomial sd ≈ sqrt(n·p·(1−p)) ≈ 95; allow 5 sigma.
        let expect = n as f64 / k as f64;
        for &c in &counts {
            assert!((c as f64 - expect).abs() < 5.0 * 95.0, "count {c} vs {expect}");
        }
    }

    #[test]
    fn normal_moments() {
        let mut rng = Rng::seed_from_u64(5);
        let n = 200_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.normal();
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        // sd of the sample mean is 1/sqrt(n) ≈ 0.0022; allow 5 sigma.
        assert!(mean.abs() < 0.012, "mean {mean}");
        assert!((var - 1.0).abs() < 0.025, "var {var}");
    }

    #[test]
    fn weighted_degenerate_distribution() {
        let mut rng = Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert_eq!(rng.weighted(&[0.0, 0.0, 3.5, 0.0]), 2);
        }
    }

    #[test]
    fn weighted_matches_proportions() {
        let mut rng = Rng::seed_from_u64(10);
        let weights = [1.0, 3.0];
        let n = 40_000;
        let ones = (0..n).filter(|_| rng.weighted(&weights) == 1).count();
        let p = ones as f64 / n as f64;
        assert!((p - 0.75).abs() < 0.02, "p {p}");
    }
}
