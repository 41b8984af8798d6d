//! Exact t-SNE (no Barnes-Hut): perplexity-calibrated Gaussian affinities in
//! the input space, Student-t affinities in the plane, and plain
//! momentum gradient descent on KL(P‖Q). Sized for the audit's scale of at
//! most a few thousand descriptors.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Smallest probability kept in P and Q; avoids log(0) and division blowups.
const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iters: usize,
    pub learning_rate: f64,
    pub momentum_start: f64,
    pub momentum_final: f64,
    /// Iteration at which momentum switches to its final value.
    pub momentum_switch: usize,
    /// Factor applied to P during the early-exaggeration phase.
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> TsneConfig {
        TsneConfig {
            perplexity: 30.0,
            iters: 1000,
            learning_rate: 200.0,
            momentum_start: 0.5,
            momentum_final: 0.8,
            momentum_switch: 250,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 0,
        }
    }
}

impl TsneConfig {
    fn validate(&self) -> Result<()> {
        if self.perplexity < 1.0 {
            return Err(Error::Config(format!("perplexity {} must be at least 1", self.perplexity)));
        }
        if self.iters == 0 {
            return Err(Error::Config("iteration count must be positive".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        for m in [self.momentum_start, self.momentum_final] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::Config(format!("momentum {m} must be in [0, 1)")));
            }
        }
        if self.exaggeration < 1.0 {
            return Err(Error::Config(format!("exaggeration {} must be at least 1", self.exaggeration)));
        }
        Ok(())
    }
}

/// Symmetric joint affinities over the input points.
#[derive(Clone, Debug)]
pub struct AffinityMatrix {
    pub n: usize,
    /// Row-major n×n; symmetric, zero diagonal, entries sum to 1.
    pub p: Vec<f64>,
}

/// Final 2-D layout.
#[derive(Clone, Debug)]
pub struct EmbeddingLayout {
    pub points: Vec<[f64; 2]>,
    /// Caller-supplied label per point (code ids in the audit).
    pub labels: Vec<usize>,
    /// KL(P‖Q) of the final layout against the unexaggerated P.
    pub kl: f64,
    /// KL at the start of each iteration (unexaggerated P throughout).
    pub kl_history: Vec<f64>,
}

/// Conditional distribution over `row` (squared distances to the other
/// points) at precision `beta` = 1/(2σ²), with its perplexity 2^H.
fn conditional_at(row: &[f64], beta: f64) -> (Vec<f64>, f64) {
    // Shift logits so the largest is 0 before exponentiating.
    let min_d = row.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut probs: Vec<f64> = row.iter().map(|&d| (-beta * (d - min_d)).exp()).collect();
    let total: f64 = probs.iter().sum();
    let mut entropy_bits = 0.0;
    for p in &mut probs {
        *p /= total;
        if *p > 0.0 {
            entropy_bits -= *p * p.log2();
        }
    }
    (probs, entropy_bits.exp2())
}

/// Binary search for the precision whose conditional perplexity hits the
/// target within 0.1%, capped at 100 iterations.
fn calibrate_row(row: &[f64], perplexity: f64) -> Result<(f64, Vec<f64>)> {
    if row.is_empty() {
        return Err(Error::Usage("perplexity calibration needs at least two points".into()));
    }
    if perplexity > row.len() as f64 {
        return Err(Error::Config(format!(
            "perplexity {perplexity} exceeds the {} available neighbors",
            row.len()
        )));
    }
    let tolerance = 1e-3 * perplexity;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0;
    let mut achieved = f64::NAN;
    for _ in 0..100 {
        let (probs, perp_hat) = conditional_at(row, beta);
        achieved = perp_hat;
        if (perp_hat - perplexity).abs() <= tolerance {
            return Ok((beta, probs));
        }
        if perp_hat > perplexity {
            // Distribution too flat: sharpen.
            lo = beta;
            beta = if hi.is_finite() { (lo + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (lo + hi) / 2.0;
        }
    }
    if row.iter().all(|&d| d == 0.0) {
        return Err(Error::Usage(
            "all pairwise distances in a row are zero; deduplicate or jitter the inputs".into(),
        ));
    }
    Err(Error::Numeric(format!(
        "perplexity calibration did not converge after 100 iterations (target {perplexity}, achieved {achieved})"
    )))
}

/// Bandwidth σ for one point's squared-distance row.
pub fn perplexity_calibrate(row: &[f64], perplexity: f64) -> Result<f64> {
    let (beta, _) = calibrate_row(row, perplexity)?;
    Ok((1.0 / (2.0 * beta)).sqrt())
}

/// Symmetrizes row-stochastic conditionals: P = (Pc + Pcᵀ)/(2n), with
/// off-diagonal entries floored at 1e-12 and the matrix renormalized.
pub fn joint_probabilities(conditionals: &[f64], n: usize) -> Result<AffinityMatrix> {
    if conditionals.len() != n * n {
        return Err(Error::Config(format!(
            "conditional matrix holds {} entries, expected {n}×{n}",
            conditionals.len()
        )));
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = (conditionals[i * n + j] + conditionals[j * n + i]) / (2.0 * n as f64);
                p[i * n + j] = v.max(PROB_FLOOR);
            }
        }
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(AffinityMatrix { n, p })
}

/// Squared Euclidean distances between all rows, with exact duplicates
/// jittered apart first (the k-th copy moves by k·1e-9 along coordinate 0).
fn squared_distances(data: &[Vec<f64>]) -> Vec<f64> {
    let n = data.len();
    let mut rows: Vec<Vec<f64>> = data.to_vec();
    let mut seen: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    for row in &mut rows {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        let copies = seen.entry(key).or_insert(0);
        if *copies > 0 {
            row[0] += *copies as f64 * 1e-9;
        }
        *copies += 1;
    }
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d2[i * n + j] = d;
            d2[j * n + i] = d;
        }
    }
    d2
}

/// Full input-space affinity construction: per-row calibration, then
/// symmetrization.
pub fn input_affinities(data: &[Vec<f64>], perplexity: f64) -> Result<AffinityMatrix> {
    let n = data.len();
    let d2 = squared_distances(data);
    let mut conditionals = vec![0.0; n * n];
    let mut row = vec![0.0; n - 1];
    for i in 0..n {
        for j in 0..n - 1 {
            row[j] = d2[i * n + j + (j >= i) as usize];
        }
        let (_, probs) = calibrate_row(&row, perplexity)?;
        for j in 0..n - 1 {
            conditionals[i * n + j + (j >= i) as usize] = probs[j];
        }
    }
    joint_probabilities(&conditionals, n)
}

/// Student-t affinities of the current layout: returns (numerators, Q) with
/// Q floored; both row-major n×n with zero diagonals.
fn low_dim_affinities(points: &[[f64; 2]]) -> (Vec<f64>, Vec<f64>) {
    let n = points.len();
    let mut num = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = points[i][0] - points[j][0];
            let dy = points[i][1] - points[j][1];
            let d2 = dx * dx + dy * dy;
            let v = 1.0 / (1.0 + d2);
            num[i * n + j] = v;
            num[j * n + i] = v;
            total += 2.0 * v;
        }
    }
    let q = num.iter().map(|&v| (v / total).max(PROB_FLOOR)).collect();
    (num, q)
}

/// KL(P‖Q) over off-diagonal entries.
fn kl_divergence(p: &[f64], q: &[f64], n: usize) -> f64 {
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p[i * n + j];
                kl += pij * (pij / q[i * n + j]).ln();
            }
        }
    }
    kl
}

/// t-SNE from a caller-supplied initial layout (the seeded entry point below
/// draws it from N(0, 1e-4²)).
pub fn tsne_from_init(
    data: &[Vec<f64>],
    labels: &[usize],
    config: &TsneConfig,
    init: &[[f64; 2]],
) -> Result<EmbeddingLayout> {
    config.validate()?;
    let n = data.len();
    if n < 5 {
        return Err(Error::Usage(format!("t-SNE needs at least 5 points, got {n}")));
    }
    if config.perplexity >= n as f64 / 3.0 {
        return Err(Error::Config(format!(
            "perplexity {} too large for {n} points; must be below n/3",
            config.perplexity
        )));
    }
    if labels.len() != n || init.len() != n {
        return Err(Error::Config(format!(
            "got {n} points but {} labels and {} initial coordinates",
            labels.len(),
            init.len()
        )));
    }
    let dim = data[0].len();
    if data.iter().any(|r| r.len() != dim) {
        return Err(Error::Config("descriptor rows have mixed lengths".into()));
    }

    let affinity = input_affinities(data, config.perplexity)?;
    let p = &affinity.p;

    let mut points = init.to_vec();
    let mut velocity = vec![[0.0f64; 2]; n];
    let mut kl_history = Vec::with_capacity(config.iters);
    for iter in 0..config.iters {
        let exaggeration = if iter < config.exaggeration_iters { config.exaggeration } else { 1.0 };
        let momentum =
            if iter < config.momentum_switch { config.momentum_start } else { config.momentum_final };
        let (num, q) = low_dim_affinities(&points);
        kl_history.push(kl_divergence(p, &q, n));

        let mut grad = vec![[0.0f64; 2]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let coeff = 4.0 * (exaggeration * p[i * n + j] - q[i * n + j]) * num[i * n + j];
                grad[i][0] += coeff * (points[i][0] - points[j][0]);
                grad[i][1] += coeff * (points[i][1] - points[j][1]);
            }
        }
        let mut center = [0.0f64; 2];
        for i in 0..n {
            for a in 0..2 {
                velocity[i][a] = momentum * velocity[i][a] - config.learning_rate * grad[i][a];
                points[i][a] += velocity[i][a];
                center[a] += points[i][a] / n as f64;
            }
        }
        for point in &mut points {
            point[0] -= center[0];
            point[1] -= center[1];
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("t-SNE layout at iteration {iter}")));
        }
    }
    let (_, q) = low_dim_affinities(&points);
    let kl = kl_divergence(p, &q, n);
    Ok(EmbeddingLayout { points, labels: labels.to_vec(), kl, kl_history })
}

/// Projects descriptors to 2-D; deterministic per seed.
pub fn tsne(data: &[Vec<f64>], labels: &[usize], config: &TsneConfig) -> Result<EmbeddingLayout> {
    let mut rng = Rng::seed_from_u64(config.seed);
    let init: Vec<[f64; 2]> =
        (0..data.len()).map(|_| [1e-4 * rng.normal(), 1e-4 * rng.normal()]).collect();
    tsne_from_init(data, labels, config, &init)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_row_calibrates_to_perplexity_one() {
        let sigma = perplexity_calibrate(&[0.5], 1.0).unwrap();
        assert!(sigma.is_finite() && sigma > 0.0);
    }

    #[test]
    fn equidistant_triple_hits_perplexity_two_exactly() {
        let sigma = perplexity_calibrate(&[0.7, 0.7], 2.0).unwrap();
        let beta = 1.0 / (2.0 * sigma * sigma);
        let (probs, perp) = conditional_at(&[0.7, 0.7], beta);
        assert!((probs[0] - 0.5).abs() < 1e-12);
        assert!((perp - 2.0).abs() < 1e-9);
    }

    #[test]
    fn random_rows_calibrate_within_tolerance() {
        let mut rng = Rng::seed_from_u64(51);
        for _ in 0..50 {
            let row: Vec<f64> = (0..40).map(|_| 0.05 + rng.next_f64()).collect();
            let target = 2.0 + 18.0 * rng.next_f64();
            let sigma = perplexity_calibrate(&row, target).unwrap();
            let beta = 1.0 / (2.0 * sigma * sigma);
            let (_, achieved) = conditional_at(&row, beta);
            assert!(
                (achieved - target).abs() <= 1e-3 * target,
                "target {target}, achieved {achieved}"
            );
        }
    }

    #[test]
    fn identical_points_ask_for_deduplication() {
        let err = perplexity_calibrate(&[0.0, 0.0, 0.0], 1.5).unwrap_err();
        assert!(err.to_string().contains("deduplicate or jitter"), "{err}");
    }

    #[test]
    fn joint_probabilities_are_symmetric_normalized_and_hollow() {
        // Conditionals for three points from a hand-built distance pattern.
        let d2 = [0.0, 1.0, 4.0, 1.0, 0.0, 1.0, 4.0, 1.0, 0.0];
        let mut conditionals = vec![0.0; 9];
        for i in 0..3 {
            let row: Vec<f64> = (0..3).filter(|&j| j != i).map(|j| d2[i * 3 + j]).collect();
            let (beta, probs) = calibrate_row(&row, 2.0).unwrap();
            assert!(beta > 0.0);
            let mut k = 0;
            for j in 0..3 {
                if j != i {
                    conditionals[i * 3 + j] = probs[k];
                    k += 1;
                }
            }
        }
        let affinity = joint_probabilities(&conditionals, 3).unwrap();
        let p = &affinity.p;
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        for i in 0..3 {
            assert_eq!(p[i * 3 + i], 0.0);
            for j in 0..3 {
                assert_eq!(p[i * 3 + j].to_bits(), p[j * 3 + i].to_bits());
                assert!(p[i * 3 + j] >= 0.0);
            }
        }
        // Spot value against the formula before flooring/renormalization.
        let expected = (conditionals[1] + conditionals[3]) / 6.0;
        assert!((p[1] - expected).abs() < 1e-6);
    }

    fn two_cluster_data(per_side: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * per_side {
            let axis = i / per_side;
            let mut v = vec![0.0; 8];
            v[axis] = 1.0;
            for x in &mut v {
                *x += 0.05 * rng.normal();
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            data.push(v);
            labels.push(axis);
        }
        (data, labels)
    }

    fn cluster_stats(layout: &EmbeddingLayout) -> (f64, f64) {
        let mut centroids = [[0.0f64; 2]; 2];
        let mut counts = [0usize; 2];
        for (point, &label) in layout.points.iter().zip(&layout.labels) {
            centroids[label][0] += point[0];
            centroids[label][1] += point[1];
            counts[label] += 1;
        }
        for (c, &n) in centroids.iter_mut().zip(&counts) {
            c[0] /= n as f64;
            c[1] /= n as f64;
        }
        let mut spread = 0.0;
        for (point, &label) in layout.points.iter().zip(&layout.labels) {
            let dx = point[0] - centroids[label][0];
            let dy = point[1] - centroids[label][1];
            spread += (dx * dx + dy * dy).sqrt();
        }
        spread /= layout.points.len() as f64;
        let dx = centroids[0][0] - centroids[1][0];
        let dy = centroids[0][1] - centroids[1][1];
        ((dx * dx + dy * dy).sqrt(), spread)
    }

    #[test]
    fn planted_clusters_separate_in_the_layout() {
        let (data, labels) = two_cluster_data(30, 52);
        let config = TsneConfig {
            perplexity: 10.0,
            iters: 1000,
            learning_rate: 10.0,
            seed: 0,
            ..TsneConfig::default()
        };
        let layout = tsne(&data, &labels, &config).unwrap();
        let (between, within) = cluster_stats(&layout);
        assert!(between > 3.0 * within, "between {between}, within {within}");
        assert!(layout.kl.is_finite() && layout.kl >= 0.0);
    }

    #[test]
    fn duplicated_points_land_together() {
        // A perplexity near 1 concentrates each point's conditional mass on
        // its exact duplicate, so pair attraction beats Student-t repulsion
        // and the copies collapse onto each other.
        let mut rng = Rng::seed_from_u64(53);
        let mut data = Vec::new();
        for _ in 0..20 {
            let v: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
            data.push(v.clone());
            data.push(v);
        }
        let labels: Vec<usize> = (0..40).map(|i| i / 2).collect();
        let config = TsneConfig {
            perplexity: 1.2,
            iters: 1000,
            learning_rate: 10.0,
            seed: 1,
            ..TsneConfig::default()
        };
        let layout = tsne(&data, &labels, &config).unwrap();
        for pair in layout.points.chunks_exact(2) {
            let dx = pair[0][0] - pair[1][0];
            let dy = pair[0][1] - pair[1][1];
            let dist = (dx * dx + dy * dy).sqrt();
            assert!(dist < 1e-3, "duplicate pair {dist} apart");
        }
    }

    #[test]
    fn kl_window_means_descend_after_exaggeration() {
        let (data, labels) = two_cluster_data(25, 54);
        let config = TsneConfig { perplexity: 8.0, iters: 650, seed: 2, ..TsneConfig::default() };
        let layout = tsne(&data, &labels, &config).unwrap();
        let post: Vec<f64> = layout.kl_history[config.exaggeration_iters..].to_vec();
        let windows: Vec<f64> =
            post.chunks(50).filter(|c| c.len() == 50).map(|c| c.iter().sum::<f64>() / 50.0).collect();
        assert!(windows.len() >= 4);
        for pair in windows.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "KL window rose: {} -> {}", pair[0], pair[1]);
        }
        assert!(layout.kl <= *post.first().unwrap() + 1e-9);
    }

    #[test]
    fn fixed_seed_gives_bit_identical_layouts() {
        let (data, labels) = two_cluster_data(10, 55);
        let config = TsneConfig { perplexity: 4.0, iters: 120, seed: 7, ..TsneConfig::default() };
        let a = tsne(&data, &labels, &config).unwrap();
        let b = tsne(&data, &labels, &config).unwrap();
        assert_eq!(a.kl.to_bits(), b.kl.to_bits());
        for (x, y) in a.points.iter().zip(&b.points) {
            assert_eq!(x[0].to_bits(), y[0].to_bits());
            assert_eq!(x[1].to_bits(), y[1].to_bits());
        }
    }

    #[test]
    fn quarter_turn_of_the_init_rotates_the_layout_exactly() {
        // A 90° rotation is exact in floating point, and every update step
        // commutes with it, so the KL trace must match bit for bit.
        let (data, labels) = two_cluster_data(10, 56);
        let config = TsneConfig { perplexity: 4.0, iters: 150, seed: 9, ..TsneConfig::default() };
        let mut rng = Rng::seed_from_u64(config.seed);
        let init: Vec<[f64; 2]> =
            (0..20).map(|_| [1e-4 * rng.normal(), 1e-4 * rng.normal()]).collect();
        let rotated: Vec<[f64; 2]> = init.iter().map(|p| [-p[1], p[0]]).collect();
        let a = tsne_from_init(&data, &labels, &config, &init).unwrap();
        let b = tsne_from_init(&data, &labels, &config, &rotated).unwrap();
        assert_eq!(a.kl.to_bits(), b.kl.to_bits());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_eq!((-p[1]).to_bits(), q[0].to_bits());
            assert_eq!(p[0].to_bits(), q[1].to_bits());
        }
    }

    #[test]
    fn runaway_learning_rate_reports_the_iteration() {
        let (data, labels) = two_cluster_data(10, 57);
        let config = TsneConfig {
            perplexity: 4.0,
            iters: 50,
            learning_rate: f64::MAX,
            exaggeration: 1e12,
            seed: 3,
            ..TsneConfig::default()
        };
        let err = tsne(&data, &labels, &config).unwrap_err();
        assert!(err.to_string().contains("iteration"), "{err}");
    }

    #[test]
    fn preconditions_are_enforced() {
        let data: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 0.0]).collect();
        let labels = vec![0; 4];
        let err = tsne(&data, &labels, &TsneConfig::default()).unwrap_err();
        assert!(err.to_string().contains("at least 5"), "{err}");

        let data: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64, 0.0]).collect();
        let labels = vec![0; 9];
        let config = TsneConfig { perplexity: 3.0, ..TsneConfig::default() };
        let err = tsne(&data, &labels, &config).unwrap_err();
        assert!(err.to_string().contains("below n/3"), "{err}");
    }
}
