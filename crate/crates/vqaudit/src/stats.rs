//! Audit statistics: per-code descriptor consistency, a random-crop
//! baseline, code usage frequencies, observation-level co-occurrence,
//! projection candidate selection, and ground-truth purity.

use std::collections::BTreeMap;

use crate::embed::Descriptor;
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::regions::CropRecord;
use crate::rng::Rng;

/// Mean cosine similarity between the mean descriptor and each descriptor.
///
/// Zero-flagged descriptors are skipped; at least one real descriptor must
/// remain. A single descriptor trivially scores 1.
pub fn consistency(descriptors: &[Descriptor]) -> Result<f64> {
    let live: Vec<&Descriptor> = descriptors.iter().filter(|d| !d.is_zero).collect();
    let mean = mean_descriptor(&live)?;
    let mean_norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if mean_norm <= 1e-12 {
        // Descriptors cancel exactly; no direction to compare against.
        return Ok(0.0);
    }
    let mut total = 0.0;
    for d in &live {
        let dot: f64 = mean.iter().zip(&d.values).map(|(m, v)| m * v).sum();
        total += dot / mean_norm; // descriptors are unit vectors
    }
    Ok(total / live.len() as f64)
}

/// Arithmetic mean of the given (non-zero-flagged) descriptors.
fn mean_descriptor(live: &[&Descriptor]) -> Result<Vec<f64>> {
    let first = live
        .first()
        .ok_or_else(|| Error::Usage("consistency needs at least one non-zero descriptor".into()))?;
    let dim = first.values.len();
    let mut mean = vec![0.0; dim];
    for d in live {
        if d.values.len() != dim {
            return Err(Error::Config(format!(
                "descriptor length {} does not match {dim}",
                d.values.len()
            )));
        }
        for (m, v) in mean.iter_mut().zip(&d.values) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= live.len() as f64);
    Ok(mean)
}

/// One code's consistency entry.
#[derive(Clone, Debug)]
pub struct CodeConsistency {
    pub code: usize,
    /// Non-zero-flagged descriptors that entered the score.
    pub count: usize,
    /// Arithmetic mean of those descriptors.
    pub mean: Vec<f64>,
    pub score: f64,
    /// True when only one descriptor backed the score.
    pub low_support: bool,
    /// Indices into the audit's crop list.
    pub crop_refs: Vec<usize>,
}

/// Scores one code from `(crop index, descriptor)` pairs.
pub fn code_consistency(code: usize, entries: &[(usize, &Descriptor)]) -> Result<CodeConsistency> {
    let descriptors: Vec<Descriptor> =
        entries.iter().map(|(_, d)| (*d).clone()).filter(|d| !d.is_zero).collect();
    let score = consistency(&descriptors)?;
    let live: Vec<&Descriptor> = descriptors.iter().collect();
    Ok(CodeConsistency {
        code,
        count: descriptors.len(),
        mean: mean_descriptor(&live)?,
        score,
        low_support: descriptors.len() == 1,
        crop_refs: entries.iter().map(|&(i, _)| i).collect(),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct BaselineConfig {
    pub trials: usize,
    /// Crops drawn per trial (the audit passes its median per-code count).
    pub samples_per_trial: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> BaselineConfig {
        BaselineConfig { trials: 10, samples_per_trial: 16, seed: 0 }
    }
}

/// Consistency of randomly positioned crops, averaged over trials.
///
/// Each sample draws an observation frame and a crop size from the supplied
/// empirical pool, then a uniform position at which that size fits (sizes are
/// clamped to the frame first).
pub fn random_baseline(
    frames: &[RgbImage],
    crop_sizes: &[(usize, usize)],
    embed: impl Fn(&RgbImage) -> Result<Descriptor>,
    config: &BaselineConfig,
) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::Usage("random baseline needs a non-empty dataset".into()));
    }
    if crop_sizes.is_empty() {
        return Err(Error::Usage("random baseline needs at least one crop size".into()));
    }
    if config.trials == 0 || config.samples_per_trial == 0 {
        return Err(Error::Config("baseline trials and samples per trial must be positive".into()));
    }
    let mut rng = Rng::seed_from_u64(config.seed);
    let mut total = 0.0;
    for _ in 0..config.trials {
        let mut descriptors = Vec::with_capacity(config.samples_per_trial);
        for _ in 0..config.samples_per_trial {
            let frame = &frames[rng.below(frames.len() as u64) as usize];
            let (sh, sw) = crop_sizes[rng.below(crop_sizes.len() as u64) as usize];
            let h = sh.clamp(1, frame.height);
            let w = sw.clamp(1, frame.width);
            let r0 = rng.below((frame.height - h + 1) as u64) as usize;
            let c0 = rng.below((frame.width - w + 1) as u64) as usize;
            let mut crop = RgbImage::new(w, h);
            for r in 0..h {
                for c in 0..w {
                    crop.set_pixel(r, c, frame.pixel(r0 + r, c0 + c));
                }
            }
            descriptors.push(embed(&crop)?);
        }
        total += consistency(&descriptors)?;
    }
    Ok(total / config.trials as f64)
}

/// How often each code is selected.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeUsage {
    /// Latent positions assigned to each code (selection events).
    pub counts: Vec<u64>,
    /// counts / total selection events (all zero when nothing was assigned).
    pub shares: Vec<f64>,
    /// Observations in which each code appears at least once.
    pub obs_counts: Vec<u64>,
}

/// Counts selection events (and per-observation appearances) per code over
/// assignment grids.
pub fn code_frequency<'a>(
    grids: impl IntoIterator<Item = &'a [usize]>,
    codebook_size: usize,
) -> Result<CodeUsage> {
    let mut counts = vec![0u64; codebook_size];
    let mut obs_counts = vec![0u64; codebook_size];
    for grid in grids {
        let mut seen = vec![false; codebook_size];
        for &code in grid {
            if code >= codebook_size {
                return Err(Error::Config(format!(
                    "assignment {code} out of range; codebook has {codebook_size} entries"
                )));
            }
            counts[code] += 1;
            seen[code] = true;
        }
        for (o, s) in obs_counts.iter_mut().zip(&seen) {
            *o += *s as u64;
        }
    }
    let total: u64 = counts.iter().sum();
    let shares = if total == 0 {
        vec![0.0; codebook_size]
    } else {
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    };
    Ok(CodeUsage { counts, shares, obs_counts })
}

/// Observation-level co-occurrence rates.
#[derive(Clone, Debug, PartialEq)]
pub struct CooccurrenceMatrix {
    pub codebook_size: usize,
    /// K×K row-major rates; symmetric, zero diagonal.
    pub rates: Vec<f64>,
    /// Observations containing each code.
    pub obs_counts: Vec<u64>,
}

impl CooccurrenceMatrix {
    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[i * self.codebook_size + j]
    }
}

/// rate(i, j) = n_ij / ((n_i + n_j)/2), where n_ij counts observations
/// containing both codes and n_i those containing code i; the diagonal is
/// forced to zero, and codes never seen pair at rate zero.
pub fn cooccurrence<'a>(
    code_sets: impl IntoIterator<Item = &'a [usize]>,
    codebook_size: usize,
) -> Result<CooccurrenceMatrix> {
    let k = codebook_size;
    let mut obs_counts = vec![0u64; k];
    let mut pair_counts = vec![0u64; k * k];
    for set in code_sets {
        let mut distinct: Vec<usize> = set.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        for &code in &distinct {
            if code >= k {
                return Err(Error::Config(format!(
                    "code {code} out of range; codebook has {k} entries"
                )));
            }
            obs_counts[code] += 1;
        }
        for (a, &i) in distinct.iter().enumerate() {
            for &j in &distinct[a + 1..] {
                pair_counts[i * k + j] += 1;
            }
        }
    }
    let mut rates = vec![0.0; k * k];
    for i in 0..k {
        for j in i + 1..k {
            let denom = (obs_counts[i] + obs_counts[j]) as f64 / 2.0;
            if denom > 0.0 {
                let rate = pair_counts[i * k + j] as f64 / denom;
                rates[i * k + j] = rate;
                rates[j * k + i] = rate;
            }
        }
    }
    Ok(CooccurrenceMatrix { codebook_size: k, rates, obs_counts })
}

/// The `k` highest off-diagonal rates as (i, j, rate) with i < j, ties broken
/// by index order.
pub fn top_pairs(matrix: &CooccurrenceMatrix, k: usize) -> Vec<(usize, usize, f64)> {
    let n = matrix.codebook_size;
    let mut pairs: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, matrix.rate(i, j)))
        .collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| (a.0, a.1).cmp(&(b.0, b.1))));
    pairs.truncate(k);
    pairs
}

/// Codes with at least `min_count` descriptors, ranked by consistency
/// descending (ties by code id), truncated to `top_k`.
pub fn select_for_projection(
    reports: &[CodeConsistency],
    top_k: usize,
    min_count: usize,
) -> Vec<usize> {
    let mut qualifying: Vec<&CodeConsistency> =
        reports.iter().filter(|r| r.count >= min_count).collect();
    qualifying.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.code.cmp(&b.code)));
    qualifying.into_iter().take(top_k).map(|r| r.code).collect()
}

/// One code's ground-truth label distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct CodePurity {
    pub code: usize,
    pub crop_count: usize,
    /// Modal crop label; ties resolved toward the lowest id.
    pub dominant_label: u8,
    /// Share of crops carrying the dominant label.
    pub purity: f64,
    /// (label, crop count), ascending by label.
    pub histogram: Vec<(u8, usize)>,
    /// Shannon entropy of the label distribution, in bits.
    pub entropy_bits: f64,
}

/// Modal entity id of a crop's ground-truth mask (lowest id on ties).
pub fn crop_label(record: &CropRecord) -> u8 {
    let mut counts = BTreeMap::new();
    for &id in &record.mask.data {
        *counts.entry(id).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(id, _)| id)
        .unwrap_or(0)
}

/// Labels every crop by its modal mask id and aggregates per code.
pub fn purity<'a>(crops: impl IntoIterator<Item = &'a CropRecord>) -> Vec<CodePurity> {
    let mut by_code: BTreeMap<usize, BTreeMap<u8, usize>> = BTreeMap::new();
    for record in crops {
        *by_code.entry(record.code).or_default().entry(crop_label(record)).or_insert(0) += 1;
    }
    by_code
        .into_iter()
        .map(|(code, histogram)| {
            let total: usize = histogram.values().sum();
            let (&dominant_label, &dominant_count) = histogram
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .expect("a code entry implies at least one crop");
            let entropy_bits = histogram
                .values()
                .map(|&n| {
                    let p = n as f64 / total as f64;
                    -p * p.log2()
                })
                .sum();
            CodePurity {
                code,
                crop_count: total,
                dominant_label,
                purity: dominant_count as f64 / total as f64,
                histogram: histogram.into_iter().collect(),
                entropy_bits,
            }
        })
        .collect()
}
