//! End-to-end code audit: encode every observation, attribute each selected
//! code with a saliency map, cut the activated regions into crops, embed
//! them, and aggregate the per-code statistics into a [`ReportBundle`].
//!
//! Observations are independent, so the heavy loop fans out over a worker
//! pool. Workers are pure; results are merged in observation order and every
//! emitted list is sorted by `(code, episode, step)`, so the bundle is
//! identical for any worker count.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::CodecModel;
use crate::embed::{embed_crop, embed_with_encoder, Descriptor};
use crate::error::{Error, Result};
use crate::image::{frame_to_tensor, RgbImage};
use crate::regions::{
    connected_components, crop, filter_by_area, threshold_mask, Connectivity, CropRecord,
    DEFAULT_ACT_THRESHOLD, DEFAULT_AREA_THRESHOLD,
};
use crate::saliency::{filter_zero, gradcam_with, Heatmap, SaliencyConfig, Upsample};
use crate::stats::{
    code_consistency, code_frequency, cooccurrence, purity, random_baseline,
    select_for_projection, BaselineConfig, CodeConsistency, CodePurity, CodeUsage,
    CooccurrenceMatrix,
};
use crate::tsne::{tsne, EmbeddingLayout, TsneConfig};
use crate::world::dataset::DatasetReader;

/// Which embedding backs crop descriptors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderBackend {
    /// Color-histogram + gradient-orientation descriptor (model-free).
    #[default]
    Descriptor,
    /// Mean-pooled encoder latent of the resized crop.
    Encoder,
}

/// Every knob of the audit stage; echoed verbatim into `summary.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditConfig {
    /// Seeds the random baseline and the projection init.
    pub seed: u64,
    /// Heatmap activation threshold for region extraction.
    pub act_threshold: f64,
    /// Minimum component area in pixels.
    pub area_threshold: usize,
    pub connectivity: Connectivity,
    pub upsample: Upsample,
    pub embedder: EmbedderBackend,
    pub baseline_trials: usize,
    /// Codes entering the 2-D projection.
    pub tsne_top_k: usize,
    /// Minimum crop count for a code to qualify for the projection.
    pub tsne_min_count: usize,
    /// `None` selects the standard default (30), clamped below n/3.
    pub perplexity: Option<f64>,
    pub tsne_iters: usize,
    /// Cap on projected points; per-code lists are strided down to fit.
    pub tsne_max_points: usize,
    /// Crops kept per code for the report galleries.
    pub gallery_size: usize,
    /// Worker threads; 0 means one per available CPU.
    pub workers: usize,
}

impl Default for AuditConfig {
    fn default() -> AuditConfig {
        AuditConfig {
            seed: 0,
            act_threshold: DEFAULT_ACT_THRESHOLD,
            area_threshold: DEFAULT_AREA_THRESHOLD,
            connectivity: Connectivity::Eight,
            upsample: Upsample::Bilinear,
            embedder: EmbedderBackend::Descriptor,
            baseline_trials: 10,
            tsne_top_k: 10,
            tsne_min_count: 50,
            perplexity: None,
            tsne_iters: 1000,
            tsne_max_points: 2000,
            gallery_size: 8,
            workers: 0,
        }
    }
}

/// One saliency overlay exemplar: the first kept heatmap of a code together
/// with the frame it was computed on.
#[derive(Clone, Debug)]
pub struct OverlaySample {
    pub code: usize,
    pub episode: u64,
    pub step: u64,
    pub frame: RgbImage,
    pub heatmap: Heatmap,
}

/// Everything the report stage needs, fully aggregated.
#[derive(Clone, Debug)]
pub struct ReportBundle {
    pub command: String,
    pub config: AuditConfig,
    pub codebook_size: usize,
    pub observations: usize,
    /// (observation, selected-code) pairs; equals kept + dropped.
    pub selected_pairs: usize,
    pub kept_heatmaps: usize,
    pub dropped_heatmaps: usize,
    /// dropped / selected pairs (0 when nothing was selected).
    pub zero_fraction: f64,
    /// Sorted by (code, episode, step); every descriptor populated.
    pub crops: Vec<CropRecord>,
    /// One entry per code with at least one scoreable crop, ascending code.
    pub consistency: Vec<CodeConsistency>,
    /// Random-crop consistency, mean over trials (0 when no crops exist).
    pub baseline: f64,
    pub usage: CodeUsage,
    pub cooccurrence: CooccurrenceMatrix,
    pub purity: Vec<CodePurity>,
    /// Codes ranked into the projection, best consistency first.
    pub projection_codes: Vec<usize>,
    /// Perplexity actually used (may be clamped below the point count / 3).
    pub projection_perplexity: Option<f64>,
    /// Indices into `crops` for each projected point, aligned with the layout.
    pub projection_refs: Vec<usize>,
    pub projection: Option<EmbeddingLayout>,
    /// code → indices into `crops`, at most `gallery_size` each.
    pub galleries: BTreeMap<usize, Vec<usize>>,
    /// First kept heatmap per code, ascending code.
    pub overlays: Vec<OverlaySample>,
    pub dataset_checksum: String,
    pub model_checksum: String,
}

impl ReportBundle {
    /// Per-code crop index ranges over the sorted crop list.
    pub fn crops_by_code(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.crops.iter().enumerate() {
            map.entry(c.code).or_default().push(i);
        }
        map
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of the dataset: the manifest plus every indexed file, in manifest
/// order, each framed by its path so renames change the digest.
pub fn dataset_checksum(reader: &DatasetReader) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_string(&reader.manifest).expect("manifest serializes"));
    for entry in &reader.manifest.files {
        let path = reader.root().join(&entry.path);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        hasher.update(entry.path.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex(&hasher.finalize()))
}

/// Digest of a model's architecture and parameters (checkpoint-independent,
/// so hand-constructed models hash too).
pub fn model_checksum(model: &CodecModel) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_string(&model.arch).expect("architecture serializes"));
    hasher.update(model.seed.to_le_bytes());
    for group in [&model.encoder, &model.decoder, &model.codebook] {
        for param in group.iter() {
            hasher.update(param.name.as_bytes());
            for &dim in param.value.shape() {
                hasher.update((dim as u64).to_le_bytes());
            }
            for &v in param.value.data() {
                hasher.update(v.to_le_bytes());
            }
        }
    }
    hex(&hasher.finalize())
}

/// Per-observation worker output. Heatmaps are not retained — overlay
/// exemplars are recomputed afterwards for the few (observation, code) pairs
/// that need them.
struct ObsOutcome {
    episode: u64,
    step: u64,
    frame: RgbImage,
    /// Code index per latent cell, row-major.
    assignments: Vec<usize>,
    /// Distinct codes in the grid, ascending.
    code_set: Vec<usize>,
    /// Codes whose heatmap survived the zero filter, ascending.
    kept_codes: Vec<usize>,
    crops: Vec<CropRecord>,
}

fn audit_observation(
    model: &CodecModel,
    reader: &DatasetReader,
    episode: u64,
    step: u64,
    saliency: &SaliencyConfig,
    config: &AuditConfig,
) -> Result<ObsOutcome> {
    let (frame, mask) = reader.load_observation(episode, step)?;
    let tensor = frame_to_tensor(&frame);
    let cache = model.encode_cached(&tensor)?;
    let latent = model.quantize(cache.output())?;

    let mut code_set = latent.assignments.clone();
    code_set.sort_unstable();
    code_set.dedup();

    let mut heatmaps = Vec::with_capacity(code_set.len());
    for &code in &code_set {
        heatmaps.push(gradcam_with(model, &cache, &latent, (episode, step), code, saliency)?);
    }
    let (kept, _, _) = filter_zero(heatmaps, saliency.epsilon);
    let kept_codes: Vec<usize> = kept.iter().map(|h| h.code).collect();

    let mut crops = Vec::new();
    for heatmap in &kept {
        let active = threshold_mask(heatmap, config.act_threshold);
        let components =
            filter_by_area(connected_components(&active, config.connectivity), config.area_threshold);
        for component in &components {
            let mut record = crop(&frame, &mask, component, (episode, step), heatmap.code)?;
            record.descriptor = Some(match config.embedder {
                EmbedderBackend::Descriptor => embed_crop(&record.image)?,
                EmbedderBackend::Encoder => embed_with_encoder(model, &record.image)?,
            });
            crops.push(record);
        }
    }

    Ok(ObsOutcome {
        episode,
        step,
        frame,
        assignments: latent.assignments,
        code_set,
        kept_codes,
        crops,
    })
}

/// Lower median of the per-code crop counts; the baseline draws this many
/// crops per trial so its estimator variance matches the code statistics.
fn median_crop_count(crops: &[CropRecord]) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for c in crops {
        *counts.entry(c.code).or_insert(0) += 1;
    }
    let mut counts: Vec<usize> = counts.into_values().collect();
    counts.sort_unstable();
    if counts.is_empty() {
        1
    } else {
        counts[(counts.len() - 1) / 2]
    }
}

/// Runs the full audit over a dataset directory with a loaded model.
pub fn run_audit(dataset_dir: &Path, model: &CodecModel, config: &AuditConfig) -> Result<ReportBundle> {
    let reader = DatasetReader::open(dataset_dir)?;
    let meta = &reader.manifest.meta;
    if meta.image_width as usize != model.arch.frame_width
        || meta.image_height as usize != model.arch.frame_height
    {
        return Err(Error::Config(format!(
            "model expects {}×{} frames but the dataset provides {}×{}",
            model.arch.frame_width, model.arch.frame_height, meta.image_width, meta.image_height
        )));
    }
    let ids = reader.observation_ids();
    if ids.is_empty() {
        return Err(Error::Usage("dataset contains no observations".into()));
    }
    let dataset_digest = dataset_checksum(&reader)?;

    let mut saliency = SaliencyConfig::default_for_encoder(model.arch.encoder.len());
    saliency.upsample = config.upsample;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Usage(format!("worker pool: {e}")))?;
    let outcomes: Result<Vec<ObsOutcome>> = pool.install(|| {
        ids.par_iter()
            .map(|&(ep, t)| audit_observation(model, &reader, ep, t, &saliency, config))
            .collect()
    });
    let mut outcomes = outcomes?;

    // -- accounting ---------------------------------------------------------
    let selected_pairs: usize = outcomes.iter().map(|o| o.code_set.len()).sum();
    let kept_heatmaps: usize = outcomes.iter().map(|o| o.kept_codes.len()).sum();
    let dropped_heatmaps = selected_pairs - kept_heatmaps;
    let zero_fraction = if selected_pairs > 0 {
        dropped_heatmaps as f64 / selected_pairs as f64
    } else {
        0.0
    };

    // -- crops, sorted for worker-count independence ------------------------
    let mut crops: Vec<CropRecord> = Vec::new();
    for o in &mut outcomes {
        crops.append(&mut o.crops);
    }
    crops.sort_by_key(|c| (c.code, c.episode, c.step));

    // -- counting statistics -------------------------------------------------
    let k = model.codebook_size();
    let usage = code_frequency(outcomes.iter().map(|o| o.assignments.as_slice()), k)?;
    let cooccurrence = cooccurrence(outcomes.iter().map(|o| o.code_set.as_slice()), k)?;
    let purity = purity(crops.iter());

    // -- per-code consistency -------------------------------------------------
    let by_code = {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, c) in crops.iter().enumerate() {
            map.entry(c.code).or_default().push(i);
        }
        map
    };
    let mut consistency = Vec::new();
    for (&code, idxs) in &by_code {
        let entries: Vec<(usize, &Descriptor)> =
            idxs.iter().map(|&i| (i, crops[i].descriptor.as_ref().expect("descriptor set"))).collect();
        if entries.iter().all(|(_, d)| d.is_zero) {
            continue; // nothing scoreable for this code
        }
        consistency.push(code_consistency(code, &entries)?);
    }

    // -- random baseline -------------------------------------------------------
    let frames: Vec<RgbImage> =
        outcomes.iter_mut().map(|o| std::mem::replace(&mut o.frame, RgbImage::new(0, 0))).collect();
    let baseline = if crops.is_empty() {
        0.0
    } else {
        let sizes: Vec<(usize, usize)> =
            crops.iter().map(|c| (c.bbox.height(), c.bbox.width())).collect();
        let baseline_config = BaselineConfig {
            trials: config.baseline_trials,
            samples_per_trial: median_crop_count(&crops),
            seed: config.seed,
        };
        match config.embedder {
            EmbedderBackend::Descriptor => {
                random_baseline(&frames, &sizes, embed_crop, &baseline_config)?
            }
            EmbedderBackend::Encoder => random_baseline(
                &frames,
                &sizes,
                |img| embed_with_encoder(model, img),
                &baseline_config,
            )?,
        }
    };

    // -- projection ---------------------------------------------------------
    let projection_codes = select_for_projection(&consistency, config.tsne_top_k, config.tsne_min_count);
    let mut projection_refs: Vec<usize> = Vec::new();
    if !projection_codes.is_empty() {
        let live: BTreeMap<usize, Vec<usize>> = projection_codes
            .iter()
            .map(|&code| {
                let idxs: Vec<usize> = by_code[&code]
                    .iter()
                    .copied()
                    .filter(|&i| !crops[i].descriptor.as_ref().expect("descriptor set").is_zero)
                    .collect();
                (code, idxs)
            })
            .collect();
        let total: usize = live.values().map(Vec::len).sum();
        let per_code_cap = if total > config.tsne_max_points {
            (config.tsne_max_points / projection_codes.len()).max(1)
        } else {
            usize::MAX
        };
        for &code in &projection_codes {
            let idxs = &live[&code];
            for pick in crate::codec::train::stride_subset(idxs.len(), per_code_cap.min(idxs.len())) {
                projection_refs.push(idxs[pick]);
            }
        }
    }
    let n = projection_refs.len();
    let mut projection = None;
    let mut projection_perplexity = None;
    if n >= 5 {
        // Strictly below n/3, as the projection requires.
        let perplexity = config.perplexity.unwrap_or(30.0).min((n as f64 - 1.0) / 3.0);
        if perplexity >= 1.0 {
            let data: Vec<Vec<f64>> = projection_refs
                .iter()
                .map(|&i| crops[i].descriptor.as_ref().expect("descriptor set").values.clone())
                .collect();
            let labels: Vec<usize> = projection_refs.iter().map(|&i| crops[i].code).collect();
            let tsne_config = TsneConfig {
                perplexity,
                iters: config.tsne_iters,
                seed: config.seed,
                ..TsneConfig::default()
            };
            projection = Some(tsne(&data, &labels, &tsne_config)?);
            projection_perplexity = Some(perplexity);
        }
    }
    if projection.is_none() {
        projection_refs.clear();
    }

    // -- galleries ------------------------------------------------------------
    let galleries: BTreeMap<usize, Vec<usize>> = by_code
        .iter()
        .map(|(&code, idxs)| (code, idxs.iter().copied().take(config.gallery_size).collect()))
        .collect();

    // -- overlay exemplars: first kept heatmap per code ------------------------
    let mut first_kept: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, o) in outcomes.iter().enumerate() {
        for &code in &o.kept_codes {
            first_kept.entry(code).or_insert(i);
        }
    }
    let mut wanted: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&code, &obs) in &first_kept {
        wanted.entry(obs).or_default().push(code);
    }
    let mut overlays = Vec::new();
    for (&obs, codes) in &wanted {
        let o = &outcomes[obs];
        let tensor = frame_to_tensor(&frames[obs]);
        let cache = model.encode_cached(&tensor)?;
        let latent = model.quantize(cache.output())?;
        for &code in codes {
            let heatmap = gradcam_with(model, &cache, &latent, (o.episode, o.step), code, &saliency)?;
            overlays.push(OverlaySample {
                code,
                episode: o.episode,
                step: o.step,
                frame: frames[obs].clone(),
                heatmap,
            });
        }
    }
    overlays.sort_by_key(|s| s.code);

    Ok(ReportBundle {
        command: "audit".into(),
        config: config.clone(),
        codebook_size: k,
        observations: outcomes.len(),
        selected_pairs,
        kept_heatmaps,
        dropped_heatmaps,
        zero_fraction,
        crops,
        consistency,
        baseline,
        usage,
        cooccurrence,
        purity,
        projection_codes,
        projection_perplexity,
        projection_refs,
        projection,
        galleries,
        overlays,
        dataset_checksum: dataset_digest,
        model_checksum: model_checksum(model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::oracle::build_oracle_model;
    use crate::world::dataset::{write_dataset, DatasetMeta};
    use crate::world::{generate_world, isolated_world, rollout, TILE};

    fn temp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("vqaudit-audit-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    /// 7×8-tile worlds rendered at 64×64 (one HUD row on top).
    fn write_worlds(
        tag: &str,
        episodes: u64,
        steps: u64,
        world: impl Fn(u64) -> crate::world::TileGrid,
    ) -> std::path::PathBuf {
        let dir = temp_dir(tag);
        let logs: Vec<_> =
            (0..episodes).map(|ep| rollout(&world(ep), 200 + ep, steps as usize, ep).unwrap()).collect();
        let meta = DatasetMeta {
            seed: 100,
            episodes,
            steps_per_episode: steps,
            image_width: (8 * TILE) as u32,
            image_height: ((7 + 1) * TILE) as u32,
            world_rows: 7,
            world_cols: 8,
        };
        write_dataset(&meta, logs, &dir).unwrap();
        dir
    }

    fn small_dataset(tag: &str, episodes: u64, steps: u64) -> std::path::PathBuf {
        write_worlds(tag, episodes, steps, |ep| {
            generate_world(100 + ep, 7, 8, &crate::world::DEFAULT_WEIGHTS).unwrap()
        })
    }

    /// Checkerboard fixture: every audited region is a single tile (plus the
    /// constant HUD digit strip), so oracle crops are pixel-identical per code.
    fn isolated_dataset(tag: &str, episodes: u64, steps: u64) -> std::path::PathBuf {
        write_worlds(tag, episodes, steps, |ep| isolated_world(7, 8, ep).unwrap())
    }

    fn oracle_config() -> AuditConfig {
        AuditConfig {
            connectivity: Connectivity::Four,
            upsample: Upsample::Nearest,
            tsne_min_count: 3,
            tsne_top_k: 4,
            tsne_iters: 60,
            ..AuditConfig::default()
        }
    }

    #[test]
    fn oracle_audit_on_isolated_worlds_is_exact() {
        let dir = isolated_dataset("oracle-iso", 3, 3);
        let model = build_oracle_model(7, 8).unwrap();
        let bundle = run_audit(&dir, &model, &oracle_config()).unwrap();

        // The reference model's heatmaps light exactly the assigned cells,
        // so no selected code is ever zero-filtered.
        assert_eq!(bundle.dropped_heatmaps, 0);
        assert_eq!(bundle.kept_heatmaps + bundle.dropped_heatmaps, bundle.selected_pairs);
        assert_eq!(bundle.zero_fraction, 0.0);
        assert_eq!(bundle.observations, 12);

        // Every code's crops cover exactly one entity id, and identical
        // single-tile crops score perfect consistency.
        assert!(!bundle.purity.is_empty());
        for p in &bundle.purity {
            assert_eq!(p.purity, 1.0, "code {} impure: {:?}", p.code, p.histogram);
            assert_eq!(p.entropy_bits, 0.0);
            assert_eq!(p.dominant_label as usize, p.code);
        }
        assert!(!bundle.consistency.is_empty());
        for c in &bundle.consistency {
            assert!(c.score >= 0.99, "code {} consistency {}", c.code, c.score);
        }
        assert!(bundle.baseline.is_finite() && bundle.baseline <= 1.0 + 1e-12);
    }

    #[test]
    fn oracle_audit_accounts_for_every_heatmap_on_random_worlds() {
        // Random terrain merges same-code tiles into variable-shaped regions,
        // so consistency is not pinned here — only the accounting is.
        let dir = small_dataset("oracle-rand", 3, 3);
        let model = build_oracle_model(7, 8).unwrap();
        let bundle = run_audit(&dir, &model, &oracle_config()).unwrap();

        assert_eq!(bundle.kept_heatmaps + bundle.dropped_heatmaps, bundle.selected_pairs);
        assert_eq!(bundle.dropped_heatmaps, 0);
        assert!(!bundle.crops.is_empty());
        assert!(!bundle.consistency.is_empty());
        for c in &bundle.consistency {
            assert!(c.score.is_finite() && c.score <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn bundle_rows_reference_crops_in_the_bundle() {
        let dir = small_dataset("refs", 2, 3);
        let model = build_oracle_model(7, 8).unwrap();
        let bundle = run_audit(&dir, &model, &oracle_config()).unwrap();

        let n = bundle.crops.len();
        for c in &bundle.consistency {
            assert!(c.crop_refs.iter().all(|&i| i < n && bundle.crops[i].code == c.code));
        }
        for (&code, idxs) in &bundle.galleries {
            assert!(idxs.len() <= bundle.config.gallery_size);
            assert!(idxs.iter().all(|&i| i < n && bundle.crops[i].code == code));
        }
        assert!(bundle.projection_refs.iter().all(|&i| i < n));
        if let Some(layout) = &bundle.projection {
            assert_eq!(layout.points.len(), bundle.projection_refs.len());
            for (&i, &label) in bundle.projection_refs.iter().zip(&layout.labels) {
                assert_eq!(bundle.crops[i].code, label);
            }
        }
        // Sorted by (code, episode, step).
        let keys: Vec<_> = bundle.crops.iter().map(|c| (c.code, c.episode, c.step)).collect();
        assert!(keys.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_observation_audits_at_most_the_grid_cells() {
        let dir = small_dataset("single", 1, 1);
        let model = build_oracle_model(7, 8).unwrap();
        let config = AuditConfig { tsne_min_count: usize::MAX, ..oracle_config() };
        let bundle = run_audit(&dir, &model, &config).unwrap();
        // ≤ one selected code per latent cell; here both observations of the
        // single step share the same episode.
        assert!(bundle.selected_pairs <= 2 * 8 * 8);
        assert!(bundle.projection.is_none());
        assert!(bundle.projection_refs.is_empty());
    }

    #[test]
    fn worker_count_does_not_change_the_bundle() {
        let dir = small_dataset("workers", 2, 4);
        let model = build_oracle_model(7, 8).unwrap();
        let one = run_audit(&dir, &model, &AuditConfig { workers: 1, ..oracle_config() }).unwrap();
        let four = run_audit(&dir, &model, &AuditConfig { workers: 4, ..oracle_config() }).unwrap();

        assert_eq!(one.usage.counts, four.usage.counts);
        assert_eq!(one.cooccurrence.rates, four.cooccurrence.rates);
        assert_eq!(one.crops.len(), four.crops.len());
        assert_eq!(one.baseline.to_bits(), four.baseline.to_bits());
        let scores = |b: &ReportBundle| -> Vec<(usize, u64)> {
            b.consistency.iter().map(|c| (c.code, c.score.to_bits())).collect()
        };
        assert_eq!(scores(&one), scores(&four));
        let points = |b: &ReportBundle| -> Vec<[u64; 2]> {
            b.projection
                .iter()
                .flat_map(|l| l.points.iter().map(|p| [p[0].to_bits(), p[1].to_bits()]))
                .collect()
        };
        assert_eq!(points(&one), points(&four));
        for (a, b) in one.crops.iter().zip(&four.crops) {
            assert_eq!((a.code, a.episode, a.step, a.bbox), (b.code, b.episode, b.step, b.bbox));
            assert_eq!(a.image.data, b.image.data);
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let dir = temp_dir("empty");
        // A manifest that declares zero episodes (the writer refuses to
        // produce one, so craft it directly).
        let manifest = serde_json::json!({
            "seed": 0, "episodes": 0, "steps_per_episode": 0,
            "image_width": 64, "image_height": 64,
            "world_rows": 7, "world_cols": 8,
            "prng": "splitmix64", "palette_version": "v1", "files": []
        });
        std::fs::write(dir.join("manifest.json"), manifest.to_string()).unwrap();
        let model = build_oracle_model(7, 8).unwrap();
        let err = run_audit(&dir, &model, &AuditConfig::default()).unwrap_err();
        assert!(err.to_string().contains("no observations"), "{err}");
    }

    #[test]
    fn frame_size_mismatch_is_rejected() {
        let dir = small_dataset("mismatch", 1, 1);
        // Model for a 5×8 world expects 48×64 frames; the dataset is 64×64.
        let model = build_oracle_model(5, 8).unwrap();
        let err = run_audit(&dir, &model, &AuditConfig::default()).unwrap_err();
        assert!(err.to_string().contains("64×64"), "{err}");
    }

    #[test]
    fn repeated_runs_are_identical() {
        let dir = small_dataset("repeat", 2, 2);
        let model = build_oracle_model(7, 8).unwrap();
        let a = run_audit(&dir, &model, &oracle_config()).unwrap();
        let b = run_audit(&dir, &model, &oracle_config()).unwrap();
        assert_eq!(a.baseline.to_bits(), b.baseline.to_bits());
        assert_eq!(a.dataset_checksum, b.dataset_checksum);
        assert_eq!(a.model_checksum, b.model_checksum);
        assert_eq!(a.zero_fraction.to_bits(), b.zero_fraction.to_bits());
        let layout = |b: &ReportBundle| b.projection.as_ref().map(|l| l.kl.to_bits());
        assert_eq!(layout(&a), layout(&b));
    }

    #[test]
    fn model_checksum_tracks_parameter_changes() {
        let model = build_oracle_model(7, 8).unwrap();
        let before = model_checksum(&model);
        let mut tweaked = model.clone();
        tweaked.codebook.iter_mut().next().unwrap().value.data_mut()[0] += 1e-9;
        assert_ne!(before, model_checksum(&tweaked));
        assert_eq!(before, model_checksum(&build_oracle_model(7, 8).unwrap()));
    }
}
