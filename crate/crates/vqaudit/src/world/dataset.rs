//! Dataset directory layout and round trips.
//!
//! ```text
//! out/
//!   manifest.json        seed, config, PRNG + palette versions, file index
//!   frames/ep{E}_t{T}.png   8-bit RGB observation frames
//!   masks/ep{E}_t{T}.png    8-bit palette-indexed masks (index = entity id)
//!   transitions.jsonl    one record per step
//! ```
//!
//! Masks carry the full world state (entities, agent cell, HUD digits), so
//! the round trip reconstructs episodes losslessly: HUD counters are read
//! back from the digit ids and the agent cell from its mask region.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::train::stride_subset;
use crate::error::{Error, Result};
use crate::image::{self, IdMask, RgbImage};
use crate::rng;
use crate::tensor::Tensor;

use super::sprites::mask_palette;
use super::{tile, EpisodeLog, Observation, Step, HUD_SLOTS, PALETTE_VERSION, TILE};

/// Generation parameters recorded alongside the file index.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct DatasetMeta {
    pub seed: u64,
    pub episodes: u64,
    pub steps_per_episode: u64,
    pub image_width: u32,
    pub image_height: u32,
    pub world_rows: u32,
    pub world_cols: u32,
}

/// One indexed file: path relative to the dataset root plus its byte length.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
}

/// `manifest.json`: every generated byte is either listed here or is this
/// manifest itself.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct DatasetManifest {
    #[serde(flatten)]
    pub meta: DatasetMeta,
    /// PRNG algorithm identity; datasets are only comparable across builds
    /// because this is pinned.
    pub prng: String,
    pub palette_version: String,
    pub files: Vec<FileEntry>,
}

/// One line of `transitions.jsonl`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub episode: u64,
    pub step: u64,
    pub action: u8,
    pub frame: String,
    pub next_frame: String,
    pub mask: String,
    pub next_mask: String,
}

fn frame_name(ep: u64, t: u64) -> String {
    format!("frames/ep{ep}_t{t}.png")
}

fn mask_name(ep: u64, t: u64) -> String {
    format!("masks/ep{ep}_t{t}.png")
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

/// Writes episodes to `out_dir` and returns the manifest (also written there).
///
/// Episodes stream through one at a time, so generation can pipe directly in
/// without holding the whole dataset in memory. All episodes must have the
/// length declared in `meta`; the observation at step t+1 is written once.
pub fn write_dataset<I>(meta: &DatasetMeta, episodes: I, out_dir: &Path) -> Result<DatasetManifest>
where
    I: IntoIterator<Item = EpisodeLog>,
{
    fs::create_dir_all(out_dir.join("frames")).map_err(|e| Error::io(out_dir.join("frames"), e))?;
    fs::create_dir_all(out_dir.join("masks")).map_err(|e| Error::io(out_dir.join("masks"), e))?;
    let palette = mask_palette();

    let transitions_path = out_dir.join("transitions.jsonl");
    let mut transitions = std::io::BufWriter::new(
        fs::File::create(&transitions_path).map_err(|e| Error::io(&transitions_path, e))?,
    );

    let mut files: Vec<FileEntry> = Vec::new();
    let mut episode_count = 0u64;

    let write_obs = |files: &mut Vec<FileEntry>, ep: u64, t: u64, obs: &Observation| -> Result<()> {
        let fname = frame_name(ep, t);
        let mname = mask_name(ep, t);
        let fpath = out_dir.join(&fname);
        let mpath = out_dir.join(&mname);
        image::write_rgb_png(&fpath, &obs.frame)?;
        image::write_indexed_png(&mpath, &obs.mask, &palette)?;
        files.push(FileEntry { path: fname, bytes: file_len(&fpath)? });
        files.push(FileEntry { path: mname, bytes: file_len(&mpath)? });
        Ok(())
    };

    for log in episodes {
        if log.steps.len() as u64 != meta.steps_per_episode {
            return Err(Error::Config(format!(
                "episode {} has {} steps, manifest declares {}",
                log.episode,
                log.steps.len(),
                meta.steps_per_episode
            )));
        }
        let ep = log.episode;
        write_obs(&mut files, ep, 0, &log.steps[0].obs)?;
        for (t, step) in log.steps.iter().enumerate() {
            let t = t as u64;
            debug_assert!(
                t + 1 >= log.steps.len() as u64 || step.next == log.steps[t as usize + 1].obs,
                "episode {ep} does not chain at step {t}"
            );
            write_obs(&mut files, ep, t + 1, &step.next)?;
            let record = TransitionRecord {
                episode: ep,
                step: t,
                action: step.action,
                frame: frame_name(ep, t),
                next_frame: frame_name(ep, t + 1),
                mask: mask_name(ep, t),
                next_mask: mask_name(ep, t + 1),
            };
            let line = serde_json::to_string(&record)
                .map_err(|e| Error::Format(format!("transition record: {e}")))?;
            transitions
                .write_all(line.as_bytes())
                .and_then(|_| transitions.write_all(b"\n"))
                .map_err(|e| Error::io(&transitions_path, e))?;
        }
        episode_count += 1;
    }
    transitions.flush().map_err(|e| Error::io(&transitions_path, e))?;

    if episode_count == 0 {
        return Err(Error::Config("cannot write a dataset with no episodes".into()));
    }
    if episode_count != meta.episodes {
        return Err(Error::Config(format!(
            "wrote {episode_count} episodes, manifest declares {}",
            meta.episodes
        )));
    }

    files.push(FileEntry {
        path: "transitions.jsonl".into(),
        bytes: file_len(&transitions_path)?,
    });

    let manifest = DatasetManifest {
        meta: meta.clone(),
        prng: rng::ALGORITHM.into(),
        palette_version: PALETTE_VERSION.into(),
        files,
    };
    let manifest_path = out_dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest: {e}")))?;
    fs::write(&manifest_path, body).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

fn file_len(path: &Path) -> Result<u64> {
    Ok(fs::metadata(path).map_err(|e| Error::io(path, e))?.len())
}

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

/// Random-access dataset handle. Opening verifies the manifest's file index
/// (existence + byte length) and reports the first inconsistent file.
#[derive(Debug)]
pub struct DatasetReader {
    root: PathBuf,
    pub manifest: DatasetManifest,
}

impl DatasetReader {
    pub fn open(dir: &Path) -> Result<DatasetReader> {
        let manifest_path = dir.join("manifest.json");
        let body = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&body)
            .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
        // Verify the index in manifest order so the *first* inconsistent
        // file is the one reported.
        for entry in &manifest.files {
            let path = dir.join(&entry.path);
            match fs::metadata(&path) {
                Err(_) => {
                    return Err(Error::Format(format!(
                        "dataset file missing: {}",
                        entry.path
                    )))
                }
                Ok(md) if md.len() != entry.bytes => {
                    return Err(Error::Format(format!(
                        "dataset file inconsistent: {} has {} bytes, manifest says {}",
                        entry.path,
                        md.len(),
                        entry.bytes
                    )))
                }
                Ok(_) => {}
            }
        }
        Ok(DatasetReader { root: dir.to_path_buf(), manifest })
    }

    pub fn episodes(&self) -> u64 {
        self.manifest.meta.episodes
    }

    /// Observations per episode (one more than steps).
    pub fn observations_per_episode(&self) -> u64 {
        self.manifest.meta.steps_per_episode + 1
    }

    /// All observation coordinates in deterministic (episode, step) order.
    pub fn observation_ids(&self) -> Vec<(u64, u64)> {
        let mut ids = Vec::new();
        for ep in 0..self.episodes() {
            for t in 0..self.observations_per_episode() {
                ids.push((ep, t));
            }
        }
        ids
    }

    pub fn load_frame(&self, ep: u64, t: u64) -> Result<RgbImage> {
        image::read_rgb_png(&self.root.join(frame_name(ep, t)))
    }

    pub fn load_mask(&self, ep: u64, t: u64) -> Result<IdMask> {
        image::read_indexed_png(&self.root.join(mask_name(ep, t)))
    }

    pub fn load_observation(&self, ep: u64, t: u64) -> Result<(RgbImage, IdMask)> {
        Ok((self.load_frame(ep, t)?, self.load_mask(ep, t)?))
    }

    /// Loads a strided subset of at most `cap` observation frames as CHW
    /// tensors, never materializing the rest of the dataset. Returns the
    /// frames and the total observation count.
    pub fn load_frame_tensors(&self, cap: usize) -> Result<(Vec<Tensor>, usize)> {
        let ids = self.observation_ids();
        let frames = stride_subset(ids.len(), cap)
            .into_iter()
            .map(|i| {
                let (ep, t) = ids[i];
                Ok(image::frame_to_tensor(&self.load_frame(ep, t)?))
            })
            .collect::<Result<Vec<Tensor>>>()?;
        Ok((frames, ids.len()))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

/// Reconstructs HUD counters and agent cell from a mask. The HUD strip is
/// the bottom tile row (digit ids); the agent is the id-6 region, whose
/// top-left pixel is the cell origin.
pub fn observation_from_images(frame: RgbImage, mask: IdMask) -> Result<Observation> {
    if mask.width != frame.width || mask.height != frame.height {
        return Err(Error::Format("frame and mask dimensions differ".into()));
    }
    let hud_row = mask.height - TILE;
    let mut hud = [0u8; HUD_SLOTS];
    for (slot, item) in hud.iter_mut().enumerate() {
        let id = mask.id(hud_row, slot * TILE);
        if !(tile::DIGIT_BASE..tile::DIGIT_BASE + 10).contains(&id) {
            return Err(Error::Format(format!("HUD slot {slot} has non-digit id {id}")));
        }
        *item = id - tile::DIGIT_BASE;
    }
    let agent = mask
        .data
        .iter()
        .position(|&id| id == tile::AGENT)
        .map(|i| (i / mask.width / TILE, i % mask.width / TILE));
    Ok(Observation { frame, mask, hud, agent })
}

/// Loads the full dataset back into episode logs, verifying consistency.
/// Errors name the first file that fails to load or parse.
pub fn read_dataset(dir: &Path) -> Result<Vec<EpisodeLog>> {
    let reader = DatasetReader::open(dir)?;
    let tpath = dir.join("transitions.jsonl");
    let tfile = fs::File::open(&tpath).map_err(|e| Error::io(&tpath, e))?;

    let mut by_episode: BTreeMap<u64, Vec<TransitionRecord>> = BTreeMap::new();
    for (lineno, line) in std::io::BufReader::new(tfile).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&tpath, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TransitionRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Format(format!("transitions.jsonl line {}: {e}", lineno + 1))
        })?;
        by_episode.entry(rec.episode).or_default().push(rec);
    }

    let mut episodes = Vec::new();
    for (ep, mut records) in by_episode {
        records.sort_by_key(|r| r.step);
        let mut steps = Vec::with_capacity(records.len());
        // Load obs 0 once, then chain: each record's `next` becomes the
        // following record's `obs`.
        let mut obs = {
            let (frame, mask) = reader.load_observation(ep, 0)?;
            observation_from_images(frame, mask)?
        };
        for rec in &records {
            let (frame, mask) = reader.load_observation(ep, rec.step + 1)?;
            let next = observation_from_images(frame, mask)?;
            steps.push(Step { obs: obs.clone(), action: rec.action, next: next.clone() });
            obs = next;
        }
        episodes.push(EpisodeLog { episode: ep, steps });
    }
    Ok(episodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_world, rollout, DEFAULT_WEIGHTS};

    fn sample_episodes(n: u64, steps: usize) -> Vec<EpisodeLog> {
        (0..n)
            .map(|ep| {
                let grid = generate_world(100 + ep, 7, 8, &DEFAULT_WEIGHTS).unwrap();
                rollout(&grid, 200 + ep, steps, ep).unwrap()
            })
            .collect()
    }

    fn meta(n: u64, steps: u64) -> DatasetMeta {
        DatasetMeta {
            seed: 0,
            episodes: n,
            steps_per_episode: steps,
            image_width: 64,
            image_height: 64,
            world_rows: 7,
            world_cols: 8,
        }
    }

    fn temp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("vqaudit-dataset-tests").join(name);
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = temp_dir("roundtrip");
        let eps = sample_episodes(2, 5);
        write_dataset(&meta(2, 5), eps.clone(), &dir).unwrap();
        let back = read_dataset(&dir).unwrap();
        assert_eq!(back, eps);
    }

    #[test]
    fn empty_episode_list_is_rejected() {
        let dir = temp_dir("empty");
        let err = write_dataset(&meta(0, 5), Vec::new(), &dir).unwrap_err();
        assert!(err.to_string().contains("no episodes"), "{err}");
    }

    #[test]
    fn manifest_counts_match_generator_parameters() {
        let dir = temp_dir("counts");
        let manifest = write_dataset(&meta(3, 4), sample_episodes(3, 4), &dir).unwrap();
        // 3 episodes × 5 observations, frame + mask each, plus transitions.jsonl.
        assert_eq!(manifest.files.len(), 3 * 5 * 2 + 1);
        let transitions = fs::read_to_string(dir.join("transitions.jsonl")).unwrap();
        assert_eq!(transitions.lines().count(), 3 * 4);
    }

    #[test]
    fn missing_file_is_named() {
        let dir = temp_dir("missing");
        write_dataset(&meta(1, 3), sample_episodes(1, 3), &dir).unwrap();
        fs::remove_file(dir.join("frames/ep0_t2.png")).unwrap();
        let err = DatasetReader::open(&dir).unwrap_err();
        assert!(err.to_string().contains("ep0_t2"), "{err}");
    }

    #[test]
    fn truncated_file_is_named_with_lengths() {
        let dir = temp_dir("truncated");
        write_dataset(&meta(1, 3), sample_episodes(1, 3), &dir).unwrap();
        let victim = dir.join("masks/ep0_t1.png");
        let bytes = fs::read(&victim).unwrap();
        fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();
        let err = DatasetReader::open(&dir).unwrap_err();
        assert!(err.to_string().contains("ep0_t1"), "{err}");
        assert!(err.to_string().contains("bytes"), "{err}");
    }

    #[test]
    fn reader_provides_random_access() {
        let dir = temp_dir("random-access");
        let eps = sample_episodes(2, 3);
        write_dataset(&meta(2, 3), eps.clone(), &dir).unwrap();
        let reader = DatasetReader::open(&dir).unwrap();
        assert_eq!(reader.observation_ids().len(), 2 * 4);
        let (frame, mask) = reader.load_observation(1, 2).unwrap();
        assert_eq!(frame, eps[1].steps[1].next.frame);
        assert_eq!(mask, eps[1].steps[1].next.mask);
    }

    #[test]
    fn hud_and_agent_survive_the_round_trip() {
        // Use a tree-rich world so pickups actually happen.
        let dir = temp_dir("hud");
        let weights = [0.3, 0.0, 0.0, 0.7, 0.0, 0.0];
        let grid = generate_world(42, 7, 8, &weights).unwrap();
        let log = rollout(&grid, 43, 40, 0).unwrap();
        let picked_up = log.steps.last().unwrap().next.hud[hud_slot_wood()];
        assert!(picked_up > 0, "expected at least one pickup in a tree-rich world");
        write_dataset(&meta(1, 40), vec![log.clone()], &dir).unwrap();
        let back = read_dataset(&dir).unwrap();
        assert_eq!(back[0], log);
    }

    fn hud_slot_wood() -> usize {
        crate::world::hud_slot::WOOD
    }
}
