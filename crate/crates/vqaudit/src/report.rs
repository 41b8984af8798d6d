//! Report emission: CSV tables, a summary JSON, overlay/gallery/plot PNGs,
//! and a run manifest indexing every output with its checksum.
//!
//! The CSVs plus `summary.json` are the durable record; the PNGs are
//! quick-look renderings of the same data. Floats are written with Rust's
//! shortest-roundtrip formatting, so re-parsing a CSV recovers the exact
//! bundle values and same-seed runs produce byte-identical tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{AuditConfig, ReportBundle};
use crate::error::{Error, Result};
use crate::image::write_rgb_png;
use crate::plot::{bar_chart, matrix_heatmap, overlay, scatter_plot};

/// Alpha used for the heatmap-over-frame overlays.
pub const OVERLAY_ALPHA: f64 = 0.5;

/// One emitted file: path relative to the output root, size, digest.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct OutputRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// `manifest.json`: ties every output of a run to the exact configuration
/// and inputs that produced it. Written last, so its presence marks a
/// complete run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config: AuditConfig,
    pub dataset_checksum: String,
    pub model_checksum: String,
    pub started_unix_ms: u64,
    pub ended_unix_ms: u64,
    pub outputs: Vec<OutputRecord>,
}

/// The `summary.json` body. Field order is the serialization order, so
/// same-seed runs emit identical bytes (no timestamps here — those live in
/// the manifest).
#[derive(Serialize, Deserialize)]
struct Summary {
    codebook_size: usize,
    active_codes: usize,
    observations: usize,
    selected_pairs: usize,
    kept_heatmaps: usize,
    dropped_heatmaps: usize,
    zero_heatmap_fraction: f64,
    crops: usize,
    baseline_consistency: f64,
    best_code_consistency: Option<f64>,
    median_code_consistency: Option<f64>,
    projection_codes: Vec<usize>,
    projection_perplexity: Option<f64>,
    projection_points: usize,
    projection_kl: Option<f64>,
    dataset_checksum: String,
    model_checksum: String,
    config: AuditConfig,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Writes one output file and records it in the manifest index.
fn put(root: &Path, rel: &str, bytes: &[u8], outputs: &mut Vec<OutputRecord>) -> Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    outputs.push(OutputRecord {
        path: rel.to_string(),
        bytes: bytes.len() as u64,
        sha256: hex(&Sha256::digest(bytes)),
    });
    Ok(())
}

/// PNG variant of [`put`]: encodes to the file, then hashes what was written.
fn put_png(
    root: &Path,
    rel: &str,
    img: &crate::image::RgbImage,
    outputs: &mut Vec<OutputRecord>,
) -> Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_rgb_png(&path, img)?;
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    outputs.push(OutputRecord {
        path: rel.to_string(),
        bytes: bytes.len() as u64,
        sha256: hex(&Sha256::digest(&bytes)),
    });
    Ok(())
}

/// Optional cell: empty when the metric is undefined for the code.
fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const CODES_HEADER: &str =
    "code,n_selections,share,n_crops,consistency,baseline_delta,purity,dominant_label,entropy_bits";

fn codes_csv(bundle: &ReportBundle) -> String {
    let consistency: BTreeMap<usize, f64> =
        bundle.consistency.iter().map(|c| (c.code, c.score)).collect();
    let purity: BTreeMap<usize, &crate::stats::CodePurity> =
        bundle.purity.iter().map(|p| (p.code, p)).collect();
    let crop_counts: BTreeMap<usize, usize> = {
        let mut m = BTreeMap::new();
        for c in &bundle.crops {
            *m.entry(c.code).or_insert(0) += 1;
        }
        m
    };
    let mut out = String::from(CODES_HEADER);
    out.push('\n');
    for code in 0..bundle.codebook_size {
        let score = consistency.get(&code).copied();
        let p = purity.get(&code);
        writeln!(
            out,
            "{code},{},{},{},{},{},{},{},{}",
            bundle.usage.counts[code],
            bundle.usage.shares[code],
            crop_counts.get(&code).copied().unwrap_or(0),
            opt(score),
            opt(score.map(|s| s - bundle.baseline)),
            opt(p.map(|p| p.purity)),
            p.map(|p| p.dominant_label.to_string()).unwrap_or_default(),
            opt(p.map(|p| p.entropy_bits)),
        )
        .expect("string write");
    }
    out
}

fn frequency_csv(bundle: &ReportBundle) -> String {
    let mut out = String::from("code,n_selections,share,n_observations\n");
    for code in 0..bundle.codebook_size {
        writeln!(
            out,
            "{code},{},{},{}",
            bundle.usage.counts[code], bundle.usage.shares[code], bundle.usage.obs_counts[code]
        )
        .expect("string write");
    }
    out
}

fn cooccurrence_csv(bundle: &ReportBundle) -> String {
    let k = bundle.cooccurrence.codebook_size;
    let mut out = String::from("code");
    for j in 0..k {
        write!(out, ",{j}").expect("string write");
    }
    out.push('\n');
    for i in 0..k {
        write!(out, "{i}").expect("string write");
        for j in 0..k {
            write!(out, ",{}", bundle.cooccurrence.rate(i, j)).expect("string write");
        }
        out.push('\n');
    }
    out
}

fn tsne_csv(bundle: &ReportBundle) -> String {
    let mut out = String::from("code,episode,step,crop,x,y\n");
    if let Some(layout) = &bundle.projection {
        for (point, &crop_idx) in layout.points.iter().zip(&bundle.projection_refs) {
            let c = &bundle.crops[crop_idx];
            writeln!(out, "{},{},{},{crop_idx},{},{}", c.code, c.episode, c.step, point[0], point[1])
                .expect("string write");
        }
    }
    out
}

fn summary_json(bundle: &ReportBundle) -> String {
    let mut scores: Vec<f64> = bundle.consistency.iter().map(|c| c.score).collect();
    scores.sort_by(|a, b| a.total_cmp(b));
    let summary = Summary {
        codebook_size: bundle.codebook_size,
        active_codes: bundle.usage.counts.iter().filter(|&&n| n > 0).count(),
        observations: bundle.observations,
        selected_pairs: bundle.selected_pairs,
        kept_heatmaps: bundle.kept_heatmaps,
        dropped_heatmaps: bundle.dropped_heatmaps,
        zero_heatmap_fraction: bundle.zero_fraction,
        crops: bundle.crops.len(),
        baseline_consistency: bundle.baseline,
        best_code_consistency: scores.last().copied(),
        median_code_consistency: (!scores.is_empty()).then(|| scores[(scores.len() - 1) / 2]),
        projection_codes: bundle.projection_codes.clone(),
        projection_perplexity: bundle.projection_perplexity,
        projection_points: bundle.projection_refs.len(),
        projection_kl: bundle.projection.as_ref().map(|l| l.kl),
        dataset_checksum: bundle.dataset_checksum.clone(),
        model_checksum: bundle.model_checksum.clone(),
        config: bundle.config.clone(),
    };
    serde_json::to_string_pretty(&summary).expect("summary serializes")
}

/// Renders every report artifact into `out_dir` and returns the manifest
/// (also written as `manifest.json`, last). The directory is probed first so
/// an unwritable target fails before any partial output.
pub fn emit_reports(bundle: &ReportBundle, out_dir: &Path) -> Result<RunManifest> {
    let started = unix_ms();
    for sub in ["overlays", "galleries", "plots"] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let mut outputs = Vec::new();
    put(out_dir, "codes.csv", codes_csv(bundle).as_bytes(), &mut outputs)?;
    put(out_dir, "frequency.csv", frequency_csv(bundle).as_bytes(), &mut outputs)?;
    put(out_dir, "cooccurrence.csv", cooccurrence_csv(bundle).as_bytes(), &mut outputs)?;
    put(out_dir, "tsne.csv", tsne_csv(bundle).as_bytes(), &mut outputs)?;
    put(out_dir, "summary.json", summary_json(bundle).as_bytes(), &mut outputs)?;

    // Overlays: one exemplar heatmap per code, blended over its frame.
    for sample in &bundle.overlays {
        let img = overlay(&sample.frame, &sample.heatmap, OVERLAY_ALPHA)?;
        let rel = format!(
            "overlays/code{:03}_ep{:03}_t{:03}.png",
            sample.code, sample.episode, sample.step
        );
        put_png(out_dir, &rel, &img, &mut outputs)?;
    }

    // Galleries: the first few crops of every code.
    for (&code, idxs) in &bundle.galleries {
        for (slot, &idx) in idxs.iter().enumerate() {
            let c = &bundle.crops[idx];
            let rel = format!(
                "galleries/code{code:03}/{slot:02}_ep{:03}_t{:03}.png",
                c.episode, c.step
            );
            put_png(out_dir, &rel, &c.image, &mut outputs)?;
        }
    }

    // Plots; sections with no data emit no file.
    if !bundle.consistency.is_empty() {
        let values: Vec<f64> = bundle.consistency.iter().map(|c| c.score).collect();
        let img = bar_chart(&values, Some(bundle.baseline), 640, 360);
        put_png(out_dir, "plots/consistency.png", &img, &mut outputs)?;
    }
    if bundle.usage.counts.iter().any(|&n| n > 0) {
        let img = bar_chart(&bundle.usage.shares, None, 640, 360);
        put_png(out_dir, "plots/frequency.png", &img, &mut outputs)?;
    }
    if bundle.cooccurrence.rates.iter().any(|&r| r > 0.0) {
        let img = matrix_heatmap(&bundle.cooccurrence.rates, bundle.codebook_size, 8);
        put_png(out_dir, "plots/cooccurrence.png", &img, &mut outputs)?;
    }
    if let Some(layout) = &bundle.projection {
        let img = scatter_plot(&layout.points, &layout.labels, 480, 480);
        put_png(out_dir, "plots/tsne.png", &img, &mut outputs)?;
    }

    let manifest = RunManifest {
        tool_version: crate::VERSION.to_string(),
        command: bundle.command.clone(),
        seed: bundle.config.seed,
        config: bundle.config.clone(),
        dataset_checksum: bundle.dataset_checksum.clone(),
        model_checksum: bundle.model_checksum.clone(),
        started_unix_ms: started,
        ended_unix_ms: unix_ms(),
        outputs,
    };
    let path = out_dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Readers — the `report` subcommand re-renders plots from a saved run, and
// tests round-trip the tables through them.
// ---------------------------------------------------------------------------

/// Minimal CSV reader for the tables this module writes (no quoting — none
/// of the emitted values contain commas).
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn parse(text: &str) -> Result<CsvTable> {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Format("empty CSV".into()))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(Error::Format(format!(
                    "CSV row {} has {} fields, header has {}",
                    i + 2,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        Ok(CsvTable { header, rows })
    }

    /// Index of a named column.
    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("CSV has no column named {name}")))
    }
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field.parse().map_err(|_| Error::Format(format!("{what}: bad number {field:?}")))
}

/// Re-reads `cooccurrence.csv` into (code ids, row-major K×K rates).
pub fn parse_cooccurrence(text: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let table = CsvTable::parse(text)?;
    let k = table.header.len() - 1;
    if table.rows.len() != k {
        return Err(Error::Format(format!(
            "co-occurrence table is {}×{k}, expected square",
            table.rows.len()
        )));
    }
    let codes: Result<Vec<usize>> = table.header[1..]
        .iter()
        .map(|h| h.parse().map_err(|_| Error::Format(format!("bad code id {h:?}"))))
        .collect();
    let mut rates = Vec::with_capacity(k * k);
    for row in &table.rows {
        for field in &row[1..] {
            rates.push(parse_f64(field, "co-occurrence rate")?);
        }
    }
    Ok((codes?, rates))
}

/// Re-reads `tsne.csv` into (points, code labels).
pub fn parse_tsne(text: &str) -> Result<(Vec<[f64; 2]>, Vec<usize>)> {
    let table = CsvTable::parse(text)?;
    let (cx, cy, cc) = (table.column("x")?, table.column("y")?, table.column("code")?);
    let mut points = Vec::with_capacity(table.rows.len());
    let mut labels = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        points.push([parse_f64(&row[cx], "x")?, parse_f64(&row[cy], "y")?]);
        labels.push(
            row[cc].parse().map_err(|_| Error::Format(format!("bad code id {:?}", row[cc])))?,
        );
    }
    Ok((points, labels))
}

/// Consistency scores (code, score) for codes that have one, plus every
/// code's selection share, from `codes.csv`.
pub fn parse_codes(text: &str) -> Result<(Vec<(usize, f64)>, Vec<f64>)> {
    let table = CsvTable::parse(text)?;
    let (cc, cs, csh) =
        (table.column("code")?, table.column("consistency")?, table.column("share")?);
    let mut scores = Vec::new();
    let mut shares = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let code: usize =
            row[cc].parse().map_err(|_| Error::Format(format!("bad code id {:?}", row[cc])))?;
        if !row[cs].is_empty() {
            scores.push((code, parse_f64(&row[cs], "consistency")?));
        }
        shares.push(parse_f64(&row[csh], "share")?);
    }
    Ok((scores, shares))
}

/// Re-renders the PNG plots from a saved run directory (CSV + summary only;
/// overlays and galleries need the original dataset, so they are not
/// reproduced here).
pub fn replot(run_dir: &Path) -> Result<Vec<String>> {
    let read = |name: &str| -> Result<String> {
        fs::read_to_string(run_dir.join(name)).map_err(|e| Error::io(run_dir.join(name), e))
    };
    let plots = run_dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let mut written = Vec::new();

    let summary: Summary = serde_json::from_str(&read("summary.json")?)
        .map_err(|e| Error::Format(format!("summary.json: {e}")))?;
    let (scores, shares) = parse_codes(&read("codes.csv")?)?;
    if !scores.is_empty() {
        let values: Vec<f64> = scores.iter().map(|&(_, s)| s).collect();
        let img = bar_chart(&values, Some(summary.baseline_consistency), 640, 360);
        write_rgb_png(&plots.join("consistency.png"), &img)?;
        written.push("plots/consistency.png".into());
    }
    if shares.iter().any(|&s| s > 0.0) {
        let img = bar_chart(&shares, None, 640, 360);
        write_rgb_png(&plots.join("frequency.png"), &img)?;
        written.push("plots/frequency.png".into());
    }
    let (codes, rates) = parse_cooccurrence(&read("cooccurrence.csv")?)?;
    if rates.iter().any(|&r| r > 0.0) {
        let img = matrix_heatmap(&rates, codes.len(), 8);
        write_rgb_png(&plots.join("cooccurrence.png"), &img)?;
        written.push("plots/cooccurrence.png".into());
    }
    let (points, labels) = parse_tsne(&read("tsne.csv")?)?;
    if !points.is_empty() {
        let img = scatter_plot(&points, &labels, 480, 480);
        write_rgb_png(&plots.join("tsne.png"), &img)?;
        written.push("plots/tsne.png".into());
    }
    Ok(written)
}
