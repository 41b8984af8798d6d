//! Command-line front end: dataset generation, codec training, the code
//! audit, report re-rendering, and the end-to-end pipeline self-check.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use vqaudit::audit::{run_audit, AuditConfig, EmbedderBackend};
use vqaudit::codec::checkpoint::{load_checkpoint, save_checkpoint};
use vqaudit::codec::oracle::build_oracle_model;
use vqaudit::codec::train::{stride_subset, train, TrainConfig};
use vqaudit::codec::{architecture_for_frames, CodecModel, DEFAULT_CODEBOOK_SIZE, DEFAULT_EMBED_DIM};
use vqaudit::error::Result;
use vqaudit::image::frame_to_tensor;
use vqaudit::regions::{Connectivity, DEFAULT_ACT_THRESHOLD, DEFAULT_AREA_THRESHOLD};
use vqaudit::report::{emit_reports, replot};
use vqaudit::saliency::{gradcam_with, SaliencyConfig, Upsample};
use vqaudit::tensor::Tensor;
use vqaudit::world::dataset::DatasetReader;
use vqaudit::world::generate_dataset;

#[derive(Parser)]
#[command(name = "vqaudit", version = vqaudit::VERSION)]
#[command(about = "Audit the discrete codes of a VQ autoencoder over tile worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random-walk tile-world dataset
    Gen(GenArgs),
    /// Train the VQ autoencoder on a dataset
    Train(TrainArgs),
    /// Run the code audit over a dataset with a trained checkpoint
    Audit(AuditArgs),
    /// Re-render the plots of a saved run directory from its tables
    Report(ReportArgs),
    /// Build the reference model and verify the audit pipeline end to end
    OracleCheck(OracleCheckArgs),
}

#[derive(clap::Args)]
struct GenArgs {
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    episodes: u64,
    /// Actions per episode (observations per episode is one more)
    #[arg(long, default_value_t = 100)]
    steps: u64,
    /// World height in tiles (the rendered frame adds one HUD row)
    #[arg(long, default_value_t = 7)]
    rows: usize,
    /// World width in tiles
    #[arg(long, default_value_t = 8)]
    cols: usize,
    /// Checkerboard worlds with no same-type tile adjacency (the
    /// self-check fixture) instead of random terrain
    #[arg(long)]
    isolated: bool,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Dataset directory produced by `gen`
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint file to write
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_CODEBOOK_SIZE)]
    codebook_size: usize,
    #[arg(long, default_value_t = DEFAULT_EMBED_DIM)]
    embed_dim: usize,
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 3e-4)]
    learning_rate: f64,
    /// Commitment loss weight β
    #[arg(long, default_value_t = 0.25)]
    commitment: f64,
    /// Cap on training frames (strided over the dataset)
    #[arg(long, default_value_t = 1000)]
    subset: usize,
    /// Progress line every this many steps (0 silences them)
    #[arg(long, default_value_t = 500)]
    log_every: usize,
}

#[derive(clap::Args)]
struct AuditArgs {
    /// Dataset directory produced by `gen`
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint file produced by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Run directory for reports
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Heatmap activation threshold for region extraction
    #[arg(long, default_value_t = DEFAULT_ACT_THRESHOLD)]
    act_threshold: f64,
    /// Minimum activated-region area in pixels
    #[arg(long, default_value_t = DEFAULT_AREA_THRESHOLD)]
    area_threshold: usize,
    /// Crop embedding backend
    #[arg(long, value_enum, default_value_t = EmbedderArg::Descriptor)]
    embedder: EmbedderArg,
    #[arg(long, default_value_t = 10)]
    baseline_trials: usize,
    /// Codes entering the 2-D projection
    #[arg(long, default_value_t = 10)]
    tsne_top_k: usize,
    /// Minimum crop count for a code to qualify for the projection
    #[arg(long, default_value_t = 50)]
    tsne_min_count: usize,
    /// Projection perplexity (default 30, clamped below points/3)
    #[arg(long)]
    perplexity: Option<f64>,
    /// Worker threads (0 = one per CPU)
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// Run directory holding codes.csv, cooccurrence.csv, tsne.csv, summary.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct OracleCheckArgs {
    /// Working directory (dataset/ and report/ are created inside)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    episodes: u64,
    #[arg(long, default_value_t = 25)]
    steps: u64,
    #[arg(long, default_value_t = 7)]
    rows: usize,
    #[arg(long, default_value_t = 8)]
    cols: usize,
    /// Worker threads (0 = one per CPU)
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderArg {
    Descriptor,
    Encoder,
}

impl From<EmbedderArg> for EmbedderBackend {
    fn from(arg: EmbedderArg) -> Self {
        match arg {
            EmbedderArg::Descriptor => EmbedderBackend::Descriptor,
            EmbedderArg::Encoder => EmbedderBackend::Encoder,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Audit(args) => cmd_audit(&args),
        Command::Report(args) => cmd_report(&args),
        Command::OracleCheck(args) => cmd_oracle_check(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_gen(args: &GenArgs) -> Result<ExitCode> {
    let manifest = generate_dataset(
        &args.out,
        args.seed,
        args.episodes,
        args.steps,
        args.rows,
        args.cols,
        args.isolated,
    )?;
    println!(
        "wrote {} episodes × {} observations ({}×{} px) to {}",
        manifest.meta.episodes,
        manifest.meta.steps_per_episode + 1,
        manifest.meta.image_width,
        manifest.meta.image_height,
        args.out.display()
    );
    println!("files: {}", manifest.files.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(args: &TrainArgs) -> Result<ExitCode> {
    let reader = DatasetReader::open(&args.dataset)?;
    let (frames, total) = reader.load_frame_tensors(args.subset.max(1))?;
    println!("training on {} of {total} frames", frames.len());

    let arch = architecture_for_frames(
        reader.manifest.meta.image_width as usize,
        reader.manifest.meta.image_height as usize,
        args.codebook_size,
        args.embed_dim,
    )?;
    let mut model = CodecModel::init(arch, args.seed)?;
    let config = TrainConfig {
        batch_size: args.batch_size,
        steps: args.steps,
        learning_rate: args.learning_rate,
        commitment_weight: args.commitment,
        seed: args.seed,
    };
    let started = Instant::now();
    let report = train(&mut model, &frames, &config, |step, losses| {
        if args.log_every > 0 && (step + 1) % args.log_every == 0 {
            println!(
                "step {:>6}: recon {:.6} codebook {:.6} commitment {:.6}",
                step + 1,
                losses.recon,
                losses.codebook,
                losses.commitment
            );
        }
    })?;
    save_checkpoint(&model, &args.out)?;

    let reduction = if report.initial_mse > 0.0 {
        100.0 * (1.0 - report.final_mse / report.initial_mse)
    } else {
        0.0
    };
    println!(
        "mse {:.6} -> {:.6} ({reduction:.1}% reduction) in {:.1}s",
        report.initial_mse,
        report.final_mse,
        started.elapsed().as_secs_f64()
    );
    println!("checkpoint: {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn audit_config(args: &AuditArgs) -> AuditConfig {
    AuditConfig {
        seed: args.seed,
        act_threshold: args.act_threshold,
        area_threshold: args.area_threshold,
        embedder: args.embedder.into(),
        baseline_trials: args.baseline_trials,
        tsne_top_k: args.tsne_top_k,
        tsne_min_count: args.tsne_min_count,
        perplexity: args.perplexity,
        workers: args.workers,
        ..AuditConfig::default()
    }
}

fn print_bundle_stats(bundle: &vqaudit::audit::ReportBundle) {
    println!(
        "audited {} observations: {} selected (observation, code) pairs, {} kept / {} zero heatmaps ({:.1}%)",
        bundle.observations,
        bundle.selected_pairs,
        bundle.kept_heatmaps,
        bundle.dropped_heatmaps,
        100.0 * bundle.zero_fraction
    );
    println!(
        "{} active codes, {} crops, baseline consistency {:.4}",
        bundle.usage.counts.iter().filter(|&&n| n > 0).count(),
        bundle.crops.len(),
        bundle.baseline
    );
    if let Some(best) = bundle.consistency.iter().map(|c| c.score).max_by(f64::total_cmp) {
        println!("best code consistency {best:.4}");
    }
    if let Some(p) = bundle.projection_perplexity {
        println!(
            "projected {} crops of {} codes at perplexity {p}",
            bundle.projection_refs.len(),
            bundle.projection_codes.len()
        );
    }
}

fn cmd_audit(args: &AuditArgs) -> Result<ExitCode> {
    let model = load_checkpoint(&args.checkpoint)?;
    let started = Instant::now();
    let bundle = run_audit(&args.dataset, &model, &audit_config(args))?;
    print_bundle_stats(&bundle);
    let manifest = emit_reports(&bundle, &args.out)?;
    println!(
        "wrote {} outputs to {} in {:.1}s",
        manifest.outputs.len(),
        args.out.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(args: &ReportArgs) -> Result<ExitCode> {
    let written = replot(&args.out)?;
    if written.is_empty() {
        println!("no plottable sections in {}", args.out.display());
    } else {
        for rel in &written {
            println!("re-rendered {rel}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// One pipeline self-check assertion: prints its verdict, tracks overall.
struct Checks {
    failed: bool,
}

impl Checks {
    fn assert(&mut self, ok: bool, what: &str) {
        if ok {
            println!("ok   - {what}");
        } else {
            println!("FAIL - {what}");
            self.failed = true;
        }
    }
}

fn cmd_oracle_check(args: &OracleCheckArgs) -> Result<ExitCode> {
    let started = Instant::now();
    let dataset_dir = args.out.join("dataset");
    let report_dir = args.out.join("report");
    println!(
        "generating {} isolated-world episodes × {} steps at {}",
        args.episodes,
        args.steps,
        dataset_dir.display()
    );
    generate_dataset(&dataset_dir, args.seed, args.episodes, args.steps, args.rows, args.cols, true)?;

    let model = build_oracle_model(args.rows, args.cols)?;
    // Cell-aligned settings: the reference heatmaps are exact on the tile
    // grid, so nearest upsampling and 4-connectivity keep regions per-tile.
    let config = AuditConfig {
        seed: args.seed,
        connectivity: Connectivity::Four,
        upsample: Upsample::Nearest,
        workers: args.workers,
        ..AuditConfig::default()
    };
    let mut bundle = run_audit(&dataset_dir, &model, &config)?;
    bundle.command = "oracle-check".into();
    print_bundle_stats(&bundle);

    let mut checks = Checks { failed: false };
    checks.assert(
        bundle.kept_heatmaps + bundle.dropped_heatmaps == bundle.selected_pairs,
        "kept + dropped heatmaps equals selected (observation, code) pairs",
    );
    checks.assert(
        bundle.dropped_heatmaps == 0,
        "every selected code produced a non-zero heatmap",
    );
    checks.assert(
        !bundle.purity.is_empty() && bundle.purity.iter().all(|p| p.purity == 1.0),
        "purity is 1.0 for every audited code",
    );
    checks.assert(
        bundle.purity.iter().all(|p| p.dominant_label as usize == p.code),
        "every code's dominant entity is the code itself",
    );
    checks.assert(
        !bundle.consistency.is_empty() && bundle.consistency.iter().all(|c| c.score >= 0.99),
        "consistency is at least 0.99 for every used code",
    );

    // Unselected codes must attribute to nothing: recompute saliency for
    // every code on a few observations and compare against the selection set.
    let reader = DatasetReader::open(&dataset_dir)?;
    let saliency = SaliencyConfig {
        upsample: Upsample::Nearest,
        ..SaliencyConfig::default_for_encoder(model.arch.encoder.len())
    };
    let mut zero_matches_unselected = true;
    for &(ep, t) in reader.observation_ids().iter().take(5) {
        let frame = reader.load_frame(ep, t)?;
        let cache = model.encode_cached(&frame_to_tensor(&frame))?;
        let latent = model.quantize(cache.output())?;
        for code in 0..model.codebook_size() {
            let selected = latent.assignments.contains(&code);
            let map = gradcam_with(&model, &cache, &latent, (ep, t), code, &saliency)?;
            if map.is_zero == selected {
                zero_matches_unselected = false;
            }
        }
    }
    checks.assert(
        zero_matches_unselected,
        "heatmaps are zero exactly for unselected codes (spot-checked observations)",
    );

    emit_reports(&bundle, &report_dir)?;
    println!("report: {}", report_dir.display());
    println!("elapsed: {:.1}s", started.elapsed().as_secs_f64());

    if checks.failed {
        println!("pipeline self-check FAILED");
        Ok(ExitCode::FAILURE)
    } else {
        println!("pipeline self-check passed");
        Ok(ExitCode::SUCCESS)
    }
}
