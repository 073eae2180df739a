use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mods::bench::{
    load_image_dir, render_overlay, run_warp_benchmark, score_correspondences, write_csv, write_json_atomic,
    GroundTruth, SolveCriteria, LATITUDES_DEG,
};
use mods::geometry::parse_matrix;
use mods::imgproc::{load_image, save_rgb_png};
use mods::orchestrator::{run_mods, MatchReport, ModsConfig, ModsError};

/// Two-view wide-baseline matcher with on-demand view synthesis.
#[derive(Parser)]
#[command(name = "mods", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match two images and report the verified correspondences.
    Match(MatchArgs),
    /// Evaluation harness.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct MatchArgs {
    img1: PathBuf,
    img2: PathBuf,
    /// JSON configuration; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write a side-by-side PNG with the correspondences drawn.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// RANSAC seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Match every image of a directory against its synthetic tilt series.
    Warp(WarpArgs),
    /// Score a saved report against a ground-truth matrix.
    Score(ScoreArgs),
}

#[derive(Args)]
struct WarpArgs {
    img_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV, one row per image and latitude.
    #[arg(long)]
    out: PathBuf,
    /// Latitudes in degrees (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = LATITUDES_DEG.to_vec())]
    latitudes: Vec<f64>,
    /// Directory receiving one JSON report per case.
    #[arg(long)]
    reports: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    report: PathBuf,
    /// Plain-text 3×3 ground-truth matrix.
    #[arg(long)]
    gt: PathBuf,
    /// Treat the ground truth as a fundamental matrix (median epipolar rule).
    #[arg(long)]
    fundamental: bool,
    /// Use the synthetic-warp rule (50 correct) instead of the real-pair rule (10).
    #[arg(long, conflicts_with = "fundamental")]
    synthetic: bool,
}

fn load_config(path: Option<&Path>) -> Result<ModsConfig> {
    let Some(path) = path else { return Ok(ModsConfig::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run_match(args: &MatchArgs) -> Result<ExitCode> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.ransac.rng_seed = seed;
    }
    let img1 = load_image(&args.img1)?;
    let img2 = load_image(&args.img2)?;
    let (report, solved): (MatchReport, bool) = match run_mods(&img1, &img2, &cfg) {
        Ok(r) => (r, true),
        Err(ModsError::NoSolution(r)) => (*r, false),
        Err(e) => return Err(e.into()),
    };
    if let Some(out) = &args.out {
        write_json_atomic(out, &report)?;
    }
    if let Some(path) = &args.overlay {
        save_rgb_png(&render_overlay(&img1, &img2, &report), path)?;
    }
    let kind = report.model.as_ref().map_or("none".to_string(), |m| format!("{:?}", m.kind).to_lowercase());
    println!(
        "{} step={} inliers={} model={} time_ms={:.1}",
        if solved { "solved" } else { "unsolved" },
        report.step,
        report.inliers,
        kind,
        report.timings.total_ms
    );
    Ok(if solved { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run_warp(args: &WarpArgs) -> Result<ExitCode> {
    let cfg = load_config(args.config.as_deref())?;
    let config_id = args
        .config
        .as_deref()
        .and_then(Path::file_stem)
        .map_or("default".to_string(), |s| s.to_string_lossy().into_owned());
    let images = load_image_dir(&args.img_dir)?;
    if images.is_empty() {
        bail!("no images found in {}", args.img_dir.display());
    }
    if let Some(dir) = &args.reports {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let rows = run_warp_benchmark(&images, &args.latitudes, &cfg, &config_id, args.reports.as_deref())?;
    write_csv(&rows, &args.out)?;
    let solved = rows.iter().filter(|r| r.solved).count();
    println!("{solved}/{} cases solved", rows.len());
    Ok(ExitCode::SUCCESS)
}

fn run_score(args: &ScoreArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.report).with_context(|| format!("reading {}", args.report.display()))?;
    let report: MatchReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.report.display()))?;
    let gt_text = std::fs::read_to_string(&args.gt).with_context(|| format!("reading {}", args.gt.display()))?;
    let m = parse_matrix(&gt_text).with_context(|| format!("parsing {}", args.gt.display()))?;
    let crit = if args.fundamental {
        SolveCriteria::epipolar(m)
    } else if args.synthetic {
        SolveCriteria::synthetic(m)
    } else {
        SolveCriteria::real(GroundTruth::Homography(m))
    };
    let score = score_correspondences(&report, &crit)?;
    println!("{}", serde_json::to_string(&score)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    pool.install(|| match &cli.command {
        Command::Match(args) => run_match(args),
        Command::Bench(BenchCommand::Warp(args)) => run_warp(args),
        Command::Bench(BenchCommand::Score(args)) => run_score(args),
    })
}
