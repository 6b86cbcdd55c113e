//! `dualtrack` — command-line front end for the synthetic tracking harness.
//!
//! Four subcommands:
//!
//! - `run` — generate (or load) a synthetic sequence, track it once per
//!   configured seed, and write box files, metrics, and memory snapshots.
//! - `eval` — score a predicted box file against a ground-truth box file.
//! - `selftest` — execute the library's oracle suite and print a table.
//! - `gen` — write a sequence directory (scene description + ground truth)
//!   that `run` can load back via `run.sequence_dir`.
//!
//! Exit codes: 0 on success, 1 when inputs fail validation (bad flags,
//! malformed files, inconsistent configuration), 2 on runtime errors
//! (I/O failures, numeric faults, failed self-test checks).

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use dualtrack_core::bbox::BoundingBox;
use dualtrack_core::io;
use dualtrack_core::memory::MemoryPool;
use dualtrack_core::metrics::{evaluate, GroundTruth, SequenceMetrics, TrackResult};
use dualtrack_core::pipeline::{
    AdapterParams, EncoderParams, HeadParams, Template, TrackerSession,
};
use dualtrack_core::selftest;
use dualtrack_core::synth::{generate, SceneConfig};
use dualtrack_core::Error;

use config::{AdapterSource, RunConfig};

#[derive(Parser)]
#[command(
    name = "dualtrack",
    version,
    about = "Synthetic dual-modality tracking harness",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track the configured sequence once per seed and write results.
    Run(RunArgs),
    /// Score a predicted box file against ground truth.
    Eval(EvalArgs),
    /// Run the numeric self-test suite and print a pass/fail table.
    Selftest,
    /// Generate a sequence directory from the config's scene section.
    Gen(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; seeds run in parallel, each writing only its own
    /// `seed_<n>/` directory, so output is independent of scheduling.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    /// Centre-error cutoff in pixels for the precision rate.
    #[arg(long, default_value_t = 20.0)]
    pr_threshold: f64,
    /// Overlap cutoff for the success rate.
    #[arg(long, default_value_t = 0.5)]
    sr_threshold: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted box file.
    pred: PathBuf,
    /// Ground-truth box file.
    truth: PathBuf,
    /// Centre-error cutoff in pixels for the precision rate.
    #[arg(long, default_value_t = 20.0)]
    pr_threshold: f64,
    /// Overlap cutoff for the success rate.
    #[arg(long, default_value_t = 0.5)]
    sr_threshold: f64,
    /// Also write the metrics as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// TOML run configuration; only the `[scene]` section is used.
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving `scene.json` and `groundtruth.txt`.
    #[arg(long)]
    output: PathBuf,
    /// Overrides the scene seed.
    #[arg(long)]
    seed: Option<u64>,
}

/// Command failure split by exit code: validation problems exit 1, runtime
/// problems exit 2.
#[derive(Debug)]
enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Parse { .. } => CliError::Validation(e.to_string()),
            Error::InvalidState(_) | Error::NonDifferentiable(_) | Error::Io(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    // Die quietly when stdout closes early (`dualtrack eval ... | head`),
    // the way other text tools do, instead of panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // `print` routes help to stdout and diagnostics to stderr.
            e.print().expect("writing clap output");
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Selftest => cmd_selftest(),
        Command::Gen(args) => cmd_gen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Per-seed entry in the run summary.
#[derive(Debug, Serialize)]
struct SeedReport {
    seed: u64,
    metrics: SequenceMetrics,
}

/// Aggregate written to `summary.json` at the output-directory root.
#[derive(Debug, Serialize)]
struct RunSummary {
    runs: Vec<SeedReport>,
    mean_precision_rate: f64,
    mean_success_rate: f64,
    mean_success_auc: f64,
}

impl RunSummary {
    fn new(runs: Vec<SeedReport>) -> RunSummary {
        let n = runs.len().max(1) as f64;
        let mean = |f: fn(&SequenceMetrics) -> f64| runs.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
        RunSummary {
            mean_precision_rate: mean(|m| m.precision_rate),
            mean_success_rate: mean(|m| m.success_rate),
            mean_success_auc: mean(|m| m.success_auc),
            runs,
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let mut seeds = match args.seed {
        Some(s) => vec![s],
        None => cfg.run.seeds.clone(),
    };
    seeds.sort_unstable();
    seeds.dedup();

    // An inline scene is stamped with each run seed so the whole run is a
    // function of that one number; a loaded sequence keeps its stored seed
    // (same frames for every run seed, only the parameters differ).
    let (proto, stamp_scene_seed) = match &cfg.run.sequence_dir {
        Some(dir) => {
            let scene: SceneConfig = io::read_json(dir.join("scene.json"))?;
            scene.validate()?;
            if scene.frame_size != cfg.session.frame_size
                || scene.channels != cfg.session.frame_channels
            {
                return Err(CliError::Validation(format!(
                    "sequence at {} is {}px / {} channels, session wants {}px / {}",
                    dir.display(),
                    scene.frame_size,
                    scene.channels,
                    cfg.session.frame_size,
                    cfg.session.frame_channels
                )));
            }
            (scene, false)
        }
        None => (cfg.scene.clone(), true),
    };
    for &c in &cfg.run.checkpoints {
        if c > proto.num_frames {
            return Err(CliError::Validation(format!(
                "checkpoint {c} is beyond the {}-frame sequence",
                proto.num_frames
            )));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs as usize)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let mut reports = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut scene = proto.clone();
                if stamp_scene_seed {
                    scene.seed = seed;
                }
                run_one_seed(&cfg, &scene, seed, args.pr_threshold, args.sr_threshold)
                    .map(|metrics| SeedReport { seed, metrics })
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    reports.sort_by_key(|r| r.seed);

    for r in &reports {
        println!(
            "seed {:>4}: PR {:.4}  SR {:.4}  SR-AUC {:.4}  ({} frames)",
            r.seed, r.metrics.precision_rate, r.metrics.success_rate, r.metrics.success_auc,
            r.metrics.frames
        );
    }
    let summary = RunSummary::new(reports);
    let summary_path = cfg.run.output_dir.join("summary.json");
    io::write_json(&summary_path, &summary)?;
    println!("summary written to {}", summary_path.display());
    Ok(())
}

/// Tracks one sequence end to end and writes everything for one seed.
///
/// The first frame initialises the tracker from ground truth and its output
/// line is that box (the usual one-pass protocol); every later frame is
/// tracked. A snapshot lands after each configured checkpoint (counted in
/// consumed frames, so checkpoint 1 is the freshly initialised pool) and the
/// final pool is always written as `snapshot_final.txt`.
fn run_one_seed(
    cfg: &RunConfig,
    scene: &SceneConfig,
    seed: u64,
    pr_threshold: f64,
    sr_threshold: f64,
) -> Result<SequenceMetrics, CliError> {
    let (frames, truth) = generate(scene)?;
    let session_cfg = cfg.session_config();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let encoder = EncoderParams::seeded(
        session_cfg.layers,
        session_cfg.dim,
        session_cfg.patch,
        session_cfg.frame_channels,
        &mut rng,
    )?;
    let head = HeadParams::seeded(session_cfg.dim, &mut rng)?;
    let adapters = match cfg.adapters.source {
        AdapterSource::Seeded => AdapterParams::seeded(&session_cfg, &mut rng)?,
        AdapterSource::File => {
            let path = cfg.adapters.path.as_ref().expect("checked by validate");
            io::read_json(path)?
        }
    };

    let init_box = truth.first().copied().flatten().ok_or_else(|| {
        CliError::Validation("first frame is occluded; the tracker needs its ground truth".into())
    })?;
    let template = Template::from_frame(&frames[0], &init_box, session_cfg.template_size)?;
    let mut session = TrackerSession::new(session_cfg, encoder, head, adapters, template)?;

    let dir = cfg.run.output_dir.join(format!("seed_{seed}"));
    fs::create_dir_all(&dir)?;

    let mut preds: Vec<Option<BoundingBox>> = Vec::with_capacity(frames.len());
    preds.push(Some(init_box));
    snapshot_if_due(&dir, &cfg.run.checkpoints, 1, session.pool())?;
    for frame in &frames[1..] {
        preds.push(Some(session.track_frame(frame)?));
        snapshot_if_due(&dir, &cfg.run.checkpoints, preds.len(), session.pool())?;
    }

    io::write_box_file(dir.join("boxes.txt"), &preds)?;
    io::write_box_file(dir.join("groundtruth.txt"), &truth)?;
    io::write_snapshot(dir.join("snapshot_final.txt"), session.pool())?;
    let metrics = evaluate(
        &TrackResult::new(preds),
        &GroundTruth::new(truth),
        pr_threshold,
        sr_threshold,
    )?;
    io::write_json(dir.join("metrics.json"), &metrics)?;
    Ok(metrics)
}

fn snapshot_if_due(
    dir: &Path,
    checkpoints: &[usize],
    consumed: usize,
    pool: &MemoryPool,
) -> Result<(), Error> {
    if checkpoints.contains(&consumed) {
        io::write_snapshot(dir.join(format!("snapshot_{consumed:06}.txt")), pool)?;
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let pred = read_boxes_named(&args.pred)?;
    let truth = read_boxes_named(&args.truth)?;
    let metrics = evaluate(
        &TrackResult::new(pred),
        &GroundTruth::new(truth),
        args.pr_threshold,
        args.sr_threshold,
    )?;
    println!("frames          {}", metrics.frames);
    println!(
        "precision_rate  {:.6}  (centre error < {} px)",
        metrics.precision_rate, metrics.pr_threshold
    );
    println!(
        "success_rate    {:.6}  (overlap >= {})",
        metrics.success_rate, metrics.sr_threshold
    );
    println!("success_auc     {:.6}", metrics.success_auc);
    println!("precision       {:.6}", metrics.precision);
    println!("recall          {:.6}", metrics.recall);
    println!("f_score         {:.6}", metrics.f_score);
    if metrics.degenerate {
        println!("note: empty precision/recall denominator; affected values reported as 0");
    }
    if let Some(path) = &args.output {
        io::write_json(path, &metrics)?;
    }
    Ok(())
}

/// Attributes parse and I/O failures to the file they came from.
fn read_boxes_named(path: &Path) -> Result<Vec<Option<BoundingBox>>, CliError> {
    io::read_box_file(path).map_err(|e| {
        let msg = format!("{}: {e}", path.display());
        match e {
            Error::Io(_) => CliError::Runtime(msg),
            _ => CliError::Validation(msg),
        }
    })
}

fn cmd_selftest() -> Result<(), CliError> {
    let results = selftest::run_all();
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut failed = 0usize;
    for r in &results {
        let status = if r.passed { "ok  " } else { "FAIL" };
        println!("{status} {:<width$}  {}", r.name, r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    println!(
        "{} checks: {} passed, {} failed",
        results.len(),
        results.len() - failed,
        failed
    );
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} self-test checks failed")));
    }
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let mut scene = cfg.scene.clone();
    if let Some(s) = args.seed {
        scene.seed = s;
    }
    scene.validate()?;
    let (frames, truth) = generate(&scene)?;
    fs::create_dir_all(&args.output)?;
    io::write_json(args.output.join("scene.json"), &scene)?;
    io::write_box_file(args.output.join("groundtruth.txt"), &truth)?;
    let visible = truth.iter().filter(|b| b.is_some()).count();
    println!(
        "wrote {}-frame sequence ({} visible) to {}",
        frames.len(),
        visible,
        args.output.display()
    );
    Ok(())
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    RunConfig::load(path).map_err(|e| {
        let msg = format!("{}: {e}", path.display());
        match e {
            Error::Io(_) => CliError::Runtime(msg),
            _ => CliError::Validation(msg),
        }
    })
}
