use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use oet_core::diagnostics::run_solver_checks;
use oet_core::embedding::E2Formula;
use oet_core::features::BoundingBox;
use oet_core::metrics::evaluate;
use oet_core::sequence_io::{load_config, load_sequence, read_groundtruth, write_results, write_sequence};
use oet_core::synth::{generate_sequence, parse_synth_spec, SynthSpec};
use oet_core::tracker::{FrameOutcome, Tracker, TrackerConfig};

/// Visual tracking with discriminative orthogonal subspace embedding.
///
/// Settings resolve as: command-line flags, then config-file keys, then
/// built-in defaults.
#[derive(Parser)]
#[command(name = "oet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track the target through a sequence directory.
    Track {
        /// Directory with `img/` and optionally `groundtruth_rect.txt`.
        sequence_dir: PathBuf,
        /// Where to write one `x,y,w,h` line per frame.
        #[arg(short, long)]
        out: PathBuf,
        /// Flat `key = value` tracker configuration.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// RNG seed; overrides the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Initial box `x,y,w,h`; defaults to the first ground-truth line.
        #[arg(long, value_parser = parse_box)]
        init: Option<BoundingBox>,
        /// Scoring threads; 0 uses all available cores.
        #[arg(long, env = "OET_WORKERS", default_value_t = 0)]
        workers: usize,
    },
    /// Score tracking results against ground truth.
    Eval {
        results: PathBuf,
        ground_truth: PathBuf,
        /// Key-value report; curves go next to it as `<stem>_precision.csv`
        /// and `<stem>_success.csv`.
        #[arg(short, long)]
        report: PathBuf,
    },
    /// Render a synthetic sequence.
    Synth {
        /// `key = value` scene description; defaults apply when absent.
        #[arg(short, long)]
        spec: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        /// Overrides the scene file's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the seeded solver self-checks; exits 2 if any fails.
    SolverCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print every objective trace.
        #[arg(short, long)]
        verbose: bool,
        /// Use the wrong-sign coupling step.
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
    },
}

fn parse_box(s: &str) -> std::result::Result<BoundingBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|f| f.trim().parse::<f64>().map_err(|_| format!("`{f}` is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != 4 {
        return Err(format!("expected x,y,w,h, got {} fields", v.len()));
    }
    BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Track { sequence_dir, out, config, seed, init, workers } => {
            cmd_track(&sequence_dir, config.as_deref(), &out, seed, init, workers)
        }
        Command::Eval { results, ground_truth, report } => cmd_eval(&results, &ground_truth, &report),
        Command::Synth { spec, out, seed } => cmd_synth(spec.as_deref(), &out, seed),
        Command::SolverCheck { seed, verbose, inject_sign_flip } => {
            return match cmd_solver_check(seed, verbose, inject_sign_flip) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(2),
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(2)
                }
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_track(
    dir: &Path,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    init: Option<BoundingBox>,
    workers: usize,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => load_config(p).with_context(|| format!("loading config {}", p.display()))?,
        None => TrackerConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let manifest = load_sequence(dir).with_context(|| format!("loading sequence {}", dir.display()))?;
    let init = match (init, &manifest.ground_truth) {
        (Some(b), _) => b,
        (None, Some(gt)) => gt[0],
        (None, None) => bail!("no ground truth in {}; pass the initial box with --init x,y,w,h", dir.display()),
    };

    let start = Instant::now();
    let first = manifest.load_frame(0)?;
    let mut tracker = Tracker::new(&first, init, cfg, workers).context("initializing the tracker")?;
    drop(first);
    let mut outcomes = vec![FrameOutcome { bbox: init, psi: None, failed: false, relearned: true }];
    for i in 1..manifest.len() {
        let frame = manifest.load_frame(i)?;
        outcomes.push(tracker.step(&frame).with_context(|| format!("tracking frame {i}"))?);
    }
    let boxes: Vec<BoundingBox> = outcomes.iter().map(|o| o.bbox).collect();
    write_results(out, &boxes).with_context(|| format!("writing {}", out.display()))?;

    let psi: Vec<f64> = outcomes.iter().filter_map(|o| o.psi).collect();
    let mean_psi = if psi.is_empty() { f64::NAN } else { psi.iter().sum::<f64>() / psi.len() as f64 };
    let failed = outcomes.iter().filter(|o| o.failed).count();
    println!(
        "frames = {}, mean psi = {:.4}, relearns = {}, failed frames = {}, wall time = {:.2} s",
        boxes.len(),
        mean_psi,
        tracker.relearn_count(),
        failed,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn sibling(report: &Path, suffix: &str) -> PathBuf {
    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    report.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn cmd_eval(results: &Path, gt: &Path, report: &Path) -> Result<()> {
    let res = read_groundtruth(results).with_context(|| format!("reading {}", results.display()))?;
    let truth = read_groundtruth(gt).with_context(|| format!("reading {}", gt.display()))?;
    let r = evaluate(&res, &truth)?;
    std::fs::write(report, r.to_key_value()).with_context(|| format!("writing {}", report.display()))?;
    std::fs::write(sibling(report, "precision"), r.precision_csv())?;
    std::fs::write(sibling(report, "success"), r.success_csv())?;
    println!("precision@20 = {:.3}, auc = {:.3}", r.precision_at_20, r.auc);
    Ok(())
}

fn cmd_synth(spec: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut spec = match spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_synth_spec(&text)?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let seq = generate_sequence(&spec)?;
    write_sequence(out, &seq.frames, &seq.ground_truth).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} frames to {}", seq.frames.len(), out.display());
    Ok(())
}

fn cmd_solver_check(seed: u64, verbose: bool, inject_sign_flip: bool) -> Result<bool> {
    let formula = if inject_sign_flip { E2Formula::SignFlipped } else { E2Formula::Stationary };
    let checks = run_solver_checks(seed, formula)?;
    let mut all = true;
    for c in &checks {
        println!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
        if verbose {
            for (i, trace) in c.traces.iter().enumerate() {
                let values: Vec<String> = trace.iter().map(|v| format!("{v:.10e}")).collect();
                println!("  run {i}: {}", values.join(" "));
            }
        }
        all &= c.passed;
    }
    Ok(all)
}
