//! Experiment runner for `boclab`: layered configs, seeded pipelines, run
//! directories with checksummed manifests, and SVG rendering.

pub mod config;
pub mod error;
pub mod pipelines;
pub mod render;
pub mod rundir;

use std::path::{Path, PathBuf};

use serde_json::Value;

use config::ExperimentConfig;
use error::{CliError, CliResult};
use pipelines::{alpha_grid, beta_hist, data, flip, kkt, scaling, train, Status};
use rundir::{RunDir, RunManifest};

/// Subcommands that produce a run directory.
pub const EXPERIMENTS: [&str; 9] =
    ["beta-hist", "train-quadnet", "kkt", "alpha-grid", "flip-sweep", "empirical-scaling", "gen-cov", "sample", "recolor"];

/// Default `params` object for an experiment subcommand.
pub fn defaults(command: &str) -> CliResult<Value> {
    let v = match command {
        "beta-hist" => serde_json::to_value(beta_hist::BetaHistParams::default()),
        "train-quadnet" => serde_json::to_value(train::TrainQuadnetParams::default()),
        "kkt" => serde_json::to_value(kkt::KktParams::default()),
        "alpha-grid" => serde_json::to_value(alpha_grid::AlphaGridParams::default()),
        "flip-sweep" => serde_json::to_value(flip::FlipParams::default()),
        "empirical-scaling" => serde_json::to_value(scaling::ScalingParams::default()),
        "gen-cov" => serde_json::to_value(data::GenCovParams::default()),
        "sample" => serde_json::to_value(data::SampleParams::default()),
        "recolor" => serde_json::to_value(data::RecolorParams::default()),
        other => return Err(CliError::Config(format!("unknown subcommand `{other}`"))),
    };
    Ok(v?)
}

enum Plan {
    BetaHist(beta_hist::BetaHistParams),
    Train(train::TrainQuadnetParams),
    Kkt(kkt::KktParams),
    AlphaGrid(alpha_grid::AlphaGridParams),
    Flip(flip::FlipParams),
    Scaling(scaling::ScalingParams),
    GenCov(data::GenCovParams),
    Sample(data::SampleParams),
    Recolor(data::RecolorParams),
}

fn plan(cfg: &ExperimentConfig) -> CliResult<Plan> {
    Ok(match cfg.command.as_str() {
        "beta-hist" => Plan::BetaHist(cfg.typed()?),
        "train-quadnet" => Plan::Train(cfg.typed()?),
        "kkt" => Plan::Kkt(cfg.typed()?),
        "alpha-grid" => Plan::AlphaGrid(cfg.typed()?),
        "flip-sweep" => Plan::Flip(cfg.typed()?),
        "empirical-scaling" => Plan::Scaling(cfg.typed()?),
        "gen-cov" => Plan::GenCov(cfg.typed()?),
        "sample" => Plan::Sample(cfg.typed()?),
        "recolor" => Plan::Recolor(cfg.typed()?),
        other => return Err(CliError::Config(format!("unknown subcommand `{other}`"))),
    })
}

/// A finished run.
#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub status: Status,
}

/// Validates `cfg`, runs it into a fresh directory under `root` and writes
/// the manifest. A rejected config leaves no directory; any other failure
/// leaves a manifest whose status records the error.
pub fn execute(cfg: &ExperimentConfig, root: &Path) -> CliResult<RunOutcome> {
    let plan = plan(cfg)?;
    let mut out = RunDir::create(root, cfg)?;
    let seed = cfg.seed;
    let result = match &plan {
        Plan::BetaHist(p) => beta_hist::run(p, seed, &mut out),
        Plan::Train(p) => train::run(p, seed, &mut out),
        Plan::Kkt(p) => kkt::run(p, seed, &mut out),
        Plan::AlphaGrid(p) => alpha_grid::run(p, seed, &mut out),
        Plan::Flip(p) => flip::run(p, seed, &mut out),
        Plan::Scaling(p) => scaling::run(p, seed, &mut out),
        Plan::GenCov(p) => data::run_gen_cov(p, seed, &mut out),
        Plan::Sample(p) => data::run_sample(p, seed, &mut out),
        Plan::Recolor(p) => data::run_recolor(p, &mut out),
    };
    let dir = out.path.clone();
    match result {
        Ok(status) => {
            let manifest = out.finish(&status.describe())?;
            Ok(RunOutcome { dir, manifest, status })
        }
        Err(e @ CliError::Config(_)) => {
            let _ = std::fs::remove_dir_all(&dir);
            Err(e)
        }
        Err(e) => {
            out.finish(&format!("error: {e}"))?;
            Err(e)
        }
    }
}

/// Result of re-running a recorded configuration.
#[derive(Debug)]
pub struct Replay {
    pub original: RunManifest,
    pub rerun: RunOutcome,
    /// CSV files whose checksums differ or that exist in only one run.
    pub mismatched: Vec<String>,
}

/// Re-runs `dir/config.json` under `root` and compares CSV checksums with the
/// recorded manifest.
pub fn replay(dir: &Path, root: &Path) -> CliResult<Replay> {
    let (original, tampered) = rundir::verify(dir)?;
    if !tampered.is_empty() {
        return Err(CliError::Input(format!("{}: files changed since the run: {}", dir.display(), tampered.join(", "))));
    }
    let (run_dir, _) = rundir::manifest_location(dir);
    let cfg = ExperimentConfig::read(&run_dir.join(rundir::CONFIG_FILE))?;
    let rerun = execute(&cfg, root)?;
    let csv = |m: &RunManifest| -> Vec<(String, String)> {
        m.files.iter().filter(|f| f.path.ends_with(".csv")).map(|f| (f.path.clone(), f.sha256.clone())).collect()
    };
    let (a, b) = (csv(&original), csv(&rerun.manifest));
    let mut mismatched: Vec<String> = a.iter().filter(|x| !b.contains(x)).map(|x| x.0.clone()).collect();
    mismatched.extend(b.iter().filter(|x| !a.iter().any(|y| y.0 == x.0)).map(|x| x.0.clone()));
    mismatched.sort();
    mismatched.dedup();
    Ok(Replay { original, rerun, mismatched })
}
