use std::path::{Path, PathBuf};
use std::process::ExitCode;

use boclab_cli::config::{resolve, ExperimentConfig};
use boclab_cli::error::{CliError, CliResult};
use boclab_cli::pipelines::Status;
use boclab_cli::render::{render_svg, PlotSpec, Table};
use boclab_cli::rundir::{write_atomic, RunDir};
use boclab_cli::{defaults, execute, replay};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Parser)]
#[command(name = "boclab", version, about = "Seeded experiments on Gaussian classes that differ only in covariance")]
struct Cli {
    /// JSON config: `{"seed": .., "params": {..}}` or a flat params object.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root for run directories.
    #[arg(long, global = true, env = "BOCLAB_OUT")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override a config value, e.g. `--set train.steps=500`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Print the resolved config and exit.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discriminant histograms with the exact density overlaid.
    BetaHist(BetaHistArgs),
    /// Train a quadratic network and compare it with the Bayes rule.
    TrainQuadnet(TrainArgs),
    /// Max-margin stationarity diagnostics and the fixed-point solver.
    Kkt(KktArgs),
    /// Network and Bayes accuracy over a grid of exponent gaps.
    AlphaGrid(AlphaGridArgs),
    /// Eigenvector and eigenvalue flip sweeps.
    FlipSweep(FlipArgs),
    /// Plug-in discriminant error against γ = d/N.
    EmpiricalScaling(ScalingArgs),
    /// Write a power-law covariance model.
    GenCov(GenCovArgs),
    /// Draw samples from a saved model.
    Sample(SampleArgs),
    /// Whiten samples for one model and colour them to another.
    Recolor(RecolorArgs),
    /// Render a CSV as an SVG histogram or line plot.
    Render(RenderArgs),
    /// Re-run a recorded run and compare CSV checksums.
    Replay(ReplayArgs),
}

#[derive(Default)]
struct Flags(Map<String, Value>);

impl Flags {
    fn put<T: Serialize>(&mut self, key: &str, v: Option<T>) -> &mut Self {
        if let Some(v) = v {
            self.0.insert(key.into(), serde_json::to_value(v).expect("flag value serializes"));
        }
        self
    }

    fn put_nested<T: Serialize>(&mut self, outer: &str, key: &str, v: Option<T>) -> &mut Self {
        if let Some(v) = v {
            let slot = self.0.entry(outer.to_string()).or_insert_with(|| Value::Object(Map::new()));
            if let Value::Object(m) = slot {
                m.insert(key.into(), serde_json::to_value(v).expect("flag value serializes"));
            }
        }
        self
    }

    fn list<T: Serialize>(&mut self, key: &str, v: &[T]) -> &mut Self {
        if !v.is_empty() {
            self.0.insert(key.into(), serde_json::to_value(v).expect("flag value serializes"));
        }
        self
    }

    fn done(&mut self) -> Value {
        Value::Object(std::mem::take(&mut self.0))
    }
}

#[derive(Args)]
struct BetaHistArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    alpha_a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta_alpha: Option<f64>,
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    haar_pairs: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    alpha_a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta_alpha: Option<f64>,
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long)]
    hidden_width: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct KktArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long)]
    hidden_width: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lambda_scale: Option<f64>,
}

#[derive(Args)]
struct AlphaGridArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated Δα values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    delta_alpha: Vec<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct FlipArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    alpha_a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta_alpha: Option<f64>,
    #[arg(long)]
    n_eval: Option<usize>,
    /// `eigenvector` or `eigenvalue`; repeatable.
    #[arg(long = "axis")]
    axes: Vec<String>,
    /// `boc`, `quadnet` or `checkpoint`; repeatable.
    #[arg(long = "classifier")]
    classifiers: Vec<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Thresholds whose samples are exported (comma-separated).
    #[arg(long, value_delimiter = ',')]
    export_samples: Vec<usize>,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    gammas: Vec<f64>,
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Args)]
struct GenCovArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// `haar` or `identity`.
    #[arg(long)]
    basis: Option<String>,
    #[arg(long)]
    basis_seed: Option<u64>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct RecolorArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    /// `model` or `empirical`.
    #[arg(long)]
    centering: Option<String>,
}

#[derive(Args)]
struct RenderArgs {
    /// Histogram (`bin_left,bin_right,…`) or line table (`x,…`).
    csv: PathBuf,
    /// Line table overlaid on a histogram.
    #[arg(long)]
    lines: Option<PathBuf>,
    /// Plot spec JSON (title, labels, columns, markers).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    title: Option<String>,
    #[arg(long)]
    x_label: Option<String>,
    #[arg(long)]
    y_label: Option<String>,
    /// Defaults to the input path with an `.svg` extension.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Run directory or its manifest.
    run: PathBuf,
}

/// Prints a line, ignoring a closed stdout.
fn say(args: std::fmt::Arguments) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{args}");
}

fn absolute(p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| std::path::absolute(&p).unwrap_or(p))
}

fn experiment(cmd: &Command) -> Option<(&'static str, Value)> {
    let mut f = Flags::default();
    Some(match cmd {
        Command::BetaHist(a) => (
            "beta-hist",
            f.put("dim", a.dim)
                .put("alpha_a", a.alpha_a)
                .put("delta_alpha", a.delta_alpha)
                .put("n_per_class", a.n_per_class)
                .put("bins", a.bins)
                .put("haar_pairs", a.haar_pairs)
                .done(),
        ),
        Command::TrainQuadnet(a) => (
            "train-quadnet",
            f.put("dim", a.dim)
                .put("alpha_a", a.alpha_a)
                .put("delta_alpha", a.delta_alpha)
                .put("n_per_class", a.n_per_class)
                .put("hidden_width", a.hidden_width)
                .put_nested("train", "steps", a.steps)
                .put_nested("train", "learning_rate", a.learning_rate)
                .done(),
        ),
        Command::Kkt(a) => (
            "kkt",
            f.put("dim", a.dim)
                .put("n_per_class", a.n_per_class)
                .put("hidden_width", a.hidden_width)
                .put("lambda_scale", a.lambda_scale)
                .put_nested("train", "steps", a.steps)
                .done(),
        ),
        Command::AlphaGrid(a) => (
            "alpha-grid",
            f.put("dim", a.dim).put("alpha", a.alpha).list("delta_alpha_values", &a.delta_alpha).put("runs", a.runs).put_nested("train", "steps", a.steps).done(),
        ),
        Command::FlipSweep(a) => (
            "flip-sweep",
            f.put("dim", a.dim)
                .put("alpha_a", a.alpha_a)
                .put("delta_alpha", a.delta_alpha)
                .put("n_eval", a.n_eval)
                .list("axes", &a.axes)
                .list("classifiers", &a.classifiers)
                .put("checkpoint", absolute(a.checkpoint.clone()))
                .list("export_samples", &a.export_samples)
                .done(),
        ),
        Command::EmpiricalScaling(a) => ("empirical-scaling", f.put("dim", a.dim).list("gammas", &a.gammas).put("reps", a.reps).done()),
        Command::GenCov(a) => (
            "gen-cov",
            f.put("dim", a.dim).put("alpha", a.alpha).put("basis", a.basis.clone()).put("basis_seed", a.basis_seed).done(),
        ),
        Command::Sample(a) => ("sample", f.put("model", absolute(a.model.clone())).put("n", a.n).done()),
        Command::Recolor(a) => (
            "recolor",
            f.put("input", absolute(a.input.clone()))
                .put("source", absolute(a.source.clone()))
                .put("target", absolute(a.target.clone()))
                .put("centering", a.centering.clone())
                .done(),
        ),
        Command::Render(_) | Command::Replay(_) => return None,
    })
}

fn render(a: &RenderArgs) -> CliResult<PathBuf> {
    let table = Table::read(&a.csv)?;
    let mut spec: PlotSpec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => PlotSpec::default(),
    };
    for (slot, v) in [(&mut spec.title, &a.title), (&mut spec.x_label, &a.x_label), (&mut spec.y_label, &a.y_label)] {
        if let Some(v) = v {
            *slot = v.clone();
        }
    }
    let is_hist = table.index("bin_left").is_some();
    let lines = a.lines.as_deref().map(Table::read).transpose()?;
    let svg = if is_hist { render_svg(Some(&table), lines.as_ref(), &spec)? } else { render_svg(None, Some(&table), &spec)? };
    let out = a.output.clone().unwrap_or_else(|| a.csv.with_extension("svg"));
    write_atomic(&out, svg.as_bytes())?;
    Ok(out)
}

fn run_experiment(cli: &Cli, command: &str, flags: Value, root: &Path) -> CliResult<ExitCode> {
    let cfg: ExperimentConfig = resolve(command, defaults(command)?, cli.config.as_deref(), &cli.sets, flags, cli.seed)?;
    if cli.dry_run {
        say(format_args!("{}", cfg.canonical_json()));
        return Ok(ExitCode::SUCCESS);
    }
    let outcome = execute(&cfg, root)?;
    say(format_args!("{}", outcome.dir.display()));
    Ok(match outcome.status {
        Status::Ok => ExitCode::SUCCESS,
        Status::Numerical(m) => {
            log::error!("{m}");
            ExitCode::from(1)
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    let root = RunDir::root(cli.out.as_deref());
    let result = match &cli.command {
        Command::Render(a) => render(a).map(|p| {
            say(format_args!("{}", p.display()));
            ExitCode::SUCCESS
        }),
        Command::Replay(a) => replay(&a.run, &root).map(|r| {
            say(format_args!("{}", r.rerun.dir.display()));
            if r.mismatched.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: replay differs in {}", r.mismatched.join(", "));
                ExitCode::from(3)
            }
        }),
        cmd => {
            let (name, flags) = experiment(cmd).expect("experiment subcommand");
            run_experiment(&cli, name, flags, &root)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
