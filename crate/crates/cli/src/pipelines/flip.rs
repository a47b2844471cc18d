//! Flip sweeps along the eigenvector and eigenvalue axes for the Bayes rule,
//! a trained network, a saved checkpoint or external verdict files.

use std::path::PathBuf;

use boclab::boc::build_rule;
use boclab::fliplab::{flip_sweep, flip_sweep_from_verdicts, sweep_samples, FlipAxis, FlipOptions, FlipSweepResult, HeldAxis, Labeled, VerdictTable};
use boclab::matio;
use boclab::quadnet::{self, load_checkpoint, TrainConfig};
use boclab::sampler::make_gmm_dataset;
use boclab::{seed, CovarianceModel, QuadNetParams};
use serde::{Deserialize, Serialize};

use super::{link_basis, basis_seeds, power_law_pair, train::write_checkpoint, BasisMode, Status};
use crate::error::{CliError, CliResult};
use crate::render::{render_svg, PlotSpec, Table};
use crate::rundir::RunDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Boc,
    /// A network trained on the `(c1, c2)` mixture inside the run.
    Quadnet,
    /// The network stored at `checkpoint`.
    Checkpoint,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Boc => "boc",
            ClassifierKind::Quadnet => "quadnet",
            ClassifierKind::Checkpoint => "checkpoint",
        }
    }
}

fn axis_name(axis: FlipAxis) -> &'static str {
    match axis {
        FlipAxis::Eigenvector => "eigenvector",
        FlipAxis::Eigenvalue => "eigenvalue",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictFile {
    pub axis: FlipAxis,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkParams {
    pub hidden_width: usize,
    pub n_per_class: usize,
    pub train: TrainConfig,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self { hidden_width: 32, n_per_class: 5000, train: TrainConfig { steps: 300, log_every: 50, ..TrainConfig::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlipParams {
    pub dim: usize,
    pub alpha_a: f64,
    pub delta_alpha: f64,
    pub basis: BasisMode,
    pub basis_seeds: Option<[u64; 2]>,
    pub n_eval: usize,
    pub thresholds: Option<Vec<usize>>,
    pub axes: Vec<FlipAxis>,
    pub hold: HeldAxis,
    pub project: bool,
    pub floor: f64,
    pub invalid_tol: f64,
    pub classifiers: Vec<ClassifierKind>,
    pub network: NetworkParams,
    pub checkpoint: Option<PathBuf>,
    pub verdicts: Vec<VerdictFile>,
    /// Thresholds whose evaluation samples are written out, for classifiers
    /// that run outside this program.
    pub export_samples: Vec<usize>,
}

impl Default for FlipParams {
    fn default() -> Self {
        let o = FlipOptions::default();
        Self {
            dim: 128,
            alpha_a: 0.5,
            delta_alpha: -0.2,
            basis: BasisMode::Independent,
            basis_seeds: None,
            n_eval: o.n_eval,
            thresholds: None,
            axes: vec![FlipAxis::Eigenvector, FlipAxis::Eigenvalue],
            hold: o.hold,
            project: o.project,
            floor: o.floor,
            invalid_tol: o.invalid_tol,
            classifiers: vec![ClassifierKind::Boc, ClassifierKind::Quadnet],
            network: NetworkParams::default(),
            checkpoint: None,
            verdicts: Vec::new(),
            export_samples: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub classifier: String,
    pub classifier_id: String,
    pub axis: FlipAxis,
    pub flip_point: Option<usize>,
    pub min_fraction: f64,
    pub max_fraction: f64,
    pub invalid_thresholds: usize,
    pub max_floor_adjustment: f64,
    pub seed: u64,
}

impl SweepSummary {
    fn new(classifier: &str, r: &FlipSweepResult) -> Self {
        let valid = r.fraction_class_a.iter().flatten();
        Self {
            classifier: classifier.to_string(),
            classifier_id: r.classifier_id.clone(),
            axis: r.axis,
            flip_point: r.flip_point,
            min_fraction: valid.clone().copied().fold(f64::INFINITY, f64::min),
            max_fraction: valid.copied().fold(f64::NEG_INFINITY, f64::max),
            invalid_thresholds: r.fraction_class_a.iter().filter(|f| f.is_none()).count(),
            max_floor_adjustment: r.floor_adjustment.iter().copied().fold(0.0, f64::max),
            seed: r.seed,
        }
    }
}

pub struct FlipRun {
    pub sweeps: Vec<(String, FlipSweepResult)>,
    pub network: Option<quadnet::TrainOutcome<f64>>,
    pub models: (CovarianceModel<f64>, CovarianceModel<f64>),
    pub options: FlipOptions,
}

pub fn options(p: &FlipParams, master: u64) -> FlipOptions {
    FlipOptions {
        n_eval: p.n_eval,
        seed: seed::child(master, 5),
        thresholds: p.thresholds.clone(),
        hold: p.hold,
        project: p.project,
        floor: p.floor,
        invalid_tol: p.invalid_tol,
    }
}

pub fn compute(p: &FlipParams, master: u64) -> CliResult<FlipRun> {
    if p.axes.is_empty() || (p.classifiers.is_empty() && p.verdicts.is_empty()) {
        return Err(CliError::Config("flip-sweep needs at least one axis and one classifier or verdict file".into()));
    }
    let (c1, c2) = power_law_pair(p.dim, p.alpha_a, p.alpha_a + p.delta_alpha, p.basis, basis_seeds(master, p.basis_seeds))?;
    let opts = options(p, master);
    let mut sweeps = Vec::new();
    let mut network = None;
    for &kind in &p.classifiers {
        let net: QuadNetParams<f64>;
        let rule;
        let classifier: &dyn boclab::fliplab::Classifier<f64> = match kind {
            ClassifierKind::Boc => {
                rule = build_rule(&c1, &c2)?;
                &rule
            }
            ClassifierKind::Quadnet => {
                let ds = make_gmm_dataset(&c1, &c2, p.network.n_per_class, seed::child(master, 1))?;
                let cfg = TrainConfig { seed: seed::child(master, 3), ..p.network.train.clone() };
                let out = quadnet::train(&ds, p.network.hidden_width, &cfg)?;
                net = out.params.clone();
                network = Some(out);
                &net
            }
            ClassifierKind::Checkpoint => {
                let path = p.checkpoint.as_ref().ok_or_else(|| CliError::Config("classifier `checkpoint` needs `checkpoint`".into()))?;
                net = load_checkpoint(path)?.0;
                &net
            }
        };
        let labeled = match kind {
            ClassifierKind::Checkpoint => Labeled { id: format!("checkpoint:{}", p.checkpoint.as_ref().unwrap().display()), inner: classifier },
            _ => Labeled { id: classifier.id(), inner: classifier },
        };
        for &axis in &p.axes {
            sweeps.push((kind.name().to_string(), flip_sweep(&c1, &c2, axis, &labeled, &opts)?));
        }
    }
    for (k, v) in p.verdicts.iter().enumerate() {
        let table = VerdictTable::read(&v.path)?;
        sweeps.push((format!("verdicts{k}"), flip_sweep_from_verdicts(&c1, &c2, v.axis, &table, &opts)?));
    }
    Ok(FlipRun { sweeps, network, models: (c1, c2), options: opts })
}

pub fn run(p: &FlipParams, master: u64, out: &mut RunDir) -> CliResult<Status> {
    if let Some(c) = &p.checkpoint {
        out.add_input(c)?;
    }
    for v in &p.verdicts {
        out.add_input(&v.path)?;
    }
    let r = compute(p, master)?;
    link_basis(out, p.basis, basis_seeds(master, p.basis_seeds));
    out.seed_link("sweep_samples", r.options.seed);
    if let Some(n) = &r.network {
        out.seed_link("train_data", seed::child(master, 1));
        out.seed_link("init", seed::child(master, 3));
        let cfg = TrainConfig { seed: seed::child(master, 3), ..p.network.train.clone() };
        write_checkpoint(out, "quadnet.bocm", &n.params, n.steps, &cfg)?;
    }
    let mut summaries = Vec::new();
    for (name, s) in &r.sweeps {
        out.write(&format!("flip_{name}_{}.csv", axis_name(s.axis)), s.to_csv().as_bytes())?;
        summaries.push(SweepSummary::new(name, s));
    }
    for &axis in &p.axes {
        let mine: Vec<&(String, FlipSweepResult)> = r.sweeps.iter().filter(|s| s.1.axis == axis).collect();
        let Some(first) = mine.first() else { continue };
        let mut cols = vec!["tau"];
        cols.extend(mine.iter().map(|s| s.0.as_str()));
        let mut t = Table::new(&cols);
        for (k, &tau) in first.1.thresholds.iter().enumerate() {
            let mut row = vec![tau as f64];
            row.extend(mine.iter().map(|s| s.1.fraction_class_a[k].unwrap_or(f64::NAN)));
            t.push(row);
        }
        let spec = PlotSpec {
            title: format!("{} sweep", axis_name(axis)),
            x_label: "τ".into(),
            y_label: "fraction classified A".into(),
            ..PlotSpec::default()
        };
        out.write(&format!("flip_{}.svg", axis_name(axis)), render_svg(None, Some(&t), &spec)?.as_bytes())?;
    }
    for &tau in &p.export_samples {
        for &axis in &p.axes {
            if let Some(x) = sweep_samples(&r.models.0, &r.models.1, axis, tau, &r.options)? {
                out.write(&format!("samples/{}_tau{tau}.csv", axis_name(axis)), matio::to_csv(&x).as_bytes())?;
            }
        }
    }
    out.write_json("flip_summary.json", &summaries)?;
    Ok(Status::Ok)
}
