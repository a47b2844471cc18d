//! Network accuracy against the Bayes ceiling over a grid of exponent gaps.

use boclab::fliplab::{alpha_grid, AlphaGridConfig, AlphaGridResult};
use boclab::quadnet::TrainConfig;
use serde::{Deserialize, Serialize};

use super::Status;
use crate::error::{CliError, CliResult};
use crate::render::{render_svg, PlotSpec, Table};
use crate::rundir::RunDir;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaGridParams {
    pub dim: usize,
    pub alpha: f64,
    pub delta_alpha_values: Vec<f64>,
    pub hidden_width: usize,
    pub n_train_per_class: usize,
    pub n_test_per_class: usize,
    pub runs: usize,
    pub train: TrainConfig,
}

impl Default for AlphaGridParams {
    fn default() -> Self {
        Self {
            dim: 20,
            alpha: 0.2,
            delta_alpha_values: vec![-0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2],
            hidden_width: 20,
            n_train_per_class: 5000,
            n_test_per_class: 5000,
            runs: 5,
            train: TrainConfig { steps: 500, ..TrainConfig::default() },
        }
    }
}

pub fn compute(p: &AlphaGridParams, master: u64) -> CliResult<AlphaGridResult> {
    if p.dim == 0 || p.hidden_width == 0 {
        return Err(CliError::Config("alpha-grid needs positive dim and hidden width".into()));
    }
    let cfg = AlphaGridConfig {
        dim: p.dim,
        alpha: p.alpha,
        delta_alpha_values: p.delta_alpha_values.clone(),
        hidden_width: p.hidden_width,
        n_train_per_class: p.n_train_per_class,
        n_test_per_class: p.n_test_per_class,
        runs: p.runs,
        seed: master,
        train: p.train.clone(),
    };
    Ok(alpha_grid(&cfg)?)
}

pub fn run(p: &AlphaGridParams, master: u64, out: &mut RunDir) -> CliResult<Status> {
    let r = compute(p, master)?;
    out.seed_link("basis", boclab::seed::child(master, 0));
    let mut t = Table::new(&["delta_alpha", "mean_accuracy", "std_accuracy", "boc_accuracy"]);
    for j in 0..r.delta_alpha_values.len() {
        t.push(vec![r.delta_alpha_values[j], r.mean_accuracy[j], r.std_accuracy[j], r.boc_accuracy[j]]);
    }
    out.write("alpha_grid.csv", t.to_csv().as_bytes())?;
    let mut runs = Table::new(&["delta_alpha", "run", "accuracy"]);
    for (j, accs) in r.run_accuracy.iter().enumerate() {
        for (k, a) in accs.iter().enumerate() {
            runs.push(vec![r.delta_alpha_values[j], k as f64, *a]);
        }
    }
    out.write("runs.csv", runs.to_csv().as_bytes())?;
    let mut lines = Table::new(&["delta_alpha", "network", "boc"]);
    for j in 0..r.delta_alpha_values.len() {
        lines.push(vec![r.delta_alpha_values[j], r.mean_accuracy[j], r.boc_accuracy[j]]);
    }
    let spec = PlotSpec { title: format!("accuracy, α = {}", p.alpha), x_label: "Δα".into(), y_label: "accuracy".into(), ..PlotSpec::default() };
    out.write("alpha_grid.svg", render_svg(None, Some(&lines), &spec)?.as_bytes())?;
    out.write_json("alpha_grid.json", &r)?;
    Ok(Status::Ok)
}
