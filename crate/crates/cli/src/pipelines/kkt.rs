//! Max-margin diagnostics: train a bias-free network on a small rotated
//! dataset, check the KKT stationarity of its margin-normalised parameters,
//! and solve the fixed-point equations directly.

use boclab::boc::{held_out_accuracy, AccuracyEstimate};
use boclab::quadnet::{self, kkt_fixed_point, kkt_fixed_point_from, kkt_report, FixedPointOptions, KktReport, Optimizer, TrainConfig};
use boclab::sampler::make_gmm_dataset;
use boclab::seed;
use serde::{Deserialize, Serialize};

use super::{link_basis, basis_seeds, power_law_pair, train::history_table, train::write_checkpoint, BasisMode, Status};
use crate::error::{CliError, CliResult};
use crate::render::Table;
use crate::rundir::RunDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointStart {
    /// The trained network's direction.
    Trained,
    /// A seeded random direction.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KktParams {
    pub dim: usize,
    pub alpha_a: f64,
    pub delta_alpha: f64,
    pub basis: BasisMode,
    pub basis_seeds: Option<[u64; 2]>,
    pub n_per_class: usize,
    pub n_test_per_class: usize,
    pub hidden_width: usize,
    /// `use_bias` is forced off.
    pub train: TrainConfig,
    /// Fixed `s`; fitted at the trained network when absent.
    pub lambda_scale: Option<f64>,
    pub fixed_point: FixedPointOptions,
    pub fixed_point_start: FixedPointStart,
    pub residual_threshold: f64,
    pub fixed_point_tolerance: f64,
}

impl Default for KktParams {
    fn default() -> Self {
        Self {
            dim: 20,
            alpha_a: 0.2,
            delta_alpha: 0.0,
            basis: BasisMode::Independent,
            basis_seeds: None,
            n_per_class: 50,
            n_test_per_class: 10_000,
            hidden_width: 20,
            train: TrainConfig {
                learning_rate: 0.01,
                steps: 20_000,
                use_bias: false,
                optimizer: Optimizer::adam(),
                log_every: 500,
                ..TrainConfig::default()
            },
            lambda_scale: None,
            fixed_point: FixedPointOptions::default(),
            fixed_point_start: FixedPointStart::Trained,
            residual_threshold: 0.1,
            fixed_point_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSummary {
    pub lambda_scale: f64,
    pub converged: bool,
    pub iterations: usize,
    pub update_norm: f64,
    pub residual_v: f64,
    pub residual_w: f64,
    pub test: AccuracyEstimate,
    pub report: KktReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktSummary {
    pub train_status: String,
    pub train_accuracy: f64,
    pub trained_test: AccuracyEstimate,
    pub trained: KktReport,
    pub fixed_point: FixedPointSummary,
    pub residual_pass: bool,
    pub fixed_point_pass: bool,
    /// Trained minus fixed-point test accuracy.
    pub accuracy_gap: f64,
}

pub struct KktRun {
    pub summary: KktSummary,
    pub trained: quadnet::TrainOutcome<f64>,
    pub fixed: boclab::QuadNetParams<f64>,
}

pub fn compute(p: &KktParams, master: u64) -> CliResult<KktRun> {
    if p.dim == 0 || p.n_per_class == 0 || p.hidden_width == 0 || p.n_test_per_class == 0 {
        return Err(CliError::Config("kkt needs positive dim, sample counts and hidden width".into()));
    }
    let seeds = basis_seeds(master, p.basis_seeds);
    let (ca, cb) = power_law_pair(p.dim, p.alpha_a, p.alpha_a + p.delta_alpha, p.basis, seeds)?;
    let ds = make_gmm_dataset(&ca, &cb, p.n_per_class, seed::child(master, 1))?;
    let cfg = TrainConfig { seed: seed::child(master, 3), use_bias: false, ..p.train.clone() };
    let trained = quadnet::train(&ds, p.hidden_width, &cfg)?;
    let report = kkt_report(&trained.params, &ds, p.lambda_scale)?;
    let test_seed = seed::child(master, 2);
    let net = &trained.params;
    let trained_test = held_out_accuracy(&ca, &cb, p.n_test_per_class, test_seed, |x| net.decide_batch(x))?;

    let s = if report.lambda_scale > 0.0 { report.lambda_scale } else { 1.0 };
    let fp = match p.fixed_point_start {
        FixedPointStart::Trained => kkt_fixed_point_from(&ds, trained.params.clone(), s, &p.fixed_point)?,
        FixedPointStart::Random => kkt_fixed_point(&ds, p.hidden_width, s, seed::child(master, 4), &p.fixed_point)?,
    };
    let fixed = fp.params.clone();
    let fp_test = held_out_accuracy(&ca, &cb, p.n_test_per_class, test_seed, |x| fixed.decide_batch(x))?;
    let fp_report = kkt_report(&fixed, &ds, Some(s))?;
    let fixed_point_pass = fp.converged && fp.residual_v.max(fp.residual_w) <= p.fixed_point_tolerance;
    let summary = KktSummary {
        train_status: format!("{:?}", trained.status),
        train_accuracy: trained.history.last().map_or(f64::NAN, |h| h.accuracy),
        trained_test,
        trained: report,
        residual_pass: report.feasible && report.stationarity_residual < p.residual_threshold,
        fixed_point: FixedPointSummary {
            lambda_scale: s,
            converged: fp.converged,
            iterations: fp.iterations,
            update_norm: fp.update_norm,
            residual_v: fp.residual_v,
            residual_w: fp.residual_w,
            test: fp_test,
            report: fp_report,
        },
        fixed_point_pass,
        accuracy_gap: trained_test.accuracy - fp_test.accuracy,
    };
    Ok(KktRun { summary, trained, fixed })
}

pub fn run(p: &KktParams, master: u64, out: &mut RunDir) -> CliResult<Status> {
    let r = compute(p, master)?;
    link_basis(out, p.basis, basis_seeds(master, p.basis_seeds));
    out.seed_link("train_data", seed::child(master, 1));
    out.seed_link("test_data", seed::child(master, 2));
    out.seed_link("init", seed::child(master, 3));
    out.write("history.csv", history_table(&r.trained.history).to_csv().as_bytes())?;
    let cfg = TrainConfig { seed: seed::child(master, 3), use_bias: false, ..p.train.clone() };
    write_checkpoint(out, "trained.bocm", &r.trained.params, r.trained.steps, &cfg)?;
    write_checkpoint(out, "fixed_point.bocm", &r.fixed, 0, &cfg)?;
    let mut t = Table::new(&["quantity", "trained", "fixed_point"]);
    let (a, b) = (&r.summary.trained, &r.summary.fixed_point.report);
    t.push(vec![0.0, a.stationarity_residual, b.stationarity_residual]);
    t.push(vec![1.0, a.margin_min, b.margin_min]);
    t.push(vec![2.0, r.summary.trained_test.accuracy, r.summary.fixed_point.test.accuracy]);
    // quantity: 0 stationarity residual, 1 minimum margin, 2 test accuracy
    out.write("kkt.csv", t.to_csv().as_bytes())?;
    out.write_json("kkt_report.json", &r.summary)?;
    let fp = &r.summary.fixed_point;
    Ok(if !fp.converged {
        Status::Numerical(format!("fixed point not reached after {} iterations", fp.iterations))
    } else if r.trained.diverged() {
        Status::Numerical(format!("training {}", r.summary.train_status))
    } else {
        Status::Ok
    })
}
