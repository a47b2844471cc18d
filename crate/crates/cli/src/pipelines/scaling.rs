//! Finite-sample deviation of the plug-in discriminant as a function of
//! γ = d/N, with a log-log regression.

use boclab::boc::{build_rule, empirical_deviation, empirical_rule};
use boclab::linalg::mean_and_se;
use boclab::sampler::sample_gaussian;
use boclab::seed;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{link_basis, basis_seeds, linear_fit, power_law_pair, BasisMode, Status};
use crate::error::{CliError, CliResult};
use crate::render::{render_svg, PlotSpec, Table};
use crate::rundir::RunDir;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingParams {
    pub dim: usize,
    pub alpha_a: f64,
    pub delta_alpha: f64,
    pub basis: BasisMode,
    pub basis_seeds: Option<[u64; 2]>,
    pub gammas: Vec<f64>,
    pub reps: usize,
    pub n_eval_per_class: usize,
    pub ridge: f64,
}

impl Default for ScalingParams {
    fn default() -> Self {
        Self {
            dim: 50,
            alpha_a: 0.5,
            delta_alpha: -0.1,
            basis: BasisMode::Shared,
            basis_seeds: None,
            gammas: vec![1e-3, 3e-3, 1e-2, 3e-2, 1e-1],
            reps: 3,
            n_eval_per_class: 2500,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub gamma: f64,
    pub n_per_class: usize,
    pub mean_deviation: f64,
    pub standard_error: f64,
    pub reps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub points: Vec<ScalingPoint>,
    /// `log Δβ_N = slope · log γ + intercept`.
    pub fit: ScalingFit,
}

/// Samples per class for a target γ.
pub fn samples_for(dim: usize, gamma: f64) -> usize {
    (dim as f64 / gamma).round() as usize
}

/// Grid point `g`, repetition `r` draws its training samples from
/// `child(child(seed, g + 1), r)`; the evaluation points use `child(seed, 0)`.
pub fn compute(p: &ScalingParams, master: u64) -> CliResult<ScalingResult> {
    if p.gammas.len() < 2 || p.reps == 0 || p.n_eval_per_class == 0 {
        return Err(CliError::Config("empirical-scaling needs at least two γ values, reps ≥ 1 and evaluation samples".into()));
    }
    if let Some(g) = p.gammas.iter().find(|&&g| !(g > 0.0 && samples_for(p.dim, g) > p.dim)) {
        return Err(CliError::Config(format!("γ = {g} leaves too few samples for d = {}", p.dim)));
    }
    let (ca, cb) = power_law_pair(p.dim, p.alpha_a, p.alpha_a + p.delta_alpha, p.basis, basis_seeds(master, p.basis_seeds))?;
    let pop = build_rule(&ca, &cb)?;
    let es = seed::child(master, 0);
    let ea = sample_gaussian(&ca, p.n_eval_per_class, es)?;
    let eb = sample_gaussian(&cb, p.n_eval_per_class, seed::class_b(es))?;
    let mut x = DMatrix::zeros(2 * p.n_eval_per_class, p.dim);
    x.rows_mut(0, p.n_eval_per_class).copy_from(&ea);
    x.rows_mut(p.n_eval_per_class, p.n_eval_per_class).copy_from(&eb);

    let jobs: Vec<(usize, usize)> = (0..p.gammas.len()).flat_map(|g| (0..p.reps).map(move |r| (g, r))).collect();
    let devs: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, r)| -> CliResult<f64> {
            let n = samples_for(p.dim, p.gammas[g]);
            let s = seed::child(seed::child(master, g as u64 + 1), r as u64);
            let xa = sample_gaussian(&ca, n, s)?;
            let xb = sample_gaussian(&cb, n, seed::class_b(s))?;
            let emp = empirical_rule(&xa, &xb, p.ridge)?;
            Ok(empirical_deviation(&pop, &emp, &x)?)
        })
        .collect::<CliResult<_>>()?;
    let points: Vec<ScalingPoint> = p
        .gammas
        .iter()
        .enumerate()
        .map(|(g, &gamma)| {
            let reps = devs[g * p.reps..(g + 1) * p.reps].to_vec();
            let (mean_deviation, standard_error) = mean_and_se(&reps);
            ScalingPoint { gamma, n_per_class: samples_for(p.dim, gamma), mean_deviation, standard_error, reps }
        })
        .collect();
    let lx: Vec<f64> = points.iter().map(|q| q.gamma.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|q| q.mean_deviation.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&lx, &ly);
    Ok(ScalingResult { points, fit: ScalingFit { slope, intercept, r2 } })
}

pub fn run(p: &ScalingParams, master: u64, out: &mut RunDir) -> CliResult<Status> {
    let r = compute(p, master)?;
    link_basis(out, p.basis, basis_seeds(master, p.basis_seeds));
    out.seed_link("eval", seed::child(master, 0));
    let mut t = Table::new(&["gamma", "n_per_class", "mean_deviation", "standard_error"]);
    for q in &r.points {
        t.push(vec![q.gamma, q.n_per_class as f64, q.mean_deviation, q.standard_error]);
    }
    out.write("scaling.csv", t.to_csv().as_bytes())?;
    let mut l = Table::new(&["log_gamma", "log_deviation", "fit"]);
    for q in &r.points {
        let x = q.gamma.ln();
        l.push(vec![x, q.mean_deviation.ln(), r.fit.slope * x + r.fit.intercept]);
    }
    let spec = PlotSpec { title: "plug-in discriminant deviation".into(), x_label: "log γ".into(), y_label: "log Δβ".into(), ..PlotSpec::default() };
    out.write("scaling.svg", render_svg(None, Some(&l), &spec)?.as_bytes())?;
    out.write_json("fit.json", &r)?;
    Ok(Status::Ok)
}
