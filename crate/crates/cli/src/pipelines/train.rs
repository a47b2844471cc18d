//! Train a quadratic network on a power-law pair and compare it with the
//! Bayes-optimal rule on held-out data.

use boclab::boc::{build_rule, held_out_accuracy, AccuracyEstimate, QuadraticRule};
use boclab::covmodel::CovarianceModel;
use boclab::gchi2::error_rates;
use boclab::quadnet::{self, save_checkpoint, CheckpointMeta, HistoryEntry, QuadNetParams, TrainConfig, TrainOutcome};
use boclab::sampler::{make_gmm_dataset, sample_gaussian};
use boclab::seed;
use serde::{Deserialize, Serialize};

use super::{link_basis, basis_seeds, density_histogram, finite_range, power_law_pair, BasisMode, Status};
use crate::error::{CliError, CliResult};
use crate::render::{render_svg, PlotSpec, Table};
use crate::rundir::RunDir;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainQuadnetParams {
    pub dim: usize,
    pub alpha_a: f64,
    pub delta_alpha: f64,
    pub basis: BasisMode,
    pub basis_seeds: Option<[u64; 2]>,
    pub n_per_class: usize,
    pub n_test_per_class: usize,
    pub hidden_width: usize,
    /// `train.seed` is replaced by `child(seed, 3)`.
    pub train: TrainConfig,
    pub probes: usize,
    pub bins: usize,
    /// Pass threshold for the scale-normalised 1-Wasserstein distance
    /// between network outputs and β on the held-out draws.
    pub w1_threshold: f64,
}

impl Default for TrainQuadnetParams {
    fn default() -> Self {
        Self {
            dim: 20,
            alpha_a: 0.2,
            delta_alpha: 0.1,
            basis: BasisMode::Shared,
            basis_seeds: None,
            n_per_class: 10_000,
            n_test_per_class: 10_000,
            hidden_width: 20,
            train: TrainConfig::default(),
            probes: 1000,
            bins: 60,
            w1_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub status: String,
    pub steps: usize,
    pub train_accuracy: f64,
    pub test: AccuracyEstimate,
    /// Bayes rule on the same held-out draws.
    pub boc_test: AccuracyEstimate,
    /// Bayes accuracy from the exact error rates.
    pub boc_exact: f64,
    pub gap: f64,
    /// `max |Φ_rule(x) − β(x)| / max(|β(x)|, 1)` over the probes.
    pub from_rule_max_error: f64,
    pub w1_normalized_a: f64,
    pub w1_normalized_b: f64,
    pub w1_pass: bool,
}

pub struct TrainRun {
    pub outcome: TrainOutcome<f64>,
    pub summary: TrainSummary,
    pub models: (CovarianceModel<f64>, CovarianceModel<f64>),
    pub rule: QuadraticRule<f64>,
    /// `(network, β)` on the held-out draws of each class.
    pub outputs_a: (Vec<f64>, Vec<f64>),
    pub outputs_b: (Vec<f64>, Vec<f64>),
}

/// 1-Wasserstein distance between two equal-size empirical samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len().max(1) as f64
}

fn pooled_rms(a: &[f64], b: &[f64]) -> f64 {
    let n = (a.len() + b.len()) as f64;
    (a.iter().chain(b).map(|v| v * v).sum::<f64>() / n).sqrt()
}

/// Largest relative mismatch between the exact network for `rule` and `β`.
pub fn from_rule_error(rule: &QuadraticRule<f64>, model: &CovarianceModel<f64>, hidden_width: usize, probes: usize, s: u64) -> CliResult<f64> {
    let net = QuadNetParams::from_rule(rule, hidden_width)?;
    let x = sample_gaussian(model, probes, s)?;
    let f = net.forward_batch(&x)?;
    let b = rule.beta_batch(&x)?;
    Ok(f.iter().zip(&b).map(|(f, b)| (f - b).abs() / b.abs().max(1.0)).fold(0.0, f64::max))
}

pub fn compute(p: &TrainQuadnetParams, master: u64) -> CliResult<TrainRun> {
    if p.dim == 0 || p.n_per_class == 0 || p.n_test_per_class == 0 || p.hidden_width == 0 {
        return Err(CliError::Config("train-quadnet needs positive dim, sample counts and hidden width".into()));
    }
    let seeds = basis_seeds(master, p.basis_seeds);
    let (ca, cb) = power_law_pair(p.dim, p.alpha_a, p.alpha_a + p.delta_alpha, p.basis, seeds)?;
    let rule = build_rule(&ca, &cb)?;
    let ds = make_gmm_dataset(&ca, &cb, p.n_per_class, seed::child(master, 1))?;
    let cfg = TrainConfig { seed: seed::child(master, 3), ..p.train.clone() };
    let outcome = quadnet::train(&ds, p.hidden_width, &cfg)?;
    let net = &outcome.params;
    let test_seed = seed::child(master, 2);
    let test = held_out_accuracy(&ca, &cb, p.n_test_per_class, test_seed, |x| net.decide_batch(x))?;
    let boc_test = held_out_accuracy(&ca, &cb, p.n_test_per_class, test_seed, |x| rule.decide_batch(x))?;
    let (ea, eb) = error_rates(&rule, &ca, &cb)?;
    let boc_exact = 1.0 - 0.5 * (ea + eb);
    let from_rule_max_error = from_rule_error(&rule, &ca, p.dim.max(p.hidden_width), p.probes.max(1), seed::child(master, 4))?;

    // held-out outputs, a bounded subset for the distribution comparison
    let m = p.n_test_per_class.min(20_000);
    let xa = sample_gaussian(&ca, m, test_seed)?;
    let xb = sample_gaussian(&cb, m, seed::class_b(test_seed))?;
    let outputs_a = (net.forward_batch(&xa)?, rule.beta_batch(&xa)?);
    let outputs_b = (net.forward_batch(&xb)?, rule.beta_batch(&xb)?);
    let sn = pooled_rms(&outputs_a.0, &outputs_b.0);
    let sb = pooled_rms(&outputs_a.1, &outputs_b.1);
    let norm = |v: &[f64], s: f64| v.iter().map(|x| x / s).collect::<Vec<_>>();
    let w1_normalized_a = wasserstein1(&norm(&outputs_a.0, sn), &norm(&outputs_a.1, sb));
    let w1_normalized_b = wasserstein1(&norm(&outputs_b.0, sn), &norm(&outputs_b.1, sb));
    let last = outcome.history.last().copied();
    let summary = TrainSummary {
        status: format!("{:?}", outcome.status),
        steps: outcome.steps,
        train_accuracy: last.map_or(f64::NAN, |h| h.accuracy),
        test,
        boc_test,
        boc_exact,
        gap: boc_test.accuracy - test.accuracy,
        from_rule_max_error,
        w1_normalized_a,
        w1_normalized_b,
        w1_pass: w1_normalized_a.max(w1_normalized_b) <= p.w1_threshold,
    };
    Ok(TrainRun { outcome, summary, models: (ca, cb), rule, outputs_a, outputs_b })
}

pub fn history_table(h: &[HistoryEntry]) -> Table {
    let mut t = Table::new(&["step", "loss", "accuracy", "param_norm"]);
    for e in h {
        t.push(vec![e.step as f64, e.loss, e.accuracy, e.param_norm]);
    }
    t
}

pub fn write_checkpoint(out: &mut RunDir, name: &str, net: &QuadNetParams<f64>, step: usize, cfg: &TrainConfig) -> CliResult<()> {
    let meta = CheckpointMeta { dim: net.dim(), hidden_width: net.hidden_width(), step, config: Some(cfg.clone()) };
    save_checkpoint(&out.file(name), net, &meta)?;
    out.register(name);
    out.register(&format!("{name}.json"));
    Ok(())
}

pub fn run(p: &TrainQuadnetParams, master: u64, out: &mut RunDir) -> CliResult<Status> {
    let r = compute(p, master)?;
    link_basis(out, p.basis, basis_seeds(master, p.basis_seeds));
    out.seed_link("train_data", seed::child(master, 1));
    out.seed_link("test_data", seed::child(master, 2));
    out.seed_link("init", seed::child(master, 3));
    let history = history_table(&r.outcome.history);
    out.write("history.csv", history.to_csv().as_bytes())?;
    let cfg = TrainConfig { seed: seed::child(master, 3), ..p.train.clone() };
    write_checkpoint(out, "net.bocm", &r.outcome.params, r.outcome.steps, &cfg)?;

    let sn = pooled_rms(&r.outputs_a.0, &r.outputs_b.0);
    let sb = pooled_rms(&r.outputs_a.1, &r.outputs_b.1);
    let scaled = |v: &[f64], s: f64| v.iter().map(|x| x / s).collect::<Vec<_>>();
    let cols = [
        scaled(&r.outputs_a.0, sn),
        scaled(&r.outputs_b.0, sn),
        scaled(&r.outputs_a.1, sb),
        scaled(&r.outputs_b.1, sb),
    ];
    let (lo, hi) = cols.iter().map(|c| finite_range(c)).fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    let hist = density_histogram(
        &[("network_a", &cols[0]), ("network_b", &cols[1]), ("boc_a", &cols[2]), ("boc_b", &cols[3])],
        lo,
        hi,
        p.bins.max(1),
    );
    out.write("outputs_hist.csv", hist.to_csv().as_bytes())?;
    let spec = PlotSpec { title: "network and Bayes outputs (scale-normalised)".into(), x_label: "output".into(), y_label: "density".into(), ..PlotSpec::default() };
    out.write("outputs_hist.svg", render_svg(Some(&hist), None, &spec)?.as_bytes())?;
    let mut acc = Table::new(&["step", "accuracy"]);
    for e in &r.outcome.history {
        acc.push(vec![e.step as f64, e.accuracy]);
    }
    let spec = PlotSpec { title: "training accuracy".into(), x_label: "step".into(), y_label: "accuracy".into(), ..PlotSpec::default() };
    out.write("accuracy.svg", render_svg(None, Some(&acc), &spec)?.as_bytes())?;
    out.write_json("summary.json", &r.summary)?;
    Ok(if r.outcome.diverged() { Status::Numerical(format!("training {}", r.summary.status)) } else { Status::Ok })
}
