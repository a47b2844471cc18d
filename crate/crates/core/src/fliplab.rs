//! Flip tests: classify samples from hybrid covariances whose leading
//! components come from one class and the rest from the other, and find the
//! threshold where the majority verdict changes.
//!
//! Also the Δα grid experiment (network accuracy against the Bayes ceiling
//! over a range of spectral-exponent gaps).

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boc::{build_rule, held_out_accuracy, QuadraticRule};
use crate::covmodel::{compose_flip_with, haar_orthogonal, Basis, CovarianceModel, FlipComposition, Spectrum};
use crate::error::{Error, Result};
use crate::gchi2::error_rates;
use crate::linalg;
use crate::quadnet::{self, QuadNetParams, TrainConfig};
use crate::sampler::{make_gmm_dataset, sample_gaussian};
use crate::scalar::Real;
use crate::seed;

/// Batch decision function; `true` means class A.
pub trait Classifier<T: Real>: Sync {
    fn id(&self) -> String;
    fn classify(&self, x: &DMatrix<T>) -> Result<Vec<bool>>;
}

impl<T: Real> Classifier<T> for QuadraticRule<T> {
    fn id(&self) -> String {
        format!("boc(d={})", self.dim())
    }

    fn classify(&self, x: &DMatrix<T>) -> Result<Vec<bool>> {
        self.decide_batch(x)
    }
}

impl<T: Real> Classifier<T> for QuadNetParams<T> {
    fn id(&self) -> String {
        format!("quadnet(d={},d_h={})", self.dim(), self.hidden_width())
    }

    fn classify(&self, x: &DMatrix<T>) -> Result<Vec<bool>> {
        self.decide_batch(x)
    }
}

/// Overrides the provenance string of another classifier.
pub struct Labeled<'a, C: ?Sized> {
    pub id: String,
    pub inner: &'a C,
}

impl<T: Real, C: Classifier<T> + ?Sized> Classifier<T> for Labeled<'_, C> {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn classify(&self, x: &DMatrix<T>) -> Result<Vec<bool>> {
        self.inner.classify(x)
    }
}

/// Verdicts computed elsewhere, keyed by `(tau, sample index)`.
///
/// CSV columns: `tau,index,label`, with label `A`/`B`, `1`/`-1` or `1`/`0`.
/// The samples an external tool must classify are the ones
/// [`sweep_samples`] returns for the same sweep settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerdictTable {
    pub source: String,
    verdicts: HashMap<usize, Vec<Option<bool>>>,
}

impl VerdictTable {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut verdicts: HashMap<usize, Vec<Option<bool>>> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (lineno == 0 && line.starts_with("tau")) {
                continue;
            }
            let bad = || Error::Format(format!("{source}:{}: expected `tau,index,label`, got `{line}`", lineno + 1));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [tau, index, label] = fields[..] else { return Err(bad()) };
            let tau: usize = tau.parse().map_err(|_| bad())?;
            let index: usize = index.parse().map_err(|_| bad())?;
            let label = match label {
                "A" | "a" | "1" | "+1" => true,
                "B" | "b" | "-1" | "0" => false,
                _ => return Err(bad()),
            };
            let row = verdicts.entry(tau).or_default();
            if row.len() <= index {
                row.resize(index + 1, None);
            }
            if row[index].replace(label).is_some() {
                return Err(Error::Format(format!("{source}:{}: duplicate verdict for tau {tau}, index {index}", lineno + 1)));
            }
        }
        Ok(Self { source: source.to_string(), verdicts })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    /// Fraction labelled A at `tau`, or `None` if the table has no complete
    /// row set for it.
    pub fn fraction(&self, tau: usize, n_eval: usize) -> Result<Option<f64>> {
        let Some(row) = self.verdicts.get(&tau) else { return Ok(None) };
        if row.len() != n_eval || row.iter().any(Option::is_none) {
            return Err(Error::Format(format!(
                "{}: tau {tau} has {} of {n_eval} verdicts",
                self.source,
                row.iter().filter(|v| v.is_some()).count()
            )));
        }
        Ok(Some(row.iter().filter(|v| **v == Some(true)).count() as f64 / n_eval as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipAxis {
    Eigenvector,
    Eigenvalue,
}

/// Which class supplies the axis that is not swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeldAxis {
    #[default]
    C1,
    C2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlipOptions {
    pub n_eval: usize,
    pub seed: u64,
    /// Defaults to [`threshold_grid`].
    pub thresholds: Option<Vec<usize>>,
    pub hold: HeldAxis,
    /// Orthogonalise the spliced basis before use.
    pub project: bool,
    /// Eigenvalues are floored at this fraction of the largest.
    pub floor: f64,
    /// A composed matrix with `λ_min < −invalid_tol·λ_max` is not PD.
    pub invalid_tol: f64,
}

impl Default for FlipOptions {
    fn default() -> Self {
        Self { n_eval: 2000, seed: 0, thresholds: None, hold: HeldAxis::C1, project: false, floor: 1e-12, invalid_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipSweepResult {
    pub axis: FlipAxis,
    pub thresholds: Vec<usize>,
    /// `None` where the composed covariance was not positive definite.
    pub fraction_class_a: Vec<Option<f64>>,
    /// Samples behind each fraction (0 for invalid thresholds).
    pub n_valid: Vec<usize>,
    pub flip_point: Option<usize>,
    pub classifier_id: String,
    pub seed: u64,
    pub hold: HeldAxis,
    /// Eigenvalue mass added by the floor, relative to `λ_max`.
    pub floor_adjustment: Vec<f64>,
}

/// Every integer in `[0, d]` for `d ≤ 128`, otherwise 64 integers whose
/// offsets `τ + 1` are log-spaced over `[1, d + 1]`.
pub fn threshold_grid(d: usize) -> Vec<usize> {
    if d <= 128 {
        return (0..=d).collect();
    }
    let top = ((d + 1) as f64).ln();
    let mut m = 64;
    loop {
        let mut grid: Vec<usize> = (0..m)
            .map(|k| ((top * k as f64 / (m - 1) as f64).exp().round() as usize).saturating_sub(1).min(d))
            .collect();
        grid.dedup();
        if grid.len() >= 64 {
            return grid;
        }
        m += 1;
    }
}

/// Flip-composed covariance for one threshold of a sweep.
pub fn composed_model<T: Real>(
    c1: &CovarianceModel<T>,
    c2: &CovarianceModel<T>,
    axis: FlipAxis,
    tau: usize,
    opts: &FlipOptions,
) -> Result<CovarianceModel<T>> {
    let d = c1.dim();
    let held = match opts.hold {
        HeldAxis::C1 => d,
        HeldAxis::C2 => 0,
    };
    let (tau_lambda, tau_v) = match axis {
        FlipAxis::Eigenvector => (held, tau),
        FlipAxis::Eigenvalue => (tau, held),
    };
    compose_flip_with(c1, c2, tau_lambda, tau_v, FlipComposition { project: opts.project })
}

/// Symmetrises `C`, rejects it if clearly indefinite, and floors its
/// spectrum. Returns the model to sample from and the relative mass added.
pub fn pd_guard<T: Real>(model: &CovarianceModel<T>, floor: f64, invalid_tol: f64) -> Result<Option<(CovarianceModel<T>, f64)>> {
    let c = linalg::symmetrize(&model.covariance());
    let eig = linalg::sym_eigen_desc(&c)?;
    let max = eig.values[0].as_f64();
    let min = eig.values[eig.values.len() - 1].as_f64();
    if !(max > 0.0) || min < -invalid_tol * max {
        return Ok(None);
    }
    let cut = T::lit(floor * max);
    let mut added = 0.0;
    let values: Vec<T> = eig
        .values
        .iter()
        .map(|&v| {
            if v < cut {
                added += (cut - v).as_f64();
                cut
            } else {
                v
            }
        })
        .collect();
    let guarded = CovarianceModel::new(Spectrum::new(values)?, Basis::unchecked(eig.vectors)?)?;
    Ok(Some((guarded, added / max)))
}

/// Seed used for the samples at threshold `tau`.
pub fn threshold_seed(seed: u64, tau: usize) -> u64 {
    seed::child(seed, tau as u64)
}

/// The `n_eval` rows classified at `tau` (`None` if that threshold is
/// invalid).
pub fn sweep_samples<T: Real>(
    c1: &CovarianceModel<T>,
    c2: &CovarianceModel<T>,
    axis: FlipAxis,
    tau: usize,
    opts: &FlipOptions,
) -> Result<Option<DMatrix<T>>> {
    let composed = composed_model(c1, c2, axis, tau, opts)?;
    match pd_guard(&composed, opts.floor, opts.invalid_tol)? {
        Some((model, _)) => Ok(Some(sample_gaussian(&model, opts.n_eval, threshold_seed(opts.seed, tau))?)),
        None => Ok(None),
    }
}

fn check_sweep_inputs<T: Real>(c1: &CovarianceModel<T>, c2: &CovarianceModel<T>, opts: &FlipOptions) -> Result<Vec<usize>> {
    let d = c1.dim();
    if c2.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: c2.dim() });
    }
    if opts.n_eval == 0 {
        return Err(Error::InvalidArgument("n_eval must be at least 1".into()));
    }
    let thresholds = opts.thresholds.clone().unwrap_or_else(|| threshold_grid(d));
    if thresholds.is_empty() || !thresholds.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument("thresholds must be nonempty and strictly increasing".into()));
    }
    if let Some(&tau) = thresholds.iter().find(|&&t| t > d) {
        return Err(Error::ThresholdOutOfRange { tau, dim: d });
    }
    Ok(thresholds)
}

/// Fraction of samples classified as A at every threshold.
///
/// `tau` counts components taken from `c1` along `axis`; the other axis is
/// taken entirely from the class chosen by `opts.hold`. Thresholds are
/// independent (seeded by [`threshold_seed`]) and evaluated in parallel.
pub fn flip_sweep<T: Real, C: Classifier<T> + ?Sized>(
    c1: &CovarianceModel<T>,
    c2: &CovarianceModel<T>,
    axis: FlipAxis,
    classifier: &C,
    opts: &FlipOptions,
) -> Result<FlipSweepResult> {
    let thresholds = check_sweep_inputs(c1, c2, opts)?;
    let rows: Vec<(Option<f64>, usize, f64)> = thresholds
        .par_iter()
        .map(|&tau| -> Result<(Option<f64>, usize, f64)> {
            let composed = composed_model(c1, c2, axis, tau, opts)?;
            let Some((model, adjustment)) = pd_guard(&composed, opts.floor, opts.invalid_tol)? else {
                log::warn!("tau {tau}: composed covariance is not positive definite, marked invalid");
                return Ok((None, 0, 0.0));
            };
            if adjustment > 0.0 {
                log::debug!("tau {tau}: eigenvalue floor added {adjustment:e} of λ_max");
            }
            let x = sample_gaussian(&model, opts.n_eval, threshold_seed(opts.seed, tau))?;
            let v = classifier.classify(&x)?;
            if v.len() != opts.n_eval {
                return Err(Error::Invariant(format!("classifier returned {} verdicts for {} rows", v.len(), opts.n_eval)));
            }
            let a = v.iter().filter(|&&b| b).count();
            Ok((Some(a as f64 / opts.n_eval as f64), opts.n_eval, adjustment))
        })
        .collect::<Result<_>>()?;
    let fraction_class_a: Vec<Option<f64>> = rows.iter().map(|r| r.0).collect();
    let flip_point = find_flip_point(&thresholds, &fraction_class_a);
    Ok(FlipSweepResult {
        axis,
        thresholds,
        fraction_class_a,
        n_valid: rows.iter().map(|r| r.1).collect(),
        flip_point,
        classifier_id: classifier.id(),
        seed: opts.seed,
        hold: opts.hold,
        floor_adjustment: rows.iter().map(|r| r.2).collect(),
    })
}

/// Sweep whose verdicts come from a [`VerdictTable`]. Thresholds missing
/// from the table, or invalid for the composition, are reported as `None`.
pub fn flip_sweep_from_verdicts<T: Real>(
    c1: &CovarianceModel<T>,
    c2: &CovarianceModel<T>,
    axis: FlipAxis,
    table: &VerdictTable,
    opts: &FlipOptions,
) -> Result<FlipSweepResult> {
    let thresholds = check_sweep_inputs(c1, c2, opts)?;
    let mut fraction_class_a = Vec::with_capacity(thresholds.len());
    let mut n_valid = Vec::with_capacity(thresholds.len());
    let mut floor_adjustment = Vec::with_capacity(thresholds.len());
    for &tau in &thresholds {
        let composed = composed_model(c1, c2, axis, tau, opts)?;
        let guarded = pd_guard(&composed, opts.floor, opts.invalid_tol)?;
        let f = if guarded.is_some() { table.fraction(tau, opts.n_eval)? } else { None };
        n_valid.push(if f.is_some() { opts.n_eval } else { 0 });
        floor_adjustment.push(guarded.map_or(0.0, |g| g.1));
        fraction_class_a.push(f);
    }
    let flip_point = find_flip_point(&thresholds, &fraction_class_a);
    Ok(FlipSweepResult {
        axis,
        thresholds,
        fraction_class_a,
        n_valid,
        flip_point,
        classifier_id: format!("verdicts:{}", table.source),
        seed: opts.seed,
        hold: opts.hold,
        floor_adjustment,
    })
}

/// First threshold with fraction ≥ 0.5 whose preceding valid threshold was
/// below 0.5. Invalid thresholds are skipped; a sweep that starts at or
/// above 0.5 has no crossing until it first drops below.
pub fn find_flip_point(thresholds: &[usize], fractions: &[Option<f64>]) -> Option<usize> {
    let mut below = false;
    for (&tau, f) in thresholds.iter().zip(fractions) {
        let Some(f) = *f else { continue };
        if f >= 0.5 {
            if below {
                return Some(tau);
            }
        } else {
            below = true;
        }
    }
    None
}

impl FlipSweepResult {
    /// `tau,fraction_class_a,n_valid` with an empty fraction for invalid
    /// thresholds.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,fraction_class_a,n_valid\n");
        for ((t, f), n) in self.thresholds.iter().zip(&self.fraction_class_a).zip(&self.n_valid) {
            match f {
                Some(f) => s.push_str(&format!("{t},{f:?},{n}\n")),
                None => s.push_str(&format!("{t},,{n}\n")),
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaGridConfig {
    pub dim: usize,
    pub alpha: f64,
    pub delta_alpha_values: Vec<f64>,
    pub hidden_width: usize,
    pub n_train_per_class: usize,
    pub n_test_per_class: usize,
    pub runs: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaGridResult {
    pub alpha: f64,
    pub delta_alpha_values: Vec<f64>,
    pub mean_accuracy: Vec<f64>,
    /// Sample standard deviation over runs (0 for a single run).
    pub std_accuracy: Vec<f64>,
    /// Accuracy of the Bayes rule from the exact error rates.
    pub boc_accuracy: Vec<f64>,
    pub runs: usize,
    /// `[grid point][run]`.
    pub run_accuracy: Vec<Vec<f64>>,
}

/// Shared-basis power-law pairs `(α, α + Δα)`: trains a network per run and
/// records held-out accuracy next to the Bayes accuracy.
///
/// Seeds: the basis uses `child(seed, 0)`; grid point `j`, run `r` uses
/// `s = child(child(seed, j + 1), r)` for its training set, `child(s, 1)` for
/// the network initialisation and `child(s, 2)` for the test draws.
pub fn alpha_grid(cfg: &AlphaGridConfig) -> Result<AlphaGridResult> {
    if cfg.runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    if cfg.delta_alpha_values.is_empty() {
        return Err(Error::InvalidArgument("empty Δα grid".into()));
    }
    let basis: Basis<f64> = haar_orthogonal(cfg.dim, seed::child(cfg.seed, 0))?;
    let ca = CovarianceModel::power_law(cfg.dim, cfg.alpha, basis.clone())?;
    let jobs: Vec<(usize, usize)> = (0..cfg.delta_alpha_values.len()).flat_map(|j| (0..cfg.runs).map(move |r| (j, r))).collect();
    let models: Vec<CovarianceModel<f64>> = cfg
        .delta_alpha_values
        .iter()
        .map(|&da| CovarianceModel::power_law(cfg.dim, cfg.alpha + da, basis.clone()))
        .collect::<Result<_>>()?;
    let acc: Vec<f64> = jobs
        .par_iter()
        .map(|&(j, r)| -> Result<f64> {
            let cb = &models[j];
            let s = seed::child(seed::child(cfg.seed, j as u64 + 1), r as u64);
            let ds = make_gmm_dataset(&ca, cb, cfg.n_train_per_class, s)?;
            let tc = TrainConfig { seed: seed::child(s, 1), ..cfg.train.clone() };
            let out = quadnet::train(&ds, cfg.hidden_width, &tc)?;
            if out.diverged() {
                log::warn!("Δα={} run {r}: training diverged, using last finite parameters", cfg.delta_alpha_values[j]);
            }
            let net = out.params;
            Ok(held_out_accuracy(&ca, cb, cfg.n_test_per_class, seed::child(s, 2), |x| net.decide_batch(x))?.accuracy)
        })
        .collect::<Result<_>>()?;
    let mut mean_accuracy = Vec::new();
    let mut std_accuracy = Vec::new();
    let mut boc_accuracy = Vec::new();
    let mut run_accuracy = Vec::new();
    for (j, cb) in models.iter().enumerate() {
        let runs = acc[j * cfg.runs..(j + 1) * cfg.runs].to_vec();
        let (mean, se) = linalg::mean_and_se(&runs);
        mean_accuracy.push(mean);
        std_accuracy.push(se * (cfg.runs as f64).sqrt());
        let rule = build_rule(&ca, cb)?;
        let (ea, eb) = error_rates(&rule, &ca, cb)?;
        boc_accuracy.push(1.0 - 0.5 * (ea + eb));
        run_accuracy.push(runs);
    }
    Ok(AlphaGridResult {
        alpha: cfg.alpha,
        delta_alpha_values: cfg.delta_alpha_values.clone(),
        mean_accuracy,
        std_accuracy,
        boc_accuracy,
        runs: cfg.runs,
        run_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pl(d: usize, alpha: f64, seed: u64) -> CovarianceModel<f64> {
        CovarianceModel::power_law(d, alpha, haar_orthogonal(d, seed).unwrap()).unwrap()
    }

    #[test]
    fn flip_point_examples() {
        let t = [0, 10, 20, 30];
        let f = |v: [f64; 4]| v.map(Some).to_vec();
        assert_eq!(find_flip_point(&t, &f([0.1, 0.3, 0.6, 0.9])), Some(20));
        assert_eq!(find_flip_point(&t, &f([0.1, 0.3, 0.4, 0.49])), None);
        assert_eq!(find_flip_point(&t, &f([0.9, 0.95, 0.99, 1.0])), None);
        assert_eq!(find_flip_point(&t, &[Some(0.1), None, Some(0.5), Some(0.9)]), Some(20));
        assert_eq!(find_flip_point(&t, &[Some(0.6), Some(0.4), None, Some(0.7)]), Some(30));
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(threshold_grid(5), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(threshold_grid(128).len(), 129);
        for d in [129, 256, 1000, 3072] {
            let g = threshold_grid(d);
            assert!(g.len() >= 64 && g.len() <= 66, "{d}: {}", g.len());
            assert_eq!((g[0], *g.last().unwrap()), (0, d));
            assert!(g.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn identical_classes_give_constant_fraction() {
        let c = pl(12, 0.3, 1);
        let rule = build_rule(&c, &c).unwrap();
        let opts = FlipOptions { n_eval: 200, seed: 3, ..FlipOptions::default() };
        for axis in [FlipAxis::Eigenvector, FlipAxis::Eigenvalue] {
            let r = flip_sweep(&c, &c, axis, &rule, &opts).unwrap();
            assert!(r.fraction_class_a.iter().all(|f| *f == Some(0.0)));
            assert_eq!(r.flip_point, None);
        }
    }

    #[test]
    fn sweep_is_reproducible_and_thread_independent() {
        let (c1, c2) = (pl(16, 0.5, 1), pl(16, 0.3, 2));
        let rule = build_rule(&c1, &c2).unwrap();
        let opts = FlipOptions { n_eval: 300, seed: 9, ..FlipOptions::default() };
        let a = flip_sweep(&c1, &c2, FlipAxis::Eigenvector, &rule, &opts).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| flip_sweep(&c1, &c2, FlipAxis::Eigenvector, &rule, &opts).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.classifier_id, "boc(d=16)");
    }

    #[test]
    fn negated_classifier_reflects_fractions() {
        let (c1, c2) = (pl(16, 0.5, 1), pl(16, 0.3, 2));
        let rule = build_rule(&c1, &c2).unwrap();
        let opts = FlipOptions { n_eval: 500, seed: 4, ..FlipOptions::default() };
        let a = flip_sweep(&c1, &c2, FlipAxis::Eigenvector, &rule, &opts).unwrap();
        let b = flip_sweep(&c1, &c2, FlipAxis::Eigenvector, &rule.negated(), &opts).unwrap();
        for (x, y) in a.fraction_class_a.iter().zip(&b.fraction_class_a) {
            assert!((x.unwrap() + y.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn endpoints_match_the_pure_classes() {
        let (c1, c2) = (pl(10, 0.5, 1), pl(10, 0.3, 2));
        let rule = build_rule(&c1, &c2).unwrap();
        let opts = FlipOptions { n_eval: 4000, seed: 5, thresholds: Some(vec![0, 10]), ..FlipOptions::default() };
        let r = flip_sweep(&c1, &c2, FlipAxis::Eigenvector, &rule, &opts).unwrap();
        // tau = d is c1 itself; the Bayes rule labels most of it A
        let x = sample_gaussian(&c1, 4000, 77).unwrap();
        let direct = rule.decide_batch(&x).unwrap().iter().filter(|&&v| v).count() as f64 / 4000.0;
        let top = r.fraction_class_a[1].unwrap();
        assert!(top > 0.5 && (top - direct).abs() < 0.05, "{top} {direct}");
        // tau = 0 takes all vectors from c2 but eigenvalues from c1
        let bottom = r.fraction_class_a[0].unwrap();
        assert!(bottom < top);
    }

    #[test]
    fn guard_passes_orthogonal_and_floors_singular() {
        let c = pl(6, 0.2, 1);
        let (g, added) = pd_guard(&c, 1e-12, 1e-8).unwrap().unwrap();
        assert_eq!(added, 0.0);
        assert!((g.covariance() - c.covariance()).norm() < 1e-12);
        // duplicated eigenvector rows give a singular matrix
        let mut b = c.basis().matrix().clone();
        let r0 = b.row(0).into_owned();
        b.set_row(1, &r0);
        let sing = CovarianceModel::new(c.spectrum().clone(), Basis::unchecked(b).unwrap()).unwrap();
        let (g, added) = pd_guard(&sing, 1e-12, 1e-8).unwrap().unwrap();
        assert!(added > 0.0);
        assert!(g.spectrum().min() >= 1e-12 * g.spectrum().max() * (1.0 - 1e-12));
    }

    #[test]
    fn verdict_table_round_trip() {
        let (c1, c2) = (pl(6, 0.5, 1), pl(6, 0.3, 2));
        let rule = build_rule(&c1, &c2).unwrap();
        let opts = FlipOptions { n_eval: 50, seed: 2, ..FlipOptions::default() };
        let direct = flip_sweep(&c1, &c2, FlipAxis::Eigenvector, &rule, &opts).unwrap();
        let mut csv = String::from("tau,index,label\n");
        for tau in 0..=6 {
            let x = sweep_samples(&c1, &c2, FlipAxis::Eigenvector, tau, &opts).unwrap().unwrap();
            for (i, v) in rule.decide_batch(&x).unwrap().iter().enumerate() {
                csv.push_str(&format!("{tau},{i},{}\n", if *v { "A" } else { "B" }));
            }
        }
        let table = VerdictTable::parse(&csv, "mem").unwrap();
        let ext = flip_sweep_from_verdicts(&c1, &c2, FlipAxis::Eigenvector, &table, &opts).unwrap();
        assert_eq!(ext.fraction_class_a, direct.fraction_class_a);
        assert_eq!(ext.flip_point, direct.flip_point);
        assert_eq!(ext.classifier_id, "verdicts:mem");
    }

    #[test]
    fn verdict_table_rejects_malformed_input() {
        assert!(VerdictTable::parse("0,0,maybe\n", "x").is_err());
        assert!(VerdictTable::parse("0,0\n", "x").is_err());
        assert!(VerdictTable::parse("0,0,A\n0,0,B\n", "x").is_err());
        let t = VerdictTable::parse("0,0,A\n0,2,B\n", "x").unwrap();
        assert!(t.fraction(0, 3).is_err());
        assert_eq!(t.fraction(5, 3).unwrap(), None);
    }

    #[test]
    fn rejects_bad_thresholds() {
        let (c1, c2) = (pl(4, 0.5, 1), pl(4, 0.3, 2));
        let rule = build_rule(&c1, &c2).unwrap();
        let mk = |t: Vec<usize>| FlipOptions { thresholds: Some(t), n_eval: 10, ..FlipOptions::default() };
        assert!(matches!(flip_sweep(&c1, &c2, FlipAxis::Eigenvalue, &rule, &mk(vec![0, 5])), Err(Error::ThresholdOutOfRange { tau: 5, dim: 4 })));
        assert!(flip_sweep(&c1, &c2, FlipAxis::Eigenvalue, &rule, &mk(vec![2, 1])).is_err());
        assert!(flip_sweep(&c1, &pl(5, 0.3, 2), FlipAxis::Eigenvalue, &rule, &mk(vec![0])).is_err());
    }

    #[test]
    fn alpha_grid_small() {
        let cfg = AlphaGridConfig {
            dim: 8,
            alpha: 0.5,
            delta_alpha_values: vec![0.0, 0.8],
            hidden_width: 8,
            n_train_per_class: 500,
            n_test_per_class: 2000,
            runs: 2,
            seed: 1,
            train: TrainConfig { steps: 200, ..TrainConfig::default() },
        };
        let r = alpha_grid(&cfg).unwrap();
        assert!((r.mean_accuracy[0] - 0.5).abs() <= 0.05, "{:?}", r.mean_accuracy);
        assert!((r.boc_accuracy[0] - 0.5).abs() < 1e-12);
        assert!(r.mean_accuracy[1] > r.mean_accuracy[0]);
        for j in 0..2 {
            assert!(r.mean_accuracy[j] <= r.boc_accuracy[j] + 3.0 * r.std_accuracy[j].max(0.01));
        }
        assert_eq!(r, alpha_grid(&cfg).unwrap());
    }
}
