//! The generalised chi-squared law of the discriminant.
//!
//! Under a zero-mean class `N(0, Σ)` a zero-mean quadratic rule gives
//! `β = scale · Σ_j w_j χ²₁ + offset` with `w_j` the eigenvalues of
//! `Σ^{1/2} Q Σ^{1/2}`, `scale = ½` and `offset = c/2`.
//!
//! The CDF and density are obtained by Imhof's inversion of the
//! characteristic function of `S = Σ w_j χ²₁`:
//!
//! ```text
//! θ(u) = ½ Σ atan(w_j u) − ½ s u        ρ(u) = Π (1 + w_j² u²)^{1/4}
//! P(S ≤ s) = ½ − (1/π) ∫₀^∞ sin θ(u) / (u ρ(u)) du
//! f_S(s)   = (1/2π) ∫₀^∞ cos θ(u) / ρ(u) du
//! ```
//!
//! integrated with adaptive Gauss–Kronrod panels. The truncation point comes
//! from the modulus bound `ρ(u) ≥ Π_{j∈J} |w_j u|^{1/2}` over the largest
//! weights; when that bound decays too slowly (few dominant weights) the tail
//! is summed interval by interval and extrapolated with Wynn's ε-algorithm.
//! Results whose error bound exceeds the fallback threshold are replaced by a
//! seeded Monte-Carlo estimate.

pub mod quad;

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boc::QuadraticRule;
use crate::covmodel::CovarianceModel;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;
use crate::seed;

/// Recorded in run metadata next to every distribution evaluation.
pub const METHOD_DESCRIPTION: &str =
    "Imhof characteristic-function inversion; adaptive Gauss-Kronrod 7/15 panels; Wynn-epsilon tail extrapolation; seeded Monte-Carlo fallback";

/// Weights below this fraction of the largest magnitude are dropped.
pub const DROP_RELATIVE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImhofOptions {
    /// Target absolute error of the CDF.
    pub abs_tol: f64,
    /// Error bounds above this switch to Monte-Carlo (or fail if disabled).
    pub fallback_threshold: f64,
    pub allow_fallback: bool,
    pub fallback_samples: usize,
    pub fallback_seed: u64,
    /// Upper limit on quadrature panels per integral.
    pub max_panels: usize,
}

impl Default for ImhofOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-6,
            fallback_threshold: 1e-5,
            allow_fallback: true,
            fallback_samples: 1_000_000,
            fallback_seed: 0x5EED_C0DE,
            max_panels: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Imhof,
    MonteCarlo,
    /// All weights are zero and `β` is the constant offset.
    PointMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub value: f64,
    pub error_bound: f64,
    pub method: Method,
}

/// `β = scale · Σ weights_j χ²₁ + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GChi2Params {
    pub weights: Vec<f64>,
    pub offset: f64,
    pub scale: f64,
    /// Number of negligible weights removed at construction.
    pub dropped: usize,
}

impl GChi2Params {
    pub fn new(weights: Vec<f64>, offset: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
        }
        if !offset.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("weights and offset must be finite".into()));
        }
        let max = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let kept: Vec<f64> = weights.iter().copied().filter(|w| max > 0.0 && w.abs() >= DROP_RELATIVE * max).collect();
        let dropped = weights.len() - kept.len();
        Ok(Self { weights: kept, offset, scale, dropped })
    }

    pub fn is_point_mass(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.scale * self.weights.iter().sum::<f64>() + self.offset
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.scale * self.scale * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn cdf(&self, t: f64) -> Result<f64> {
        Ok(self.cdf_with(t, &ImhofOptions::default())?.value)
    }

    pub fn pdf(&self, t: f64) -> Result<f64> {
        Ok(self.pdf_with(t, &ImhofOptions::default())?.value)
    }

    /// `P(β ≤ t)`. At a point mass the CDF takes the midpoint value ½ at the
    /// atom, matching the inversion formula's limit.
    pub fn cdf_with(&self, t: f64, options: &ImhofOptions) -> Result<Evaluation> {
        if self.is_point_mass() {
            let value = match t.partial_cmp(&self.offset) {
                Some(std::cmp::Ordering::Less) => 0.0,
                Some(std::cmp::Ordering::Greater) => 1.0,
                _ => 0.5,
            };
            return Ok(Evaluation { value, error_bound: 0.0, method: Method::PointMass });
        }
        let s = (t - self.offset) / self.scale;
        let inv = Inversion::new(&self.weights, s);
        let (integral, err) = inv.integrate(Kind::Cdf, PI * options.abs_tol, options.max_panels);
        let value = (0.5 - integral / PI).clamp(0.0, 1.0);
        let bound = err / PI;
        self.accept_or_fallback(Evaluation { value, error_bound: bound, method: Method::Imhof }, options, |x| {
            self.monte_carlo_cdf(x, options)
        }, t)
    }

    /// Density of `β` at `t`.
    pub fn pdf_with(&self, t: f64, options: &ImhofOptions) -> Result<Evaluation> {
        if self.is_point_mass() {
            let value = if t == self.offset { f64::INFINITY } else { 0.0 };
            return Ok(Evaluation { value, error_bound: 0.0, method: Method::PointMass });
        }
        let s = (t - self.offset) / self.scale;
        let inv = Inversion::new(&self.weights, s);
        // scale the target so the density of β meets abs_tol
        let target = 2.0 * PI * options.abs_tol * self.scale * inv.norm;
        let (integral, err) = inv.integrate(Kind::Pdf, target, options.max_panels);
        let to_beta = 1.0 / (2.0 * PI * inv.norm * self.scale);
        let value = (integral * to_beta).max(0.0);
        let bound = err * to_beta;
        self.accept_or_fallback(Evaluation { value, error_bound: bound, method: Method::Imhof }, options, |x| {
            self.monte_carlo_pdf(x, options)
        }, t)
    }

    fn accept_or_fallback(
        &self,
        eval: Evaluation,
        options: &ImhofOptions,
        fallback: impl Fn(f64) -> Evaluation,
        t: f64,
    ) -> Result<Evaluation> {
        if eval.error_bound <= options.fallback_threshold && eval.value.is_finite() {
            return Ok(eval);
        }
        if options.allow_fallback {
            log::debug!("quadrature bound {:e} at t={t}; using Monte-Carlo", eval.error_bound);
            return Ok(fallback(t));
        }
        Err(Error::Quadrature { bound: eval.error_bound })
    }

    fn monte_carlo_cdf(&self, t: f64, options: &ImhofOptions) -> Evaluation {
        let n = options.fallback_samples.max(1);
        let draws = self.sample(n, options.fallback_seed);
        let p = draws.iter().filter(|&&b| b <= t).count() as f64 / n as f64;
        Evaluation { value: p, error_bound: 3.0 * (p * (1.0 - p) / n as f64).sqrt().max(1.0 / n as f64), method: Method::MonteCarlo }
    }

    fn monte_carlo_pdf(&self, t: f64, options: &ImhofOptions) -> Evaluation {
        // Gaussian kernel estimate with Silverman's bandwidth
        let n = options.fallback_samples.clamp(1, 200_000);
        let draws = self.sample(n, options.fallback_seed);
        let (mean, _) = linalg::mean_and_se(&draws);
        let sd = (draws.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let h = 1.06 * sd * (n as f64).powf(-0.2);
        let norm = 1.0 / ((2.0 * PI).sqrt() * h * n as f64);
        let value = draws.iter().map(|b| (-0.5 * ((t - b) / h).powi(2)).exp()).sum::<f64>() * norm;
        Evaluation { value, error_bound: 3.0 * (value / (n as f64 * h)).sqrt(), method: Method::MonteCarlo }
    }

    /// `n` draws of `β`; each draw consumes one standard normal per weight.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed);
        (0..n)
            .map(|_| {
                let s: f64 = self
                    .weights
                    .iter()
                    .map(|w| {
                        let z: f64 = rng.sample(StandardNormal);
                        w * z * z
                    })
                    .sum();
                self.scale * s + self.offset
            })
            .collect()
    }

    /// Smallest `t` with `cdf(t) ≥ p`, by bisection.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) || p == 0.0 || p == 1.0 {
            return Err(Error::InvalidArgument(format!("quantile level {p} must lie in (0, 1)")));
        }
        if self.is_point_mass() {
            return Ok(self.offset);
        }
        let (m, sd) = (self.mean(), self.std_dev().max(f64::MIN_POSITIVE));
        let (mut lo, mut hi) = (m - 4.0 * sd, m + 4.0 * sd);
        let mut widen = 0;
        while self.cdf(lo)? > p {
            lo -= 4.0 * sd * 2f64.powi(widen);
            widen += 1;
            if widen > 60 {
                return Err(Error::NonConvergence { iterations: widen as usize, residual: p });
            }
        }
        widen = 0;
        while self.cdf(hi)? < p {
            hi += 4.0 * sd * 2f64.powi(widen);
            widen += 1;
            if widen > 60 {
                return Err(Error::NonConvergence { iterations: widen as usize, residual: p });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
                break;
            }
            if self.cdf(mid)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// CDF at every point, evaluated in parallel.
    pub fn cdf_grid(&self, ts: &[f64], options: &ImhofOptions) -> Result<Vec<Evaluation>> {
        ts.par_iter().map(|&t| self.cdf_with(t, options)).collect()
    }

    pub fn pdf_grid(&self, ts: &[f64], options: &ImhofOptions) -> Result<Vec<Evaluation>> {
        ts.par_iter().map(|&t| self.pdf_with(t, options)).collect()
    }

    /// `mean ± 12·std`.
    pub fn normalization_window(&self) -> (f64, f64) {
        let (m, s) = (self.mean(), self.std_dev());
        (m - 12.0 * s, m + 12.0 * s)
    }

    /// Trapezoid integral of the density over [`Self::normalization_window`].
    pub fn pdf_mass(&self, points: usize) -> Result<f64> {
        let (lo, hi) = self.normalization_window();
        let points = points.max(2);
        let h = (hi - lo) / (points - 1) as f64;
        let ts: Vec<f64> = (0..points).map(|i| lo + h * i as f64).collect();
        let f = self.pdf_grid(&ts, &ImhofOptions::default())?;
        let inner: f64 = f[1..points - 1].iter().map(|e| e.value).sum();
        Ok(h * (inner + 0.5 * (f[0].value + f[points - 1].value)))
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Cdf,
    Pdf,
}

/// The integrand for a fixed argument, with weights normalised to max |w| = 1.
struct Inversion {
    weights: Vec<f64>,
    s: f64,
    norm: f64,
    /// `Σ_{j<m} ln|w_j|` over magnitudes sorted descending, `m = 0..=k`.
    log_prefix: Vec<f64>,
}

impl Inversion {
    fn new(weights: &[f64], s: f64) -> Self {
        let norm = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        let weights: Vec<f64> = weights.iter().map(|w| w / norm).collect();
        let mut mags: Vec<f64> = weights.iter().map(|w| w.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        let mut log_prefix = vec![0.0];
        for m in &mags {
            log_prefix.push(log_prefix.last().unwrap() + m.ln());
        }
        Self { weights, s: s / norm, norm, log_prefix }
    }

    fn theta_log_rho(&self, u: f64) -> (f64, f64) {
        let mut theta = 0.0;
        let mut log_rho = 0.0;
        for &w in &self.weights {
            let wu = w * u;
            theta += wu.atan();
            log_rho += (wu * wu).ln_1p();
        }
        (0.5 * theta - 0.5 * self.s * u, 0.25 * log_rho)
    }

    fn eval(&self, kind: Kind, u: f64) -> f64 {
        match kind {
            Kind::Cdf => {
                if u == 0.0 {
                    return 0.5 * (self.weights.iter().sum::<f64>() - self.s);
                }
                let (theta, lr) = self.theta_log_rho(u);
                theta.sin() / u * (-lr).exp()
            }
            Kind::Pdf => {
                let (theta, lr) = self.theta_log_rho(u);
                theta.cos() * (-lr).exp()
            }
        }
    }

    /// Bound on `∫_U^∞ |integrand|`, minimised over the `m` largest weights.
    fn tail_bound(&self, kind: Kind, u: f64) -> f64 {
        let k = self.weights.len();
        let mut best = f64::INFINITY;
        for m in 1..=k {
            let half = 0.5 * m as f64;
            let log_den = half * u.ln() + 0.5 * self.log_prefix[m];
            let b = match kind {
                // ∫_U^∞ u^{−1−m/2} = (2/m) U^{−m/2}
                Kind::Cdf => (2.0 / m as f64) * (-log_den).exp(),
                // ∫_U^∞ u^{−m/2} = U^{1−m/2} / (m/2 − 1), m ≥ 3
                Kind::Pdf if m >= 3 => u / (half - 1.0) * (-log_den).exp(),
                Kind::Pdf => f64::INFINITY,
            };
            best = best.min(b);
        }
        best
    }

    /// Panel boundaries on `[0, upper]`: `[0, ¼, ½, 1]`, then doublings, with
    /// no panel longer than a quarter oscillation period.
    fn breaks(&self, upper: f64) -> Vec<f64> {
        let step = if self.s != 0.0 { PI / self.s.abs() } else { f64::INFINITY };
        let mut coarse = vec![0.0, 0.25, 0.5, 1.0];
        while *coarse.last().unwrap() < upper {
            let next = (coarse.last().unwrap() * 2.0).min(upper);
            coarse.push(next);
        }
        coarse.retain(|&b| b <= upper);
        if *coarse.last().unwrap() < upper {
            coarse.push(upper);
        }
        let mut out = vec![0.0];
        for w in coarse.windows(2) {
            let pieces = ((w[1] - w[0]) / step).ceil().max(1.0) as usize;
            for i in 1..=pieces {
                out.push(w[0] + (w[1] - w[0]) * i as f64 / pieces as f64);
            }
        }
        out
    }

    fn panel_count(&self, upper: f64) -> f64 {
        let step = if self.s != 0.0 { PI / self.s.abs() } else { f64::INFINITY };
        upper.max(1.0).log2() + 4.0 + upper / step
    }

    /// `∫₀^∞` of the chosen integrand with an error bound.
    fn integrate(&self, kind: Kind, tol: f64, max_panels: usize) -> (f64, f64) {
        let budget = (max_panels / 8).max(16) as f64;
        let tail_tol = 0.5 * tol;
        let mut upper = 1.0;
        while self.tail_bound(kind, upper) > tail_tol && self.panel_count(2.0 * upper) <= budget && upper < 1e300 {
            upper *= 2.0;
        }
        let head = quad::integrate(|u| self.eval(kind, u), &self.breaks(upper), 0.5 * tol, max_panels);
        let direct = self.tail_bound(kind, upper);
        if direct <= tail_tol {
            return (head.value, head.error + direct);
        }
        let (tail, tail_err) = self.extrapolated_tail(kind, upper, tail_tol, max_panels);
        (head.value + tail, head.error + tail_err)
    }

    /// `∫_U^∞` as Wynn-accelerated partial sums over half-period intervals
    /// (oscillating integrand) or doubling intervals (monotone tail).
    fn extrapolated_tail(&self, kind: Kind, upper: f64, tol: f64, max_panels: usize) -> (f64, f64) {
        let half_period = if self.s != 0.0 { 2.0 * PI / self.s.abs() } else { f64::INFINITY };
        let oscillating = half_period <= upper;
        let mut sums = Vec::new();
        let mut acc = 0.0;
        let mut quad_err = 0.0;
        let mut a = upper;
        let mut last = (f64::NAN, f64::INFINITY);
        for i in 0..120 {
            let b = if oscillating { a + half_period } else { 2.0 * a };
            let est = quad::integrate(|u| self.eval(kind, u), &[a, 0.5 * (a + b), b], 1e-3 * tol, max_panels / 16);
            acc += est.value;
            quad_err += est.error;
            sums.push(acc);
            a = b;
            if i >= 4 {
                let (v, e) = quad::wynn_epsilon(&sums);
                if e <= tol && (v - last.0).abs() <= tol {
                    return (v, e + quad_err);
                }
                last = (v, e);
            }
        }
        (last.0, last.1.max((last.0 - acc).abs()) + quad_err)
    }
}

/// The law of `β` under `c_eval` for a zero-mean rule.
pub fn gchi2_from_rule<T: Real>(rule: &QuadraticRule<T>, c_eval: &CovarianceModel<T>) -> Result<GChi2Params> {
    if rule.has_linear_term() {
        return Err(Error::LinearTermUnsupported);
    }
    if !c_eval.has_zero_mean() {
        return Err(Error::InvalidArgument("evaluation class must have zero mean".into()));
    }
    if rule.dim() != c_eval.dim() {
        return Err(Error::DimensionMismatch { expected: rule.dim(), found: c_eval.dim() });
    }
    let root = c_eval.sqrt();
    let m = &root * &rule.quad * &root;
    let weights = linalg::sym_eigen_desc(&m)?.values.iter().map(|w| w.as_f64()).collect();
    GChi2Params::new(weights, 0.5 * rule.constant.as_f64(), 0.5)
}

/// Analytic misclassification rates `(P_A(β ≤ 0), P_B(β > 0))`.
pub fn error_rates<T: Real>(
    rule: &QuadraticRule<T>,
    ca: &CovarianceModel<T>,
    cb: &CovarianceModel<T>,
) -> Result<(f64, f64)> {
    let a = gchi2_from_rule(rule, ca)?;
    let b = gchi2_from_rule(rule, cb)?;
    Ok((a.cdf(0.0)?, 1.0 - b.cdf(0.0)?))
}

/// Upper bound on the Kolmogorov–Smirnov distance between the law and the
/// empirical CDF of `samples`, evaluating the law at about `points`
/// order statistics.
pub fn ks_distance(params: &GChi2Params, samples: &[f64], points: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let stride = (n / points.max(1)).max(1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if *idx.last().unwrap() != n - 1 {
        idx.push(n - 1);
    }
    let ts: Vec<f64> = idx.iter().map(|&i| sorted[i]).collect();
    let cdf: Vec<f64> = params.cdf_grid(&ts, &ImhofOptions::default())?.iter().map(|e| e.value).collect();
    // F_n(t) and F_n(t−) at the evaluation points
    let at = |t: f64| sorted.partition_point(|&x| x <= t) as f64 / n as f64;
    let before = |t: f64| sorted.partition_point(|&x| x < t) as f64 / n as f64;
    // below the smallest sample F_n = 0, above the largest F_n = 1
    let mut d = cdf[0].max(1.0 - cdf[cdf.len() - 1]);
    for j in 0..ts.len() {
        d = d.max((cdf[j] - at(ts[j])).abs()).max((cdf[j] - before(ts[j])).abs());
        if j + 1 < ts.len() {
            // both CDFs are nondecreasing between neighbouring points
            d = d.max(cdf[j + 1] - at(ts[j])).max(before(ts[j + 1]) - cdf[j]);
        }
    }
    Ok(d)
}
