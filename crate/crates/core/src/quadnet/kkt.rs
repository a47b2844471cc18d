//! Max-margin stationarity diagnostics for the bias-free network.
//!
//! With `λ_a = s/N` the stationarity condition reads `θ = s·G(θ)` where
//! `G(θ) = (1/N) Σ_a y_a ∇_θ Φ(θ; x_a)`. Blockwise,
//! `G_v = (1/N) Σ y_a (W x_a)²` and `G_W = (2/N) Σ y_a (v ∘ W x_a) x_aᵀ`.
//! `G` is homogeneous of degree 2 and even in `θ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{train::init_params, QuadNetParams};
use crate::error::{Error, Result};
use crate::sampler::GmmDataset;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `s` in `λ_a = s/N`.
    pub lambda_scale: f64,
    /// `‖θ̃ − s·G(θ̃)‖ / ‖θ̃‖` at the margin-normalised `θ̃`.
    pub stationarity_residual: f64,
    /// `min_a y_a Φ(x_a)` before normalisation.
    pub margin_min: f64,
    /// Samples with `y_a Φ(θ̃; x_a) < 1`.
    pub margin_violations: usize,
    pub feasible: bool,
    /// Factor `c` with `θ̃ = cθ`; 1 when infeasible.
    pub normalization: f64,
}

/// `G(θ)` over `(W, v)`; the bias slot is zero.
pub fn margin_gradient<T: Real>(p: &QuadNetParams<T>, ds: &GmmDataset<T>) -> Result<QuadNetParams<T>> {
    if ds.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: ds.dim() });
    }
    if ds.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let n = T::of_usize(ds.len());
    let h = &ds.samples * p.w.transpose();
    let d_h = p.hidden_width();
    let mut gv = DVector::zeros(d_h);
    let mut yh = h.clone();
    for (a, &y) in ds.labels.iter().enumerate() {
        let ya = T::lit(f64::from(y));
        for i in 0..d_h {
            let hi = h[(a, i)];
            gv[i] += ya * hi * hi;
            yh[(a, i)] = ya * hi * p.v[i];
        }
    }
    let gw: DMatrix<T> = yh.transpose() * &ds.samples * (T::lit(2.0) / n);
    Ok(QuadNetParams { w: gw, v: gv / n, b: T::zero() })
}

fn margins<T: Real>(p: &QuadNetParams<T>, ds: &GmmDataset<T>) -> Result<Vec<f64>> {
    Ok(p.forward_batch(&ds.samples)?
        .into_iter()
        .zip(&ds.labels)
        .map(|(f, &y)| f.as_f64() * f64::from(y))
        .collect())
}

/// Least-squares `s` minimising `‖θ − s·G(θ)‖` (0 when `G = 0`).
pub fn fit_lambda_scale<T: Real>(p: &QuadNetParams<T>, ds: &GmmDataset<T>) -> Result<f64> {
    let g = margin_gradient(p, ds)?;
    let gg = g.dot(&g).as_f64();
    Ok(if gg > 0.0 { p.dot(&g).as_f64() / gg } else { 0.0 })
}

/// Stationarity and feasibility of `p` as a max-margin KKT point.
///
/// Separating parameters are first rescaled to unit minimum margin by
/// `c = (min_a y_a Φ)^{−1/3}`. `lambda_scale = None` uses the least-squares
/// fit at the normalised parameters.
pub fn kkt_report<T: Real>(p: &QuadNetParams<T>, ds: &GmmDataset<T>, lambda_scale: Option<f64>) -> Result<KktReport> {
    if p.b != T::zero() {
        return Err(Error::BiasNotSupported);
    }
    if p.norm() == T::zero() {
        return Err(Error::InvalidArgument("all-zero parameters have no direction".into()));
    }
    let m = margins(p, ds)?;
    let margin_min = m.iter().copied().fold(f64::INFINITY, f64::min);
    let feasible = margin_min > 0.0;
    let normalization = if feasible { margin_min.powf(-1.0 / 3.0) } else { 1.0 };
    let pn = p.scaled(T::lit(normalization));
    let scale3 = normalization.powi(3);
    // tolerance covers the rounding of the rescale at the arg-min sample
    let margin_violations = m.iter().filter(|&&mi| mi * scale3 < 1.0 - 1e-9).count();
    let s = match lambda_scale {
        Some(s) => s,
        None => fit_lambda_scale(&pn, ds)?,
    };
    let g = margin_gradient(&pn, ds)?;
    let r = pn.axpy(T::lit(-s), &g);
    Ok(KktReport {
        lambda_scale: s,
        stationarity_residual: (r.norm() / pn.norm()).as_f64(),
        margin_min,
        margin_violations,
        feasible,
        normalization,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointOptions {
    /// Weight of the new direction in each damped update.
    pub damping: f64,
    /// Stop when the change of the unit-norm iterate is below this.
    pub tol: f64,
    pub max_iter: usize,
    pub init_scale: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-8, max_iter: 10_000, init_scale: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPoint<T: Real> {
    pub params: QuadNetParams<T>,
    pub converged: bool,
    pub iterations: usize,
    /// Last change of the unit-norm iterate.
    pub update_norm: f64,
    /// `‖v − s G_v‖/‖v‖`.
    pub residual_v: f64,
    /// `‖W − s G_W‖/‖W‖`.
    pub residual_w: f64,
}

fn block_residuals<T: Real>(p: &QuadNetParams<T>, ds: &GmmDataset<T>, s: f64) -> Result<(f64, f64)> {
    let g = margin_gradient(p, ds)?;
    let s = T::lit(s);
    let rel = |num: T, den: T| if den > T::zero() { (num / den).as_f64() } else { num.as_f64() };
    Ok((
        rel((&p.v - &g.v * s).norm(), p.v.norm()),
        rel((&p.w - &g.w * s).norm(), p.w.norm()),
    ))
}

/// Solves `θ = s·G(θ)` from a seeded random start.
pub fn kkt_fixed_point<T: Real>(
    ds: &GmmDataset<T>,
    d_h: usize,
    lambda_scale: f64,
    seed: u64,
    opts: &FixedPointOptions,
) -> Result<FixedPoint<T>> {
    let start = init_params(ds.dim(), d_h, opts.init_scale, seed)?;
    kkt_fixed_point_from(ds, start, lambda_scale, opts)
}

/// Solves `θ = s·G(θ)` from `start`.
///
/// Because `G` is degree-2 homogeneous, a solution is `θ = k·u` with
/// `G(u) = μu`, `μ > 0`, `‖u‖ = 1` and `k = 1/(sμ)`. The unit direction is
/// iterated as `u ← normalise((1−η)u + η·G(u)/‖G(u)‖)`, flipping the sign of
/// `u` whenever `⟨u, G(u)⟩ < 0` (allowed since `G` is even), then rescaled.
/// A zero start is the trivial solution and is returned unchanged.
pub fn kkt_fixed_point_from<T: Real>(
    ds: &GmmDataset<T>,
    start: QuadNetParams<T>,
    lambda_scale: f64,
    opts: &FixedPointOptions,
) -> Result<FixedPoint<T>> {
    if start.b != T::zero() {
        return Err(Error::BiasNotSupported);
    }
    if !(lambda_scale.is_finite() && lambda_scale > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda scale must be positive, got {lambda_scale}")));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!("damping must be in (0, 1], got {}", opts.damping)));
    }
    if ds.dim() != start.dim() {
        return Err(Error::DimensionMismatch { expected: start.dim(), found: ds.dim() });
    }
    let norm0 = start.norm();
    if norm0 == T::zero() {
        return Ok(FixedPoint { params: start, converged: true, iterations: 0, update_norm: 0.0, residual_v: 0.0, residual_w: 0.0 });
    }
    let eta = T::lit(opts.damping);
    let mut u = start.scaled(T::one() / norm0);
    let mut converged = false;
    let mut iterations = 0;
    let mut update_norm = f64::INFINITY;
    let mut g = margin_gradient(&u, ds)?;
    while iterations < opts.max_iter {
        let gn = g.norm();
        if gn == T::zero() {
            return Err(Error::NonConvergence { iterations, residual: f64::INFINITY });
        }
        if u.dot(&g) < T::zero() {
            u = u.scaled(-T::one());
        }
        let mixed = u.scaled(T::one() - eta).axpy(eta / gn, &g);
        let next = mixed.scaled(T::one() / mixed.norm());
        update_norm = next.axpy(-T::one(), &u).norm().as_f64();
        u = next;
        iterations += 1;
        g = margin_gradient(&u, ds)?;
        if update_norm < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("fixed point not reached after {iterations} iterations (update {update_norm:e})");
    }
    if u.dot(&g) < T::zero() {
        u = u.scaled(-T::one());
    }
    let mu = g.norm().as_f64();
    let params = u.scaled(T::lit(1.0 / (lambda_scale * mu)));
    let (residual_v, residual_w) = block_residuals(&params, ds, lambda_scale)?;
    Ok(FixedPoint { params, converged, iterations, update_norm, residual_v, residual_w })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boc::build_rule;
    use crate::covmodel::{haar_orthogonal, CovarianceModel};
    use crate::sampler::make_gmm_dataset;

    fn pl(d: usize, alpha: f64, seed: u64) -> CovarianceModel<f64> {
        CovarianceModel::power_law(d, alpha, haar_orthogonal(d, seed).unwrap()).unwrap()
    }

    fn separable_slice(d: usize) -> (QuadNetParams<f64>, GmmDataset<f64>) {
        let (ca, cb) = (pl(d, 0.0, 1), pl(d, 1.2, 2));
        let mut rule = build_rule(&ca, &cb).unwrap();
        rule.constant = 0.0;
        let p = QuadNetParams::from_rule(&rule, d).unwrap();
        let ds = make_gmm_dataset(&ca, &cb, 300, 3).unwrap();
        let f = p.forward_batch(&ds.samples).unwrap();
        let keep: Vec<usize> = (0..ds.len()).filter(|&i| f[i] * f64::from(ds.labels[i]) > 0.0).collect();
        let sep = GmmDataset::from_parts(ds.samples.select_rows(keep.iter()), keep.iter().map(|&i| ds.labels[i]).collect()).unwrap();
        (p, sep)
    }

    #[test]
    fn margin_gradient_matches_per_sample_sum() {
        let (p, ds) = separable_slice(5);
        let g = margin_gradient(&p, &ds).unwrap();
        let n = ds.len() as f64;
        let mut gw = DMatrix::<f64>::zeros(5, 5);
        let mut gv = DVector::<f64>::zeros(5);
        for a in 0..ds.len() {
            let x = ds.samples.row(a).transpose();
            let h = &p.w * &x;
            let y = f64::from(ds.labels[a]);
            for i in 0..5 {
                gv[i] += y * h[i] * h[i] / n;
                for k in 0..5 {
                    gw[(i, k)] += 2.0 * y * p.v[i] * h[i] * x[k] / n;
                }
            }
        }
        assert!((g.w - gw).norm() < 1e-12 && (g.v - gv).norm() < 1e-12);
    }

    #[test]
    fn constructed_params_have_no_violations_after_normalisation() {
        let (p, ds) = separable_slice(6);
        let rep = kkt_report(&p, &ds, None).unwrap();
        assert!(rep.feasible);
        assert_eq!(rep.margin_violations, 0);
        assert!(rep.margin_min > 0.0);
        let pn = p.scaled(rep.normalization);
        let m = margins(&pn, &ds).unwrap();
        let min = m.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min - 1.0).abs() < 1e-10, "{min}");
    }

    #[test]
    fn fitted_scale_beats_rescaled_scales() {
        let (p, ds) = separable_slice(6);
        let best = kkt_report(&p, &ds, None).unwrap();
        for s in [best.lambda_scale * 10.0, best.lambda_scale / 10.0] {
            let r = kkt_report(&p, &ds, Some(s)).unwrap();
            assert!(best.stationarity_residual < r.stationarity_residual);
        }
    }

    #[test]
    fn report_is_scale_free() {
        let (p, ds) = separable_slice(5);
        let a = kkt_report(&p, &ds, None).unwrap();
        let b = kkt_report(&p.scaled(3.7), &ds, None).unwrap();
        assert!((a.stationarity_residual - b.stationarity_residual).abs() < 1e-10);
        assert!((a.lambda_scale - b.lambda_scale).abs() < 1e-8 * a.lambda_scale.abs());
    }

    #[test]
    fn non_separating_params_are_infeasible() {
        let (p, ds) = separable_slice(5);
        let rep = kkt_report(&p.scaled(-1.0), &ds, Some(1.0)).unwrap();
        assert!(!rep.feasible);
        assert_eq!(rep.margin_violations, ds.len());
        assert_eq!(rep.normalization, 1.0);
        let mut biased = p.clone();
        biased.b = 0.1;
        assert!(matches!(kkt_report(&biased, &ds, None), Err(Error::BiasNotSupported)));
    }

    #[test]
    fn zero_start_is_the_trivial_fixed_point() {
        let (_, ds) = separable_slice(4);
        let fp = kkt_fixed_point_from(&ds, QuadNetParams::zeros(4, 3), 1.0, &FixedPointOptions::default()).unwrap();
        assert_eq!(fp.params, QuadNetParams::zeros(4, 3));
        assert_eq!(fp.iterations, 0);
    }

    #[test]
    fn converged_iterate_solves_both_equations() {
        let ds = make_gmm_dataset(&pl(10, 0.2, 1), &pl(10, 0.6, 2), 500, 3).unwrap();
        for s in [0.5, 2.0] {
            let fp = kkt_fixed_point(&ds, 6, s, 11, &FixedPointOptions::default()).unwrap();
            assert!(fp.converged, "{} iterations, update {}", fp.iterations, fp.update_norm);
            assert!(fp.residual_v < 1e-6 && fp.residual_w < 1e-6, "{} {}", fp.residual_v, fp.residual_w);
            let g = margin_gradient(&fp.params, &ds).unwrap();
            let r = fp.params.axpy(-s, &g).norm() / fp.params.norm();
            assert!(r < 1e-6);
        }
    }

    #[test]
    fn fixed_point_rejects_bad_input() {
        let (_, ds) = separable_slice(4);
        let o = FixedPointOptions::default();
        assert!(matches!(kkt_fixed_point(&ds, 3, 0.0, 1, &o), Err(Error::InvalidArgument(_))));
        let bad = FixedPointOptions { damping: 0.0, ..o };
        assert!(matches!(kkt_fixed_point(&ds, 3, 1.0, 1, &bad), Err(Error::InvalidArgument(_))));
        let mut start = init_params::<f64>(4, 3, 1.0, 1).unwrap();
        start.b = 1.0;
        assert!(matches!(kkt_fixed_point_from(&ds, start, 1.0, &o), Err(Error::BiasNotSupported)));
    }

    #[test]
    fn budget_exhaustion_returns_last_iterate() {
        let ds = make_gmm_dataset(&pl(10, 0.2, 1), &pl(10, 0.6, 2), 300, 3).unwrap();
        let o = FixedPointOptions { max_iter: 2, ..FixedPointOptions::default() };
        let fp = kkt_fixed_point(&ds, 6, 1.0, 11, &o).unwrap();
        assert!(!fp.converged);
        assert_eq!(fp.iterations, 2);
        assert!(fp.params.is_finite());
    }
}
