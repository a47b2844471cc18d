//! The Bayes-optimal quadratic rule for two Gaussian classes.
//!
//! For classes `N(μ_A, Σ_A)` and `N(μ_B, Σ_B)` with equal priors the log
//! density ratio is
//!
//! ```text
//! β(x) = ½ (xᵀQx − 2qᵀx + c)
//! Q = Σ_B⁻¹ − Σ_A⁻¹
//! q = Σ_B⁻¹μ_B − Σ_A⁻¹μ_A
//! c = μ_BᵀΣ_B⁻¹μ_B − μ_AᵀΣ_A⁻¹μ_A − log(|Σ_A| / |Σ_B|)
//! ```
//!
//! and a point is assigned to class A iff `β(x) > 0`. The factor ½ is applied
//! consistently here, in the class expectations and in the closed forms.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covmodel::{Centering, CovarianceModel, Spectrum};
use crate::error::{Error, Result};
use crate::linalg;
use crate::matio;
use crate::sampler::{GaussianStream, CHUNK_ROWS};
use crate::scalar::Real;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticRule<T: Real> {
    pub quad: DMatrix<T>,
    pub linear: DVector<T>,
    pub constant: T,
}

impl<T: Real> QuadraticRule<T> {
    pub fn zero(d: usize) -> Self {
        Self { quad: DMatrix::zeros(d, d), linear: DVector::zeros(d), constant: T::zero() }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn negated(&self) -> Self {
        Self { quad: -&self.quad, linear: -&self.linear, constant: -self.constant }
    }

    pub fn has_linear_term(&self) -> bool {
        self.linear.iter().any(|v| *v != T::zero())
    }

    pub fn beta(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let x = DVector::from_column_slice(x);
        let two = T::lit(2.0);
        Ok(T::lit(0.5) * (x.dot(&(&self.quad * &x)) - two * self.linear.dot(&x) + self.constant))
    }

    /// `β` for every row of `x`.
    pub fn beta_batch(&self, x: &DMatrix<T>) -> Result<Vec<T>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.ncols() });
        }
        let quad = linalg::row_quadratic_forms(x, &self.quad);
        let lin = x * &self.linear;
        let (half, two) = (T::lit(0.5), T::lit(2.0));
        Ok(quad.iter().zip(lin.iter()).map(|(&a, &b)| half * (a - two * b + self.constant)).collect())
    }

    /// Class-A verdicts (`β > 0`) for every row.
    pub fn decide_batch(&self, x: &DMatrix<T>) -> Result<Vec<bool>> {
        Ok(self.beta_batch(x)?.into_iter().map(|b| b > T::zero()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassExpectations<T: Real> {
    pub beta_a: T,
    pub beta_b: T,
}

#[derive(Debug, Clone, Copy)]
pub struct RuleOptions<T: Real> {
    /// Relative eigenvalue floor for inverses and log-determinants; 0 is exact.
    pub floor: T,
}

impl<T: Real> Default for RuleOptions<T> {
    fn default() -> Self {
        Self { floor: T::zero() }
    }
}

pub fn build_rule<T: Real>(ca: &CovarianceModel<T>, cb: &CovarianceModel<T>) -> Result<QuadraticRule<T>> {
    build_rule_with(ca, cb, RuleOptions::default())
}

pub fn build_rule_with<T: Real>(
    ca: &CovarianceModel<T>,
    cb: &CovarianceModel<T>,
    options: RuleOptions<T>,
) -> Result<QuadraticRule<T>> {
    if ca.dim() != cb.dim() {
        return Err(Error::DimensionMismatch { expected: ca.dim(), found: cb.dim() });
    }
    let pa = ca.precision(options.floor)?;
    let pb = cb.precision(options.floor)?;
    let quad = linalg::symmetrize(&(&pb - &pa));
    let (na, nb) = (&pa * ca.mean(), &pb * cb.mean());
    let linear = &nb - &na;
    let log_ratio = ca.log_det(options.floor)? - cb.log_det(options.floor)?;
    let constant = cb.mean().dot(&nb) - ca.mean().dot(&na) - log_ratio;
    Ok(QuadraticRule { quad, linear, constant })
}

/// `E[β(x)]` for `x ~ model`: `½(Tr(QΣ) + μᵀQμ − 2qᵀμ + c)`.
pub fn expected_beta<T: Real>(rule: &QuadraticRule<T>, model: &CovarianceModel<T>) -> Result<T> {
    if model.dim() != rule.dim() {
        return Err(Error::DimensionMismatch { expected: rule.dim(), found: model.dim() });
    }
    let mu = model.mean();
    let tr = linalg::trace_of_product(&rule.quad, &model.covariance());
    let two = T::lit(2.0);
    Ok(T::lit(0.5) * (tr + mu.dot(&(&rule.quad * mu)) - two * rule.linear.dot(mu) + rule.constant))
}

/// `⟨β⟩` under each class. For zero means this is
/// `½(Tr(Σ_B⁻¹Σ_A) − d + c)` and `½(d − Tr(Σ_A⁻¹Σ_B) + c)`.
pub fn class_expectations<T: Real>(ca: &CovarianceModel<T>, cb: &CovarianceModel<T>) -> Result<ClassExpectations<T>> {
    let rule = build_rule(ca, cb)?;
    Ok(ClassExpectations { beta_a: expected_beta(&rule, ca)?, beta_b: expected_beta(&rule, cb)? })
}

/// Generalised harmonic number `H_d^(s) = Σ_{i=1..d} i^(−s)`.
pub fn harmonic<T: Real>(d: usize, s: T) -> T {
    (1..=d).fold(T::zero(), |a, i| a + T::of_usize(i).powf(-s))
}

/// Closed-form class expectations for diagonal power-law classes with
/// exponents `alpha_a` and `alpha_a + delta_alpha` in a shared basis.
///
/// `alpha_a` cancels; it is accepted so call sites read like the model setup.
pub fn diagonal_expectations<T: Real>(d: usize, _alpha_a: T, delta_alpha: T) -> Result<ClassExpectations<T>> {
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let dd = T::of_usize(d);
    let log_fact = T::lit(statrs::function::gamma::ln_gamma(d as f64 + 1.0));
    let half = T::lit(0.5);
    Ok(ClassExpectations {
        beta_a: half * (harmonic(d, -delta_alpha) - dd - delta_alpha * log_fact),
        beta_b: half * (dd - harmonic(d, delta_alpha) - delta_alpha * log_fact),
    })
}

/// Haar average of `⟨β_A⟩` for two classes sharing `spectrum` in independent
/// random bases: `½(Tr(Λ⁻¹)Tr(Λ)/d − d)`. The class-B average is its negation.
pub fn rotated_expectation<T: Real>(spectrum: &Spectrum<T>) -> T {
    let d = T::of_usize(spectrum.dim());
    T::lit(0.5) * (spectrum.inverse_trace() * spectrum.trace() / d - d)
}

/// Rule from the uncentred sample second moments `(1/N)XᵀX + ridge·I`.
pub fn empirical_rule<T: Real>(xa: &DMatrix<T>, xb: &DMatrix<T>, ridge: T) -> Result<QuadraticRule<T>> {
    if xa.ncols() != xb.ncols() {
        return Err(Error::DimensionMismatch { expected: xa.ncols(), found: xb.ncols() });
    }
    if ridge < T::zero() {
        return Err(Error::InvalidArgument("ridge must be nonnegative".into()));
    }
    let ma = CovarianceModel::from_samples(xa, Centering::Zero, ridge)?;
    let mb = CovarianceModel::from_samples(xb, Centering::Zero, ridge)?;
    build_rule(&ma, &mb)
}

/// Mean absolute discriminant difference `mean |β_emp(x) − β_pop(x)|` over
/// the rows of `x`.
pub fn empirical_deviation<T: Real>(pop: &QuadraticRule<T>, emp: &QuadraticRule<T>, x: &DMatrix<T>) -> Result<T> {
    if pop.dim() != emp.dim() {
        return Err(Error::DimensionMismatch { expected: pop.dim(), found: emp.dim() });
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("no evaluation samples".into()));
    }
    let a = pop.beta_batch(x)?;
    let b = emp.beta_batch(x)?;
    let sum = a.iter().zip(&b).fold(T::zero(), |s, (p, e)| s + (*e - *p).abs());
    Ok(sum / T::of_usize(x.nrows()))
}

/// Monte-Carlo accuracy with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEstimate {
    pub accuracy: f64,
    pub standard_error: f64,
    pub samples: usize,
}

/// Counts rows of `n` fresh draws (in fixed chunks) for which `verdict`
/// returns `want`.
fn count_verdicts<T: Real, F>(model: &CovarianceModel<T>, n: usize, seed: u64, want: bool, verdict: &F) -> Result<usize>
where
    F: Fn(&DMatrix<T>) -> Result<Vec<bool>> + Sync,
{
    let mut stream = GaussianStream::new(model, seed);
    let mut hits = 0;
    let mut left = n;
    while left > 0 {
        let len = left.min(CHUNK_ROWS);
        let x = stream.next_rows(len);
        let v = verdict(&x)?;
        if v.len() != len {
            return Err(Error::Invariant(format!("classifier returned {} verdicts for {len} rows", v.len())));
        }
        hits += v.iter().filter(|&&a| a == want).count();
        left -= len;
    }
    Ok(hits)
}

/// Held-out accuracy of an arbitrary batch classifier (`true` = class A) on
/// `n_per_class` fresh draws per class. Class A uses `seed`, class B
/// [`seed::class_b`]`(seed)`, the same streams as a generated dataset.
pub fn held_out_accuracy<T: Real, F>(
    ca: &CovarianceModel<T>,
    cb: &CovarianceModel<T>,
    n_per_class: usize,
    seed: u64,
    verdict: F,
) -> Result<AccuracyEstimate>
where
    F: Fn(&DMatrix<T>) -> Result<Vec<bool>> + Sync,
{
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let (a, b) = rayon::join(
        || count_verdicts(ca, n_per_class, seed, true, &verdict),
        || count_verdicts(cb, n_per_class, seed::class_b(seed), false, &verdict),
    );
    let total = 2 * n_per_class;
    let p = (a? + b?) as f64 / total as f64;
    Ok(AccuracyEstimate { accuracy: p, standard_error: (p * (1.0 - p) / total as f64).sqrt(), samples: total })
}

/// Monte-Carlo accuracy of the Bayes-optimal rule.
pub fn boc_accuracy<T: Real>(
    ca: &CovarianceModel<T>,
    cb: &CovarianceModel<T>,
    n_per_class: usize,
    seed: u64,
) -> Result<AccuracyEstimate> {
    let rule = build_rule(ca, cb)?;
    held_out_accuracy(ca, cb, n_per_class, seed, |x| rule.decide_batch(x))
}

/// One link in the chain of seeds that produced an artefact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLink {
    pub label: String,
    pub seed: u64,
}

/// Sidecar record stored next to a serialized rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleMetadata {
    pub dim: usize,
    pub constant: f64,
    #[serde(default)]
    pub seed_chain: Vec<SeedLink>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Writes `[Q, q, c]` as three BOCM blocks and the metadata as `<path>.json`.
pub fn save_rule<T: Real>(path: &Path, rule: &QuadraticRule<T>, seed_chain: Vec<SeedLink>) -> Result<()> {
    let q = DMatrix::from_column_slice(rule.dim(), 1, rule.linear.as_slice());
    let c = DMatrix::from_element(1, 1, rule.constant);
    matio::write_bocm(path, &[&rule.quad, &q, &c])?;
    let meta = RuleMetadata { dim: rule.dim(), constant: rule.constant.as_f64(), seed_chain };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_rule<T: Real>(path: &Path) -> Result<(QuadraticRule<T>, Option<RuleMetadata>)> {
    let blocks = matio::read_bocm::<T>(path)?;
    let [quad, q, c] = <[DMatrix<T>; 3]>::try_from(blocks)
        .map_err(|b| Error::Format(format!("rule file needs 3 blocks, found {}", b.len())))?;
    let d = linalg::ensure_square(&quad)?;
    if q.shape() != (d, 1) || c.shape() != (1, 1) {
        return Err(Error::Format("rule blocks have inconsistent shapes".into()));
    }
    let rule = QuadraticRule { quad, linear: q.column(0).into_owned(), constant: c[(0, 0)] };
    let side = sidecar_path(path);
    let meta = if side.exists() { Some(serde_json::from_str(&std::fs::read_to_string(side)?)?) } else { None };
    Ok((rule, meta))
}

/// Accumulates `β` over many rows in parallel with a fixed chunk order.
pub fn beta_sum_parallel<T: Real>(rule: &QuadraticRule<T>, x: &DMatrix<T>) -> Result<T> {
    let chunks: Vec<(usize, usize)> = (0..x.nrows()).step_by(CHUNK_ROWS).map(|s| (s, CHUNK_ROWS.min(x.nrows() - s))).collect();
    let partial: Vec<Result<T>> = chunks
        .par_iter()
        .map(|&(s, len)| {
            let b = rule.beta_batch(&x.rows(s, len).into_owned())?;
            Ok(b.into_iter().fold(T::zero(), |a, v| a + v))
        })
        .collect();
    partial.into_iter().try_fold(T::zero(), |a, p| Ok(a + p?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covmodel::{haar_orthogonal, powerlaw_spectrum, Basis};
    use crate::sampler::sample_gaussian;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn diag_pl(d: usize, alpha: f64) -> CovarianceModel<f64> {
        CovarianceModel::power_law(d, alpha, Basis::identity(d).unwrap()).unwrap()
    }

    fn pl(d: usize, alpha: f64, seed: u64) -> CovarianceModel<f64> {
        CovarianceModel::power_law(d, alpha, haar_orthogonal(d, seed).unwrap()).unwrap()
    }

    fn scalar(var: f64) -> CovarianceModel<f64> {
        CovarianceModel::new(Spectrum::new(vec![var]).unwrap(), Basis::identity(1).unwrap()).unwrap()
    }

    #[test]
    fn identical_classes_give_null_rule() {
        let c = pl(10, 0.4, 3);
        let r = build_rule(&c, &c).unwrap();
        assert!(r.quad.norm() < 1e-9 && r.linear.norm() == 0.0 && r.constant.abs() < 1e-12);
        let e = class_expectations(&c, &c).unwrap();
        assert!(e.beta_a.abs() < 1e-8 && e.beta_b.abs() < 1e-8);
        let zero = QuadraticRule::<f64>::zero(3);
        assert_eq!(zero.beta(&[1.0, -2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn scalar_rule_by_hand() {
        let r = build_rule(&scalar(1.0), &scalar(2.0)).unwrap();
        assert_relative_eq!(r.quad[(0, 0)], -0.5, epsilon = 1e-15);
        assert_eq!(r.linear[0], 0.0);
        assert_relative_eq!(r.constant, 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(r.beta(&[0.0]).unwrap(), 0.5 * 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(r.beta(&[0.0]).unwrap(), 0.3466, epsilon = 1e-4);
    }

    #[test]
    fn beta_is_the_log_density_ratio() {
        // independent oracle: log N(x; μ_A, Σ_A) − log N(x; μ_B, Σ_B) via Cholesky
        let d = 4;
        let ca = pl(d, 0.3, 1).with_mean(DVector::from_vec(vec![0.5, -1.0, 0.0, 0.2])).unwrap();
        let cb = pl(d, 0.8, 2).with_mean(DVector::from_vec(vec![0.0, 0.3, -0.4, 0.1])).unwrap();
        let rule = build_rule(&ca, &cb).unwrap();
        let log_pdf = |m: &CovarianceModel<f64>, x: &DVector<f64>| {
            let ch = m.covariance().cholesky().unwrap();
            let r = x - m.mean();
            let sol = ch.solve(&r);
            let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            -0.5 * (r.dot(&sol) + logdet)
        };
        let xs = sample_gaussian(&ca, 20, 4).unwrap();
        for row in xs.row_iter() {
            let x = row.transpose();
            let want = log_pdf(&ca, &x) - log_pdf(&cb, &x);
            assert_relative_eq!(rule.beta(x.as_slice()).unwrap(), want, epsilon = 1e-9, max_relative = 1e-9);
        }
        let batch = rule.beta_batch(&xs).unwrap();
        for (i, row) in xs.row_iter().enumerate() {
            assert_relative_eq!(batch[i], rule.beta(row.transpose().as_slice()).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn diagonal_closed_form_matches_trace_formula() {
        let (d, a, da) = (100, 0.5, -0.3);
        let e = class_expectations(&diag_pl(d, a), &diag_pl(d, a + da)).unwrap();
        let closed = diagonal_expectations(d, a, da).unwrap();
        assert_relative_eq!(e.beta_a, closed.beta_a, epsilon = 1e-10, max_relative = 1e-10);
        assert_relative_eq!(e.beta_b, closed.beta_b, epsilon = 1e-10, max_relative = 1e-10);
        assert!(e.beta_a > 0.0 && e.beta_b < 0.0);
    }

    #[test]
    fn diagonal_small_cases() {
        let z = diagonal_expectations(50, 0.5f64, 0.0).unwrap();
        assert!(z.beta_a.abs() < 1e-12 && z.beta_b.abs() < 1e-12);
        // Tr(Σ_B⁻¹Σ_A) = Σ i^Δα = 1 + 2^−0.3 for d = 2
        let e = diagonal_expectations(2, 0.5, -0.3).unwrap();
        let want = 0.5 * ((1.0 + 2f64.powf(-0.3)) - 2.0 + 0.3 * 2f64.ln());
        assert_relative_eq!(e.beta_a, want, epsilon = 1e-13);
        let traced = class_expectations(&diag_pl(2, 0.5), &diag_pl(2, 0.2)).unwrap();
        assert_relative_eq!(traced.beta_a, want, epsilon = 1e-13);
        // log Γ(d+1) against a direct log-factorial sum
        let d = 300;
        let direct: f64 = (1..=d).map(|i| (i as f64).ln()).sum();
        let e = diagonal_expectations(d, 0.0, 0.2).unwrap();
        let want_b = 0.5 * (d as f64 - harmonic(d, 0.2) - 0.2 * direct);
        assert_relative_eq!(e.beta_b, want_b, max_relative = 1e-11);
        assert!(diagonal_expectations::<f64>(0, 0.5, 0.1).is_err());
    }

    #[test]
    fn diagonal_expectation_grows_with_d() {
        for da in [-0.3, -0.1, 0.1, 0.3] {
            let vals: Vec<f64> = (10..=1000).step_by(10).map(|d| diagonal_expectations(d, 0.5, da).unwrap().beta_a).collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]), "Δα = {da}");
        }
    }

    #[test]
    fn rotated_closed_form_cases() {
        assert_eq!(rotated_expectation(&Spectrum::<f64>::flat(7).unwrap()), 0.0);
        let s = Spectrum::new(vec![1.0, 0.5]).unwrap();
        assert_relative_eq!(rotated_expectation(&s), 0.125, epsilon = 1e-15);
        for d in [50, 100, 200] {
            let rot = rotated_expectation(&powerlaw_spectrum(d, 0.5).unwrap());
            for da in [-0.3, 0.1, 0.3] {
                assert!(rot > diagonal_expectations(d, 0.5, da).unwrap().beta_a, "d={d} Δα={da}");
            }
        }
    }

    #[test]
    fn rotated_expectation_is_the_haar_average() {
        let d = 100;
        let spec = powerlaw_spectrum::<f64>(d, 0.5).unwrap();
        let (a, b): (Vec<f64>, Vec<f64>) = (0..200u64)
            .map(|k| {
                let ca = CovarianceModel::new(spec.clone(), haar_orthogonal(d, seed::child(1, k)).unwrap()).unwrap();
                let cb = CovarianceModel::new(spec.clone(), haar_orthogonal(d, seed::child(2, k)).unwrap()).unwrap();
                let e = class_expectations(&ca, &cb).unwrap();
                (e.beta_a, e.beta_b)
            })
            .unzip();
        let want = rotated_expectation(&spec);
        // β_A = −β_B holds for the Haar average, not for each pair
        let (ma, sa) = linalg::mean_and_se(&a);
        let (mb, sb) = linalg::mean_and_se(&b);
        assert!((ma - want).abs() <= 3.0 * sa, "{ma} ± {sa} vs {want}");
        assert!((mb + want).abs() <= 3.0 * sb, "{mb} ± {sb} vs {}", -want);
    }

    #[test]
    fn three_way_agreement_with_monte_carlo() {
        let (ca, cb) = (pl(100, 0.5, 5), pl(100, 0.2, 5));
        let rule = build_rule(&ca, &cb).unwrap();
        let e = class_expectations(&ca, &cb).unwrap();
        // trace formula computed independently from explicit inverses
        let inv_b = cb.covariance().try_inverse().unwrap();
        let tr = (&inv_b * ca.covariance()).trace();
        let c = -(&inv_b * ca.covariance()).determinant().ln();
        assert_relative_eq!(e.beta_a, 0.5 * (tr - 100.0 + c), max_relative = 1e-6);
        for (model, want, s) in [(&ca, e.beta_a, 7u64), (&cb, e.beta_b, 8)] {
            let x = sample_gaussian(model, 100_000, s).unwrap();
            let b = rule.beta_batch(&x).unwrap();
            let (m, se) = linalg::mean_and_se(&b);
            assert!((m - want).abs() <= 3.0 * se, "{m} ± {se} vs {want}");
        }
    }

    #[test]
    fn joint_rotation_invariance() {
        let (ca, cb) = (pl(30, 0.2, 1), pl(30, 0.5, 2));
        let r = haar_orthogonal::<f64>(30, 3).unwrap();
        let (ra, rb) = (ca.rotated(r.matrix()).unwrap(), cb.rotated(r.matrix()).unwrap());
        let (e0, e1) = (class_expectations(&ca, &cb).unwrap(), class_expectations(&ra, &rb).unwrap());
        assert_relative_eq!(e0.beta_a, e1.beta_a, max_relative = 1e-8);
        assert_relative_eq!(e0.beta_b, e1.beta_b, max_relative = 1e-8);
        let a0 = boc_accuracy(&ca, &cb, 20_000, 9).unwrap().accuracy;
        let a1 = boc_accuracy(&ra, &rb, 20_000, 9).unwrap().accuracy;
        assert!((a0 - a1).abs() <= 1e-8);
    }

    #[test]
    fn boc_accuracy_cases() {
        let c = pl(20, 0.3, 1);
        let same = boc_accuracy(&c, &c, 50_000, 2).unwrap();
        // the null rule gives β ≡ 0, so everything is called class B
        assert!((same.accuracy - 0.5).abs() <= 3.0 * same.standard_error);
        let basis = haar_orthogonal::<f64>(100, 4).unwrap();
        let ca = CovarianceModel::power_law(100, 0.2, basis.clone()).unwrap();
        let cb = CovarianceModel::power_law(100, 0.3, basis).unwrap();
        let acc = boc_accuracy(&ca, &cb, 100_000, 5).unwrap().accuracy;
        assert!((acc - 0.91).abs() <= 0.01, "{acc}");
        let (ra, rb) = (pl(100, 0.2, 6), pl(100, 0.2, 7));
        let acc = boc_accuracy(&ra, &rb, 20_000, 8).unwrap().accuracy;
        assert!(acc >= 0.999, "{acc}");
    }

    #[test]
    fn empirical_rule_rank_bound() {
        let d = 10;
        let c = pl(d, 0.5, 1);
        let x_ok = sample_gaussian(&c, d + 1, 2).unwrap();
        let x_bad = sample_gaussian(&c, d - 1, 3).unwrap();
        assert!(empirical_rule(&x_ok, &x_ok, 0.0).is_ok());
        assert!(matches!(empirical_rule(&x_bad, &x_ok, 0.0), Err(Error::Singular { .. })));
        assert!(empirical_rule(&x_bad, &x_ok, 1e-3).is_ok());
    }

    #[test]
    fn empirical_null_rule_scales_like_sqrt_gamma() {
        let d = 20;
        let c = pl(d, 0.0, 1);
        let ns = [1000usize, 4000, 16000, 64000];
        let logs: Vec<(f64, f64)> = ns
            .iter()
            .map(|&n| {
                let norms: Vec<f64> = (0..6u64)
                    .map(|r| {
                        let xa = sample_gaussian(&c, n, seed::child(n as u64, 2 * r)).unwrap();
                        let xb = sample_gaussian(&c, n, seed::child(n as u64, 2 * r + 1)).unwrap();
                        empirical_rule(&xa, &xb, 0.0).unwrap().quad.norm()
                    })
                    .collect();
                ((d as f64 / n as f64).ln(), linalg::mean_and_se(&norms).0.ln())
            })
            .collect();
        let slope = ols(&logs);
        assert!((slope - 0.5).abs() <= 0.1, "slope {slope}");
    }

    #[test]
    fn empirical_rule_converges_to_population() {
        let (ca, cb) = (pl(10, 0.5, 1), pl(10, 0.2, 2));
        let pop = build_rule(&ca, &cb).unwrap();
        let errs: Vec<(f64, f64)> = [1_000usize, 10_000, 100_000]
            .iter()
            .map(|&n| {
                let emp = empirical_rule(
                    &sample_gaussian(&ca, n, 3).unwrap(),
                    &sample_gaussian(&cb, n, 4).unwrap(),
                    0.0,
                )
                .unwrap();
                ((&emp.quad - &pop.quad).norm() / pop.quad.norm(), (emp.constant - pop.constant).abs())
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1), "{errs:?}");
        assert!(errs[2].0 < 0.05);
    }

    #[test]
    fn deviation_scaling() {
        let (ca, cb) = (pl(20, 0.5, 1), pl(20, 0.4, 1));
        let pop = build_rule(&ca, &cb).unwrap();
        assert_eq!(empirical_deviation(&pop, &pop, &sample_gaussian(&ca, 10, 1).unwrap()).unwrap(), 0.0);
        let eval = sample_gaussian(&ca, 4000, 99).unwrap();
        let pts: Vec<(f64, f64)> = [0.1, 0.03, 0.01, 0.003]
            .iter()
            .map(|&g: &f64| {
                let n = (20.0 / g).round() as usize;
                let devs: Vec<f64> = (0..3u64)
                    .map(|r| {
                        let emp = empirical_rule(
                            &sample_gaussian(&ca, n, seed::child(r, 1)).unwrap(),
                            &sample_gaussian(&cb, n, seed::child(r, 2)).unwrap(),
                            0.0,
                        )
                        .unwrap();
                        empirical_deviation(&pop, &emp, &eval).unwrap()
                    })
                    .collect();
                (g.ln(), linalg::mean_and_se(&devs).0.ln())
            })
            .collect();
        let slope = ols(&pts);
        assert!((slope - 0.5).abs() <= 0.1, "slope {slope}");
    }

    #[test]
    fn deviation_is_positive_at_desk_setting() {
        let (ca, cb) = (pl(100, 0.5, 1), pl(100, 0.2, 1));
        let pop = build_rule(&ca, &cb).unwrap();
        let n = 10_000;
        let emp = empirical_rule(&sample_gaussian(&ca, n, 2).unwrap(), &sample_gaussian(&cb, n, 3).unwrap(), 0.0).unwrap();
        let dev = empirical_deviation(&pop, &emp, &sample_gaussian(&ca, 2000, 4).unwrap()).unwrap();
        assert!(dev.is_finite() && dev > 0.0);
    }

    fn ols(pts: &[(f64, f64)]) -> f64 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rule.bocm");
        let ca = pl(5, 0.3, 1).with_mean(DVector::from_element(5, 0.1)).unwrap();
        let rule = build_rule(&ca, &pl(5, 0.6, 2)).unwrap();
        save_rule(&p, &rule, vec![SeedLink { label: "basis".into(), seed: 1 }]).unwrap();
        let (back, meta) = load_rule::<f64>(&p).unwrap();
        assert_eq!(back, rule);
        let meta = meta.unwrap();
        assert_eq!(meta.dim, 5);
        assert_eq!(meta.seed_chain[0].seed, 1);
    }

    #[test]
    fn parallel_sum_matches_serial() {
        let c = pl(8, 0.3, 1);
        let rule = build_rule(&c, &pl(8, 0.1, 2)).unwrap();
        let x = sample_gaussian(&c, 10_000, 3).unwrap();
        let serial: f64 = rule.beta_batch(&x).unwrap().iter().sum();
        assert_relative_eq!(beta_sum_parallel(&rule, &x).unwrap(), serial, max_relative = 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn swapping_classes_negates_the_rule(s1 in 0u64..500, s2 in 0u64..500, a in -0.5f64..1.0, b in -0.5f64..1.0) {
            let ca = pl(6, a, s1).with_mean(DVector::from_element(6, 0.3)).unwrap();
            let cb = pl(6, b, s2);
            let ab = build_rule(&ca, &cb).unwrap();
            let ba = build_rule(&cb, &ca).unwrap();
            prop_assert!((&ab.quad + &ba.quad).norm() <= 1e-9 * (1.0 + ab.quad.norm()));
            prop_assert!((&ab.linear + &ba.linear).norm() <= 1e-9 * (1.0 + ab.linear.norm()));
            prop_assert!((ab.constant + ba.constant).abs() <= 1e-9 * (1.0 + ab.constant.abs()));
            prop_assert!(linalg::relative_asymmetry(&ab.quad) <= 1e-10);
        }
    }
}
