//! Structured class covariances.
//!
//! A [`CovarianceModel`] stores a covariance as `Σ = Bᵀ · diag(λ) · B`, where
//! the rows of the basis `B` are eigenvectors and `λ` is the [`Spectrum`].
//! Keeping the factors rather than `Σ` itself lets inverses, square roots and
//! log-determinants be formed exactly from the spectrum.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, SortedEigen};
use crate::scalar::Real;
use crate::seed;

/// Eigenvalues of a covariance, strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T: Real> {
    values: Vec<T>,
}

impl<T: Real> Spectrum<T> {
    /// A positive spectrum sorted in descending order.
    pub fn new(values: Vec<T>) -> Result<Self> {
        let s = Self::unordered(values)?;
        if !s.is_descending() {
            return Err(Error::UnsortedSpectrum);
        }
        Ok(s)
    }

    /// A positive spectrum in arbitrary order.
    ///
    /// Flip composition splices two sorted spectra, and the splice need not be
    /// sorted.
    pub fn unordered(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if let Some(v) = values.iter().find(|v| !(**v > T::zero()) || !v.is_finite()) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: v.as_f64() });
        }
        Ok(Self { values })
    }

    pub fn flat(d: usize) -> Result<Self> {
        Self::new(vec![T::one(); d])
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_descending(&self) -> bool {
        self.values.windows(2).all(|w| w[0] >= w[1])
    }

    pub fn max(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v))
    }

    pub fn min(&self) -> T {
        self.values.iter().fold(self.values[0], |m, &v| m.min(v))
    }

    pub fn trace(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &v| a + v)
    }

    pub fn inverse_trace(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &v| a + v.recip())
    }

    pub fn log_det(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &v| a + v.ln())
    }
}

/// `values[i] = (i+1)^(−1−α)`.
pub fn powerlaw_spectrum<T: Real>(d: usize, alpha: T) -> Result<Spectrum<T>> {
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let exponent = -T::one() - alpha;
    Spectrum::new((1..=d).map(|i| T::of_usize(i).powf(exponent)).collect())
}

/// Square matrix whose rows are (approximately) orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct Basis<T: Real> {
    matrix: DMatrix<T>,
    orthogonality_error: T,
}

impl<T: Real> Basis<T> {
    /// Default tolerance for an exactly orthogonal basis of dimension `d`:
    /// 1e-10, widened to a few hundred ulps for single precision.
    pub fn exact_tolerance(d: usize) -> T {
        let ulps = T::lit(32.0) * T::of_usize(d.max(1)) * T::default_epsilon();
        T::lit(1e-10).max(ulps)
    }

    pub fn identity(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self { matrix: DMatrix::identity(d, d), orthogonality_error: T::zero() })
    }

    /// Checks orthogonality against [`Basis::exact_tolerance`].
    pub fn new(matrix: DMatrix<T>) -> Result<Self> {
        let tol = Self::exact_tolerance(matrix.nrows());
        Self::with_tolerance(matrix, tol)
    }

    pub fn with_tolerance(matrix: DMatrix<T>, tolerance: T) -> Result<Self> {
        let basis = Self::unchecked(matrix)?;
        if basis.orthogonality_error > tolerance {
            return Err(Error::NotOrthogonal {
                error: basis.orthogonality_error.as_f64(),
                tolerance: tolerance.as_f64(),
            });
        }
        Ok(basis)
    }

    /// Accepts any nonempty square matrix and records its orthogonality error.
    pub fn unchecked(matrix: DMatrix<T>) -> Result<Self> {
        let d = linalg::ensure_square(&matrix)?;
        if d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let orthogonality_error = orthogonality_error(&matrix)?;
        Ok(Self { matrix, orthogonality_error })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn orthogonality_error(&self) -> T {
        self.orthogonality_error
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthogonality_error <= Self::exact_tolerance(self.dim())
    }

    /// Basis of `R Σ Rᵀ`, i.e. `B Rᵀ`.
    pub fn rotated(&self, rotation: &DMatrix<T>) -> Result<Self> {
        if rotation.nrows() != self.dim() || rotation.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: rotation.nrows() });
        }
        Self::unchecked(&self.matrix * rotation.transpose())
    }
}

/// Haar-distributed orthogonal matrix from the sign-corrected QR
/// decomposition of an i.i.d. standard Gaussian matrix.
pub fn haar_orthogonal<T: Real>(d: usize, seed: u64) -> Result<Basis<T>> {
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let mut rng = seed::rng(seed);
    let g: DMatrix<T> = linalg::standard_normal_matrix(d, d, &mut rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    Basis::new(q)
}

/// How sample rows are centred before a covariance is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    /// Rows are taken as already centred (zero-mean model).
    #[default]
    Zero,
    /// The empirical column means are subtracted and kept as the model mean.
    Empirical,
}

/// A Gaussian class model `N(mean, Bᵀ diag(λ) B)`.
#[derive(Debug, Clone)]
pub struct CovarianceModel<T: Real> {
    spectrum: Spectrum<T>,
    basis: Basis<T>,
    mean: DVector<T>,
}

impl<T: Real> CovarianceModel<T> {
    pub fn new(spectrum: Spectrum<T>, basis: Basis<T>) -> Result<Self> {
        if spectrum.dim() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: spectrum.dim(), found: basis.dim() });
        }
        let mean = DVector::zeros(spectrum.dim());
        Ok(Self { spectrum, basis, mean })
    }

    pub fn with_mean(mut self, mean: DVector<T>) -> Result<Self> {
        if mean.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: mean.len() });
        }
        self.mean = mean;
        Ok(self)
    }

    /// Power-law spectrum with exponent `alpha` in the given basis.
    pub fn power_law(d: usize, alpha: T, basis: Basis<T>) -> Result<Self> {
        Self::new(powerlaw_spectrum(d, alpha)?, basis)
    }

    /// Decomposes a symmetric positive-definite matrix.
    pub fn from_matrix(sigma: &DMatrix<T>) -> Result<Self> {
        let SortedEigen { values, vectors } = linalg::sym_eigen_desc(sigma)?;
        let min = *values.last().expect("nonempty");
        if !(min > T::zero()) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min.as_f64() });
        }
        let ties = linalg::degenerate_pairs(&values, T::lit(1e-12));
        if ties > 0 {
            log::debug!("{ties} degenerate eigenvalue pair(s); eigenvectors within those subspaces are solver-dependent");
        }
        Self::new(Spectrum::new(values)?, Basis::unchecked(vectors)?)
    }

    /// Second-moment model of the rows of `x` plus `ridge · I`.
    ///
    /// With [`Centering::Zero`] this is `(1/N) XᵀX`. Fails with
    /// [`Error::Singular`] when the smallest eigenvalue is at rounding level
    /// relative to the largest (e.g. fewer samples than dimensions).
    pub fn from_samples(x: &DMatrix<T>, centering: Centering, ridge: T) -> Result<Self> {
        let (n, d) = x.shape();
        if d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("no samples".into()));
        }
        let mean = match centering {
            Centering::Zero => DVector::zeros(d),
            Centering::Empirical => x.row_mean().transpose(),
        };
        let centred = match centering {
            Centering::Zero => x.clone(),
            Centering::Empirical => DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]),
        };
        let mut sigma = centred.transpose() * &centred / T::of_usize(n);
        for i in 0..d {
            sigma[(i, i)] += ridge;
        }
        let SortedEigen { values, vectors } = linalg::sym_eigen_desc(&sigma)?;
        let max = values[0];
        let min = values[d - 1];
        let floor = max * T::of_usize(d) * T::default_epsilon();
        if !(min > floor) {
            return Err(Error::Singular { eigenvalue: min.as_f64(), floor: floor.as_f64() });
        }
        Self::new(Spectrum::new(values)?, Basis::unchecked(vectors)?)?.with_mean(mean)
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn spectrum(&self) -> &Spectrum<T> {
        &self.spectrum
    }

    pub fn basis(&self) -> &Basis<T> {
        &self.basis
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn has_zero_mean(&self) -> bool {
        self.mean.iter().all(|m| *m == T::zero())
    }

    pub fn covariance(&self) -> DMatrix<T> {
        linalg::reassemble(self.basis.matrix(), self.spectrum.values(), |v| v)
    }

    /// Eigen-factors with an orthonormal basis; recomputed numerically when the
    /// stored basis is not orthonormal (flip-composed models).
    fn orthonormal_factors(&self) -> (DMatrix<T>, Vec<T>) {
        if self.basis.is_orthonormal() {
            (self.basis.matrix().clone(), self.spectrum.values().to_vec())
        } else {
            let e = linalg::sym_eigen_desc(&self.covariance()).expect("square by construction");
            (e.vectors, e.values)
        }
    }

    /// `Σ⁻¹` with eigenvalues floored at `floor · λ_max` (`floor = 0` is exact).
    pub fn precision(&self, floor: T) -> Result<DMatrix<T>> {
        let (b, values) = self.orthonormal_factors();
        let cut = self.floor_value(&values, floor)?;
        Ok(linalg::reassemble(&b, &values, |v| v.max(cut).recip()))
    }

    /// `log|Σ|` as a sum of log-eigenvalues.
    pub fn log_det(&self, floor: T) -> Result<T> {
        let (_, values) = self.orthonormal_factors();
        let cut = self.floor_value(&values, floor)?;
        Ok(values.iter().fold(T::zero(), |a, &v| a + v.max(cut).ln()))
    }

    /// Symmetric square root `Σ^{1/2}`.
    pub fn sqrt(&self) -> DMatrix<T> {
        let (b, values) = self.orthonormal_factors();
        linalg::reassemble(&b, &values, |v| v.max(T::zero()).sqrt())
    }

    /// Row-form sampling factor `F = diag(√λ) B`: a standard-normal row `z`
    /// maps to `zF`, whose covariance is `FᵀF = Σ` for any stored basis.
    pub fn sampling_factor(&self) -> DMatrix<T> {
        let b = self.basis.matrix();
        let v = self.spectrum.values();
        DMatrix::from_fn(b.nrows(), b.ncols(), |r, c| v[r].sqrt() * b[(r, c)])
    }

    /// The model of `R x` for `x` drawn from `self`.
    pub fn rotated(&self, rotation: &DMatrix<T>) -> Result<Self> {
        let basis = self.basis.rotated(rotation)?;
        let mean = rotation * &self.mean;
        Self::new(self.spectrum.clone(), basis)?.with_mean(mean)
    }

    pub fn degenerate_pairs(&self) -> usize {
        linalg::degenerate_pairs(self.spectrum.values(), T::lit(1e-12))
    }

    fn floor_value(&self, values: &[T], floor: T) -> Result<T> {
        if floor < T::zero() {
            return Err(Error::InvalidArgument("eigenvalue floor must be nonnegative".into()));
        }
        let max = values.iter().fold(T::zero(), |m, &v| m.max(v));
        let min = values.iter().fold(max, |m, &v| m.min(v));
        if !(min > T::zero()) && floor == T::zero() {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min.as_f64() });
        }
        Ok(floor * max)
    }
}

/// Options for [`compose_flip_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct FlipComposition {
    /// Replace the spliced basis by its nearest orthogonal matrix (polar
    /// factor). Off by default: the splice is used as is and its error is
    /// recorded on the basis.
    pub project: bool,
}

/// Splices two eigen-systems: the first `tau_v` eigenvectors and first
/// `tau_lambda` eigenvalues come from `c1`, the rest from `c2`.
///
/// Both inputs must have descending spectra so that index `i` means "the
/// i-th largest component" in each. The result has zero mean.
pub fn compose_flip<T: Real>(
    c1: &CovarianceModel<T>,
    c2: &CovarianceModel<T>,
    tau_lambda: usize,
    tau_v: usize,
) -> Result<CovarianceModel<T>> {
    compose_flip_with(c1, c2, tau_lambda, tau_v, FlipComposition::default())
}

pub fn compose_flip_with<T: Real>(
    c1: &CovarianceModel<T>,
    c2: &CovarianceModel<T>,
    tau_lambda: usize,
    tau_v: usize,
    options: FlipComposition,
) -> Result<CovarianceModel<T>> {
    let d = c1.dim();
    if c2.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: c2.dim() });
    }
    for tau in [tau_lambda, tau_v] {
        if tau > d {
            return Err(Error::ThresholdOutOfRange { tau, dim: d });
        }
    }
    if !c1.spectrum.is_descending() || !c2.spectrum.is_descending() {
        return Err(Error::UnsortedSpectrum);
    }
    if c1.degenerate_pairs() + c2.degenerate_pairs() > 0 {
        log::debug!("flip composition over degenerate spectra; eigenvector identity is basis-dependent");
    }
    let values: Vec<T> = (0..d)
        .map(|i| if i < tau_lambda { c1.spectrum.values[i] } else { c2.spectrum.values[i] })
        .collect();
    let (b1, b2) = (c1.basis.matrix(), c2.basis.matrix());
    let mut v = DMatrix::from_fn(d, d, |r, c| if r < tau_v { b1[(r, c)] } else { b2[(r, c)] });
    if options.project {
        v = polar_projection(&v)?;
    }
    CovarianceModel::new(Spectrum::unordered(values)?, Basis::unchecked(v)?)
}

/// `(1/d) · ‖VᵀV − I‖_F`.
pub fn orthogonality_error<T: Real>(v: &DMatrix<T>) -> Result<T> {
    let d = linalg::ensure_square(v)?;
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let mut gram = v.transpose() * v;
    for i in 0..d {
        gram[(i, i)] -= T::one();
    }
    Ok(gram.norm() / T::of_usize(d))
}

/// Nearest orthogonal matrix in Frobenius norm, `U Wᵀ` from `V = U S Wᵀ`.
pub fn polar_projection<T: Real>(v: &DMatrix<T>) -> Result<DMatrix<T>> {
    linalg::ensure_square(v)?;
    let svd = v.clone().svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => Ok(u * vt),
        _ => Err(Error::Invariant("SVD did not return singular vectors".into())),
    }
}

/// Inverse participation ratio `(Σ|vₙ|⁴)⁻¹` of the normalised vector.
///
/// Ranges from 1 (one-hot) to `d` (uniform magnitude).
pub fn ipr<T: Real>(v: &[T]) -> Result<T> {
    let norm2 = v.iter().fold(T::zero(), |a, &x| a + x * x);
    if !(norm2 > T::zero()) {
        return Err(Error::ZeroVector);
    }
    let quartic = v.iter().fold(T::zero(), |a, &x| {
        let p = x * x / norm2;
        a + p * p
    });
    Ok(quartic.recip())
}
