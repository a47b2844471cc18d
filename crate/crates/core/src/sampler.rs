//! Seeded Gaussian sampling, labelled two-class datasets and recolouring.
//!
//! A draw from `N(μ, Σ)` is produced row by row as `z F + μ` with
//! `F = diag(√λ) B` and `z` a row of standard normals. Standard normals are
//! consumed in row-major order from a single stream, so a prefix of a larger
//! draw equals a smaller draw with the same seed.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;

use crate::covmodel::{Centering, CovarianceModel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;
use crate::seed;

/// Rows generated per matrix product.
pub const CHUNK_ROWS: usize = 4096;

/// Incremental sampler over one seeded stream.
pub struct GaussianStream<T: Real> {
    factor: DMatrix<T>,
    mean: DVector<T>,
    rng: ChaCha20Rng,
}

impl<T: Real> GaussianStream<T> {
    pub fn new(model: &CovarianceModel<T>, seed: u64) -> Self {
        Self { factor: model.sampling_factor(), mean: model.mean().clone(), rng: seed::rng(seed) }
    }

    /// The next `rows` draws.
    pub fn next_rows(&mut self, rows: usize) -> DMatrix<T> {
        let d = self.factor.nrows();
        let mut out = DMatrix::zeros(rows, d);
        let mut start = 0;
        while start < rows {
            let len = CHUNK_ROWS.min(rows - start);
            // fixed operand shape, so row values do not depend on n
            let z: DMatrix<T> = linalg::standard_normal_matrix(len, d, &mut self.rng);
            let mut padded = DMatrix::zeros(CHUNK_ROWS, d);
            padded.rows_mut(0, len).copy_from(&z);
            let block = padded * &self.factor;
            for (k, row) in block.rows(0, len).row_iter().enumerate() {
                out.set_row(start + k, &(row + self.mean.transpose()));
            }
            start += len;
        }
        out
    }
}

/// `n` i.i.d. rows from the model.
pub fn sample_gaussian<T: Real>(model: &CovarianceModel<T>, n: usize, seed: u64) -> Result<DMatrix<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    Ok(GaussianStream::new(model, seed).next_rows(n))
}

/// Labelled samples: `+1` for class A, `−1` for class B.
#[derive(Debug, Clone)]
pub struct GmmDataset<T: Real> {
    pub samples: DMatrix<T>,
    pub labels: Vec<i8>,
    /// Row `i` was generated as row `origin[i]` of the stacked `[A; B]` draw.
    pub origin: Vec<usize>,
}

impl<T: Real> GmmDataset<T> {
    /// Wraps external data. Labels must be `±1`.
    pub fn from_parts(samples: DMatrix<T>, labels: Vec<i8>) -> Result<Self> {
        if samples.nrows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: samples.nrows(), found: labels.len() });
        }
        if let Some(l) = labels.iter().find(|l| l.abs() != 1) {
            return Err(Error::Format(format!("label {l} is not ±1")));
        }
        let origin = (0..labels.len()).collect();
        Ok(Self { samples, labels, origin })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Rows with the given label, in generation order.
    pub fn class_samples(&self, label: i8) -> DMatrix<T> {
        let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == label).collect();
        idx.sort_by_key(|&i| self.origin[i]);
        self.samples.select_rows(idx.iter())
    }

    pub fn labels_as_real(&self) -> Vec<T> {
        self.labels.iter().map(|&l| T::lit(f64::from(l))).collect()
    }
}

/// `n_per_class` rows from each class, interleaved by a seeded shuffle.
///
/// Class A is drawn with `seed`, class B with [`seed::class_b`]`(seed)` and the
/// permutation with [`seed::shuffle`]`(seed)`.
pub fn make_gmm_dataset<T: Real>(
    ca: &CovarianceModel<T>,
    cb: &CovarianceModel<T>,
    n_per_class: usize,
    seed: u64,
) -> Result<GmmDataset<T>> {
    if ca.dim() != cb.dim() {
        return Err(Error::DimensionMismatch { expected: ca.dim(), found: cb.dim() });
    }
    let xa = sample_gaussian(ca, n_per_class, seed)?;
    let xb = sample_gaussian(cb, n_per_class, seed::class_b(seed))?;
    let n = 2 * n_per_class;
    let mut origin: Vec<usize> = (0..n).collect();
    origin.shuffle(&mut seed::rng(seed::shuffle(seed)));
    let samples = DMatrix::from_fn(n, ca.dim(), |r, c| {
        let o = origin[r];
        if o < n_per_class { xa[(o, c)] } else { xb[(o - n_per_class, c)] }
    });
    let labels = origin.iter().map(|&o| if o < n_per_class { 1 } else { -1 }).collect();
    Ok(GmmDataset { samples, labels, origin })
}

/// Which mean is subtracted from the rows before recolouring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowCentering {
    /// The source model's mean.
    #[default]
    Model,
    /// The column means of the input itself.
    Empirical,
}

#[derive(Debug, Clone, Copy)]
pub struct RecolorOptions<T: Real> {
    pub centering: RowCentering,
    /// Source eigenvalues at or below `floor · λ_max` are rejected as singular.
    pub floor: T,
}

impl<T: Real> Default for RecolorOptions<T> {
    fn default() -> Self {
        Self { centering: RowCentering::Model, floor: T::zero() }
    }
}

/// The map `T = B_tgtᵀ diag(√λ_tgt) diag(λ_src^{−1/2}) B_src`.
pub fn recolor_matrix<T: Real>(
    c_src: &CovarianceModel<T>,
    c_tgt: &CovarianceModel<T>,
    floor: T,
) -> Result<DMatrix<T>> {
    let d = c_src.dim();
    if c_tgt.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: c_tgt.dim() });
    }
    let src = c_src.spectrum();
    let cut = floor * src.max();
    if src.min() <= cut {
        return Err(Error::Singular { eigenvalue: src.min().as_f64(), floor: cut.as_f64() });
    }
    let (ls, lt) = (src.values(), c_tgt.spectrum().values());
    let bs = c_src.basis().matrix();
    let scaled = DMatrix::from_fn(d, d, |r, c| (lt[r] / ls[r]).sqrt() * bs[(r, c)]);
    Ok(c_tgt.basis().matrix().transpose() * scaled)
}

/// Whitens rows of `x` with respect to `c_src` and colours them to `c_tgt`.
pub fn recolor<T: Real>(
    x: &DMatrix<T>,
    c_src: &CovarianceModel<T>,
    c_tgt: &CovarianceModel<T>,
    options: RecolorOptions<T>,
) -> Result<DMatrix<T>> {
    if x.ncols() != c_src.dim() {
        return Err(Error::DimensionMismatch { expected: c_src.dim(), found: x.ncols() });
    }
    let t = recolor_matrix(c_src, c_tgt, options.floor)?;
    let centre = match options.centering {
        RowCentering::Model => c_src.mean().clone(),
        RowCentering::Empirical => x.row_mean().transpose(),
    };
    let mut centred = x.clone();
    for mut row in centred.row_iter_mut() {
        row -= centre.transpose();
    }
    let mut out = centred * t.transpose();
    for mut row in out.row_iter_mut() {
        row += c_tgt.mean().transpose();
    }
    Ok(out)
}

/// Source covariance used when recolouring labelled data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Whitening {
    /// Each class is whitened with its own empirical covariance.
    #[default]
    PerClass,
    /// Both classes are whitened with the covariance of the pooled data.
    Global,
}

/// Recolours class A rows to `tgt_a` and class B rows to `tgt_b`, estimating
/// the source covariance(s) from the data with empirical centring.
pub fn recolor_dataset<T: Real>(
    ds: &GmmDataset<T>,
    tgt_a: &CovarianceModel<T>,
    tgt_b: &CovarianceModel<T>,
    whitening: Whitening,
    ridge: T,
) -> Result<GmmDataset<T>> {
    let pooled = match whitening {
        Whitening::Global => Some(CovarianceModel::from_samples(&ds.samples, Centering::Empirical, ridge)?),
        Whitening::PerClass => None,
    };
    let mut out = ds.samples.clone();
    for (label, target) in [(1i8, tgt_a), (-1i8, tgt_b)] {
        let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == label).collect();
        if idx.is_empty() {
            continue;
        }
        let rows = ds.samples.select_rows(idx.iter());
        let src = match &pooled {
            Some(m) => m.clone(),
            None => CovarianceModel::from_samples(&rows, Centering::Empirical, ridge)?,
        };
        let recoloured = recolor(&rows, &src, target, RecolorOptions::default())?;
        for (k, &i) in idx.iter().enumerate() {
            out.set_row(i, &recoloured.row(k));
        }
    }
    Ok(GmmDataset { samples: out, labels: ds.labels.clone(), origin: ds.origin.clone() })
}

/// `(1/N) XᵀX` of the rows (zero-mean second moment).
pub fn second_moment<T: Real>(x: &DMatrix<T>) -> DMatrix<T> {
    x.transpose() * x / T::of_usize(x.nrows().max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covmodel::{haar_orthogonal, Basis, Spectrum};

    fn pl(d: usize, alpha: f64, seed: u64) -> CovarianceModel<f64> {
        CovarianceModel::power_law(d, alpha, haar_orthogonal(d, seed).unwrap()).unwrap()
    }

    fn rel_frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn scalar_standard_normal_moments() {
        let m = CovarianceModel::new(Spectrum::flat(1).unwrap(), Basis::identity(1).unwrap()).unwrap();
        let x = sample_gaussian(&m, 100_000, 3).unwrap();
        let v: Vec<f64> = x.iter().copied().collect();
        let (mean, _) = linalg::mean_and_se(&v);
        let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0);
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn sample_covariance_concentrates() {
        let m = pl(20, 0.5, 1);
        let x = sample_gaussian(&m, 100_000, 5).unwrap();
        assert!(rel_frob(&second_moment(&x), &m.covariance()) <= 0.05);
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let m = pl(7, 0.3, 2);
        let a = sample_gaussian(&m, 5000, 9).unwrap();
        assert_eq!(a, sample_gaussian(&m, 5000, 9).unwrap());
        let b = sample_gaussian(&m, 4100, 9).unwrap();
        let diff = (a.rows(0, 4100) - &b).abs().max();
        assert_eq!(diff, 0.0);
        assert!(sample_gaussian(&m, 0, 9).is_err());
    }

    #[test]
    fn nonzero_mean_is_added() {
        let m = pl(3, 0.3, 2).with_mean(DVector::from_vec(vec![5.0, -1.0, 2.0])).unwrap();
        let x = sample_gaussian(&m, 50_000, 1).unwrap();
        let mu = x.row_mean();
        assert!((mu[0] - 5.0).abs() < 0.02 && (mu[1] + 1.0).abs() < 0.02 && (mu[2] - 2.0).abs() < 0.02);
    }

    #[test]
    fn dataset_balance_and_seed_rule() {
        let (ca, cb) = (pl(6, 0.2, 1), pl(6, 0.3, 1));
        let ds = make_gmm_dataset(&ca, &cb, 300, 77).unwrap();
        assert_eq!(ds.len(), 600);
        assert_eq!(ds.labels.iter().map(|&l| i32::from(l)).sum::<i32>(), 0);
        assert_eq!(ds.class_samples(1), sample_gaussian(&ca, 300, 77).unwrap());
        assert_eq!(ds.class_samples(-1), sample_gaussian(&cb, 300, 77 ^ 0x9E37_79B9_7F4A_7C15).unwrap());
        // shuffled, not blocked
        assert!(ds.labels[..300].contains(&-1));
        let other = make_gmm_dataset(&pl(5, 0.2, 1), &cb, 10, 1);
        assert!(matches!(other, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn identical_classes_have_zero_means() {
        let c = pl(4, 0.5, 8);
        let ds = make_gmm_dataset(&c, &c, 100, 4).unwrap();
        for label in [1, -1] {
            let x = ds.class_samples(label);
            for j in 0..4 {
                let col: Vec<f64> = x.column(j).iter().copied().collect();
                let (m, se) = linalg::mean_and_se(&col);
                assert!(m.abs() <= 3.0 * se + 1e-12, "label {label} col {j}: {m} ± {se}");
            }
        }
    }

    #[test]
    fn class_covariance_error_shrinks_like_inverse_sqrt_n() {
        let c = pl(10, 0.4, 3);
        let sigma = c.covariance();
        let ns = [1000usize, 2000, 4000, 8000, 16000];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &n in &ns {
            let errs: Vec<f64> = (0..20)
                .map(|r| {
                    let ds = make_gmm_dataset(&c, &c, n, seed::child(11, r)).unwrap();
                    rel_frob(&second_moment(&ds.class_samples(1)), &sigma)
                })
                .collect();
            xs.push((n as f64).ln());
            ys.push(linalg::mean_and_se(&errs).0.ln());
        }
        let slope = ols_slope(&xs, &ys);
        assert!((slope + 0.5).abs() <= 0.1, "slope {slope}");
    }

    fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn recolor_identity_and_round_trip() {
        let (c1, c2) = (pl(8, 0.5, 1), pl(8, 0.1, 2));
        let x = sample_gaussian(&c1, 200, 3).unwrap();
        let same = recolor(&x, &c1, &c1, RecolorOptions::default()).unwrap();
        assert!(rel_frob(&same, &x) <= 1e-8);
        let there = recolor(&x, &c1, &c2, RecolorOptions::default()).unwrap();
        let back = recolor(&there, &c2, &c1, RecolorOptions::default()).unwrap();
        assert!(rel_frob(&back, &x) <= 1e-6);
    }

    #[test]
    fn recolor_pushforward_is_exact() {
        for d in 1..=5 {
            let (c1, c2) = (pl(d, 0.7, d as u64), pl(d, -0.2, 10 + d as u64));
            let t = recolor_matrix(&c1, &c2, 0.0).unwrap();
            let push = &t * c1.covariance() * t.transpose();
            assert!(rel_frob(&push, &c2.covariance()) <= 1e-12, "d={d}");
        }
    }

    #[test]
    fn recolored_samples_match_target() {
        let (c1, c2) = (pl(20, 0.5, 1), pl(20, 0.2, 2));
        let x = sample_gaussian(&c1, 100_000, 4).unwrap();
        let y = recolor(&x, &c1, &c2, RecolorOptions::default()).unwrap();
        assert!(rel_frob(&second_moment(&y), &c2.covariance()) <= 0.05);
    }

    #[test]
    fn recolor_floor_rejects_small_eigenvalues() {
        let c1 = pl(30, 2.0, 1);
        let opts = RecolorOptions { floor: 1e-3, ..Default::default() };
        let x = DMatrix::zeros(1, 30);
        assert!(matches!(recolor(&x, &c1, &c1, opts), Err(Error::Singular { .. })));
    }

    #[test]
    fn dataset_recolouring_hits_targets() {
        let (src_a, src_b) = (pl(6, 0.0, 1), pl(6, 0.9, 2));
        let (tgt_a, tgt_b) = (pl(6, 0.2, 3), pl(6, 0.3, 3));
        let ds = make_gmm_dataset(&src_a, &src_b, 20_000, 5).unwrap();
        for w in [Whitening::PerClass, Whitening::Global] {
            let out = recolor_dataset(&ds, &tgt_a, &tgt_b, w, 0.0).unwrap();
            let ea = rel_frob(&second_moment(&out.class_samples(1)), &tgt_a.covariance());
            if w == Whitening::PerClass {
                // whitened by its own estimate, so the target is matched almost exactly
                assert!(ea <= 0.01, "{ea}");
            } else {
                assert!(ea > 0.05, "global whitening should not match per-class targets: {ea}");
            }
        }
    }
}
