//! Small dense linear-algebra helpers shared by the model modules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigen-decomposition of a symmetric matrix, sorted by descending eigenvalue.
///
/// Row `i` of `vectors` is the unit eigenvector belonging to `values[i]`, so
/// the input equals `vectorsᵀ · diag(values) · vectors`.
#[derive(Debug, Clone)]
pub struct SortedEigen<T: Real> {
    pub values: Vec<T>,
    pub vectors: DMatrix<T>,
}

pub fn ensure_square<T: Real>(m: &DMatrix<T>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare { rows: m.nrows(), cols: m.ncols() });
    }
    Ok(m.nrows())
}

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// `‖M − Mᵀ‖_F / ‖M‖_F`, zero for the zero matrix.
pub fn relative_asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    let norm = m.norm();
    if norm == T::zero() {
        return T::zero();
    }
    (m - m.transpose()).norm() / norm
}

pub fn sym_eigen_desc<T: Real>(m: &DMatrix<T>) -> Result<SortedEigen<T>> {
    let d = ensure_square(m)?;
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    // stable: ties keep the solver's order
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(c, order[r])]);
    Ok(SortedEigen { values, vectors })
}

/// Counts adjacent pairs of a descending list closer than `rel` relative to
/// the largest magnitude.
pub fn degenerate_pairs<T: Real>(values: &[T], rel: T) -> usize {
    let scale = values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return values.len().saturating_sub(1);
    }
    values
        .windows(2)
        .filter(|w| (w[0] - w[1]).abs() <= rel * scale)
        .count()
}

/// `Bᵀ · diag(f(λ)) · B` for a row-eigenvector basis `B`.
pub fn reassemble<T: Real>(basis: &DMatrix<T>, values: &[T], f: impl Fn(T) -> T) -> DMatrix<T> {
    let scaled = DMatrix::from_fn(basis.nrows(), basis.ncols(), |r, c| f(values[r]) * basis[(r, c)]);
    symmetrize(&(basis.transpose() * scaled))
}

/// `rows × cols` matrix of independent standard normals, filled row by row.
pub fn standard_normal_matrix<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<T> {
    let mut out = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let z: f64 = rng.sample(StandardNormal);
            out[(r, c)] = T::lit(z);
        }
    }
    out
}

/// Rowwise quadratic forms `xᵢᵀ M xᵢ` for the rows of `x`.
pub fn row_quadratic_forms<T: Real>(x: &DMatrix<T>, m: &DMatrix<T>) -> Vec<T> {
    let xm = x * m;
    (0..x.nrows())
        .map(|i| {
            let mut acc = T::zero();
            for j in 0..x.ncols() {
                acc += xm[(i, j)] * x[(i, j)];
            }
            acc
        })
        .collect()
}

pub fn trace_of_product<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    // Tr(AB) = Σ_ij A_ij B_ji
    let mut acc = T::zero();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn zero_vector<T: Real>(d: usize) -> DVector<T> {
    DVector::zeros(d)
}
