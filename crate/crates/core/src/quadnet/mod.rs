//! Two-layer network with quadratic activation, `Φ(x) = vᵀ(Wx)² + b`.
//!
//! Without bias the output is homogeneous of degree 3 in `θ = (W, v)`.
//! Any quadratic rule without a linear term is represented exactly with
//! `d_h ≥ rank(Q)` hidden units ([`QuadNetParams::from_rule`]).

pub mod kkt;
pub mod train;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boc::QuadraticRule;
use crate::error::{Error, Result};
use crate::linalg;
use crate::sampler::GmmDataset;
use crate::scalar::Real;

pub use kkt::{fit_lambda_scale, kkt_fixed_point, kkt_fixed_point_from, kkt_report, FixedPoint, FixedPointOptions, KktReport};
pub use train::{train, HistoryEntry, Optimizer, TrainConfig, TrainOutcome, TrainStatus};

/// Rows per block in batched loss/gradient evaluation.
pub const BLOCK_ROWS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadNetParams<T: Real> {
    /// `d_h × d`.
    pub w: DMatrix<T>,
    pub v: DVector<T>,
    pub b: T,
}

impl<T: Real> QuadNetParams<T> {
    pub fn new(w: DMatrix<T>, v: DVector<T>, b: T) -> Result<Self> {
        if w.nrows() == 0 || w.ncols() == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if v.len() != w.nrows() {
            return Err(Error::DimensionMismatch { expected: w.nrows(), found: v.len() });
        }
        if !w.iter().chain(v.iter()).all(|x| x.is_finite()) || !b.is_finite() {
            return Err(Error::InvalidArgument("network parameters must be finite".into()));
        }
        Ok(Self { w, v, b })
    }

    pub fn zeros(d: usize, d_h: usize) -> Self {
        Self { w: DMatrix::zeros(d_h, d), v: DVector::zeros(d_h), b: T::zero() }
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn hidden_width(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        let h = &self.w * DVector::from_column_slice(x);
        Ok(h.iter().zip(self.v.iter()).fold(self.b, |acc, (&hi, &vi)| acc + vi * hi * hi))
    }

    pub fn forward_batch(&self, x: &DMatrix<T>) -> Result<Vec<T>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.ncols() });
        }
        let h = x * self.w.transpose();
        Ok(h.row_iter()
            .map(|row| row.iter().zip(self.v.iter()).fold(self.b, |acc, (&hi, &vi)| acc + vi * hi * hi))
            .collect())
    }

    /// Class-A verdicts (`Φ > 0`).
    pub fn decide_batch(&self, x: &DMatrix<T>) -> Result<Vec<bool>> {
        Ok(self.forward_batch(x)?.into_iter().map(|f| f > T::zero()).collect())
    }

    /// `(λW, λv, b)`; for `b = 0`, `Φ` scales by `λ³`.
    pub fn scaled(&self, lambda: T) -> Self {
        Self { w: &self.w * lambda, v: &self.v * lambda, b: self.b }
    }

    /// Euclidean norm of all parameters including the bias.
    pub fn norm(&self) -> T {
        (self.w.norm_squared() + self.v.norm_squared() + self.b * self.b).sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.w.dot(&other.w) + self.v.dot(&other.v) + self.b * other.b
    }

    pub fn axpy(&self, alpha: T, other: &Self) -> Self {
        Self { w: &self.w + &other.w * alpha, v: &self.v + &other.v * alpha, b: self.b + other.b * alpha }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(self.v.iter()).all(|x| x.is_finite()) && self.b.is_finite()
    }

    /// Exact network for a rule with no linear term.
    ///
    /// With `Q/2 = Σ δ_k u_k u_kᵀ`, row `k` of `W` is `√|δ_k| u_kᵀ`,
    /// `v_k = sign δ_k` and `b = c/2`, so `Φ = β`. Rows beyond the rank are
    /// zero.
    pub fn from_rule(rule: &QuadraticRule<T>, d_h: usize) -> Result<Self> {
        if rule.has_linear_term() {
            return Err(Error::LinearTermUnsupported);
        }
        if d_h == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let d = rule.dim();
        let half = &rule.quad * T::lit(0.5);
        let eig = linalg::sym_eigen_desc(&half)?;
        let max = eig.values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let cut = max * T::of_usize(d) * T::default_epsilon();
        let active: Vec<usize> = (0..d).filter(|&k| max > T::zero() && eig.values[k].abs() > cut).collect();
        if active.len() > d_h {
            return Err(Error::InsufficientWidth { width: d_h, rank: active.len() });
        }
        let mut p = Self::zeros(d, d_h);
        for (row, &k) in active.iter().enumerate() {
            let delta = eig.values[k];
            let r = delta.abs().sqrt();
            for j in 0..d {
                p.w[(row, j)] = r * eig.vectors[(k, j)];
            }
            p.v[row] = if delta > T::zero() { T::one() } else { -T::one() };
        }
        p.b = T::lit(0.5) * rule.constant;
        Ok(p)
    }

    /// `Σ_i v_i W_i W_iᵀ`, the quadratic form the network computes (equal to
    /// `Q/2` for [`Self::from_rule`]).
    pub fn quadratic_form(&self) -> DMatrix<T> {
        let scaled = DMatrix::from_fn(self.w.nrows(), self.w.ncols(), |i, j| self.v[i] * self.w[(i, j)]);
        linalg::symmetrize(&(self.w.transpose() * scaled))
    }
}

/// `log(1 + e^{−q})` without overflow.
pub fn softplus_neg<T: Real>(q: T) -> T {
    if q > T::zero() {
        (-q).exp().ln_1p()
    } else {
        -q + q.exp().ln_1p()
    }
}

/// `dℓ/dq = −1/(1 + e^{q})`.
pub fn softplus_neg_grad<T: Real>(q: T) -> T {
    if q > T::zero() {
        let e = (-q).exp();
        -e / (T::one() + e)
    } else {
        -T::one() / (T::one() + q.exp())
    }
}

/// Sum of `ℓ(y_a Φ(x_a))` and its exact gradient.
#[derive(Debug, Clone)]
pub struct LossGrad<T: Real> {
    pub loss: T,
    pub grad: QuadNetParams<T>,
    /// Fraction of rows with `sign Φ` matching the label (`Φ = 0` counts as B).
    pub accuracy: f64,
}

fn block_loss_grad<T: Real>(p: &QuadNetParams<T>, x: &DMatrix<T>, y: &[i8]) -> LossGrad<T> {
    let h = x * p.w.transpose();
    let n = x.nrows();
    let d_h = p.hidden_width();
    let mut loss = T::zero();
    let mut correct = 0usize;
    let mut gv = DVector::zeros(d_h);
    let mut gb = T::zero();
    // row a of g_h = g_a · (v ∘ h_a)
    let mut gh = DMatrix::zeros(n, d_h);
    for a in 0..n {
        let ya = T::lit(f64::from(y[a]));
        let mut phi = p.b;
        for i in 0..d_h {
            let hi = h[(a, i)];
            phi += p.v[i] * hi * hi;
        }
        if (phi > T::zero()) == (y[a] > 0) {
            correct += 1;
        }
        let q = ya * phi;
        loss += softplus_neg(q);
        let g = ya * softplus_neg_grad(q);
        gb += g;
        for i in 0..d_h {
            let hi = h[(a, i)];
            gv[i] += g * hi * hi;
            gh[(a, i)] = g * p.v[i] * hi;
        }
    }
    let gw = gh.transpose() * x * T::lit(2.0);
    LossGrad { loss, grad: QuadNetParams { w: gw, v: gv, b: gb }, accuracy: correct as f64 }
}

/// Loss `Σ_a log(1 + exp(−y_a Φ(x_a)))` with analytic gradients
/// `∂Φ/∂v_i = h_i²`, `∂Φ/∂W_ik = 2 v_i h_i x_k`, `∂Φ/∂b = 1`, `h = Wx`.
///
/// Rows are processed in fixed blocks (possibly in parallel) and the block
/// results are added in order, so the result does not depend on the number
/// of threads.
pub fn loss_and_grad<T: Real>(p: &QuadNetParams<T>, ds: &GmmDataset<T>) -> Result<LossGrad<T>> {
    if ds.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: ds.dim() });
    }
    let n = ds.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let starts: Vec<usize> = (0..n).step_by(BLOCK_ROWS).collect();
    let parts: Vec<LossGrad<T>> = starts
        .par_iter()
        .map(|&s| {
            let len = BLOCK_ROWS.min(n - s);
            block_loss_grad(p, &ds.samples.rows(s, len).into_owned(), &ds.labels[s..s + len])
        })
        .collect();
    let mut total = LossGrad { loss: T::zero(), grad: QuadNetParams::zeros(p.dim(), p.hidden_width()), accuracy: 0.0 };
    for part in parts {
        total.loss += part.loss;
        total.grad.w += part.grad.w;
        total.grad.v += part.grad.v;
        total.grad.b += part.grad.b;
        total.accuracy += part.accuracy;
    }
    total.accuracy /= n as f64;
    Ok(total)
}

/// Fraction of rows whose `sign Φ` matches the label.
pub fn accuracy<T: Real>(p: &QuadNetParams<T>, ds: &GmmDataset<T>) -> Result<f64> {
    let out = p.forward_batch(&ds.samples)?;
    let hits = out.iter().zip(&ds.labels).filter(|(f, y)| (**f > T::zero()) == (**y > 0)).count();
    Ok(hits as f64 / ds.len().max(1) as f64)
}

/// Checkpoint metadata stored beside the parameter blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub dim: usize,
    pub hidden_width: usize,
    pub step: usize,
    pub config: Option<TrainConfig>,
}

/// Writes `[W, v, b]` as BOCM blocks and `<path>.json`.
pub fn save_checkpoint<T: Real>(path: &std::path::Path, p: &QuadNetParams<T>, meta: &CheckpointMeta) -> Result<()> {
    let v = DMatrix::from_column_slice(p.hidden_width(), 1, p.v.as_slice());
    let b = DMatrix::from_element(1, 1, p.b);
    crate::matio::write_bocm(path, &[&p.w, &v, &b])?;
    std::fs::write(crate::boc::sidecar_path(path), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &std::path::Path) -> Result<(QuadNetParams<T>, Option<CheckpointMeta>)> {
    let blocks = crate::matio::read_bocm::<T>(path)?;
    let [w, v, b] = <[DMatrix<T>; 3]>::try_from(blocks)
        .map_err(|b| Error::Format(format!("checkpoint needs 3 blocks, found {}", b.len())))?;
    if v.shape() != (w.nrows(), 1) || b.shape() != (1, 1) {
        return Err(Error::Format("checkpoint blocks have inconsistent shapes".into()));
    }
    let p = QuadNetParams::new(w, v.column(0).into_owned(), b[(0, 0)])?;
    let side = crate::boc::sidecar_path(path);
    let meta = if side.exists() { Some(serde_json::from_str(&std::fs::read_to_string(side)?)?) } else { None };
    Ok((p, meta))
}
