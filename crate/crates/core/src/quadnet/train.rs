//! Full-batch training of [`QuadNetParams`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{loss_and_grad, QuadNetParams};
use crate::error::{Error, Result};
use crate::linalg;
use crate::sampler::GmmDataset;
use crate::scalar::Real;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    GradientDescent,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// `W ~ N(0, init_scale²/d)`, `v ~ N(0, init_scale²/d_h)`.
    pub init_scale: f64,
    pub seed: u64,
    pub use_bias: bool,
    pub optimizer: Optimizer,
    /// History interval in steps; 0 records only the endpoints.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            steps: 2000,
            init_scale: 1.0,
            seed: 0,
            use_bias: true,
            optimizer: Optimizer::adam(),
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::InvalidArgument(format!("init scale must be non-negative, got {}", self.init_scale)));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::InvalidArgument("Adam needs beta1, beta2 in [0, 1) and eps > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    /// Summed loss.
    pub loss: f64,
    pub accuracy: f64,
    pub param_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrainStatus {
    Completed,
    /// Loss or gradient became non-finite at `step`; parameters are from the
    /// last finite step.
    Diverged { step: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Real> {
    pub params: QuadNetParams<T>,
    pub history: Vec<HistoryEntry>,
    pub status: TrainStatus,
    /// Steps actually applied.
    pub steps: usize,
}

impl<T: Real> TrainOutcome<T> {
    pub fn diverged(&self) -> bool {
        matches!(self.status, TrainStatus::Diverged { .. })
    }
}

/// Random initialisation drawn from `seed` (W row-major first, then v).
pub fn init_params<T: Real>(d: usize, d_h: usize, init_scale: f64, seed: u64) -> Result<QuadNetParams<T>> {
    if d == 0 || d_h == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let mut rng = seed::rng(seed);
    let w: DMatrix<T> = linalg::standard_normal_matrix(d_h, d, &mut rng) * T::lit(init_scale / (d as f64).sqrt());
    let v: DMatrix<T> = linalg::standard_normal_matrix(d_h, 1, &mut rng) * T::lit(init_scale / (d_h as f64).sqrt());
    Ok(QuadNetParams { w, v: v.column(0).into_owned(), b: T::zero() })
}

struct AdamState<T: Real> {
    m: QuadNetParams<T>,
    s: QuadNetParams<T>,
}

fn map2<T: Real>(a: &QuadNetParams<T>, b: &QuadNetParams<T>, f: impl Fn(T, T) -> T) -> QuadNetParams<T> {
    QuadNetParams {
        w: a.w.zip_map(&b.w, &f),
        v: a.v.zip_map(&b.v, &f),
        b: f(a.b, b.b),
    }
}

/// Trains from [`init_params`] with the configured optimizer.
///
/// Each step uses the mean gradient `∇L/N`. History records the summed loss.
pub fn train<T: Real>(ds: &GmmDataset<T>, d_h: usize, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let start = init_params(ds.dim(), d_h, cfg.init_scale, cfg.seed)?;
    train_from(ds, start, cfg)
}

pub fn train_from<T: Real>(ds: &GmmDataset<T>, start: QuadNetParams<T>, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if ds.dim() != start.dim() {
        return Err(Error::DimensionMismatch { expected: start.dim(), found: ds.dim() });
    }
    let n = T::of_usize(ds.len());
    let lr = T::lit(cfg.learning_rate);
    let mut params = start;
    if !cfg.use_bias {
        params.b = T::zero();
    }
    let mut adam = AdamState {
        m: QuadNetParams::zeros(params.dim(), params.hidden_width()),
        s: QuadNetParams::zeros(params.dim(), params.hidden_width()),
    };
    let mut history = Vec::new();
    let mut status = TrainStatus::Completed;
    let mut applied = 0;
    let record = |step: usize, lg: &super::LossGrad<T>, p: &QuadNetParams<T>, h: &mut Vec<HistoryEntry>| {
        h.push(HistoryEntry { step, loss: lg.loss.as_f64(), accuracy: lg.accuracy, param_norm: p.norm().as_f64() });
    };
    for step in 0..=cfg.steps {
        let lg = loss_and_grad(&params, ds)?;
        if !lg.loss.is_finite() || !lg.grad.is_finite() {
            log::warn!("training diverged at step {step}, keeping step {applied}");
            status = TrainStatus::Diverged { step };
            break;
        }
        let log_now = step == cfg.steps || (cfg.log_every > 0 && step % cfg.log_every == 0) || step == 0;
        if log_now {
            record(step, &lg, &params, &mut history);
            log::debug!("step {step} loss {:e} acc {:.4}", lg.loss.as_f64(), lg.accuracy);
        }
        if step == cfg.steps {
            break;
        }
        let mut g = QuadNetParams { w: lg.grad.w / n, v: lg.grad.v / n, b: lg.grad.b / n };
        if !cfg.use_bias {
            g.b = T::zero();
        }
        let update = match cfg.optimizer {
            Optimizer::GradientDescent => g.scaled_all(lr),
            Optimizer::Adam { beta1, beta2, eps } => {
                let (b1, b2) = (T::lit(beta1), T::lit(beta2));
                adam.m = map2(&adam.m, &g, |m, gi| b1 * m + (T::one() - b1) * gi);
                adam.s = map2(&adam.s, &g, |s, gi| b2 * s + (T::one() - b2) * gi * gi);
                let t = (step + 1) as i32;
                let c1 = T::one() - T::lit(beta1.powi(t));
                let c2 = T::one() - T::lit(beta2.powi(t));
                let e = T::lit(eps);
                map2(&adam.m, &adam.s, |m, s| lr * (m / c1) / ((s / c2).sqrt() + e))
            }
        };
        let next = params.axpy(-T::one(), &update);
        if !next.is_finite() {
            log::warn!("training diverged at step {}, keeping step {applied}", step + 1);
            status = TrainStatus::Diverged { step: step + 1 };
            break;
        }
        params = next;
        applied = step + 1;
    }
    Ok(TrainOutcome { params, history, status, steps: applied })
}

impl<T: Real> QuadNetParams<T> {
    /// Scales every parameter including the bias.
    pub fn scaled_all(&self, c: T) -> Self {
        Self { w: &self.w * c, v: &self.v * c, b: self.b * c }
    }
}
