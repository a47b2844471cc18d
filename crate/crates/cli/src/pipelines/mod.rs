//! Experiment pipelines. Each has a params struct (the `params` object of
//! the config), a pure `compute` step and a `write` step that fills a run
//! directory.

pub mod alpha_grid;
pub mod beta_hist;
pub mod data;
pub mod flip;
pub mod kkt;
pub mod scaling;
pub mod train;

use boclab::covmodel::{haar_orthogonal, Basis, CovarianceModel};
use boclab::seed;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::render::Table;
use crate::rundir::RunDir;

/// Outcome of a pipeline whose artefacts were written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Artefacts were written but a numerical target was missed (exit 1).
    Numerical(String),
}

impl Status {
    pub fn describe(&self) -> String {
        match self {
            Status::Ok => "ok".into(),
            Status::Numerical(m) => format!("numerical: {m}"),
        }
    }
}

/// How the two class bases relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisMode {
    /// Both classes use the first Haar basis.
    Shared,
    /// Each class has its own Haar basis.
    Independent,
    /// Both classes are diagonal.
    Identity,
}

/// Seeds for the two Haar bases: explicit, or `child(seed, 101)` and
/// `child(seed, 102)`.
pub fn basis_seeds(master: u64, explicit: Option<[u64; 2]>) -> [u64; 2] {
    explicit.unwrap_or([seed::child(master, 101), seed::child(master, 102)])
}

/// Records the Haar seeds a basis mode actually uses.
pub fn link_basis(out: &mut RunDir, mode: BasisMode, seeds: [u64; 2]) {
    match mode {
        BasisMode::Shared => out.seed_link("basis", seeds[0]),
        BasisMode::Independent => {
            out.seed_link("basis_a", seeds[0]);
            out.seed_link("basis_b", seeds[1]);
        }
        BasisMode::Identity => {}
    }
}

pub fn power_law_pair(
    dim: usize,
    alpha_a: f64,
    alpha_b: f64,
    mode: BasisMode,
    seeds: [u64; 2],
) -> CliResult<(CovarianceModel<f64>, CovarianceModel<f64>)> {
    let (ba, bb) = match mode {
        BasisMode::Identity => (Basis::identity(dim)?, Basis::identity(dim)?),
        BasisMode::Shared => {
            let b = haar_orthogonal(dim, seeds[0])?;
            (b.clone(), b)
        }
        BasisMode::Independent => (haar_orthogonal(dim, seeds[0])?, haar_orthogonal(dim, seeds[1])?),
    };
    Ok((CovarianceModel::power_law(dim, alpha_a, ba)?, CovarianceModel::power_law(dim, alpha_b, bb)?))
}

/// Density histogram over `[lo, hi]` with one column per series.
pub fn density_histogram(series: &[(&str, &[f64])], lo: f64, hi: f64, bins: usize) -> Table {
    let mut names = vec!["bin_left", "bin_right"];
    names.extend(series.iter().map(|s| s.0));
    let mut t = Table::new(&names);
    let width = (hi - lo) / bins as f64;
    let counts: Vec<Vec<usize>> = series
        .iter()
        .map(|(_, v)| {
            let mut c = vec![0usize; bins];
            for &x in v.iter() {
                if x.is_finite() && x >= lo && x <= hi {
                    let k = (((x - lo) / width) as usize).min(bins - 1);
                    c[k] += 1;
                }
            }
            c
        })
        .collect();
    for k in 0..bins {
        let mut row = vec![lo + width * k as f64, if k + 1 == bins { hi } else { lo + width * (k + 1) as f64 }];
        for (j, (_, v)) in series.iter().enumerate() {
            row.push(counts[j][k] as f64 / (v.len().max(1) as f64 * width));
        }
        t.push(row);
    }
    t
}

/// Evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

pub fn finite_range(values: &[f64]) -> (f64, f64) {
    values.iter().filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// Slope and intercept of the least-squares line through `(x, y)`, with R².
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}
