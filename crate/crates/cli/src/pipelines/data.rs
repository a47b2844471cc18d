//! Data utilities: covariance models on disk, Gaussian samples and
//! recolouring.

use std::path::{Path, PathBuf};

use boclab::covmodel::{haar_orthogonal, Basis, CovarianceModel, Spectrum};
use boclab::matio;
use boclab::sampler::{recolor, sample_gaussian, RecolorOptions, RowCentering};
use boclab::seed;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Status;
use crate::error::{CliError, CliResult};
use crate::rundir::RunDir;

/// Writes `[eigenvalues (d×1), basis (d×d, rows are eigenvectors), mean (d×1)]`.
pub fn save_model(path: &Path, m: &CovarianceModel<f64>) -> CliResult<()> {
    let d = m.dim();
    let values = DMatrix::from_column_slice(d, 1, m.spectrum().values());
    let mean = DMatrix::from_column_slice(d, 1, m.mean().as_slice());
    matio::write_bocm(path, &[&values, m.basis().matrix(), &mean])?;
    Ok(())
}

pub fn load_model(path: &Path) -> CliResult<CovarianceModel<f64>> {
    let blocks = matio::read_bocm::<f64>(path)?;
    let bad = || CliError::Input(format!("{}: expected eigenvalue, basis and mean blocks", path.display()));
    let (values, basis, mean) = match blocks.as_slice() {
        [v, b] => (v, b, None),
        [v, b, m] => (v, b, Some(m)),
        _ => return Err(bad()),
    };
    let d = basis.nrows();
    if values.shape() != (d, 1) || basis.ncols() != d || mean.is_some_and(|m| m.shape() != (d, 1)) {
        return Err(bad());
    }
    let model = CovarianceModel::new(Spectrum::new(values.column(0).iter().copied().collect())?, Basis::new(basis.clone())?)?;
    Ok(match mean {
        Some(m) => model.with_mean(DVector::from_column_slice(m.as_slice()))?,
        None => model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Haar,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenCovParams {
    pub dim: usize,
    pub alpha: f64,
    pub basis: BasisKind,
    /// Defaults to `child(seed, 101)`.
    pub basis_seed: Option<u64>,
}

impl Default for GenCovParams {
    fn default() -> Self {
        Self { dim: 100, alpha: 0.5, basis: BasisKind::Haar, basis_seed: None }
    }
}

pub fn gen_cov(p: &GenCovParams, master: u64) -> CliResult<CovarianceModel<f64>> {
    let basis = match p.basis {
        BasisKind::Haar => haar_orthogonal(p.dim, p.basis_seed.unwrap_or(seed::child(master, 101)))?,
        BasisKind::Identity => Basis::identity(p.dim)?,
    };
    Ok(CovarianceModel::power_law(p.dim, p.alpha, basis)?)
}

pub fn run_gen_cov(p: &GenCovParams, master: u64, out: &mut RunDir) -> CliResult<Status> {
    let m = gen_cov(p, master)?;
    if p.basis == BasisKind::Haar {
        out.seed_link("basis", p.basis_seed.unwrap_or(seed::child(master, 101)));
    }
    save_model(&out.file("model.bocm"), &m)?;
    out.register("model.bocm");
    out.write("covariance.csv", matio::to_csv(&m.covariance()).as_bytes())?;
    Ok(Status::Ok)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleParams {
    /// A `model.bocm` from `gen-cov`.
    pub model: Option<PathBuf>,
    pub n: usize,
}

pub fn run_sample(p: &SampleParams, master: u64, out: &mut RunDir) -> CliResult<Status> {
    let path = p.model.as_ref().ok_or_else(|| CliError::Config("sample needs `model`".into()))?;
    if p.n == 0 {
        return Err(CliError::Config("sample needs n ≥ 1".into()));
    }
    out.add_input(path)?;
    let m = load_model(path)?;
    let s = seed::child(master, 1);
    out.seed_link("samples", s);
    let x = sample_gaussian(&m, p.n, s)?;
    out.write("samples.csv", matio::to_csv(&x).as_bytes())?;
    Ok(Status::Ok)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringKind {
    #[default]
    Model,
    Empirical,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecolorParams {
    /// Matrix CSV (shape line first) or BOCM, one sample per row.
    pub input: Option<PathBuf>,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub centering: CenteringKind,
    pub floor: f64,
}

pub fn run_recolor(p: &RecolorParams, out: &mut RunDir) -> CliResult<Status> {
    let need = |v: &Option<PathBuf>, k: &str| v.clone().ok_or_else(|| CliError::Config(format!("recolor needs `{k}`")));
    let (input, source, target) = (need(&p.input, "input")?, need(&p.source, "source")?, need(&p.target, "target")?);
    for f in [&input, &source, &target] {
        out.add_input(f)?;
    }
    let x = matio::read_matrix::<f64>(&input)?;
    let opts = RecolorOptions {
        centering: match p.centering {
            CenteringKind::Model => RowCentering::Model,
            CenteringKind::Empirical => RowCentering::Empirical,
        },
        floor: p.floor,
    };
    let y = recolor(&x, &load_model(&source)?, &load_model(&target)?, opts)?;
    out.write("recolored.csv", matio::to_csv(&y).as_bytes())?;
    Ok(Status::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = gen_cov(&GenCovParams { dim: 6, ..GenCovParams::default() }, 3).unwrap();
        let m = m.with_mean(DVector::from_element(6, 0.25)).unwrap();
        let p = dir.path().join("m.bocm");
        save_model(&p, &m).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back.spectrum(), m.spectrum());
        assert_eq!(back.basis().matrix(), m.basis().matrix());
        assert_eq!(back.mean(), m.mean());
    }
}
