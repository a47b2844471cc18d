//! Discriminant histograms for three covariance scenarios, with the
//! generalized χ² density overlaid and the class expectations marked.

use boclab::boc::{build_rule, class_expectations, diagonal_expectations, rotated_expectation};
use boclab::gchi2::{gchi2_from_rule, ImhofOptions};
use boclab::linalg::mean_and_se;
use boclab::sampler::sample_gaussian;
use boclab::seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{link_basis, basis_seeds, density_histogram, finite_range, linspace, power_law_pair, BasisMode, Status};
use crate::error::{CliError, CliResult};
use crate::render::{render_svg, Marker, PlotSpec, Table};
use crate::rundir::RunDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Shared basis, spectra `α_A` and `α_A + Δα`.
    SameBasis,
    /// Spectrum `α_A` for both, independent random bases.
    SameSpectrum,
    /// Different spectra and different bases.
    Both,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::SameBasis => "same_basis",
            Scenario::SameSpectrum => "same_spectrum",
            Scenario::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaHistParams {
    pub dim: usize,
    pub alpha_a: f64,
    pub delta_alpha: f64,
    pub n_per_class: usize,
    pub bins: usize,
    pub overlay_points: usize,
    pub scenarios: Vec<Scenario>,
    pub basis_seeds: Option<[u64; 2]>,
    /// Extra independent basis pairs for the same-spectrum Haar average
    /// (0 disables).
    pub haar_pairs: usize,
}

impl Default for BetaHistParams {
    fn default() -> Self {
        Self {
            dim: 100,
            alpha_a: 0.5,
            delta_alpha: -0.3,
            n_per_class: 10_000,
            bins: 60,
            overlay_points: 300,
            scenarios: vec![Scenario::SameBasis, Scenario::SameSpectrum, Scenario::Both],
            basis_seeds: None,
            haar_pairs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMarker {
    pub class: String,
    pub empirical_mean: f64,
    pub standard_error: f64,
    /// `½(Tr(QΣ) + c)` for this pair of matrices.
    pub expected: f64,
    /// Diagonal closed form (same basis) or Haar-averaged closed form (same
    /// spectrum).
    pub closed_form: Option<f64>,
    pub law_mean: f64,
    pub law_variance: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub beta_a: Vec<f64>,
    pub beta_b: Vec<f64>,
    pub histogram: Table,
    pub overlay: Table,
    pub markers: Vec<ClassMarker>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaarPairs {
    pub per_pair_a: Vec<f64>,
    pub per_pair_b: Vec<f64>,
    pub mean_a: f64,
    pub se_a: f64,
    pub mean_b: f64,
    pub se_b: f64,
    pub closed_form: f64,
}

fn validate(p: &BetaHistParams) -> CliResult<()> {
    if p.dim == 0 || p.n_per_class < 2 || p.bins == 0 || p.overlay_points < 2 {
        return Err(CliError::Config("beta-hist needs dim ≥ 1, n_per_class ≥ 2, bins ≥ 1, overlay_points ≥ 2".into()));
    }
    Ok(())
}

pub fn compute_scenario(p: &BetaHistParams, scenario: Scenario, master: u64) -> CliResult<ScenarioResult> {
    validate(p)?;
    let seeds = basis_seeds(master, p.basis_seeds);
    let alpha_b = p.alpha_a + p.delta_alpha;
    let (ca, cb) = match scenario {
        Scenario::SameBasis => power_law_pair(p.dim, p.alpha_a, alpha_b, BasisMode::Shared, seeds)?,
        Scenario::SameSpectrum => power_law_pair(p.dim, p.alpha_a, p.alpha_a, BasisMode::Independent, seeds)?,
        Scenario::Both => power_law_pair(p.dim, p.alpha_a, alpha_b, BasisMode::Independent, seeds)?,
    };
    let rule = build_rule(&ca, &cb)?;
    let s = seed::child(master, scenario as u64 + 1);
    let xa = sample_gaussian(&ca, p.n_per_class, s)?;
    let xb = sample_gaussian(&cb, p.n_per_class, seed::class_b(s))?;
    let beta_a = rule.beta_batch(&xa)?;
    let beta_b = rule.beta_batch(&xb)?;
    let (lo_a, hi_a) = finite_range(&beta_a);
    let (lo_b, hi_b) = finite_range(&beta_b);
    let (lo, hi) = (lo_a.min(lo_b), hi_a.max(hi_b));
    let histogram = density_histogram(&[("density_a", &beta_a), ("density_b", &beta_b)], lo, hi, p.bins);

    let exp = class_expectations(&ca, &cb)?;
    let closed = match scenario {
        Scenario::SameBasis => {
            let c = diagonal_expectations(p.dim, p.alpha_a, p.delta_alpha)?;
            [Some(c.beta_a), Some(c.beta_b)]
        }
        Scenario::SameSpectrum => {
            let r = rotated_expectation(ca.spectrum());
            [Some(r), Some(-r)]
        }
        Scenario::Both => [None, None],
    };
    let law_a = gchi2_from_rule(&rule, &ca)?;
    let law_b = gchi2_from_rule(&rule, &cb)?;
    let ts = linspace(lo, hi, p.overlay_points);
    let opts = ImhofOptions::default();
    let pdf_a = law_a.pdf_grid(&ts, &opts)?;
    let pdf_b = law_b.pdf_grid(&ts, &opts)?;
    let mut overlay = Table::new(&["t", "density_a", "density_b"]);
    for (k, &t) in ts.iter().enumerate() {
        overlay.push(vec![t, pdf_a[k].value, pdf_b[k].value]);
    }
    let (ma, sa) = mean_and_se(&beta_a);
    let (mb, sb) = mean_and_se(&beta_b);
    let markers = vec![
        ClassMarker {
            class: "A".into(),
            empirical_mean: ma,
            standard_error: sa,
            expected: exp.beta_a,
            closed_form: closed[0],
            law_mean: law_a.mean(),
            law_variance: law_a.variance(),
        },
        ClassMarker {
            class: "B".into(),
            empirical_mean: mb,
            standard_error: sb,
            expected: exp.beta_b,
            closed_form: closed[1],
            law_mean: law_b.mean(),
            law_variance: law_b.variance(),
        },
    ];
    Ok(ScenarioResult { scenario, beta_a, beta_b, histogram, overlay, markers })
}

/// Class means over `pairs` independent same-spectrum basis pairs; pair `k`
/// uses bases `child(seed, 1000+2k)`, `child(seed, 1001+2k)` and samples
/// from `child(seed, 5000+k)`.
pub fn haar_pair_means(dim: usize, alpha: f64, pairs: usize, n_per_class: usize, master: u64) -> CliResult<HaarPairs> {
    if pairs < 2 {
        return Err(CliError::Config("haar_pairs must be at least 2".into()));
    }
    let per: Vec<(f64, f64)> = (0..pairs)
        .into_par_iter()
        .map(|k| -> CliResult<(f64, f64)> {
            let seeds = [seed::child(master, 1000 + 2 * k as u64), seed::child(master, 1001 + 2 * k as u64)];
            let (ca, cb) = power_law_pair(dim, alpha, alpha, BasisMode::Independent, seeds)?;
            let rule = build_rule(&ca, &cb)?;
            let s = seed::child(master, 5000 + k as u64);
            let a = rule.beta_batch(&sample_gaussian(&ca, n_per_class, s)?)?;
            let b = rule.beta_batch(&sample_gaussian(&cb, n_per_class, seed::class_b(s))?)?;
            Ok((mean_and_se(&a).0, mean_and_se(&b).0))
        })
        .collect::<CliResult<_>>()?;
    let per_pair_a: Vec<f64> = per.iter().map(|p| p.0).collect();
    let per_pair_b: Vec<f64> = per.iter().map(|p| p.1).collect();
    let (mean_a, se_a) = mean_and_se(&per_pair_a);
    let (mean_b, se_b) = mean_and_se(&per_pair_b);
    let spectrum = boclab::covmodel::powerlaw_spectrum(dim, alpha)?;
    Ok(HaarPairs { per_pair_a, per_pair_b, mean_a, se_a, mean_b, se_b, closed_form: rotated_expectation(&spectrum) })
}

fn markers_table(m: &[ClassMarker]) -> Table {
    let mut t = Table::new(&["class", "empirical_mean", "standard_error", "expected", "closed_form", "law_mean", "law_variance"]);
    for (k, c) in m.iter().enumerate() {
        t.push(vec![k as f64, c.empirical_mean, c.standard_error, c.expected, c.closed_form.unwrap_or(f64::NAN), c.law_mean, c.law_variance]);
    }
    t
}

pub fn run(p: &BetaHistParams, master: u64, out: &mut RunDir) -> CliResult<Status> {
    validate(p)?;
    let results: Vec<ScenarioResult> = p.scenarios.par_iter().map(|&s| compute_scenario(p, s, master)).collect::<CliResult<_>>()?;
    link_basis(out, BasisMode::Independent, basis_seeds(master, p.basis_seeds));
    for &sc in &p.scenarios {
        out.seed_link(&format!("samples_{}", sc.name()), seed::child(master, sc as u64 + 1));
    }
    let mut summary = serde_json::Map::new();
    for r in &results {
        let name = r.scenario.name();
        out.write(&format!("beta_hist_{name}.csv"), r.histogram.to_csv().as_bytes())?;
        out.write(&format!("beta_pdf_{name}.csv"), r.overlay.to_csv().as_bytes())?;
        // class column: 0 = A, 1 = B
        out.write(&format!("beta_markers_{name}.csv"), markers_table(&r.markers).to_csv().as_bytes())?;
        let spec = PlotSpec {
            title: format!("β, {}", name.replace('_', " ")),
            x_label: "β".into(),
            y_label: "density".into(),
            columns: None,
            markers: r.markers.iter().map(|m| Marker { label: format!("⟨β_{}⟩", m.class), value: m.expected }).collect(),
        };
        let svg = render_svg(Some(&r.histogram), Some(&r.overlay), &spec)?;
        out.write(&format!("beta_hist_{name}.svg"), svg.as_bytes())?;
        summary.insert(name.to_string(), serde_json::to_value(&r.markers)?);
    }
    if p.haar_pairs > 0 {
        let h = haar_pair_means(p.dim, p.alpha_a, p.haar_pairs, p.n_per_class, master)?;
        let mut t = Table::new(&["pair", "mean_beta_a", "mean_beta_b"]);
        for k in 0..h.per_pair_a.len() {
            t.push(vec![k as f64, h.per_pair_a[k], h.per_pair_b[k]]);
        }
        out.write("haar_pairs.csv", t.to_csv().as_bytes())?;
        summary.insert("haar_pairs".into(), serde_json::to_value(&h)?);
    }
    out.write_json("summary.json", &summary)?;
    Ok(Status::Ok)
}
