use boclab::boc::{build_rule, expected_beta};
use boclab::covmodel::{haar_orthogonal, Basis, CovarianceModel};
use boclab::quadnet::{self, kkt_fixed_point, FixedPointOptions, TrainConfig};
use boclab::sampler::{make_gmm_dataset, sample_gaussian};
use boclab::{GChi2Params, QuadNetParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn pl(d: usize, alpha: f64, seed: u64) -> CovarianceModel<f64> {
    CovarianceModel::power_law(d, alpha, haar_orthogonal(d, seed).unwrap()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn network_output_is_degree_two_homogeneous(
        d in 2usize..8, d_h in 1usize..6, seed in 0u64..1000, lambda in -4.0f64..4.0,
    ) {
        let p: QuadNetParams<f64> = quadnet::train::init_params(d, d_h, 1.0, seed).unwrap();
        let x = sample_gaussian(&pl(d, 0.5, seed + 1), 5, seed + 2).unwrap();
        let f = p.forward_batch(&x).unwrap();
        let g = p.scaled(lambda).forward_batch(&x).unwrap();
        for (a, b) in f.iter().zip(&g) {
            prop_assert!((b - lambda.powi(3) * a).abs() <= 1e-9 * (1.0 + a.abs() * lambda.abs().powi(3)));
        }
    }

    #[test]
    fn network_built_from_rule_reproduces_it(
        d in 2usize..10, aa in 0.1f64..1.5, ab in 0.1f64..1.5, sa in 0u64..500, sb in 500u64..1000,
    ) {
        let rule = build_rule(&pl(d, aa, sa), &pl(d, ab, sb)).unwrap();
        let net = QuadNetParams::from_rule(&rule, d).unwrap();
        let x = sample_gaussian(&pl(d, 0.3, sa ^ sb), 20, 9).unwrap();
        let beta = rule.beta_batch(&x).unwrap();
        let phi = net.forward_batch(&x).unwrap();
        for (b, f) in beta.iter().zip(&phi) {
            prop_assert!((b - f).abs() < 1e-8 * (1.0 + b.abs()), "β {b} Φ {f}");
        }
    }

    #[test]
    fn rule_commutes_with_joint_rotation(d in 2usize..9, sa in 0u64..500, sr in 500u64..1000) {
        let (ca, cb) = (pl(d, 0.6, sa), pl(d, 0.2, sa + 1));
        let r = haar_orthogonal::<f64>(d, sr).unwrap().matrix().clone();
        let rot = |m: &CovarianceModel<f64>| {
            let b = Basis::new(m.basis().matrix() * r.transpose()).unwrap();
            CovarianceModel::new(m.spectrum().clone(), b).unwrap()
        };
        let rule = build_rule(&ca, &cb).unwrap();
        let turned = build_rule(&rot(&ca), &rot(&cb)).unwrap();
        let x = sample_gaussian(&ca, 10, sr).unwrap();
        let rx = &x * r.transpose();
        for (a, b) in rule.beta_batch(&x).unwrap().iter().zip(turned.beta_batch(&rx).unwrap()) {
            prop_assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()));
        }
        let ea = expected_beta(&rule, &ca).unwrap();
        prop_assert!(rel(ea, expected_beta(&turned, &rot(&ca)).unwrap()) < 1e-9);
    }

    #[test]
    fn bayes_rule_favours_the_true_class(d in 2usize..12, aa in 0.1f64..1.2, da in 0.05f64..0.8, s in 0u64..1000) {
        let (ca, cb) = (pl(d, aa, s), pl(d, aa + da, s + 7));
        let rule = build_rule(&ca, &cb).unwrap();
        prop_assert!(expected_beta(&rule, &ca).unwrap() > 0.0);
        prop_assert!(expected_beta(&rule, &cb).unwrap() < 0.0);
    }

    #[test]
    fn gchi2_cdf_is_monotone_and_bounded(
        w in prop::collection::vec(-3.0f64..3.0, 1..6), offset in -2.0f64..2.0, scale in 0.1f64..3.0,
    ) {
        prop_assume!(w.iter().any(|x| x.abs() > 0.05));
        let p = GChi2Params::new(w, offset, scale).unwrap();
        let (lo, hi) = (p.mean() - 6.0 * p.std_dev(), p.mean() + 6.0 * p.std_dev());
        let mut prev = 0.0;
        for k in 0..=40 {
            let c = p.cdf(lo + (hi - lo) * k as f64 / 40.0).unwrap();
            prop_assert!((-1e-7..=1.0 + 1e-7).contains(&c));
            prop_assert!(c >= prev - 1e-6, "{c} < {prev}");
            prev = c;
        }
    }

    #[test]
    fn gmm_dataset_is_a_function_of_its_seed(d in 1usize..6, n in 1usize..30, s in any::<u64>()) {
        let (ca, cb) = (pl(d, 0.5, 1), pl(d, 0.2, 2));
        let a = make_gmm_dataset(&ca, &cb, n, s).unwrap();
        let b = make_gmm_dataset(&ca, &cb, n, s).unwrap();
        prop_assert_eq!(&a.samples, &b.samples);
        prop_assert_eq!(&a.labels, &b.labels);
        prop_assert_eq!(a.labels.iter().filter(|&&y| y == 1).count(), n);
    }
}

#[test]
fn training_is_a_function_of_its_seed() {
    let ds = make_gmm_dataset(&pl(6, 0.5, 1), &pl(6, 0.1, 2), 200, 3).unwrap();
    let cfg = TrainConfig { steps: 50, seed: 11, ..TrainConfig::default() };
    let a = quadnet::train::train::<f64>(&ds, 6, &cfg).unwrap();
    let b = quadnet::train::train::<f64>(&ds, 6, &cfg).unwrap();
    assert_eq!(a.params, b.params);
}

// At θ = s·G(θ) with zero bias each row satisfies w_i = 2 s v_i M w_i and
// v_i = s w_iᵀ M w_i, where M is the label-weighted second moment.
#[test]
fn fixed_point_rows_are_eigenvectors_of_the_signed_moment() {
    let d = 8;
    let ds = make_gmm_dataset(&pl(d, 0.6, 1), &pl(d, 0.2, 2), 100, 5).unwrap();
    let mut m = DMatrix::<f64>::zeros(d, d);
    for (a, &y) in ds.labels.iter().enumerate() {
        let x: DVector<f64> = ds.samples.row(a).transpose();
        m += &x * x.transpose() * f64::from(y);
    }
    m /= ds.len() as f64;
    let s = 0.7;
    let opts = FixedPointOptions { tol: 1e-12, max_iter: 100_000, ..FixedPointOptions::default() };
    let fp = kkt_fixed_point::<f64>(&ds, 4, s, 3, &opts).unwrap();
    assert!(fp.converged);
    let p = &fp.params;
    let scale = p.w.norm();
    for i in 0..p.hidden_width() {
        let w: DVector<f64> = p.w.row(i).transpose();
        if w.norm() < 1e-6 * scale {
            continue;
        }
        let mw = &m * &w;
        assert!((&w - &mw * (2.0 * s * p.v[i])).norm() < 1e-5 * w.norm(), "row {i}");
        assert!(rel(p.v[i], s * w.dot(&mw)) < 1e-5, "row {i}");
    }
}
