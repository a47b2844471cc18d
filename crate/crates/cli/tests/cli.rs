use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use boclab_cli::render::{trapezoid, Table};
use boclab_cli::rundir::verify;
use serde_json::{json, Value};

fn boclab(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boclab"))
        .args(["--out", root.to_str().unwrap(), "--threads", "1"])
        .args(args)
        .env_remove("BOCLAB_OUT")
        .output()
        .unwrap()
}

fn run_dir(o: &Output) -> PathBuf {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8(o.stdout.clone()).unwrap().trim())
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn rendering_an_empty_csv_is_an_input_error() {
    let t = tempfile::tempdir().unwrap();
    let f = t.path().join("empty.csv");
    fs::write(&f, "").unwrap();
    let o = boclab(t.path(), &["render", f.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!t.path().join("empty.svg").exists());
}

#[test]
fn single_bin_histogram_renders_one_bar_with_axes() {
    let t = tempfile::tempdir().unwrap();
    let f = t.path().join("h.csv");
    fs::write(&f, "bin_left,bin_right,density\n-1,1,0.5\n").unwrap();
    let o = boclab(t.path(), &["render", f.to_str().unwrap(), "--title", "one bin"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = fs::read_to_string(t.path().join("h.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert_eq!(svg.matches(r#"class="bar"#).count(), 1);
    assert_eq!(svg.matches(r#"class="axis""#).count(), 2);
    assert!(svg.contains("one bin"));
}

#[test]
fn malformed_configs_are_input_errors() {
    let t = tempfile::tempdir().unwrap();
    let bad = t.path().join("bad.json");
    fs::write(&bad, r#"{"dimension": 10}"#).unwrap();
    assert_eq!(code(&boclab(t.path(), &["--config", bad.to_str().unwrap(), "beta-hist"])), 2);
    fs::write(&bad, "{not json").unwrap();
    assert_eq!(code(&boclab(t.path(), &["--config", bad.to_str().unwrap(), "beta-hist"])), 2);
    assert_eq!(code(&boclab(t.path(), &["--config", "/nonexistent/x.json", "beta-hist"])), 2);
    assert_eq!(code(&boclab(t.path(), &["beta-hist", "--set", "bins=-3"])), 2);
    assert_eq!(code(&boclab(t.path(), &["sample", "--set", "n=10"])), 2);
    assert!(fs::read_dir(t.path()).unwrap().all(|e| e.unwrap().path().extension().is_some()));
}

#[test]
fn later_config_layers_win() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("c.json");
    fs::write(&cfg, json!({"seed": 5, "params": {"dim": 30, "bins": 40, "n_per_class": 100}}).to_string()).unwrap();
    let o = boclab(t.path(), &["--config", cfg.to_str().unwrap(), "--set", "bins=50", "--set", "dim=31", "--dry-run", "beta-hist", "--dim", "32"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["seed"], 5);
    assert_eq!(v["params"]["dim"], 32);
    assert_eq!(v["params"]["bins"], 50);
    assert_eq!(v["params"]["n_per_class"], 100);
    assert_eq!(v["command"], "beta-hist");
    let o = boclab(t.path(), &["--config", cfg.to_str().unwrap(), "--seed", "9", "--dry-run", "beta-hist"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["seed"], 9);
}

#[test]
fn overlay_density_carries_the_histogram_mass() {
    let t = tempfile::tempdir().unwrap();
    let o = boclab(t.path(), &["beta-hist", "--dim", "20", "--n-per-class", "4000", "--haar-pairs", "2", "--set", "overlay_points=200"]);
    let dir = run_dir(&o);
    for sc in ["same_basis", "same_spectrum", "both"] {
        let h = Table::read(&dir.join(format!("beta_hist_{sc}.csv"))).unwrap();
        let c = Table::read(&dir.join(format!("beta_pdf_{sc}.csv"))).unwrap();
        let (l, r) = (h.column("bin_left").unwrap(), h.column("bin_right").unwrap());
        let t = c.column("t").unwrap();
        for s in ["density_a", "density_b"] {
            let bars = h.column(s).unwrap();
            let mass: f64 = bars.iter().zip(l.iter().zip(&r)).map(|(p, (a, b))| p * (b - a)).sum();
            let curve = trapezoid(&t, &c.column(s).unwrap());
            assert!((mass - 1.0).abs() < 1e-9, "{sc} {s} histogram mass {mass}");
            assert!((curve - mass).abs() < 0.02 * mass, "{sc} {s}: {curve} vs {mass}");
        }
    }
}

#[test]
fn manifests_detect_tampering_and_replays_reproduce() {
    let t = tempfile::tempdir().unwrap();
    let o = boclab(t.path(), &["--seed", "3", "empirical-scaling", "--set", "dim=6", "--set", "gammas=[0.05,0.2]", "--set", "reps=2", "--set", "n_eval_per_class=200"]);
    let dir = run_dir(&o);
    let (m, bad) = verify(&dir).unwrap();
    assert!(bad.is_empty());
    assert_eq!(m.status, "ok");
    assert_eq!(m.seed, 3);
    assert!(m.seed_chain.iter().any(|l| l.label == "basis"));
    let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    for f in ["config.json", "scaling.csv", "scaling.svg", "fit.json"] {
        assert!(names.contains(&f), "{names:?}");
    }

    let o = Command::new(env!("CARGO_BIN_EXE_boclab"))
        .args(["--out", t.path().to_str().unwrap(), "--threads", "2", "replay", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = dir.join("scaling.csv");
    let text = fs::read_to_string(&csv).unwrap();
    fs::write(&csv, text.replacen('0', "1", 1)).unwrap();
    assert_eq!(verify(&dir).unwrap().1, vec!["scaling.csv".to_string()]);
    let o = boclab(t.path(), &["replay", dir.to_str().unwrap()]);
    assert_ne!(code(&o), 0);
}

#[test]
fn data_commands_chain() {
    let t = tempfile::tempdir().unwrap();
    let a = run_dir(&boclab(t.path(), &["gen-cov", "--set", "dim=5", "--set", "alpha=0.4"]));
    let b = run_dir(&boclab(t.path(), &["--seed", "1", "gen-cov", "--set", "dim=5", "--set", "alpha=0.9"]));
    let (ma, mb) = (a.join("model.bocm"), b.join("model.bocm"));
    let s = run_dir(&boclab(t.path(), &["sample", "--set", &format!("model={}", json!(ma)), "--set", "n=400"]));
    let x = s.join("samples.csv");
    let first = fs::read_to_string(&x).unwrap();
    assert!(first.starts_with("400,5"));
    let r = run_dir(&boclab(
        t.path(),
        &["recolor", "--set", &format!("input={}", json!(x)), "--set", &format!("source={}", json!(ma)), "--set", &format!("target={}", json!(mb))],
    ));
    let y = fs::read_to_string(r.join("recolored.csv")).unwrap();
    assert!(y.starts_with("400,5"));
    let (m, _) = verify(&r).unwrap();
    assert_eq!(m.inputs.len(), 3);
}
