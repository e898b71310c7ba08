use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iqmm_core::config::{model_to_json, parse_model};
use iqmm_core::{presets, InventoryGrid};
use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn iqmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iqmm")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all = args.to_vec();
    all.extend(["--out-dir", dir.to_str().unwrap()]);
    let out = iqmm(&all);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn json(path: &Path) -> serde_json::Map<String, Value> {
    match serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap() {
        Value::Object(m) => m,
        v => panic!("not an object: {v}"),
    }
}

fn field(m: &serde_json::Map<String, Value>, key: &str) -> f64 {
    m[key].as_f64().unwrap_or_else(|| panic!("{key} missing"))
}

fn rel(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs()
}

#[test]
fn solve_writes_five_files_with_interior_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "pr.json", &model_to_json(&presets::price_reading()));
    let out = tmp.path().join("out");
    run_in(&out, &["solve", "--config", cfg.to_str().unwrap()]);
    let mut names: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["f.csv", "manifest.json", "quotes_baseline.csv", "quotes_corrected.csv", "theta.csv"]);

    let m = presets::price_reading();
    let interior = InventoryGrid::for_model(&m).unwrap().report_nodes(&m.ladder).len();
    assert_eq!(rows(&out.join("quotes_corrected.csv")).len(), m.n_tiers() * m.n_sizes() * interior);

    // every emitted file is checksummed
    let manifest = json(&out.join("manifest.json"));
    for name in &names[..] {
        if name == "manifest.json" {
            continue;
        }
        let sum = hex::encode(Sha256::digest(std::fs::read(out.join(name)).unwrap()));
        assert_eq!(manifest[&format!("sha256:{name}")], Value::String(sum), "{name}");
    }
}

#[test]
fn reruns_reproduce_checksums() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_in(&a, &["solve", "--qmax", "120"]);
    run_in(&b, &["solve", "--qmax", "120"]);
    let (ma, mb) = (json(&a.join("manifest.json")), json(&b.join("manifest.json")));
    for (k, v) in &ma {
        if k.starts_with("sha256:") {
            assert_eq!(Some(v), mb.get(k), "{k}");
        }
    }
}

#[test]
fn invalid_ladder_exits_with_config_error() {
    let tmp = TempDir::new().unwrap();
    let mut v: Value = serde_json::from_str(&model_to_json(&presets::price_reading())).unwrap();
    v["ladder"] = serde_json::json!([1.0, 2.5, 5.0, 10.0, 20.0, 50.0]);
    let cfg = write_config(tmp.path(), "bad.json", &v.to_string());
    let out = iqmm(&["solve", "--config", cfg.to_str().unwrap(), "--out-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("2.5"), "{err}");
}

#[test]
fn unknown_config_key_exits_with_config_error() {
    let tmp = TempDir::new().unwrap();
    let mut v: Value = serde_json::from_str(&model_to_json(&presets::price_reading())).unwrap();
    v["volatility"] = serde_json::json!(1.0);
    let cfg = write_config(tmp.path(), "bad.json", &v.to_string());
    let out = iqmm(&["quadratic", "--config", cfg.to_str().unwrap(), "--out-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_epsilon_leaves_quotes_unchanged() {
    let tmp = TempDir::new().unwrap();
    run_in(tmp.path(), &["solve", "--epsilon", "0"]);
    let base = std::fs::read(tmp.path().join("quotes_baseline.csv")).unwrap();
    let corrected = std::fs::read(tmp.path().join("quotes_corrected.csv")).unwrap();
    assert_eq!(base, corrected);
}

#[test]
fn csv_numbers_round_trip() {
    let tmp = TempDir::new().unwrap();
    run_in(tmp.path(), &["solve", "--qmax", "60"]);
    for row in rows(&tmp.path().join("theta.csv")) {
        for cell in row {
            let x: f64 = cell.parse().unwrap();
            assert_eq!(format!("{x:.16e}"), cell);
        }
    }
}

#[test]
fn quadratic_constants_of_price_reading() {
    let tmp = TempDir::new().unwrap();
    run_in(tmp.path(), &["quadratic"]);
    let c = json(&tmp.path().join("quad_constants.json"));
    // exponential legs: H''(0) = κλ0/e on each side of each tier
    let kappa: f64 = 3.0;
    let lambda0 = [1000.0, 400.0, 300.0, 200.0, 60.0, 40.0];
    let sizes = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0];
    let h2: f64 = sizes
        .iter()
        .zip(lambda0)
        .map(|(d, l)| d * kappa * l * (-1.0f64).exp())
        .sum();
    let by_hand = 2.0 * 2.0 * h2;
    assert!(rel(field(&c, "F_plus_21"), by_hand) < 1e-12);
    assert!(rel(field(&c, "F_plus_21"), 37523.7) < 1e-3);
    assert!(field(&c, "B0").abs() <= 1e-12);
    assert!(field(&c, "B0_prime").abs() <= 1e-12);
}

#[test]
fn quadratic_adverse_selection_adjustment_at_zero() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "as.json", &model_to_json(&presets::adverse_selection()));
    run_in(tmp.path(), &["quadratic", "--config", cfg.to_str().unwrap(), "--rho", "1e-6"]);
    let row = rows(&tmp.path().join("adjustments.csv"))
        .into_iter()
        .find(|r| r[0] == "1" && r[1] == "1" && r[2].parse::<f64>().unwrap() == 0.0)
        .unwrap();
    let bid: f64 = row[3].parse().unwrap();
    assert!(rel(bid, -1.4469e-3) < 1e-4, "{bid}");
}

#[test]
fn no_trade_objective_is_exactly_zero() {
    let tmp = TempDir::new().unwrap();
    run_in(tmp.path(), &["simulate", "--policy", "none", "--q0", "0", "--rho", "10", "--paths", "20"]);
    let o = json(&tmp.path().join("objective.json"));
    assert_eq!(field(&o, "mean"), 0.0);
    assert_eq!(field(&o, "standard_error"), 0.0);
}

#[test]
fn baseline_simulation_matches_the_value_function() {
    let tmp = TempDir::new().unwrap();
    run_in(tmp.path(), &["simulate", "--policy", "baseline", "--rho", "10", "--paths", "1000", "--seed", "7"]);
    let o = json(&tmp.path().join("objective.json"));
    let gap = (field(&o, "mean") - field(&o, "target")).abs();
    assert!(gap <= 3.0 * field(&o, "standard_error"), "{o:?}");
    assert_eq!(o["within_3_se"], Value::Bool(true));
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["simulate", "--policy", "corrected", "--rho", "20", "--paths", "64", "--seed", "3", "--q0", "-4", "--dump-paths", "2"];
    run_in(&a, &args);
    run_in(&b, &args);
    for f in ["objective.json", "paths.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let header = std::fs::read_to_string(a.join("paths.csv")).unwrap();
    assert!(header.starts_with("path,t,event_type,tier,size_idx,side,delta_bp,S_bp,q_M,X,PnL\n"));
}

#[test]
fn off_grid_start_is_rejected() {
    let out = iqmm(&["simulate", "--q0", "0.5", "--qmax", "40", "--out-dir", "/nonexistent-dir-for-test"]);
    assert_eq!(out.status.code(), Some(2));
}

fn figure_rows(dir: &Path, name: &str, tier: &str, size: &str, method: &str) -> Vec<(f64, f64, f64)> {
    rows(&dir.join(name))
        .into_iter()
        .filter(|r| r[0] == tier && r[1] == size && r[5] == method)
        .map(|r| (r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap()))
        .collect()
}

#[test]
fn figures_reproduce_closed_form_curves() {
    let tmp = TempDir::new().unwrap();
    run_in(tmp.path(), &["figures"]);

    let curve = figure_rows(tmp.path(), "fig_price_reading_a.csv", "1", "1", "quadratic");
    assert_eq!(curve.len(), 101);
    assert_eq!((curve[0].0, curve[100].0), (-50.0, 50.0));
    let slope = curve[51].1 - curve[50].1;
    assert!(rel(slope, 3.1980e-4) < 1e-4, "{slope}");
    for w in curve.windows(2) {
        assert!(((w[1].1 - w[0].1) - slope).abs() <= 1e-12 * slope);
    }

    let at_zero = |tier| figure_rows(tmp.path(), "fig_adverse_selection.csv", tier, "1", "quadratic")[50];
    assert!(rel(at_zero("1").1, -1.4469e-3) < 1e-4);
    assert!(rel(at_zero("2").1, 0.02320) < 1e-3);

    // both methods, both tiers, sizes 1 and 4
    for tier in ["1", "2"] {
        for size in ["1", "4"] {
            assert_eq!(figure_rows(tmp.path(), "fig_price_reading_b.csv", tier, size, "exact").len(), 101);
        }
    }
}

#[test]
fn dumped_figure_configs_carry_the_caption_intensities() {
    let out = iqmm(&["figures", "--dump-config"]);
    assert!(out.status.success());
    let set: Value = serde_json::from_slice(&out.stdout).unwrap();
    let b = parse_model(&set["price_reading_b"].to_string()).unwrap();
    let l0 = |tier: usize| -> Vec<f64> {
        b.tiers[tier]
            .intensity_bid
            .iter()
            .map(|c| match c {
                iqmm_core::model::IntensityCurve::Exponential { lambda0, .. } => *lambda0,
                other => panic!("{other:?}"),
            })
            .collect()
    };
    assert_eq!(l0(0), [1500.0, 600.0, 450.0, 300.0, 90.0, 60.0]);
    assert_eq!(l0(1), [500.0, 200.0, 150.0, 100.0, 30.0, 20.0]);
    assert_eq!(b.sigma, 100.0);
}

#[test]
fn embedded_configs_match_presets() {
    let out = iqmm(&["figures", "--dump-config"]);
    let set: Value = serde_json::from_slice(&out.stdout).unwrap();
    for (name, m) in [
        ("price_reading_a", presets::price_reading()),
        ("price_reading_b", presets::price_reading_thin_readers()),
        ("adverse_selection", presets::adverse_selection()),
    ] {
        let parsed = parse_model(&set[name].to_string()).unwrap();
        assert_eq!(model_to_json(&parsed), model_to_json(&m), "{name}");
    }
}

#[test]
fn fast_validation_skips_monte_carlo() {
    let out = iqmm(&["validate", "--fast"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    for id in [5, 6, 9] {
        assert!(text.contains(&format!("criterion {id} SKIP")), "{text}");
    }
    assert!(text.contains("criterion 2 PASS"), "{text}");
}

#[test]
fn corrupted_constant_fails_validation() {
    let out = iqmm(&["validate", "--fast", "--corrupt", "spread"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(1), "{text}");
    assert!(text.contains("criterion 2 FAIL"), "{text}");
}
