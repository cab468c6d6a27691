use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use presence_abundance::data::{read_cells, read_points};
use presence_abundance::spatial::{fit_kriging, krige_predict, CoordinateSystem, PointCovariate, Projection, Trend};

const INPUTS: [&str; 5] = ["districts.geojson", "x1_sites.csv", "x2_raster.csv", "venues.csv", "districts.csv"];

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

/// Demo inputs in a scratch directory with a lighter sampler.
fn workspace(edit: impl Fn(String) -> String) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in INPUTS {
        std::fs::copy(demo_dir().join(f), dir.path().join(f)).unwrap();
    }
    let config = std::fs::read_to_string(demo_dir().join("config.toml"))
        .unwrap()
        .replace("chains = 4", "chains = 2")
        .replace("iterations = 2000", "iterations = 1000")
        .replace("warmup = 1000", "warmup = 500")
        .replace("replicates = 500", "replicates = 200");
    std::fs::write(dir.path().join("config.toml"), edit(config)).unwrap();
    dir
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_presence-abundance"))
        .args(args)
        .arg("--config")
        .arg(dir.join("config.toml"))
        .args(["--seed", "3", "--threads", "1", "--out"])
        .arg(dir.join("out"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let o = run(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn csv_column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let k = r.headers().unwrap().iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    r.records().map(|rec| rec.unwrap()[k].to_string()).collect()
}

#[test]
fn grid_writes_one_row_per_cell() {
    let dir = workspace(|c| c);
    ok(dir.path(), &["grid"]);
    let cells = read_cells(&dir.path().join("out/cells.csv")).unwrap();
    assert_eq!(cells.len(), 45 * 45);
    let mut districts = cells.districts.clone();
    districts.sort();
    districts.dedup();
    assert_eq!(districts, ["centre", "east", "west"]);
}

#[test]
fn missing_input_exits_2_and_names_the_file() {
    let dir = workspace(|c| c);
    std::fs::remove_file(dir.path().join("districts.geojson")).unwrap();
    let o = run(dir.path(), &["grid"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("districts.geojson"));
}

#[test]
fn unknown_covariate_exits_2_and_names_the_column() {
    let dir = workspace(|c| c.replace("count_mu = [\"x1\", \"x2\"]", "count_mu = [\"x1\", \"x9\"]"));
    ok(dir.path(), &["grid"]);
    ok(dir.path(), &["align"]);
    let o = run(dir.path(), &["fit", "--model", "count"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("x9") && err.contains("cells_aligned.csv"), "{err}");
}

#[test]
fn malformed_config_exits_2() {
    let dir = workspace(|c| c + "\n[sampler]\nchains = 2\n");
    let o = run(dir.path(), &["grid"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config.toml"));
}

#[test]
fn failed_convergence_gate_exits_3_with_the_diagnostics_path() {
    let dir = workspace(|c| {
        c.replace("iterations = 1000", "iterations = 200").replace("warmup = 500", "warmup = 100") + "\n[fit]\nmax_rhat = 0.5\n"
    });
    ok(dir.path(), &["grid"]);
    ok(dir.path(), &["align"]);
    let o = run(dir.path(), &["fit", "--model", "size"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("diagnostics_size.json"), "{err}");
    assert!(dir.path().join("out/diagnostics_size.json").is_file());
}

#[test]
fn constant_raster_gives_a_constant_log_column() {
    let dir = workspace(|c| c);
    let (points, _) = read_points(&dir.path().join("x2_raster.csv")).unwrap();
    let mut w = csv::Writer::from_path(dir.path().join("x2_raster.csv")).unwrap();
    w.write_record(["lon", "lat", "value"]).unwrap();
    for p in &points {
        w.write_record([p[0].to_string(), p[1].to_string(), "2.5".into()]).unwrap();
    }
    w.flush().unwrap();
    ok(dir.path(), &["grid"]);
    ok(dir.path(), &["align"]);
    let cells = read_cells(&dir.path().join("out/cells_aligned.csv")).unwrap();
    let x2 = cells.covariates.column("x2").unwrap();
    assert!(x2.iter().all(|&v| (v - 2.5f64.ln()).abs() < 1e-12));
}

#[test]
fn aligned_kriged_covariate_matches_the_library() {
    let dir = workspace(|c| c);
    ok(dir.path(), &["grid"]);
    ok(dir.path(), &["align"]);
    let cells = read_cells(&dir.path().join("out/cells_aligned.csv")).unwrap();
    let (sites, values) = read_points(&dir.path().join("x1_sites.csv")).unwrap();
    let cov = PointCovariate::new("x1", sites, values).unwrap();
    let trend = Trend::constant();
    let model = fit_kriging(&cov, &trend, 1.5, Projection::for_points(CoordinateSystem::Planar, &cells.coords)).unwrap();
    let want = krige_predict(&model, &cov, &trend, &cells.coords, None).unwrap().mean;
    let got = cells.covariates.column("x1").unwrap();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12 * w.abs().max(1.0), "{g} vs {w}");
    }
    let saved = std::fs::read_to_string(dir.path().join("out/kriging_x1.json")).unwrap();
    assert_eq!(saved, serde_json::to_string_pretty(&model).unwrap() + "\n");
    let counts: u64 = cells.counts.iter().map(|c| c.unwrap()).sum();
    let marks = csv::Reader::from_path(dir.path().join("venues.csv")).unwrap().records().count() as u64;
    assert_eq!(counts, marks);
}

#[test]
fn demo_pipeline_end_to_end() {
    let dir = workspace(|c| c);
    for args in [&["grid"][..], &["align"], &["fit"], &["predict"], &["diagnose"]] {
        ok(dir.path(), args);
    }
    let out = dir.path().join("out");
    let regions = csv_column(&out.join("districts_count.csv"), "region");
    let q = |col| csv_column(&out.join("districts_count.csv"), col);
    let (lo, hi) = (q("q2.5"), q("q97.5"));
    let centre = regions.iter().position(|r| r == "centre").unwrap();
    let lo: f64 = lo[centre].parse().unwrap();
    let hi: f64 = hi[centre].parse().unwrap();
    assert!((lo - 73.0).abs() < 1e-9 && (hi - 73.0).abs() < 1e-9, "centre total interval [{lo}, {hi}]");
    for model in ["count", "size"] {
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join(format!("ppp_{model}.json"))).unwrap()).unwrap();
        for (name, entry) in report["statistics"].as_object().unwrap() {
            let p = entry["p_value"].as_f64().unwrap();
            assert!(p > 0.01 && p < 0.99, "{model} {name}: p = {p}");
        }
    }
    for f in ["cells_count.csv", "cells_size_total.csv", "lambda.csv", "rootogram_count.csv", "residual_correlation.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}
