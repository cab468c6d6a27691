//! Writes the bundled demo dataset: three districts on the unit square, a
//! kriged and a raster covariate, and venue marks sampled with known
//! per-district probabilities. The east district is never visited.
//!
//!     cargo run -p presence-abundance --example make_demo -- demo

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use presence_abundance::data::{write_districts, write_points, District, DistrictInfo};
use presence_abundance::seed::stream;
use presence_abundance::sim::{simulate_world, SimConfig};

const DISTRICTS: [(&str, f64, f64, Option<f64>); 3] =
    [("west", 0.0, 1.0 / 3.0, Some(0.5)), ("centre", 1.0 / 3.0, 2.0 / 3.0, Some(0.3)), ("east", 2.0 / 3.0, 1.0, None)];

fn district_of(x: f64) -> usize {
    DISTRICTS.iter().position(|d| x < d.2).unwrap_or(2)
}

fn main() -> presence_abundance::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    fs::create_dir_all(&dir).expect("create output directory");
    let cfg = SimConfig::default();
    let world = simulate_world(&cfg, 2024)?;
    let mut rng = stream(2024, "demo", 0);

    // Districts as vertical strips.
    let mut features = Vec::new();
    for (name, x0, x1, _) in DISTRICTS {
        features.push(format!(
            r#"{{"type":"Feature","properties":{{"name":"{name}"}},"geometry":{{"type":"Polygon","coordinates":[[[{x0},0],[{x1},0],[{x1},1],[{x0},1],[{x0},0]]]}}}}"#
        ));
    }
    let geojson = format!("{{\"type\":\"FeatureCollection\",\"features\":[\n{}\n]}}\n", features.join(",\n"));
    fs::write(dir.join("districts.geojson"), geojson).expect("write districts");

    // x1 observed with noise at scattered survey sites.
    let noise = Normal::new(0.0, 0.05).unwrap();
    let n = world.raster_x1.points.len();
    let picks: Vec<usize> = (0..150).map(|_| rng.random_range(0..n)).collect();
    let sites: Vec<_> = picks.iter().map(|&i| world.raster_x1.points[i]).collect();
    let values: Vec<f64> = picks.iter().map(|&i| world.raster_x1.values[i] + noise.sample(&mut rng)).collect();
    write_points(&dir.join("x1_sites.csv"), &sites, &values)?;

    // x2 as an exponentiated raster on every third lattice point.
    let side = cfg.raster;
    let keep: Vec<usize> = (0..n).filter(|i| (i % side) % 3 == 1 && (i / side) % 3 == 1).collect();
    let points: Vec<_> = keep.iter().map(|&i| world.raster_x2.points[i]).collect();
    let density: Vec<f64> = keep.iter().map(|&i| world.raster_x2.values[i].exp()).collect();
    write_points(&dir.join("x2_raster.csv"), &points, &density)?;

    // Visited districts keep each venue with their π; totals are known there.
    let mut totals = [0usize; 3];
    let mut marks = String::from("lon,lat,district,value\n");
    for v in &world.venues {
        let d = district_of(v.location[0]);
        totals[d] += 1;
        if let Some(pi) = DISTRICTS[d].3 {
            if rng.random::<f64>() < pi {
                writeln!(marks, "{},{},,{}", v.location[0], v.location[1], v.size).unwrap();
            }
        }
    }
    fs::write(dir.join("venues.csv"), marks).expect("write venues");

    let info = DistrictInfo(
        DISTRICTS
            .iter()
            .zip(totals)
            .map(|((name, _, _, pi), total)| (name.to_string(), District { pi: *pi, known_total: pi.map(|_| total as f64) }))
            .collect(),
    );
    write_districts(&dir.join("districts.csv"), &info)?;
    let size_total: f64 = world.venues.iter().map(|v| v.size).sum();
    println!("venues per district {totals:?}; total venue size {size_total:.1}");
    Ok(())
}
