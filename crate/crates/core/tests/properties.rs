use std::collections::BTreeMap;

use proptest::prelude::*;

use presence_abundance::data::{District, DistrictInfo};
use presence_abundance::distributions::{adaptive_truncation, thinned_zinb_oracle, zinb_pmf, ZinbParams};
use presence_abundance::predict::{aggregate, calibrate, region_draws, summarize, CellDraws, PredictionSet, RegionMap};
use presence_abundance::seed::derive_seed;
use presence_abundance::spatial::{nearest_value, Projection, RasterPoints};

fn prediction_set(n_draws: usize, labels: &[usize], values: &[f64]) -> PredictionSet {
    let n = labels.len();
    let counts = CellDraws { n_draws, n_cells: n, values: values[..n_draws * n].to_vec() };
    PredictionSet {
        cell_ids: (0..n as u64).collect(),
        districts: labels.iter().map(|d| format!("d{d}")).collect(),
        coords: (0..n).map(|i| [i as f64, 0.0]).collect(),
        uncalibrated: counts.clone(),
        counts,
        sizes: None,
        lambda: BTreeMap::new(),
        degenerate: Vec::new(),
    }
}

fn totals(set: &PredictionSet, d: usize) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (i, name) in set.districts.iter().enumerate() {
        *out.entry(name.clone()).or_insert(0.0) += set.counts.draw(d)[i];
    }
    out
}

fn known(t: &[f64]) -> DistrictInfo {
    DistrictInfo(t.iter().enumerate().map(|(d, &v)| (format!("d{d}"), District { pi: Some(0.5), known_total: Some(v) })).collect())
}

/// Cells, draws and positive cell values with every district present.
fn calibration_case() -> impl Strategy<Value = (usize, Vec<usize>, Vec<f64>, Vec<f64>)> {
    (1usize..5, 3usize..20).prop_flat_map(|(draws, cells)| {
        (
            Just(draws),
            proptest::collection::vec(0usize..3, cells).prop_map(|mut l| {
                l[0] = 0;
                l[1] = 1;
                l[2] = 2;
                l
            }),
            proptest::collection::vec(0.01f64..50.0, draws * cells),
            proptest::collection::vec(1.0f64..500.0, 3),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn thinned_law_is_zinb_with_scaled_mean(p in 0.0f64..0.95, mu in 0.05f64..30.0, phi in 0.2f64..20.0, pi in 0.02f64..1.0, y in 0u64..40) {
        let latent = ZinbParams::new(p, mu, phi).unwrap();
        let t = adaptive_truncation(&latent, 1e-14).unwrap().max(y + 200);
        let oracle = thinned_zinb_oracle(&latent, pi, y, t).unwrap();
        let closed = zinb_pmf(&ZinbParams::new(p, pi * mu, phi).unwrap(), y).unwrap();
        prop_assert!((oracle - closed).abs() < 1e-10, "{oracle} vs {closed}");
    }

    #[test]
    fn zinb_pmf_sums_to_one(p in 0.0f64..1.0, mu in 0.01f64..50.0, phi in 0.1f64..50.0) {
        let params = ZinbParams::new(p, mu, phi).unwrap();
        let t = adaptive_truncation(&params, 1e-13).unwrap();
        let total: f64 = (0..=t).map(|y| zinb_pmf(&params, y).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn calibration_hits_totals_and_is_idempotent((draws, labels, values, t) in calibration_case()) {
        let set = calibrate(&prediction_set(draws, &labels, &values), &known(&t));
        for d in 0..draws {
            let sums = totals(&set, d);
            for (k, &v) in t.iter().enumerate() {
                let got = sums[&format!("d{k}")];
                prop_assert!((got - v).abs() <= 1e-9 * v.max(1.0), "district {} sums to {} not {}", k, got, v);
            }
        }
        let again = calibrate(&set, &known(&t));
        for (a, b) in set.counts.values.iter().zip(&again.counts.values) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn calibration_ignores_the_scale_of_predictions((draws, labels, values, t) in calibration_case(), c in 0.001f64..1000.0) {
        let base = calibrate(&prediction_set(draws, &labels, &values), &known(&t));
        let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
        let other = calibrate(&prediction_set(draws, &labels, &scaled), &known(&t));
        for (a, b) in base.counts.values.iter().zip(&other.counts.values) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn regions_partition_the_total((draws, labels, values, _t) in calibration_case(), split in proptest::collection::vec(any::<bool>(), 20)) {
        let set = prediction_set(draws, &labels, &values);
        let n = labels.len();
        let names: Vec<String> = (0..n).map(|i| if split[i] { "east".into() } else { "west".into() }).collect();
        let regions = RegionMap::from_labels(&names);
        let whole = RegionMap::from_labels(&vec!["all".to_string(); n]);
        let parts = region_draws(&set.counts, &regions);
        let total = region_draws(&set.counts, &whole);
        for d in 0..draws {
            let sum: f64 = parts.iter().map(|p| p[d]).sum();
            prop_assert!((sum - total[0][d]).abs() <= 1e-9 * total[0][d].max(1.0));
        }
        let summary = aggregate(&set.counts, &whole, &[2.5, 50.0, 97.5]);
        prop_assert!(summary[0].summary.quantiles.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn quantiles_are_ordered_and_bounded(v in proptest::collection::vec(-1e3f64..1e3, 1..200)) {
        let s = summarize(&v, &[0.0, 2.5, 50.0, 97.5, 100.0]);
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        prop_assert!(s.quantiles.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(s.quantiles[0], lo);
        prop_assert_eq!(s.quantiles[4], hi);
    }

    #[test]
    fn nearest_value_matches_a_linear_scan(points in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..60), targets in proptest::collection::vec((-0.2f64..1.2, -0.2f64..1.2), 1..60)) {
        let pts: Vec<[f64; 2]> = points.iter().map(|&(x, y)| [x, y]).collect();
        let raster = RasterPoints::new(pts.clone(), (0..pts.len()).map(|i| i as f64).collect()).unwrap();
        let tg: Vec<[f64; 2]> = targets.iter().map(|&(x, y)| [x, y]).collect();
        let got = nearest_value(&raster, &tg, &Projection::planar()).unwrap();
        for (t, g) in tg.iter().zip(got) {
            let d = |p: &[f64; 2]| (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2);
            let best = pts.iter().map(d).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(d(&pts[g as usize]), best);
        }
    }

    #[test]
    fn seeds_depend_on_every_input(root in any::<u64>(), index in 0u64..1000) {
        prop_assert_eq!(derive_seed(root, "a", index), derive_seed(root, "a", index));
        prop_assert_ne!(derive_seed(root, "a", index), derive_seed(root, "b", index));
        prop_assert_ne!(derive_seed(root, "a", index), derive_seed(root, "a", index + 1));
    }
}
