//! Predict un-thinned counts on every cell, rescale each draw so districts
//! with a known total match it, and aggregate to districts and blocks.
//!
//! Two districts split the square; only the western one was surveyed and
//! has a known total.

use presence_abundance::data::{CellTable, District, DistrictInfo};
use presence_abundance::distributions::{logistic, sample_zinb, thin_count, ThinningSpec, ZinbParams};
use presence_abundance::inference::{fit_count, CountData, ModelSpec, SamplerConfig};
use presence_abundance::predict::{aggregate, predict, PredictOptions, RegionMap, REGION_PERCENTS};
use presence_abundance::seed::stream;
use presence_abundance::spatial::Grid;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> presence_abundance::Result<()> {
    let grid = Grid::regular(30, 30, [0.0, 0.0], [1.0, 1.0], |p| if p[0] < 0.5 { "west".into() } else { "east".into() })?;
    let mut cells = CellTable::from_grid(&grid);
    let mut rng = stream(4, "example", 0);
    let x: Vec<f64> = (0..cells.len()).map(|_| rng.sample(StandardNormal)).collect();
    let mut latent_total = 0;
    for i in 0..cells.len() {
        let y = sample_zinb(&ZinbParams { p: logistic(-0.4 - 0.7 * x[i]), mu: (0.8 + 0.5 * x[i]).exp(), phi: 2.0 }, &mut rng);
        if cells.districts[i] == "west" {
            latent_total += y;
            cells.counts[i] = Some(thin_count(y, &ThinningSpec { pi: 0.5 }, &mut rng));
        }
    }
    cells.covariates.push("x", x);
    let info = DistrictInfo(
        [
            ("west".to_string(), District { pi: Some(0.5), known_total: Some(latent_total as f64) }),
            ("east".to_string(), District::default()),
        ]
        .into_iter()
        .collect(),
    );

    let spec = ModelSpec { count_p: vec!["x".into()], count_mu: vec!["x".into()], district_effects: false, ..Default::default() };
    let data = CountData::new(&cells, &info, &spec)?;
    let fit = fit_count(&data, &spec, &SamplerConfig { chains: 2, iterations: 1500, warmup: 750, seed: 5, ..Default::default() })?;
    let set = predict(&fit, None, &spec, &cells, &info, PredictOptions::default(), 6)?;

    let lam = &set.lambda["west"];
    println!("west: known total {latent_total}, mean scaling factor {:.3}", lam.iter().sum::<f64>() / lam.len() as f64);
    let districts = RegionMap::from_labels(&set.districts);
    for r in aggregate(&set.counts, &districts, &REGION_PERCENTS) {
        println!(
            "{:<6} mean {:8.1}  95% [{:.1}, {:.1}]",
            r.region,
            r.summary.mean,
            r.summary.quantiles[0],
            r.summary.quantiles[REGION_PERCENTS.len() - 1]
        );
    }
    let blocks = RegionMap::coarse(&set.coords, 0.25)?;
    for r in aggregate(&set.counts, &blocks, &REGION_PERCENTS).iter().take(4) {
        println!("block {:<8} {:3} cells  mean {:6.1}", r.region, r.n_cells, r.summary.mean);
    }
    Ok(())
}
