//! Simulate thinned counts on a lattice, fit the count model, and print the
//! posterior summary with sampler diagnostics.

use presence_abundance::data::{CellTable, District, DistrictInfo};
use presence_abundance::distributions::{logistic, sample_zinb, thin_count, ThinningSpec, ZinbParams};
use presence_abundance::inference::{fit_count, CountData, ModelSpec, SamplerConfig};
use presence_abundance::seed::stream;
use presence_abundance::sim::unit_grid;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> presence_abundance::Result<()> {
    let grid = unit_grid(30)?;
    let mut cells = CellTable::from_grid(&grid);
    let mut rng = stream(8, "example", 0);
    let x: Vec<f64> = (0..cells.len()).map(|_| rng.sample(StandardNormal)).collect();
    let pi = 0.6;
    for (i, &xi) in x.iter().enumerate() {
        let latent = ZinbParams { p: logistic(-0.5 - 0.8 * xi), mu: (0.7 + 0.6 * xi).exp(), phi: 2.0 };
        cells.counts[i] = Some(thin_count(sample_zinb(&latent, &mut rng), &ThinningSpec { pi }, &mut rng));
    }
    cells.covariates.push("x", x);
    let info = DistrictInfo([("sim".to_string(), District { pi: Some(pi), known_total: None })].into_iter().collect());

    let spec = ModelSpec { count_p: vec!["x".into()], count_mu: vec!["x".into()], district_effects: false, ..Default::default() };
    let data = CountData::new(&cells, &info, &spec)?;
    let cfg = SamplerConfig { chains: 2, iterations: 2000, warmup: 1000, seed: 9, ..Default::default() };
    let fit = fit_count(&data, &spec, &cfg)?;

    println!("{:<18} {:>8} {:>8} {:>7} {:>7}", "parameter", "mean", "sd", "R-hat", "ESS");
    for p in &fit.draws.diagnostics.parameters {
        println!("{:<18} {:>8.3} {:>8.3} {:>7.3} {:>7.0}", p.name, p.mean, p.sd, p.rhat, p.ess);
    }
    for b in &fit.draws.diagnostics.acceptance {
        println!("acceptance {:<12} {:?}", b.block, b.rates.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>());
    }
    Ok(())
}
