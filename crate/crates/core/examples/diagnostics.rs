//! Posterior predictive p-values and a rootogram for a count model that
//! ignores overdispersion, next to the correctly specified fit.

use presence_abundance::data::{CellTable, District, DistrictInfo};
use presence_abundance::diagnostics::{ppp, rootogram_data, Observed, Statistic};
use presence_abundance::distributions::{logistic, sample_zinb, thin_count, ThinningSpec, ZinbParams};
use presence_abundance::inference::{fit_count, CountData, ModelSpec, SamplerConfig};
use presence_abundance::seed::stream;
use presence_abundance::sim::unit_grid;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> presence_abundance::Result<()> {
    let mut cells = CellTable::from_grid(&unit_grid(30)?);
    let mut rng = stream(12, "example", 0);
    let x: Vec<f64> = (0..cells.len()).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..cells.len() {
        let latent = ZinbParams { p: logistic(-0.5 - 0.8 * x[i]), mu: (1.0 + 0.6 * x[i]).exp(), phi: 0.8 };
        cells.counts[i] = Some(thin_count(sample_zinb(&latent, &mut rng), &ThinningSpec { pi: 0.5 }, &mut rng));
    }
    cells.covariates.push("x", x);
    let info = DistrictInfo([("sim".to_string(), District { pi: Some(0.5), known_total: None })].into_iter().collect());
    let sampler = SamplerConfig { chains: 2, iterations: 1500, warmup: 750, seed: 13, ..Default::default() };

    for (label, fixed_phi) in [("negative binomial", None), ("near-Poisson", Some(1e4))] {
        let spec =
            ModelSpec { count_p: vec!["x".into()], count_mu: vec!["x".into()], district_effects: false, fixed_phi, ..Default::default() };
        let data = CountData::new(&cells, &info, &spec)?;
        let fit = fit_count(&data, &spec, &sampler)?;
        let report = ppp(&fit.draws, Observed::Count(&data), &spec, &Statistic::ALL, 300, 14)?;
        println!("{label}:");
        for s in Statistic::ALL {
            println!("  {:<17} p = {:.3}", s.name(), report.p_value(s).unwrap_or(f64::NAN));
        }
        println!("  count  sqrt(obs)  sqrt(exp)  band");
        for r in rootogram_data(&fit.draws, &data, &spec, 8, 300, 15)? {
            let flag = if r.sqrt_observed < r.sqrt_lower || r.sqrt_observed > r.sqrt_upper { " *" } else { "" };
            println!(
                "  {:>4}{}  {:9.2}  {:9.2}  [{:.2}, {:.2}]{flag}",
                r.count,
                if r.tail { "+" } else { " " },
                r.sqrt_observed,
                r.sqrt_expected,
                r.sqrt_lower,
                r.sqrt_upper
            );
        }
    }
    Ok(())
}
