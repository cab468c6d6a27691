//! Fit a Matérn covariance by REML to scattered observations and krige them
//! onto a grid's cell centroids.

use presence_abundance::seed::stream;
use presence_abundance::sim::unit_grid;
use presence_abundance::spatial::{fit_kriging, krige_predict, leave_one_out, PointCovariate, Projection, Trend};
use rand::Rng;

fn main() -> presence_abundance::Result<()> {
    let mut rng = stream(3, "sites", 0);
    let sites: Vec<[f64; 2]> = (0..150).map(|_| [rng.random(), rng.random()]).collect();
    let values = sites.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1] + 0.05 * rng.random::<f64>()).collect();
    let cov = PointCovariate::new("elevation", sites, values)?;

    let trend = Trend::linear();
    let model = fit_kriging(&cov, &trend, 1.5, Projection::planar())?;
    println!("sill {:.3}  range {:.3}  nugget {:.4}  (REML {:.2})", model.sill, model.range, model.nugget, model.reml_objective);

    let loo = leave_one_out(&model, &cov, &trend)?;
    let inside = loo.iter().filter(|(obs, mean, var)| (obs - mean).abs() <= 1.96 * var.sqrt()).count();
    println!("leave-one-out 95% coverage: {inside}/{}", loo.len());

    let grid = unit_grid(10)?;
    let pred = krige_predict(&model, &cov, &trend, &grid.centroids(), None)?;
    for row in pred.mean.chunks(10).rev() {
        println!("{}", row.iter().map(|v| format!("{v:6.2}")).collect::<String>());
    }
    Ok(())
}
