//! One replicate of the thinning simulation: a synthetic world, uniform and
//! covariate-driven sampling, and the percent error of the recovered total
//! size in each scenario and grid resolution. Takes about a minute.
//!
//!     cargo run -p presence-abundance --example simulation -- 3

use presence_abundance::seed::derive_seed;
use presence_abundance::sim::{run_replicate, simulate_world, thin_world, SimConfig, Thinning};

fn main() -> presence_abundance::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = SimConfig { seed, ..Default::default() };

    // The same world the replicate below is built on.
    let world_seed = derive_seed(seed, "sim-world", 0);
    let world = simulate_world(&cfg, world_seed)?;
    println!("{} venues in {} cells, total size {:.0}", world.total_venues(), world.grid.len(), world.total_size());
    let t = thin_world(&world, Thinning::Nonuniform, cfg.retention, cfg.nonuniform_slope, world_seed)?;
    println!("nonuniform sampling: retention {:.3}, correlation with x1 {:.3}", t.retention, t.correlation);

    println!("scenario  resolution  % error   max R-hat");
    for row in run_replicate(&cfg, 0)? {
        match (row.percent_error, row.failure) {
            (Some(e), _) => println!("{:<9} {:<11} {e:+7.2}   {:.3}", row.scenario.label(), row.resolution.label(), row.max_rhat.unwrap()),
            (None, f) => println!("{:<9} {:<11} failed: {}", row.scenario.label(), row.resolution.label(), f.unwrap_or_default()),
        }
    }
    Ok(())
}
