//! How closely the reduced-rank basis reproduces a squared-exponential
//! kernel as basis functions are added.

use presence_abundance::gp::{relative_frobenius_error, GpConfig};
use presence_abundance::seed::stream;
use rand::Rng;

fn main() -> presence_abundance::Result<()> {
    let mut rng = stream(5, "sites", 0);
    let sites: Vec<[f64; 2]> = (0..200).map(|_| [rng.random(), rng.random()]).collect();
    // A long length scale needs a wider box before more functions help.
    for (l_scale, boundary_factor) in [(0.1, 1.25), (0.2, 1.25), (0.5, 1.25), (0.5, 3.0)] {
        print!("l = {l_scale}, c = {boundary_factor}:");
        for m in [3, 5, 10, 20] {
            let cfg = GpConfig { l_scale, boundary_factor, num_basis: m, ..Default::default() };
            print!("  m={m} {:.4}", relative_frobenius_error(&cfg, &sites)?);
        }
        println!();
    }
    Ok(())
}
