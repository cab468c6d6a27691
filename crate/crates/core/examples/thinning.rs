//! Thinning a zero-inflated negative binomial count with a known sampling
//! probability leaves a ZINB with the mean scaled by that probability.

use presence_abundance::distributions::{
    adaptive_truncation, sample_zinb, thin_count, thinned_zinb_oracle, zinb_pmf, ThinningSpec, ZinbParams,
};
use presence_abundance::seed::stream;

fn main() -> presence_abundance::Result<()> {
    let latent = ZinbParams::new(0.3, 4.0, 1.5)?;
    let pi = 0.4;
    let observed = ZinbParams::new(latent.p, pi * latent.mu, latent.phi)?;
    let t = adaptive_truncation(&latent, 1e-14)?;

    let mut rng = stream(1, "example", 0);
    let n = 200_000;
    let mut freq = [0usize; 8];
    for _ in 0..n {
        let y = thin_count(sample_zinb(&latent, &mut rng), &ThinningSpec::new(pi)?, &mut rng);
        if (y as usize) < freq.len() {
            freq[y as usize] += 1;
        }
    }

    println!(" y   closed form   convolution    simulated");
    for (y, f) in freq.iter().enumerate() {
        let y = y as u64;
        println!("{y:2}   {:.8}    {:.8}    {:.5}", zinb_pmf(&observed, y)?, thinned_zinb_oracle(&latent, pi, y, t)?, *f as f64 / n as f64);
    }
    Ok(())
}
