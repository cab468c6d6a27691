#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;

use presence_abundance::data::{CellTable, District, DistrictInfo, MarkTable};
use presence_abundance::distributions::{
    logistic, sample_hurdle_lognormal, sample_zinb, thin_count, HurdleLogNormalParams, ThinningSpec, ZinbParams,
};
use presence_abundance::inference::{ModelSpec, PosteriorDraws, SamplerConfig};
use presence_abundance::predict::summarize;
use presence_abundance::seed::stream;
use presence_abundance::sim::unit_grid;
use presence_abundance::spatial::kriging::matern_correlation;
use presence_abundance::spatial::Point;

pub const DISTRICT: &str = "sim";

/// Count-model truth: `alpha = [α0, α1(x1)]`, `beta = [β0, β1(x1), β1(x2)]`.
#[derive(Debug, Clone, Copy)]
pub struct CountTruth {
    pub alpha: [f64; 2],
    pub beta: [f64; 3],
    pub phi: f64,
    pub pi: f64,
}

impl Default for CountTruth {
    fn default() -> Self {
        CountTruth { alpha: [-0.5, -0.8], beta: [0.7, 0.6, -0.4], phi: 2.0, pi: 0.5 }
    }
}

impl CountTruth {
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("alpha0_count", self.alpha[0]),
            ("alpha1_count[x1]", self.alpha[1]),
            ("beta0_count", self.beta[0]),
            ("beta1_count[x1]", self.beta[1]),
            ("beta1_count[x2]", self.beta[2]),
            ("phi", self.phi),
        ]
    }
}

pub fn count_spec() -> ModelSpec {
    ModelSpec { count_p: vec!["x1".into()], count_mu: vec!["x1".into(), "x2".into()], district_effects: false, ..Default::default() }
}

pub struct CountSim {
    pub cells: CellTable,
    pub info: DistrictInfo,
    /// Latent, unthinned counts.
    pub latent: Vec<u64>,
}

/// Cells of a `side × side` unit-square grid with standard-normal covariates
/// and thinned ZINB counts.
pub fn count_dataset(side: usize, truth: &CountTruth, seed: u64) -> CountSim {
    let grid = unit_grid(side).unwrap();
    let mut cells = CellTable::from_grid(&grid);
    let mut rng = stream(seed, "count-dataset", 0);
    let n = cells.len();
    let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut latent = Vec::with_capacity(n);
    for i in 0..n {
        let params = ZinbParams {
            p: logistic(truth.alpha[0] + truth.alpha[1] * x1[i]),
            mu: (truth.beta[0] + truth.beta[1] * x1[i] + truth.beta[2] * x2[i]).exp(),
            phi: truth.phi,
        };
        let y = sample_zinb(&params, &mut rng);
        latent.push(y);
        cells.counts[i] = Some(thin_count(y, &ThinningSpec { pi: truth.pi }, &mut rng));
    }
    cells.covariates.push("x1", x1);
    cells.covariates.push("x2", x2);
    let info = DistrictInfo(
        [(DISTRICT.to_string(), District { pi: Some(truth.pi), known_total: Some(latent.iter().sum::<u64>() as f64) })]
            .into_iter()
            .collect(),
    );
    CountSim { cells, info, latent }
}

/// Size-model truth: hurdle probability `logistic(a0)`, log-mean `b0 + b1·x1`.
#[derive(Debug, Clone, Copy)]
pub struct SizeTruth {
    pub a0: f64,
    pub b: [f64; 2],
    pub sigma2: f64,
}

impl Default for SizeTruth {
    fn default() -> Self {
        SizeTruth { a0: -1.4, b: [1.5, 0.4], sigma2: 0.64 }
    }
}

impl SizeTruth {
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![("alpha0_size", self.a0), ("beta0_size", self.b[0]), ("beta1_size[x1]", self.b[1]), ("sigma2_size", self.sigma2)]
    }
}

pub fn size_spec() -> ModelSpec {
    ModelSpec { size_mu: vec!["x1".into()], district_effects: false, ..Default::default() }
}

pub fn size_dataset(n: usize, truth: &SizeTruth, seed: u64) -> MarkTable {
    let mut rng = stream(seed, "size-dataset", 0);
    let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let values = x1
        .iter()
        .map(|x| {
            let params = HurdleLogNormalParams { p: logistic(truth.a0), mu: truth.b[0] + truth.b[1] * x, sigma: truth.sigma2.sqrt() };
            sample_hurdle_lognormal(&params, &mut rng)
        })
        .collect();
    let mut marks = MarkTable {
        coords: (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect(),
        districts: vec![DISTRICT.to_string(); n],
        values,
        ..Default::default()
    };
    marks.covariates.push("x1", x1);
    marks
}

pub fn sampler(seed: u64) -> SamplerConfig {
    SamplerConfig { chains: 2, iterations: 2000, warmup: 1000, seed, ..Default::default() }
}

/// Whether the central 95% posterior interval of `name` contains `value`.
pub fn covers(draws: &PosteriorDraws, name: &str, value: f64) -> bool {
    let col = draws.column_by_name(name).unwrap_or_else(|| panic!("no parameter {name}"));
    let q = summarize(&col, &[2.5, 97.5]).quantiles;
    q[0] <= value && value <= q[1]
}

pub fn posterior_mean(draws: &PosteriorDraws, name: &str) -> f64 {
    let col = draws.column_by_name(name).unwrap_or_else(|| panic!("no parameter {name}"));
    col.iter().sum::<f64>() / col.len() as f64
}

pub fn uniform_sites(n: usize, seed: u64) -> Vec<Point> {
    let mut rng = stream(seed, "sites", 0);
    (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
}

/// One draw of a zero-mean Matérn field plus independent nugget noise.
pub fn matern_field(sites: &[Point], sill: f64, range: f64, nugget: f64, smoothness: f64, seed: u64) -> Vec<f64> {
    let n = sites.len();
    let cov = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        let h = ((sites[i][0] - sites[j][0]).powi(2) + (sites[i][1] - sites[j][1]).powi(2)).sqrt();
        sill * matern_correlation(h / range, smoothness) + if i == j { 1e-10 } else { 0.0 }
    });
    let l = cov.cholesky().expect("Matérn covariance is positive definite").l();
    let mut rng = stream(seed, "matern-field", 0);
    let z = nalgebra::DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let field = l * z;
    field.iter().map(|f| f + nugget.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect()
}
