//! Simulation study on the unit square: a synthetic world of venues with
//! sizes, uniform or covariate-driven thinning, re-gridding to coarser and
//! finer lattices, and the percent error of the calibrated total.

use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CellTable, District, DistrictInfo, MarkTable, Standardizer};
use crate::distributions::{logistic, sample_hurdle_lognormal, sample_zinb, HurdleLogNormalParams, ZinbParams};
use crate::error::{Error, Result};
use crate::gp::{lattice_field, BasisBox};
use crate::inference::{fit_count, fit_size, CountData, ModelSpec, SamplerConfig, SizeData};
use crate::predict::{predict, summarize, PredictOptions};
use crate::seed::{derive_seed, stream};
use crate::spatial::{raster_to_cells, Grid, Point, RasterPoints, Transform};

const DISTRICT: &str = "sim";

/// Zero-inflation `logit p = alpha[0] + alpha[1]·x1`; mean
/// `log μ = beta[0] + beta[1]·x1 + beta[2]·x2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountTruth {
    pub alpha: [f64; 2],
    pub beta: [f64; 3],
    pub phi: f64,
}

/// Venue sizes: zero with probability `p`, else `log Y ~ N(mu[0] + mu[1]·x1, sigma²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeTruth {
    pub p: f64,
    pub mu: [f64; 2],
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Thinning {
    Uniform,
    Nonuniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateSet {
    All,
    /// Drops `x1`, the covariate driving nonuniform thinning.
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    A,
    B,
    C,
    D,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::A, Scenario::B, Scenario::C, Scenario::D];

    pub fn thinning(self) -> Thinning {
        match self {
            Scenario::A | Scenario::B => Thinning::Uniform,
            Scenario::C | Scenario::D => Thinning::Nonuniform,
        }
    }

    pub fn covariates(self) -> CovariateSet {
        match self {
            Scenario::A | Scenario::C => CovariateSet::All,
            Scenario::B | Scenario::D => CovariateSet::Missing,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::A => "a",
            Scenario::B => "b",
            Scenario::C => "c",
            Scenario::D => "d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    /// The generating lattice.
    Same,
    Small,
    Large,
}

impl Resolution {
    pub const ALL: [Resolution; 3] = [Resolution::Same, Resolution::Small, Resolution::Large];

    pub fn label(self) -> &'static str {
        match self {
            Resolution::Same => "same",
            Resolution::Small => "small",
            Resolution::Large => "large",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub true_grid: usize,
    pub small_grid: usize,
    pub large_grid: usize,
    /// Raster points per axis carrying the covariate fields.
    pub raster: usize,
    pub field_length_scale: f64,
    pub field_num_basis: usize,
    pub field_boundary_factor: f64,
    pub count: CountTruth,
    pub size: SizeTruth,
    pub retention: f64,
    /// Slope of the nonuniform keep probability on `x1`.
    pub nonuniform_slope: f64,
    pub replicates: usize,
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
    pub resolutions: Vec<Resolution>,
    pub sampler: SamplerConfig,
    /// Fits whose largest split-R̂ reaches this are excluded.
    pub rhat_gate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            true_grid: 45,
            small_grid: 71,
            large_grid: 22,
            raster: 213,
            field_length_scale: 0.2,
            field_num_basis: 20,
            field_boundary_factor: 1.5,
            count: CountTruth { alpha: [1.2, -0.9], beta: [-1.0, 0.8, 0.5], phi: 1.5 },
            size: SizeTruth { p: 0.2, mu: [1.5, 0.4], sigma: 0.8 },
            retention: 0.5,
            nonuniform_slope: 0.75,
            replicates: 200,
            seed: 0,
            scenarios: Scenario::ALL.to_vec(),
            resolutions: Resolution::ALL.to_vec(),
            sampler: SamplerConfig { chains: 2, iterations: 2000, warmup: 1000, ..Default::default() },
            rhat_gate: 1.1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.retention > 0.0 && self.retention <= 1.0) {
            return bad(format!("retention must be in (0, 1], got {}", self.retention));
        }
        if [self.true_grid, self.small_grid, self.large_grid, self.raster].contains(&0) {
            return bad("grid and raster sizes must be positive".into());
        }
        if !(self.count.phi > 0.0 && self.size.sigma > 0.0 && (0.0..=1.0).contains(&self.size.p)) {
            return bad("generative parameters out of domain".into());
        }
        if !(self.field_length_scale > 0.0 && self.field_boundary_factor > 1.0 && self.field_num_basis > 0) {
            return bad("covariate field settings out of domain".into());
        }
        self.sampler.validate()
    }

    pub fn grid_size(&self, r: Resolution) -> usize {
        match r {
            Resolution::Same => self.true_grid,
            Resolution::Small => self.small_grid,
            Resolution::Large => self.large_grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Venue {
    pub location: Point,
    /// Index of the generating cell.
    pub cell: usize,
    pub size: f64,
}

#[derive(Debug, Clone)]
pub struct World {
    pub raster_x1: RasterPoints,
    pub raster_x2: RasterPoints,
    pub grid: Grid,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub counts: Vec<u64>,
    pub venues: Vec<Venue>,
}

impl World {
    pub fn total_venues(&self) -> usize {
        self.venues.len()
    }

    pub fn total_size(&self) -> f64 {
        self.venues.iter().map(|v| v.size).sum()
    }
}

pub fn unit_grid(n: usize) -> Result<Grid> {
    Grid::regular(n, n, [0.0, 0.0], [1.0, 1.0], |_| DISTRICT.to_string())
}

fn standardized(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    for x in &mut v {
        *x = (*x - m) / if sd > 0.0 { sd } else { 1.0 };
    }
    v
}

/// Two independent smooth fields on the raster, each standardized over its
/// points.
fn covariate_rasters(cfg: &SimConfig, rng: &mut crate::seed::Rng) -> Result<(RasterPoints, RasterPoints)> {
    let n = cfg.raster;
    let ticks: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let bx = BasisBox { center: [0.5, 0.5], half_width: [0.5, 0.5] };
    let m = cfg.field_num_basis;
    let points: Vec<Point> = (0..n).flat_map(|b| ticks.iter().map(move |&x| [x, (b as f64 + 0.5) / n as f64])).collect();
    let mut field = || -> Result<RasterPoints> {
        let z: Vec<f64> = (0..m * m).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let f = lattice_field(&ticks, &ticks, bx, m, cfg.field_boundary_factor, 1.0, cfg.field_length_scale, &z)?;
        let values = (0..n).flat_map(|b| (0..n).map(move |a| (a, b))).map(|(a, b)| f[(a, b)]).collect();
        RasterPoints::new(points.clone(), standardized(values))
    };
    let x1 = field()?;
    let x2 = field()?;
    Ok((x1, x2))
}

fn cell_means(raster: &RasterPoints, grid: &Grid) -> Result<Vec<f64>> {
    raster_to_cells(raster, grid, Transform::Identity)
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::Config(format!("grid cell {i} holds no raster point; use a finer raster"))))
        .collect()
}

/// Covariate fields, ZINB venue counts on the generating lattice, uniform
/// venue locations within cells, and hurdle log-normal sizes.
pub fn simulate_world(cfg: &SimConfig, seed: u64) -> Result<World> {
    cfg.validate()?;
    let mut rng = stream(seed, "world", 0);
    let (raster_x1, raster_x2) = covariate_rasters(cfg, &mut rng)?;
    let grid = unit_grid(cfg.true_grid)?;
    let x1 = cell_means(&raster_x1, &grid)?;
    let x2 = cell_means(&raster_x2, &grid)?;
    let c = cfg.count;
    let s = cfg.size;
    let mut counts = Vec::with_capacity(grid.len());
    let mut venues = Vec::new();
    let cell = grid.geometry.cell_size;
    for (i, gc) in grid.cells.iter().enumerate() {
        let params = ZinbParams {
            p: logistic(c.alpha[0] + c.alpha[1] * x1[i]),
            mu: (c.beta[0] + c.beta[1] * x1[i] + c.beta[2] * x2[i]).exp(),
            phi: c.phi,
        };
        let y = sample_zinb(&params, &mut rng);
        counts.push(y);
        let sizes = HurdleLogNormalParams { p: s.p, mu: s.mu[0] + s.mu[1] * x1[i], sigma: s.sigma };
        for _ in 0..y {
            let location = [
                grid.geometry.origin[0] + (gc.col as f64 + rng.random::<f64>()) * cell[0],
                grid.geometry.origin[1] + (gc.row as f64 + rng.random::<f64>()) * cell[1],
            ];
            venues.push(Venue { location, cell: i, size: sample_hurdle_lognormal(&sizes, &mut rng) });
        }
    }
    Ok(World { raster_x1, raster_x2, grid, x1, x2, counts, venues })
}

/// Which venues were sampled, plus the keep-probability model used.
#[derive(Debug, Clone, PartialEq)]
pub struct Thinned {
    pub kept: Vec<bool>,
    /// Intercept and slope of the keep probability on the logit scale.
    pub intercept: f64,
    pub slope: f64,
    /// Mean keep probability over venues.
    pub retention: f64,
    /// Correlation between keep probability and `x1` over venues.
    pub correlation: f64,
}

/// Keep each venue with probability `retention` (uniform) or
/// `logistic(a + slope·x1)` with `a` set by bisection so the mean keep
/// probability over venues equals `retention`.
pub fn thin_world(world: &World, mode: Thinning, retention: f64, slope: f64, seed: u64) -> Result<Thinned> {
    if !(retention > 0.0 && retention <= 1.0) {
        return Err(Error::Config(format!("retention must be in (0, 1], got {retention}")));
    }
    let mut rng = stream(seed, "thin", mode as u64);
    let x: Vec<f64> = world.venues.iter().map(|v| world.x1[v.cell]).collect();
    if mode == Thinning::Uniform || retention >= 1.0 || x.is_empty() {
        let kept = x.iter().map(|_| retention >= 1.0 || rng.random::<f64>() < retention).collect();
        return Ok(Thinned { kept, intercept: f64::NAN, slope: 0.0, retention, correlation: f64::NAN });
    }
    let mean_keep = |a: f64| x.iter().map(|&v| logistic(a + slope * v)).sum::<f64>() / x.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_keep(mid) < retention {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    let q: Vec<f64> = x.iter().map(|&v| logistic(a + slope * v)).collect();
    let achieved = q.iter().sum::<f64>() / q.len() as f64;
    let correlation = crate::diagnostics::pearson(&q, &x);
    if (achieved - retention).abs() > 0.01 || !(correlation >= 0.9) {
        return Err(Error::Calibration(format!(
            "nonuniform thinning reached retention {achieved:.4} with correlation {correlation:.3} (target {retention}, ≥ 0.9)"
        )));
    }
    let kept = q.iter().map(|&p| rng.random::<f64>() < p).collect();
    Ok(Thinned { kept, intercept: a, slope, retention: achieved, correlation })
}

/// Observed data on an `n × n` lattice: kept-venue counts per cell and kept
/// venues as marks, with raster-averaged covariates `x1`, `x2`.
#[derive(Debug, Clone)]
pub struct Observation {
    pub cells: CellTable,
    pub marks: MarkTable,
    pub cell_of_mark: Vec<usize>,
}

pub fn observe(world: &World, kept: &[bool], n: usize) -> Result<Observation> {
    let grid = unit_grid(n)?;
    let x1 = cell_means(&world.raster_x1, &grid)?;
    let x2 = cell_means(&world.raster_x2, &grid)?;
    let mut cells = CellTable::from_grid(&grid);
    cells.covariates.push("x1", x1.clone());
    cells.covariates.push("x2", x2.clone());
    let mut counts = vec![0u64; grid.len()];
    let mut marks = MarkTable::default();
    let (mut m1, mut m2) = (Vec::new(), Vec::new());
    let mut cell_of_mark = Vec::new();
    for (v, &k) in world.venues.iter().zip(kept) {
        if !k {
            continue;
        }
        let i = grid
            .cell_index_at(v.location)
            .ok_or_else(|| Error::Data(format!("venue at {:?} falls outside the unit square", v.location)))?;
        counts[i] += 1;
        marks.coords.push(v.location);
        marks.districts.push(DISTRICT.into());
        marks.values.push(v.size);
        m1.push(x1[i]);
        m2.push(x2[i]);
        cell_of_mark.push(i);
    }
    cells.counts = counts.into_iter().map(Some).collect();
    marks.covariates.push("x1", m1);
    marks.covariates.push("x2", m2);
    Ok(Observation { cells, marks, cell_of_mark })
}

/// Model specification fitted under a covariate set.
pub fn scenario_spec(set: CovariateSet) -> ModelSpec {
    let v = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let (p, mu, size_mu) = match set {
        CovariateSet::All => (v(&["x1"]), v(&["x1", "x2"]), v(&["x1"])),
        CovariateSet::Missing => (v(&[]), v(&["x2"]), v(&[])),
    };
    ModelSpec { size_p: Vec::new(), size_mu, count_p: p, count_mu: mu, district_effects: false, gp: None, ..Default::default() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    /// Posterior mean of the calibrated total mark size.
    pub total_size: f64,
    pub max_rhat: f64,
}

/// Fit both models, calibrate to `known_total` venues and return the
/// posterior mean of the total mark size.
pub fn estimate_total(
    obs: &Observation,
    spec: &ModelSpec,
    sampler: &SamplerConfig,
    retention: f64,
    known_total: f64,
    seed: u64,
) -> Result<Estimate> {
    let names = spec.all_covariates();
    let std = Standardizer::fit(&obs.cells.covariates, &names, None)?;
    let mut cells = obs.cells.clone();
    std.apply(&mut cells.covariates)?;
    let mut marks = obs.marks.clone();
    std.apply(&mut marks.covariates)?;
    let info =
        DistrictInfo([(DISTRICT.to_string(), District { pi: Some(retention), known_total: Some(known_total) })].into_iter().collect());
    let count_data = CountData::new(&cells, &info, spec)?;
    let count = fit_count(&count_data, spec, &SamplerConfig { seed: derive_seed(seed, "count", 0), ..*sampler })?;
    if marks.is_empty() {
        return Err(Error::Data("no sampled venue to fit sizes".into()));
    }
    let size_data = SizeData::new(&marks, spec)?;
    let size = fit_size(&size_data, spec, &SamplerConfig { seed: derive_seed(seed, "size", 0), ..*sampler })?;
    let max_rhat = count.draws.diagnostics.max_rhat().max(size.diagnostics.max_rhat());
    let set = predict(&count, Some(&size), spec, &cells, &info, PredictOptions::default(), derive_seed(seed, "predict", 0))?;
    let fsw = set.fsw().expect("size draws supplied");
    let totals: Vec<f64> = (0..fsw.n_draws).map(|d| fsw.draw(d).iter().sum()).collect();
    Ok(Estimate { total_size: totals.iter().sum::<f64>() / totals.len() as f64, max_rhat })
}

pub fn percent_error(truth: f64, estimate: f64) -> f64 {
    100.0 * (truth - estimate) / truth
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioRow {
    pub scenario: Scenario,
    pub resolution: Resolution,
    pub replicate: usize,
    pub percent_error: Option<f64>,
    pub max_rhat: Option<f64>,
    pub failure: Option<String>,
}

/// All scenario × resolution fits for one simulated world.
pub fn run_replicate(cfg: &SimConfig, replicate: usize) -> Result<Vec<ScenarioRow>> {
    let world_seed = derive_seed(cfg.seed, "sim-world", replicate as u64);
    let world = simulate_world(cfg, world_seed)?;
    let truth = world.total_size();
    let known = world.total_venues() as f64;
    let mut thinned: Vec<(Thinning, Result<Thinned>)> = Vec::new();
    for mode in [Thinning::Uniform, Thinning::Nonuniform] {
        if cfg.scenarios.iter().any(|s| s.thinning() == mode) {
            thinned.push((mode, thin_world(&world, mode, cfg.retention, cfg.nonuniform_slope, world_seed)));
        }
    }
    let mut rows = Vec::new();
    for &resolution in &cfg.resolutions {
        for &scenario in &cfg.scenarios {
            let fit_seed = derive_seed(cfg.seed, &format!("sim-fit/{}/{}", scenario.label(), resolution.label()), replicate as u64);
            let outcome = (|| -> Result<Estimate> {
                if !(truth > 0.0) {
                    return Err(Error::Data("simulated world has zero total size".into()));
                }
                let t = thinned.iter().find(|(m, _)| *m == scenario.thinning()).unwrap();
                let t = t.1.as_ref().map_err(|e| Error::Calibration(e.to_string()))?;
                let obs = observe(&world, &t.kept, cfg.grid_size(resolution))?;
                let est = estimate_total(&obs, &scenario_spec(scenario.covariates()), &cfg.sampler, cfg.retention, known, fit_seed)?;
                if !(est.max_rhat < cfg.rhat_gate) {
                    return Err(Error::Sampler(format!("max split-R̂ {:.3} ≥ {}", est.max_rhat, cfg.rhat_gate)));
                }
                Ok(est)
            })();
            rows.push(match outcome {
                Ok(e) => ScenarioRow {
                    scenario,
                    resolution,
                    replicate,
                    percent_error: Some(percent_error(truth, e.total_size)),
                    max_rhat: Some(e.max_rhat),
                    failure: None,
                },
                Err(e) => {
                    log::warn!("replicate {replicate} scenario {} {}: {e}", scenario.label(), resolution.label());
                    ScenarioRow { scenario, resolution, replicate, percent_error: None, max_rhat: None, failure: Some(e.to_string()) }
                }
            });
        }
    }
    log::info!("simulation replicate {replicate} done");
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub scenario: Scenario,
    pub resolution: Resolution,
    pub completed: usize,
    pub failed: usize,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub q50: f64,
    pub q97_5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResults {
    pub config: SimConfig,
    pub rows: Vec<ScenarioRow>,
}

impl StudyResults {
    pub fn errors(&self, scenario: Scenario, resolution: Resolution) -> Vec<f64> {
        self.rows.iter().filter(|r| r.scenario == scenario && r.resolution == resolution).filter_map(|r| r.percent_error).collect()
    }

    pub fn summary(&self) -> Vec<ScenarioSummary> {
        let mut out = Vec::new();
        for &resolution in &self.config.resolutions {
            for &scenario in &self.config.scenarios {
                let e = self.errors(scenario, resolution);
                let total = self.rows.iter().filter(|r| r.scenario == scenario && r.resolution == resolution).count();
                let s = summarize(&e, &[2.5, 50.0, 97.5]);
                out.push(ScenarioSummary {
                    scenario,
                    resolution,
                    completed: e.len(),
                    failed: total - e.len(),
                    mean: s.mean,
                    sd: s.sd,
                    q2_5: s.quantiles[0],
                    q50: s.quantiles[1],
                    q97_5: s.quantiles[2],
                });
            }
        }
        out
    }

    /// `scenario,resolution,replicate,percent_error` for completed fits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["scenario", "resolution", "replicate", "percent_error"]).map_err(|e| Error::csv(path, e))?;
        for r in &self.rows {
            if let Some(e) = r.percent_error {
                w.write_record([r.scenario.label(), r.resolution.label(), &r.replicate.to_string(), &e.to_string()])
                    .map_err(|e| Error::csv(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Configuration, per-scenario summaries and failed fits.
    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        let failures: Vec<&ScenarioRow> = self.rows.iter().filter(|r| r.failure.is_some()).collect();
        let doc = serde_json::json!({
            "config": self.config,
            "summary": self.summary(),
            "failures": failures,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Every replicate in parallel, merged by replicate index.
pub fn run_study(cfg: &SimConfig) -> Result<StudyResults> {
    cfg.validate()?;
    let per: Vec<Vec<ScenarioRow>> = (0..cfg.replicates).into_par_iter().map(|r| run_replicate(cfg, r)).collect::<Result<_>>()?;
    Ok(StudyResults { config: cfg.clone(), rows: per.into_iter().flatten().collect() })
}
