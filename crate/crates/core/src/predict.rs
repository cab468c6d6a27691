//! Posterior prediction of un-thinned counts and mark sizes, calibration to
//! known district totals, and aggregation to regions.
//!
//! Counts stay real-valued through calibration so calibrated district sums
//! match their totals exactly.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics, Statistics};

use crate::data::{CellTable, DistrictInfo};
use crate::distributions::{logistic, sample_hurdle_lognormal, sample_zinb, HurdleLogNormalParams, ZinbParams};
use crate::error::{Error, Result};
use crate::inference::{CountFit, CountParams, DesignMatrix, GpFrame, ModelSpec, PosteriorDraws, SizeParams};
use crate::seed::stream;
use crate::spatial::Point;

/// Percent levels reported for cells and λ.
pub const CELL_PERCENTS: [f64; 3] = [2.5, 50.0, 97.5];
/// Percent levels reported for regions.
pub const REGION_PERCENTS: [f64; 5] = [2.5, 25.0, 50.0, 75.0, 97.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    /// `(1 − p)·μ` per draw.
    #[default]
    Expected,
    /// One ZINB draw per posterior draw.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeMode {
    /// Calibrated count × hurdle log-normal mean.
    #[default]
    Expected,
    /// Sum of venue-level size draws over the rounded calibrated count.
    Sampled,
}

/// Draw × cell matrix, draw-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDraws {
    pub n_draws: usize,
    pub n_cells: usize,
    pub values: Vec<f64>,
}

impl CellDraws {
    pub fn zeros(n_draws: usize, n_cells: usize) -> Self {
        CellDraws { n_draws, n_cells, values: vec![0.0; n_draws * n_cells] }
    }

    fn from_rows(n_cells: usize, rows: Vec<Vec<f64>>) -> Self {
        CellDraws { n_draws: rows.len(), n_cells, values: rows.concat() }
    }

    pub fn draw(&self, d: usize) -> &[f64] {
        &self.values[d * self.n_cells..(d + 1) * self.n_cells]
    }

    pub fn draw_mut(&mut self, d: usize) -> &mut [f64] {
        &mut self.values[d * self.n_cells..(d + 1) * self.n_cells]
    }

    pub fn cell(&self, i: usize) -> Vec<f64> {
        (0..self.n_draws).map(|d| self.values[d * self.n_cells + i]).collect()
    }

    /// Elementwise product.
    pub fn times(&self, other: &CellDraws) -> CellDraws {
        assert_eq!((self.n_draws, self.n_cells), (other.n_draws, other.n_cells));
        CellDraws {
            n_draws: self.n_draws,
            n_cells: self.n_cells,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        }
    }
}

/// Per-draw hurdle log-normal parameters at each predicted cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SizePrediction {
    pub mean: CellDraws,
    pub p: CellDraws,
    pub mu: CellDraws,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DegenerateDraw {
    pub draw: usize,
    pub district: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub cell_ids: Vec<u64>,
    pub districts: Vec<String>,
    pub coords: Vec<Point>,
    /// Current counts, calibrated where a total is known.
    pub counts: CellDraws,
    pub uncalibrated: CellDraws,
    pub sizes: Option<SizePrediction>,
    /// Cumulative scaling factor per calibrated district and draw; NaN marks a
    /// degenerate draw.
    pub lambda: BTreeMap<String, Vec<f64>>,
    pub degenerate: Vec<(usize, String)>,
}

impl PredictionSet {
    pub fn n_draws(&self) -> usize {
        self.counts.n_draws
    }

    pub fn n_cells(&self) -> usize {
        self.counts.n_cells
    }

    /// Calibrated count × mean size.
    pub fn fsw(&self) -> Option<CellDraws> {
        self.sizes.as_ref().map(|s| self.counts.times(&s.mean))
    }

    /// Marks summed over `round(count)` venue-level draws per cell.
    pub fn fsw_sampled(&self, seed: u64) -> Option<CellDraws> {
        let sizes = self.sizes.as_ref()?;
        let n = self.n_cells();
        let rows = (0..self.n_draws())
            .into_par_iter()
            .map(|d| {
                let mut rng = stream(seed, "predict-fsw", d as u64);
                let off = d * n;
                (0..n)
                    .map(|i| {
                        let k = self.counts.values[off + i].round().max(0.0) as u64;
                        let params =
                            HurdleLogNormalParams { p: sizes.p.values[off + i], mu: sizes.mu.values[off + i], sigma: sizes.sigma[d] };
                        (0..k).map(|_| sample_hurdle_lognormal(&params, &mut rng)).sum()
                    })
                    .collect()
            })
            .collect();
        Some(CellDraws::from_rows(n, rows))
    }
}

/// Rows of `cells` whose covariates `names` are all finite. Others are
/// skipped with a warning; an absent column is an error.
pub fn usable_rows(cells: &CellTable, names: &[String]) -> Result<Vec<usize>> {
    let cols = names
        .iter()
        .map(|n| {
            cells.covariates.column(n).ok_or_else(|| Error::Data(format!("covariate `{n}` is not available for the prediction cells")))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<usize> = (0..cells.len()).filter(|&i| cols.iter().all(|c| c[i].is_finite())).collect();
    if rows.len() < cells.len() {
        log::warn!("{} cells with missing covariates skipped", cells.len() - rows.len());
    }
    Ok(rows)
}

fn design(cells: &CellTable, names: &[String], rows: &[usize]) -> Result<DesignMatrix> {
    let mut cov = crate::data::Covariates::default();
    for n in names {
        let col =
            cells.covariates.column(n).ok_or_else(|| Error::Data(format!("covariate `{n}` is not available for the prediction cells")))?;
        cov.push(n.clone(), rows.iter().map(|&i| col[i]).collect());
    }
    DesignMatrix::from_covariates(&cov, names, rows.len(), "cell")
}

fn sorted_districts(cells: &CellTable, rows: &[usize]) -> Vec<String> {
    let mut v: Vec<String> = rows.iter().map(|&i| cells.districts[i].clone()).collect();
    v.sort();
    v.dedup();
    v
}

/// Add district effects for `districts` not estimated in the fit, drawing
/// each from `N(0, σ²)` with that draw's variance. `model` is `count` or
/// `size`. Draws without district effects are returned unchanged.
pub fn simulate_missing_effects(draws: &PosteriorDraws, model: &str, districts: &[String], seed: u64) -> Result<PosteriorDraws> {
    let (Some(ip), Some(imu)) = (draws.index(&format!("sigma2_district_{model}_p")), draws.index(&format!("sigma2_district_{model}_mu")))
    else {
        return Ok(draws.clone());
    };
    let mut wanted: Vec<&String> = districts.iter().collect();
    wanted.sort();
    wanted.dedup();
    let mut names = Vec::new();
    let mut cols = Vec::new();
    for d in wanted {
        let (np, nmu) = (format!("gamma_{model}_p[{d}]"), format!("gamma_{model}_mu[{d}]"));
        if draws.index(&np).is_some() {
            continue;
        }
        let label = format!("effect/{model}/{d}");
        let (mut gp, mut gmu) = (Vec::with_capacity(draws.n_draws()), Vec::with_capacity(draws.n_draws()));
        for r in 0..draws.n_draws() {
            let mut rng = stream(seed, &label, r as u64);
            let (zp, zmu): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            let row = draws.row(r);
            gp.push(row[ip].sqrt() * zp);
            gmu.push(row[imu].sqrt() * zmu);
        }
        names.push(np);
        names.push(nmu);
        cols.push(gp);
        cols.push(gmu);
    }
    if !names.is_empty() {
        log::info!("{model} model: simulated effects for {} districts", names.len() / 2);
    }
    draws.with_columns(names, cols)
}

/// Un-thinned count predictions at `rows` of `cells`. Every cell district
/// must have effects in `draws` when the fit used them (see
/// [`simulate_missing_effects`]).
pub fn predict_counts(
    draws: &PosteriorDraws,
    spec: &ModelSpec,
    gp_frame: Option<&GpFrame>,
    cells: &CellTable,
    rows: &[usize],
    mode: CountMode,
    seed: u64,
) -> Result<CellDraws> {
    let x_p = design(cells, &spec.count_p, rows)?;
    let x_mu = design(cells, &spec.count_mu, rows)?;
    let names = sorted_districts(cells, rows);
    let district: Vec<usize> = rows.iter().map(|&i| names.binary_search(&cells.districts[i]).unwrap()).collect();
    let basis = match (&spec.gp, gp_frame) {
        (Some(_), Some(frame)) => Some(frame.basis(&rows.iter().map(|&i| cells.coords[i]).collect::<Vec<_>>())?),
        (Some(_), None) => return Err(Error::Data("the count model has a spatial term but no basis frame was supplied".into())),
        (None, _) => None,
    };
    let params = (0..draws.n_draws()).map(|r| CountParams::from_draw(draws, r, &names, spec)).collect::<Result<Vec<_>>>()?;
    let n = rows.len();
    let out = params
        .par_iter()
        .enumerate()
        .map(|(r, p)| {
            let mut eta_gp = vec![0.0; n];
            if let (Some(b), Some(g)) = (&basis, &p.gp) {
                b.field(&b.spectral_weights(g.sigma2_gp, g.l_scale), &g.z, &mut eta_gp);
            }
            let mut rng = stream(seed, "predict-count", r as u64);
            (0..n)
                .map(|i| {
                    let d = district[i];
                    let g = |v: &[f64]| v.get(d).copied().unwrap_or(0.0);
                    let prob = logistic(p.alpha0 + x_p.dot(i, &p.alpha1) + g(&p.gamma_p) + eta_gp[i]);
                    let mu = (p.beta0 + x_mu.dot(i, &p.beta1) + g(&p.gamma_mu)).exp();
                    match mode {
                        CountMode::Expected => (1.0 - prob) * mu,
                        CountMode::Sampled => sample_zinb(&ZinbParams { p: prob, mu, phi: p.phi }, &mut rng) as f64,
                    }
                })
                .collect()
        })
        .collect();
    Ok(CellDraws::from_rows(n, out))
}

/// Hurdle log-normal mean mark size at `rows` of `cells` for each draw.
pub fn predict_sizes(draws: &PosteriorDraws, spec: &ModelSpec, cells: &CellTable, rows: &[usize]) -> Result<SizePrediction> {
    let x_p = design(cells, &spec.size_p, rows)?;
    let x_mu = design(cells, &spec.size_mu, rows)?;
    let names = sorted_districts(cells, rows);
    let district: Vec<usize> = rows.iter().map(|&i| names.binary_search(&cells.districts[i]).unwrap()).collect();
    let params = (0..draws.n_draws()).map(|r| SizeParams::from_draw(draws, r, &names, spec)).collect::<Result<Vec<_>>>()?;
    let n = rows.len();
    let per_draw: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = params
        .par_iter()
        .map(|p| {
            let sigma2 = p.sigma2_size;
            let mut out = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
            for i in 0..n {
                let d = district[i];
                let g = |v: &[f64]| v.get(d).copied().unwrap_or(0.0);
                let prob = logistic(p.alpha0 + x_p.dot(i, &p.alpha1) + g(&p.gamma_p));
                let mu = p.beta0 + x_mu.dot(i, &p.beta1) + g(&p.gamma_mu);
                out.0.push((1.0 - prob) * (mu + 0.5 * sigma2).exp());
                out.1.push(prob);
                out.2.push(mu);
            }
            out
        })
        .collect();
    let sigma = params.iter().map(|p| p.sigma2_size.sqrt()).collect();
    let (mut mean, mut p, mut mu) = (Vec::new(), Vec::new(), Vec::new());
    for (a, b, c) in per_draw {
        mean.push(a);
        p.push(b);
        mu.push(c);
    }
    Ok(SizePrediction { mean: CellDraws::from_rows(n, mean), p: CellDraws::from_rows(n, p), mu: CellDraws::from_rows(n, mu), sigma })
}

/// Scale each draw's counts in every district with a known total so the
/// district sum equals it. Districts without a total pass through.
pub fn calibrate(set: &PredictionSet, info: &DistrictInfo) -> PredictionSet {
    let mut out = set.clone();
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in set.districts.iter().enumerate() {
        members.entry(d.as_str()).or_default().push(i);
    }
    for (name, district) in &info.0 {
        let Some(total) = district.known_total else { continue };
        let Some(cells) = members.get(name.as_str()) else {
            log::warn!("district {name} has a known total but no predicted cells");
            continue;
        };
        let lambdas = out.lambda.entry(name.clone()).or_insert_with(|| vec![1.0; set.n_draws()]);
        for (d, lam_total) in lambdas.iter_mut().enumerate() {
            let row = out.counts.draw_mut(d);
            let sum: f64 = cells.iter().map(|&i| row[i]).sum();
            let lam = if sum > 0.0 {
                total / sum
            } else if total == 0.0 {
                1.0
            } else {
                if !out.degenerate.iter().any(|(dd, nn)| *dd == d && nn == name) {
                    out.degenerate.push((d, name.clone()));
                }
                f64::NAN
            };
            if lam.is_nan() {
                *lam_total = f64::NAN;
                continue;
            }
            for &i in cells {
                row[i] *= lam;
            }
            *lam_total *= lam;
        }
    }
    out.degenerate.sort();
    if !out.degenerate.is_empty() {
        log::warn!("{} draws could not be calibrated (zero predicted count)", out.degenerate.len());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    #[serde(default)]
    pub count_mode: CountMode,
    #[serde(default)]
    pub size_mode: SizeMode,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions { count_mode: CountMode::Expected, size_mode: SizeMode::Expected }
    }
}

/// Full prediction: simulate missing effects, predict counts (and sizes when
/// size draws are given), then calibrate. Size draw `r mod n` pairs with
/// count draw `r`.
pub fn predict(
    count: &CountFit,
    size: Option<&PosteriorDraws>,
    spec: &ModelSpec,
    cells: &CellTable,
    info: &DistrictInfo,
    options: PredictOptions,
    seed: u64,
) -> Result<PredictionSet> {
    let mut needed = spec.count_covariates();
    if size.is_some() {
        needed.extend(spec.size_covariates());
        needed.sort();
        needed.dedup();
    }
    let rows = usable_rows(cells, &needed)?;
    if rows.is_empty() {
        return Err(Error::Data("no cell has every covariate needed for prediction".into()));
    }
    let districts = sorted_districts(cells, &rows);
    let count_draws = simulate_missing_effects(&count.draws, "count", &districts, seed)?;
    let counts = predict_counts(&count_draws, spec, count.gp_frame.as_ref(), cells, &rows, options.count_mode, seed)?;
    let sizes = match size {
        Some(s) => {
            let s = simulate_missing_effects(s, "size", &districts, seed)?;
            let paired: Vec<usize> = (0..counts.n_draws).map(|r| r % s.n_draws()).collect();
            Some(predict_sizes(&s.with_rows(&paired), spec, cells, &rows)?)
        }
        None => None,
    };
    let set = PredictionSet {
        cell_ids: rows.iter().map(|&i| cells.ids[i]).collect(),
        districts: rows.iter().map(|&i| cells.districts[i].clone()).collect(),
        coords: rows.iter().map(|&i| cells.coords[i]).collect(),
        uncalibrated: counts.clone(),
        counts,
        sizes,
        lambda: BTreeMap::new(),
        degenerate: Vec::new(),
    };
    Ok(calibrate(&set, info))
}

// ---------------------------------------------------------------------------
// Summaries

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub quantiles: Vec<f64>,
}

/// Mean, sample sd and R-8 quantiles at `percents` of the finite values.
pub fn summarize(values: &[f64], percents: &[f64]) -> Summary {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let mut data = Data::new(finite.clone());
    Summary {
        mean: if finite.is_empty() { f64::NAN } else { (&finite).mean() },
        sd: if finite.len() > 1 { (&finite).std_dev() } else { 0.0 },
        quantiles: percents.iter().map(|p| data.quantile(p / 100.0)).collect(),
    }
}

fn percent_label(p: f64) -> String {
    format!("q{p}")
}

/// `cell_id,mean,sd,q2.5,q50,q97.5`.
pub fn write_cell_summary(path: &Path, cell_ids: &[u64], values: &CellDraws) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["cell_id".to_string(), "mean".into(), "sd".into()];
    header.extend(CELL_PERCENTS.iter().map(|&p| percent_label(p)));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    let rows: Vec<Summary> = (0..values.n_cells).into_par_iter().map(|i| summarize(&values.cell(i), &CELL_PERCENTS)).collect();
    for (id, s) in cell_ids.iter().zip(rows) {
        let mut rec = vec![id.to_string(), s.mean.to_string(), s.sd.to_string()];
        rec.extend(s.quantiles.iter().map(f64::to_string));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSummary {
    pub district: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub degenerate_draws: usize,
}

pub fn lambda_summary(set: &PredictionSet) -> Vec<LambdaSummary> {
    set.lambda
        .iter()
        .map(|(d, v)| {
            let s = summarize(v, &[2.5, 97.5]);
            LambdaSummary {
                district: d.clone(),
                mean: s.mean,
                lower: s.quantiles[0],
                upper: s.quantiles[1],
                degenerate_draws: v.iter().filter(|x| x.is_nan()).count(),
            }
        })
        .collect()
}

/// `district,lambda_mean,lambda_q2.5,lambda_q97.5`.
pub fn write_lambda_summary(path: &Path, set: &PredictionSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["district", "lambda_mean", "lambda_q2.5", "lambda_q97.5"]).map_err(|e| Error::csv(path, e))?;
    for s in lambda_summary(set) {
        w.write_record([s.district, s.mean.to_string(), s.lower.to_string(), s.upper.to_string()]).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Assignment of cells to named regions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    pub names: Vec<String>,
    pub of_cell: Vec<usize>,
}

impl RegionMap {
    /// Regions are the distinct labels, sorted.
    pub fn from_labels(labels: &[String]) -> Self {
        let mut names = labels.to_vec();
        names.sort();
        names.dedup();
        let of_cell = labels.iter().map(|l| names.binary_search(l).unwrap()).collect();
        RegionMap { names, of_cell }
    }

    /// Regions listed in `names` (possibly with no cells); every label must be listed.
    pub fn with_names(names: Vec<String>, labels: &[String]) -> Result<Self> {
        let of_cell = labels
            .iter()
            .map(|l| names.iter().position(|n| n == l).ok_or_else(|| Error::Data(format!("cell label {l} is not a listed region"))))
            .collect::<Result<_>>()?;
        Ok(RegionMap { names, of_cell })
    }

    /// Blocks of a square lattice with edge `block` anchored at the lower-left
    /// corner of the cells' bounding box, named `x<col>_y<row>`.
    pub fn coarse(coords: &[Point], block: f64) -> Result<Self> {
        if !(block > 0.0) {
            return Err(Error::Domain(format!("coarse block size must be positive, got {block}")));
        }
        let lo = coords.iter().fold([f64::INFINITY; 2], |a, p| [a[0].min(p[0]), a[1].min(p[1])]);
        let labels: Vec<String> = coords
            .iter()
            .map(|p| format!("x{}_y{}", ((p[0] - lo[0]) / block).floor() as i64, ((p[1] - lo[1]) / block).floor() as i64))
            .collect();
        Ok(Self::from_labels(&labels))
    }
}

/// Per-region sum of each draw, summed in cell order.
pub fn region_draws(values: &CellDraws, regions: &RegionMap) -> Vec<Vec<f64>> {
    assert_eq!(values.n_cells, regions.of_cell.len());
    let mut out = vec![vec![0.0; values.n_draws]; regions.names.len()];
    for d in 0..values.n_draws {
        for (i, &v) in values.draw(d).iter().enumerate() {
            out[regions.of_cell[i]][d] += v;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSummary {
    pub region: String,
    pub n_cells: usize,
    pub empty: bool,
    pub summary: Summary,
}

pub fn aggregate(values: &CellDraws, regions: &RegionMap, percents: &[f64]) -> Vec<RegionSummary> {
    let sums = region_draws(values, regions);
    let mut n_cells = vec![0; regions.names.len()];
    for &r in &regions.of_cell {
        n_cells[r] += 1;
    }
    regions
        .names
        .iter()
        .zip(sums)
        .zip(n_cells)
        .map(|((name, draws), n)| RegionSummary {
            region: name.clone(),
            n_cells: n,
            empty: n == 0,
            summary: if n == 0 {
                Summary { mean: 0.0, sd: 0.0, quantiles: vec![0.0; percents.len()] }
            } else {
                summarize(&draws, percents)
            },
        })
        .collect()
}

/// `region,n_cells,empty,mean,sd,q...`.
pub fn write_region_summary(path: &Path, rows: &[RegionSummary], percents: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["region".to_string(), "n_cells".into(), "empty".into(), "mean".into(), "sd".into()];
    header.extend(percents.iter().map(|&p| percent_label(p)));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        let mut rec =
            vec![r.region.clone(), r.n_cells.to_string(), r.empty.to_string(), r.summary.mean.to_string(), r.summary.sd.to_string()];
        rec.extend(r.summary.quantiles.iter().map(f64::to_string));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
