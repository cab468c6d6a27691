//! Posterior predictive checks, residuals and rootogram tables.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics, Statistics};

use crate::distributions::{logistic, sample_hurdle_lognormal, sample_zinb, thin_count, HurdleLogNormalParams, ThinningSpec, ZinbParams};
use crate::error::{Error, Result};
use crate::inference::{
    count_linear_predictors, size_linear_predictors, CountData, CountParams, ModelSpec, PosteriorDraws, SizeData, SizeParams,
};
use crate::seed::{stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    PositiveMean,
    PositiveSd,
    DispersionIndex,
    Max,
    ZeroFraction,
}

impl Statistic {
    pub const ALL: [Statistic; 5] =
        [Statistic::PositiveMean, Statistic::PositiveSd, Statistic::DispersionIndex, Statistic::Max, Statistic::ZeroFraction];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::PositiveMean => "positive_mean",
            Statistic::PositiveSd => "positive_sd",
            Statistic::DispersionIndex => "dispersion_index",
            Statistic::Max => "max",
            Statistic::ZeroFraction => "zero_fraction",
        }
    }

    /// `None` where the statistic is undefined (no positive values, zero mean).
    pub fn eval(self, y: &[f64]) -> Option<f64> {
        if y.is_empty() {
            return None;
        }
        let positive = || y.iter().copied().filter(|&v| v > 0.0);
        match self {
            Statistic::PositiveMean => (positive().count() > 0).then(|| positive().mean()),
            Statistic::PositiveSd => (positive().count() > 1).then(|| positive().std_dev()),
            Statistic::DispersionIndex => {
                let m = y.mean();
                (y.len() > 1 && m > 0.0).then(|| y.variance() / m)
            }
            Statistic::Max => Some(y.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            Statistic::ZeroFraction => Some(y.iter().filter(|&&v| v == 0.0).count() as f64 / y.len() as f64),
        }
    }
}

/// Observed data of either model.
#[derive(Debug, Clone, Copy)]
pub enum Observed<'a> {
    Count(&'a CountData),
    Size(&'a SizeData),
}

impl Observed<'_> {
    fn values(&self) -> Vec<f64> {
        match self {
            Observed::Count(d) => d.y.iter().map(|&v| v as f64).collect(),
            Observed::Size(d) => d.y.clone(),
        }
    }
}

/// One replicated dataset from draw `row`. Count replicates draw the latent
/// count and thin it with each unit's retention probability.
fn replicate(draws: &PosteriorDraws, row: usize, data: Observed, spec: &ModelSpec, rng: &mut Rng) -> Result<Vec<f64>> {
    match data {
        Observed::Count(d) => {
            let p = CountParams::from_draw(draws, row, &d.districts, spec)?;
            let (eta, log_mu) = count_linear_predictors(&p, d);
            Ok((0..d.len())
                .map(|i| {
                    let pi = d.offset[i].exp();
                    let latent = ZinbParams { p: logistic(eta[i]), mu: (log_mu[i] - d.offset[i]).exp(), phi: p.phi };
                    let y = sample_zinb(&latent, rng);
                    thin_count(y, &ThinningSpec { pi: pi.min(1.0) }, rng) as f64
                })
                .collect())
        }
        Observed::Size(d) => {
            let p = SizeParams::from_draw(draws, row, &d.districts, spec)?;
            let (eta, mu) = size_linear_predictors(&p, d);
            let sigma = p.sigma2_size.sqrt();
            Ok((0..d.len())
                .map(|i| sample_hurdle_lognormal(&HurdleLogNormalParams { p: logistic(eta[i]), mu: mu[i], sigma }, rng))
                .collect())
        }
    }
}

/// Draw rows used for `replicates` replicated datasets, evenly spaced.
fn replicate_rows(n_draws: usize, replicates: usize) -> Result<Vec<usize>> {
    if replicates == 0 || replicates > n_draws {
        return Err(Error::Config(format!("replicates must be in 1..={n_draws}, got {replicates}")));
    }
    Ok((0..replicates).map(|k| k * n_draws / replicates).collect())
}

fn replicates(draws: &PosteriorDraws, data: Observed, spec: &ModelSpec, replicates: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    replicate_rows(draws.n_draws(), replicates)?
        .into_par_iter()
        .enumerate()
        .map(|(k, row)| replicate(draws, row, data, spec, &mut stream(seed, "ppp", k as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PppEntry {
    pub observed: Option<f64>,
    /// `P(T(y_rep) > T(y))` with ties counted as half; `None` when the
    /// observed statistic is undefined.
    pub p_value: Option<f64>,
    pub used: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PppReport {
    pub model: String,
    pub replicates: usize,
    pub seed: u64,
    pub statistics: BTreeMap<String, PppEntry>,
}

impl PppReport {
    pub fn p_value(&self, s: Statistic) -> Option<f64> {
        self.statistics.get(s.name()).and_then(|e| e.p_value)
    }
}

/// Tail probability of `observed` among replicate values, ties counted 0.5.
pub fn tail_probability(observed: f64, replicated: &[f64]) -> f64 {
    let score: f64 = replicated
        .iter()
        .map(|&r| {
            if r > observed {
                1.0
            } else if r == observed {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    score / replicated.len() as f64
}

pub fn ppp(
    draws: &PosteriorDraws,
    data: Observed,
    spec: &ModelSpec,
    statistics: &[Statistic],
    n_replicates: usize,
    seed: u64,
) -> Result<PppReport> {
    let reps = replicates(draws, data, spec, n_replicates, seed)?;
    let y = data.values();
    let mut out = BTreeMap::new();
    for &s in statistics {
        let observed = s.eval(&y);
        let values: Vec<f64> = reps.iter().filter_map(|r| s.eval(r)).collect();
        let skipped = reps.len() - values.len();
        if skipped > 0 {
            log::warn!("{}: statistic undefined on {skipped} replicates", s.name());
        }
        out.insert(
            s.name().to_string(),
            PppEntry {
                observed,
                p_value: observed.filter(|_| !values.is_empty()).map(|o| tail_probability(o, &values)),
                used: values.len(),
                skipped,
            },
        );
    }
    Ok(PppReport {
        model: match data {
            Observed::Count(_) => "count".into(),
            Observed::Size(_) => "size".into(),
        },
        replicates: n_replicates,
        seed,
        statistics: out,
    })
}

/// Posterior mean of the expected observed count per unit (thinning included).
pub fn count_fitted(draws: &PosteriorDraws, data: &CountData, spec: &ModelSpec) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; data.len()];
    for r in 0..draws.n_draws() {
        let p = CountParams::from_draw(draws, r, &data.districts, spec)?;
        let (eta, log_mu) = count_linear_predictors(&p, data);
        for i in 0..data.len() {
            acc[i] += (1.0 - logistic(eta[i])) * log_mu[i].exp();
        }
    }
    let n = draws.n_draws() as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// Observed count minus posterior-mean prediction, per unit.
pub fn count_residuals(draws: &PosteriorDraws, data: &CountData, spec: &ModelSpec) -> Result<Vec<f64>> {
    Ok(count_fitted(draws, data, spec)?.iter().zip(&data.y).map(|(f, &y)| y as f64 - f).collect())
}

/// Posterior mean of the hurdle log-normal mean per mark.
pub fn size_fitted(draws: &PosteriorDraws, data: &SizeData, spec: &ModelSpec) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; data.len()];
    for r in 0..draws.n_draws() {
        let p = SizeParams::from_draw(draws, r, &data.districts, spec)?;
        let (eta, mu) = size_linear_predictors(&p, data);
        for i in 0..data.len() {
            acc[i] += (1.0 - logistic(eta[i])) * (mu[i] + 0.5 * p.sigma2_size).exp();
        }
    }
    let n = draws.n_draws() as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// Mean observed mark minus mean fitted mark per cell, over cells holding at
/// least one mark. `cell_of_mark` gives each mark's cell key; marks with
/// `None` are ignored. Returned sorted by cell key.
pub fn size_residuals(draws: &PosteriorDraws, data: &SizeData, spec: &ModelSpec, cell_of_mark: &[Option<u64>]) -> Result<Vec<(u64, f64)>> {
    if cell_of_mark.len() != data.len() {
        return Err(Error::Data(format!("{} cell keys for {} marks", cell_of_mark.len(), data.len())));
    }
    let fitted = size_fitted(draws, data, spec)?;
    let mut by_cell: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for (i, c) in cell_of_mark.iter().enumerate() {
        if let Some(c) = c {
            let e = by_cell.entry(*c).or_default();
            e.0 += data.y[i];
            e.1 += fitted[i];
            e.2 += 1;
        }
    }
    Ok(by_cell.into_iter().map(|(c, (y, f, n))| (c, (y - f) / n as f64)).collect())
}

/// Pearson correlation; NaN when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return f64::NAN;
    }
    let cov = a.iter().copied().covariance(b.iter().copied());
    let (sa, sb) = (a.std_dev(), b.std_dev());
    if sa == 0.0 || sb == 0.0 {
        return f64::NAN;
    }
    cov / (sa * sb)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootogramRow {
    pub count: u64,
    /// Last row collects every count ≥ `count`.
    pub tail: bool,
    pub sqrt_observed: f64,
    pub sqrt_expected: f64,
    pub sqrt_lower: f64,
    pub sqrt_upper: f64,
}

fn frequencies(y: &[f64], max_count: u64) -> Vec<f64> {
    let mut f = vec![0.0; max_count as usize + 1];
    for &v in y {
        f[(v as u64).min(max_count) as usize] += 1.0;
    }
    f
}

/// Square-root observed and replicate-averaged expected frequencies of the
/// counts `0..=max_count`, the last bin holding the upper tail.
pub fn rootogram_data(
    draws: &PosteriorDraws,
    data: &CountData,
    spec: &ModelSpec,
    max_count: u64,
    n_replicates: usize,
    seed: u64,
) -> Result<Vec<RootogramRow>> {
    if data.is_empty() {
        return Ok(Vec::new());
    }
    let obs = frequencies(&data.y.iter().map(|&v| v as f64).collect::<Vec<_>>(), max_count);
    let reps: Vec<Vec<f64>> =
        replicates(draws, Observed::Count(data), spec, n_replicates, seed)?.iter().map(|r| frequencies(r, max_count)).collect();
    Ok((0..=max_count as usize)
        .map(|k| {
            let col: Vec<f64> = reps.iter().map(|r| r[k]).collect();
            let mut q = Data::new(col.clone());
            RootogramRow {
                count: k as u64,
                tail: k == max_count as usize,
                sqrt_observed: obs[k].sqrt(),
                sqrt_expected: col.iter().mean().sqrt(),
                sqrt_lower: q.quantile(0.025).sqrt(),
                sqrt_upper: q.quantile(0.975).sqrt(),
            }
        })
        .collect())
}

pub fn write_rootogram(path: &Path, rows: &[RootogramRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    if rows.is_empty() {
        w.write_record(["count", "tail", "sqrt_observed", "sqrt_expected", "sqrt_lower", "sqrt_upper"]).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
