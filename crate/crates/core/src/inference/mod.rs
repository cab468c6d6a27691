//! Bayesian fitting of the mark-size and thinned-count models.

mod count;
mod draws;
pub(crate) mod sampler;
mod size;
mod spec;

pub use count::{
    count_linear_predictors, count_log_prior, count_loglik, count_pointwise, count_pointwise_loglik, fit_count, CountData, CountFit,
    CountParams, GpFrame, GpParams,
};
pub use draws::{effective_sample_size, split_rhat, BlockAcceptance, ParameterSummary, PosteriorDraws, SamplerDiagnostics};
pub use sampler::BlockStats;
pub use size::{
    fit_size, size_linear_predictors, size_log_prior, size_loglik, size_pointwise, size_pointwise_loglik, SizeData, SizeParams,
};
pub use spec::{GpSpec, ModelSpec, PriorConfig, Priors, RandomScalePrior, SamplerConfig, ScalePriorOn};

use crate::data::Covariates;
use crate::error::{Error, Result};

/// Dense row-major design matrix without an intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl DesignMatrix {
    /// Columns `names` of `cov` over `rows` units; every entry must be finite.
    pub fn from_covariates(cov: &Covariates, names: &[String], rows: usize, unit: &str) -> Result<Self> {
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            let col = cov.column(name).ok_or_else(|| Error::Data(format!("covariate `{name}` is not available for each {unit}")))?;
            if col.len() != rows {
                return Err(Error::Data(format!("covariate `{name}` has {} values for {rows} units", col.len())));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!("covariate `{name}` is not finite for {unit} {i}")));
            }
            cols.push(col);
        }
        let mut values = Vec::with_capacity(rows * names.len());
        for i in 0..rows {
            values.extend(cols.iter().map(|c| c[i]));
        }
        Ok(DesignMatrix { names: names.to_vec(), rows, cols: names.len(), values })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn dot(&self, i: usize, coef: &[f64]) -> f64 {
        self.row(i).iter().zip(coef).map(|(x, b)| x * b).sum()
    }

    /// Rows selected by `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        DesignMatrix { names: self.names.clone(), rows: idx.len(), cols: self.cols, values }
    }
}

/// Sorted distinct labels, each unit's index into them, and units per label.
pub(crate) fn district_index(labels: &[String]) -> (Vec<String>, Vec<usize>, Vec<Vec<usize>>) {
    let mut names: Vec<String> = labels.to_vec();
    names.sort();
    names.dedup();
    let idx: Vec<usize> = labels.iter().map(|l| names.binary_search(l).unwrap()).collect();
    let mut by = vec![Vec::new(); names.len()];
    for (i, &d) in idx.iter().enumerate() {
        by[d].push(i);
    }
    (names, idx, by)
}

/// `N(x | 0, sd²)` log-density; a zero sd is a point mass at 0.
pub(crate) fn normal_log_pdf(x: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return if x == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let z = x / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}
