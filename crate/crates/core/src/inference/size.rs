//! Hurdle log-normal model for marks.

use super::draws::PosteriorDraws;
use super::sampler::{self, Block, BlockKind, Target};
use super::spec::{ModelSpec, Priors, SamplerConfig};
use super::{district_index, normal_log_pdf, DesignMatrix};
use crate::data::MarkTable;
use crate::distributions::{hurdle_lognormal_logpdf_unchecked, softplus};
use crate::error::{Error, Result};

/// Marks with their design matrices, ready for the likelihood.
#[derive(Debug, Clone)]
pub struct SizeData {
    pub y: Vec<f64>,
    pub x_p: DesignMatrix,
    pub x_mu: DesignMatrix,
    /// District index of each mark into `districts`.
    pub district: Vec<usize>,
    pub districts: Vec<String>,
    by_district: Vec<Vec<usize>>,
    log_y: Vec<f64>,
}

impl SizeData {
    /// Covariates must already be standardized.
    pub fn new(marks: &MarkTable, spec: &ModelSpec) -> Result<Self> {
        if marks.is_empty() {
            return Err(Error::Data("no marks to fit".into()));
        }
        if let Some(i) = marks.values.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Data(format!("mark {i} has invalid value {}", marks.values[i])));
        }
        let x_p = DesignMatrix::from_covariates(&marks.covariates, &spec.size_p, marks.len(), "mark")?;
        let x_mu = DesignMatrix::from_covariates(&marks.covariates, &spec.size_mu, marks.len(), "mark")?;
        let (districts, district, by_district) = district_index(&marks.districts);
        Ok(SizeData {
            log_y: marks.values.iter().map(|&v| if v > 0.0 { v.ln() } else { 0.0 }).collect(),
            y: marks.values.clone(),
            x_p,
            x_mu,
            district,
            districts,
            by_district,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Size-model parameters on their natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeParams {
    pub alpha0: f64,
    pub alpha1: Vec<f64>,
    pub beta0: f64,
    pub beta1: Vec<f64>,
    pub sigma2_size: f64,
    /// One entry per district of the data, or empty without district effects.
    pub gamma_p: Vec<f64>,
    pub gamma_mu: Vec<f64>,
    pub sigma2_district_p: f64,
    pub sigma2_district_mu: f64,
}

impl SizeParams {
    pub fn zeros(data: &SizeData, effects: bool) -> Self {
        let d = if effects { data.districts.len() } else { 0 };
        SizeParams {
            alpha0: 0.0,
            alpha1: vec![0.0; data.x_p.cols],
            beta0: 0.0,
            beta1: vec![0.0; data.x_mu.cols],
            sigma2_size: 1.0,
            gamma_p: vec![0.0; d],
            gamma_mu: vec![0.0; d],
            sigma2_district_p: 1.0,
            sigma2_district_mu: 1.0,
        }
    }

    fn gamma(v: &[f64], d: usize) -> f64 {
        v.get(d).copied().unwrap_or(0.0)
    }

    /// Read draw `row` using the names written by the sampler.
    pub fn from_draw(draws: &PosteriorDraws, row: usize, districts: &[String], spec: &ModelSpec) -> Result<Self> {
        let r = draws.row(row);
        let get = |name: String| -> Result<f64> {
            draws.index(&name).map(|i| r[i]).ok_or_else(|| Error::Data(format!("draws lack parameter {name}")))
        };
        let effects = draws.index("sigma2_district_size_p").is_some();
        let gammas = |part: &str| -> Result<Vec<f64>> {
            if !effects {
                return Ok(Vec::new());
            }
            districts.iter().map(|d| get(format!("gamma_size_{part}[{d}]"))).collect()
        };
        Ok(SizeParams {
            alpha0: get("alpha0_size".into())?,
            alpha1: spec.size_p.iter().map(|n| get(format!("alpha1_size[{n}]"))).collect::<Result<_>>()?,
            beta0: get("beta0_size".into())?,
            beta1: spec.size_mu.iter().map(|n| get(format!("beta1_size[{n}]"))).collect::<Result<_>>()?,
            sigma2_size: get("sigma2_size".into())?,
            gamma_p: gammas("p")?,
            gamma_mu: gammas("mu")?,
            sigma2_district_p: if effects { get("sigma2_district_size_p".into())? } else { 0.0 },
            sigma2_district_mu: if effects { get("sigma2_district_size_mu".into())? } else { 0.0 },
        })
    }
}

/// Per-mark `(logit p, μ)`, with `μ` the mean of the log mark.
pub fn size_linear_predictors(params: &SizeParams, data: &SizeData) -> (Vec<f64>, Vec<f64>) {
    (0..data.len())
        .map(|i| {
            let d = data.district[i];
            (
                params.alpha0 + data.x_p.dot(i, &params.alpha1) + SizeParams::gamma(&params.gamma_p, d),
                params.beta0 + data.x_mu.dot(i, &params.beta1) + SizeParams::gamma(&params.gamma_mu, d),
            )
        })
        .unzip()
}

/// Log-likelihood contribution of each mark.
pub fn size_pointwise(params: &SizeParams, data: &SizeData) -> Vec<f64> {
    let sigma = params.sigma2_size.sqrt();
    let (eta_p, mu) = size_linear_predictors(params, data);
    (0..data.len()).map(|i| hurdle_lognormal_logpdf_unchecked(-softplus(-eta_p[i]), -softplus(eta_p[i]), mu[i], sigma, data.y[i])).collect()
}

pub fn size_loglik(params: &SizeParams, data: &SizeData) -> f64 {
    size_pointwise(params, data).iter().sum()
}

/// Log prior on the natural scale (no Jacobian terms).
pub fn size_log_prior(params: &SizeParams, priors: &Priors) -> f64 {
    let mut lp = priors.intercept_p(params.alpha0) + priors.intercept_mu(params.beta0);
    lp += params.alpha1.iter().chain(&params.beta1).map(|&b| priors.flat(b)).sum::<f64>();
    lp += priors.sigma_size(params.sigma2_size.sqrt());
    if !params.gamma_p.is_empty() {
        let (sp, smu) = (params.sigma2_district_p.sqrt(), params.sigma2_district_mu.sqrt());
        lp += priors.random_scale(sp) + priors.random_scale(smu);
        lp += params.gamma_p.iter().map(|&g| normal_log_pdf(g, sp)).sum::<f64>();
        lp += params.gamma_mu.iter().map(|&g| normal_log_pdf(g, smu)).sum::<f64>();
    }
    lp
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum SizeTag {
    FixedP,
    FixedMu,
    DistrictP(usize),
    DistrictMu(usize),
    Prior,
}

/// Sampler view of the size model on the unconstrained scale:
/// `[α0, α1.., β0, β1.., log σ, (γp.., γμ.., log sp, log sμ)]`.
pub(crate) struct SizeModel<'a> {
    data: &'a SizeData,
    priors: Priors,
    effects: bool,
    kp: usize,
    kmu: usize,
    n_districts: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SizeCache {
    /// Covariate parts of the linear predictors, intercepts excluded so that
    /// shift moves leave the cache valid.
    xa: Vec<f64>,
    xb: Vec<f64>,
    llp: Vec<f64>,
    llmu: Vec<f64>,
    sum_p: Vec<f64>,
    sum_mu: Vec<f64>,
}

impl<'a> SizeModel<'a> {
    pub(crate) fn new(data: &'a SizeData, spec: &ModelSpec) -> Result<Self> {
        let effects = spec.district_effects && data.districts.len() >= 2;
        if spec.district_effects && !effects {
            log::warn!("size model: a single district, district effects disabled");
        }
        Ok(SizeModel {
            data,
            priors: Priors::new(spec.priors)?,
            effects,
            kp: data.x_p.cols,
            kmu: data.x_mu.cols,
            n_districts: data.districts.len(),
        })
    }

    fn b0(&self) -> usize {
        1 + self.kp
    }
    fn log_sigma(&self) -> usize {
        self.b0() + 1 + self.kmu
    }
    fn gp(&self, d: usize) -> usize {
        self.log_sigma() + 1 + d
    }
    fn gmu(&self, d: usize) -> usize {
        self.log_sigma() + 1 + self.n_districts + d
    }
    fn log_sp(&self) -> usize {
        self.log_sigma() + 1 + 2 * self.n_districts
    }
    fn dim(&self) -> usize {
        if self.effects {
            self.log_sp() + 2
        } else {
            self.log_sigma() + 1
        }
    }

    pub(crate) fn unpack(&self, theta: &[f64]) -> SizeParams {
        let (gp, gmu, sp, smu) = if self.effects {
            (
                (0..self.n_districts).map(|d| theta[self.gp(d)]).collect(),
                (0..self.n_districts).map(|d| theta[self.gmu(d)]).collect(),
                (2.0 * theta[self.log_sp()]).exp(),
                (2.0 * theta[self.log_sp() + 1]).exp(),
            )
        } else {
            (Vec::new(), Vec::new(), 0.0, 0.0)
        };
        SizeParams {
            alpha0: theta[0],
            alpha1: theta[1..self.b0()].to_vec(),
            beta0: theta[self.b0()],
            beta1: theta[self.b0() + 1..self.log_sigma()].to_vec(),
            sigma2_size: (2.0 * theta[self.log_sigma()]).exp(),
            gamma_p: gp,
            gamma_mu: gmu,
            sigma2_district_p: sp,
            sigma2_district_mu: smu,
        }
    }

    fn gamma_p(&self, theta: &[f64], d: usize) -> f64 {
        if self.effects {
            theta[self.gp(d)]
        } else {
            0.0
        }
    }

    fn gamma_mu(&self, theta: &[f64], d: usize) -> f64 {
        if self.effects {
            theta[self.gmu(d)]
        } else {
            0.0
        }
    }

    fn llp_unit(&self, i: usize, eta: f64) -> f64 {
        if self.data.y[i] == 0.0 {
            -softplus(-eta)
        } else {
            -softplus(eta)
        }
    }

    fn llmu_unit(&self, i: usize, mu: f64, log_sigma: f64) -> f64 {
        if self.data.y[i] == 0.0 {
            return 0.0;
        }
        let ly = self.data.log_y[i];
        let z = (ly - mu) * (-log_sigma).exp();
        -ly - log_sigma - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * z * z
    }

    fn fill_p(&self, theta: &[f64], units: &[usize], c: &mut SizeCache) {
        for &i in units {
            let eta = theta[0] + c.xa[i] + self.gamma_p(theta, self.data.district[i]);
            c.llp[i] = self.llp_unit(i, eta);
        }
    }

    fn fill_mu(&self, theta: &[f64], units: &[usize], c: &mut SizeCache) {
        let ls = theta[self.log_sigma()];
        for &i in units {
            let mu = theta[self.b0()] + c.xb[i] + self.gamma_mu(theta, self.data.district[i]);
            c.llmu[i] = self.llmu_unit(i, mu, ls);
        }
    }

    fn group_sums(&self, values: &[f64], sums: &mut [f64], groups: impl Iterator<Item = usize>) {
        for d in groups {
            sums[d] = self.data.by_district[d].iter().map(|&i| values[i]).sum();
        }
    }

    fn all_units(&self) -> Vec<usize> {
        (0..self.data.len()).collect()
    }
}

impl Target for SizeModel<'_> {
    type Tag = SizeTag;
    type Cache = SizeCache;

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["alpha0".to_string()];
        names.extend(self.data.x_p.names.iter().map(|n| format!("alpha1[{n}]")));
        names.push("beta0".into());
        names.extend(self.data.x_mu.names.iter().map(|n| format!("beta1[{n}]")));
        names.push("log_sigma".into());
        if self.effects {
            names.extend(self.data.districts.iter().map(|d| format!("gamma_p[{d}]")));
            names.extend(self.data.districts.iter().map(|d| format!("gamma_mu[{d}]")));
            names.push("log_sd_district_p".into());
            names.push("log_sd_district_mu".into());
        }
        names
    }

    fn blocks(&self) -> Vec<Block<SizeTag>> {
        let mut blocks = vec![
            Block { name: "size_p".into(), indices: (0..self.b0()).collect(), kind: BlockKind::Likelihood, tag: SizeTag::FixedP },
            Block {
                name: "size_mu".into(),
                indices: (self.b0()..=self.log_sigma()).collect(),
                kind: BlockKind::Likelihood,
                tag: SizeTag::FixedMu,
            },
        ];
        if self.effects {
            for (d, name) in self.data.districts.iter().enumerate() {
                blocks.push(Block {
                    name: format!("gamma_p[{name}]"),
                    indices: vec![self.gp(d)],
                    kind: BlockKind::Likelihood,
                    tag: SizeTag::DistrictP(d),
                });
                blocks.push(Block {
                    name: format!("gamma_mu[{name}]"),
                    indices: vec![self.gmu(d)],
                    kind: BlockKind::Likelihood,
                    tag: SizeTag::DistrictMu(d),
                });
            }
            let nd = self.n_districts;
            let shift = |name: &str, intercept: usize, first: usize| Block {
                name: name.into(),
                indices: std::iter::once(intercept).chain(first..first + nd).collect(),
                kind: BlockKind::Shift(std::iter::once(1.0).chain(std::iter::repeat_n(-1.0, nd)).collect()),
                tag: SizeTag::Prior,
            };
            blocks.push(shift("shift_p", 0, self.gp(0)));
            blocks.push(shift("shift_mu", self.b0(), self.gmu(0)));
            for (k, name) in ["sd_district_p", "sd_district_mu"].iter().enumerate() {
                blocks.push(Block {
                    name: (*name).into(),
                    indices: vec![self.log_sp() + k],
                    kind: BlockKind::PriorOnly,
                    tag: SizeTag::Prior,
                });
            }
        }
        blocks
    }

    fn initial(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn cache(&self, theta: &[f64]) -> SizeCache {
        let n = self.data.len();
        let p = self.unpack(theta);
        let mut c = SizeCache {
            xa: (0..n).map(|i| self.data.x_p.dot(i, &p.alpha1)).collect(),
            xb: (0..n).map(|i| self.data.x_mu.dot(i, &p.beta1)).collect(),
            llp: vec![0.0; n],
            llmu: vec![0.0; n],
            sum_p: vec![0.0; self.n_districts],
            sum_mu: vec![0.0; self.n_districts],
        };
        let all = self.all_units();
        self.fill_p(theta, &all, &mut c);
        self.fill_mu(theta, &all, &mut c);
        self.group_sums(&c.llp, &mut c.sum_p, 0..self.n_districts);
        self.group_sums(&c.llmu, &mut c.sum_mu, 0..self.n_districts);
        c
    }

    fn loglik(&self, c: &SizeCache) -> f64 {
        c.sum_p.iter().sum::<f64>() + c.sum_mu.iter().sum::<f64>()
    }

    fn propose(&self, block: &Block<SizeTag>, theta: &[f64], _: &SizeCache, s: &mut SizeCache) -> f64 {
        match block.tag {
            SizeTag::FixedP => {
                for i in 0..self.data.len() {
                    s.xa[i] = self.data.x_p.dot(i, &theta[1..self.b0()]);
                }
                self.fill_p(theta, &self.all_units(), s);
                let mut sums = std::mem::take(&mut s.sum_p);
                self.group_sums(&s.llp, &mut sums, 0..self.n_districts);
                s.sum_p = sums;
            }
            SizeTag::FixedMu => {
                for i in 0..self.data.len() {
                    s.xb[i] = self.data.x_mu.dot(i, &theta[self.b0() + 1..self.log_sigma()]);
                }
                self.fill_mu(theta, &self.all_units(), s);
                let mut sums = std::mem::take(&mut s.sum_mu);
                self.group_sums(&s.llmu, &mut sums, 0..self.n_districts);
                s.sum_mu = sums;
            }
            SizeTag::DistrictP(d) => {
                self.fill_p(theta, &self.data.by_district[d], s);
                let mut sums = std::mem::take(&mut s.sum_p);
                self.group_sums(&s.llp, &mut sums, std::iter::once(d));
                s.sum_p = sums;
            }
            SizeTag::DistrictMu(d) => {
                self.fill_mu(theta, &self.data.by_district[d], s);
                let mut sums = std::mem::take(&mut s.sum_mu);
                self.group_sums(&s.llmu, &mut sums, std::iter::once(d));
                s.sum_mu = sums;
            }
            SizeTag::Prior => {}
        }
        self.loglik(s)
    }

    fn sync(&self, block: &Block<SizeTag>, from: &SizeCache, to: &mut SizeCache) {
        match block.tag {
            SizeTag::FixedP => {
                to.xa.copy_from_slice(&from.xa);
                to.llp.copy_from_slice(&from.llp);
                to.sum_p.copy_from_slice(&from.sum_p);
            }
            SizeTag::FixedMu => {
                to.xb.copy_from_slice(&from.xb);
                to.llmu.copy_from_slice(&from.llmu);
                to.sum_mu.copy_from_slice(&from.sum_mu);
            }
            SizeTag::DistrictP(d) => {
                for &i in &self.data.by_district[d] {
                    to.llp[i] = from.llp[i];
                }
                to.sum_p[d] = from.sum_p[d];
            }
            SizeTag::DistrictMu(d) => {
                for &i in &self.data.by_district[d] {
                    to.llmu[i] = from.llmu[i];
                }
                to.sum_mu[d] = from.sum_mu[d];
            }
            SizeTag::Prior => {}
        }
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let mut lp = size_log_prior(&self.unpack(theta), &self.priors);
        lp += self.priors.scale_jacobian(theta[self.log_sigma()]);
        if self.effects {
            lp += self.priors.scale_jacobian(theta[self.log_sp()]) + self.priors.scale_jacobian(theta[self.log_sp() + 1]);
        }
        lp
    }

    fn output_names(&self) -> Vec<String> {
        let mut names = vec!["alpha0_size".to_string()];
        names.extend(self.data.x_p.names.iter().map(|n| format!("alpha1_size[{n}]")));
        names.push("beta0_size".into());
        names.extend(self.data.x_mu.names.iter().map(|n| format!("beta1_size[{n}]")));
        names.push("sigma2_size".into());
        if self.effects {
            names.extend(self.data.districts.iter().map(|d| format!("gamma_size_p[{d}]")));
            names.extend(self.data.districts.iter().map(|d| format!("gamma_size_mu[{d}]")));
            names.push("sigma2_district_size_p".into());
            names.push("sigma2_district_size_mu".into());
        }
        names
    }

    fn output(&self, theta: &[f64], out: &mut [f64]) {
        out.copy_from_slice(theta);
        out[self.log_sigma()] = (2.0 * theta[self.log_sigma()]).exp();
        if self.effects {
            for k in 0..2 {
                out[self.log_sp() + k] = (2.0 * theta[self.log_sp() + k]).exp();
            }
        }
    }
}

/// Sample the size-model posterior.
pub fn fit_size(data: &SizeData, spec: &ModelSpec, config: &SamplerConfig) -> Result<PosteriorDraws> {
    spec.validate()?;
    let model = SizeModel::new(data, spec)?;
    let chains = sampler::run(&model, config)?;
    Ok(PosteriorDraws::from_chains(
        model.output_names(),
        chains.into_iter().map(|c| (c.draws, c.stats)).collect(),
        config.iterations,
        config.warmup,
        config.seed,
    ))
}

/// Draw × mark log-likelihood matrix, row-major.
pub fn size_pointwise_loglik(draws: &PosteriorDraws, data: &SizeData, spec: &ModelSpec) -> Result<Vec<Vec<f64>>> {
    (0..draws.n_draws()).map(|r| SizeParams::from_draw(draws, r, &data.districts, spec).map(|p| size_pointwise(&p, data))).collect()
}
