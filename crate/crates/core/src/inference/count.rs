//! Zero-inflated negative binomial model for thinned cell counts.
//!
//! The sampling probability of a district enters as an offset `log π` on the
//! NB log-mean. The optional spatial field is added to the zero-inflation
//! predictor only.

use serde::{Deserialize, Serialize};

use super::draws::PosteriorDraws;
use super::sampler::{self, Block, BlockKind, Target};
use super::spec::{GpSpec, ModelSpec, Priors, SamplerConfig};
use super::{district_index, normal_log_pdf, DesignMatrix};
use crate::data::{CellTable, DistrictInfo};
use crate::distributions::{ln_nb_coefficient, log_add_exp, nb_log_pmf_from_log_mu, softplus, zinb_log_pmf_logit};
use crate::error::{Error, Result};
use crate::gp::{BasisBox, HsgpBasis};
use crate::optim::nelder_mead;
use crate::spatial::geo::bbox;
use crate::spatial::Point;

/// Coordinate frame of the spatial basis: sites are centred and divided by
/// the diagonal of the fitted cells' bounding box before the basis is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpFrame {
    pub center: Point,
    pub scale: f64,
    pub basis_box: BasisBox,
    pub spec: GpSpec,
}

impl GpFrame {
    pub fn from_sites(sites: &[Point], spec: GpSpec) -> Result<Self> {
        let (lo, hi) = bbox(sites.iter().copied()).ok_or_else(|| Error::Data("no finite cell coordinates".into()))?;
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let scale = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt().max(1e-12);
        let scaled: Vec<Point> = sites.iter().map(|p| [(p[0] - center[0]) / scale, (p[1] - center[1]) / scale]).collect();
        Ok(GpFrame { center, scale, basis_box: BasisBox::enclosing(&scaled)?, spec })
    }

    pub fn basis(&self, sites: &[Point]) -> Result<HsgpBasis> {
        let scaled: Vec<Point> =
            sites.iter().map(|p| [(p[0] - self.center[0]) / self.scale, (p[1] - self.center[1]) / self.scale]).collect();
        HsgpBasis::new(&scaled, self.basis_box, self.spec.num_basis, self.spec.boundary_factor, self.spec.layout)
    }

    pub fn num_features(&self) -> usize {
        match self.spec.layout {
            crate::gp::BasisLayout::TensorProduct => self.spec.num_basis * self.spec.num_basis,
            crate::gp::BasisLayout::Total => self.spec.num_basis,
        }
    }
}

/// Modeled cells with design matrices and offsets.
#[derive(Debug, Clone)]
pub struct CountData {
    pub y: Vec<u64>,
    pub x_p: DesignMatrix,
    pub x_mu: DesignMatrix,
    /// `log π` of each unit's district.
    pub offset: Vec<f64>,
    pub district: Vec<usize>,
    pub districts: Vec<String>,
    /// Row of each unit in the source cell table.
    pub cell_rows: Vec<usize>,
    pub gp: Option<(GpFrame, HsgpBasis)>,
    by_district: Vec<Vec<usize>>,
    yf: Vec<f64>,
}

impl CountData {
    /// Cells with an observed count in a district with known `π > 0` become
    /// units. The spatial frame, when requested, spans every cell of `cells`.
    /// Covariates must already be standardized.
    pub fn new(cells: &CellTable, info: &DistrictInfo, spec: &ModelSpec) -> Result<Self> {
        let mut rows = Vec::new();
        let mut offset = Vec::new();
        for i in 0..cells.len() {
            let (Some(y), Some(pi)) = (cells.counts[i], info.pi(&cells.districts[i])) else {
                continue;
            };
            if pi == 0.0 {
                if y > 0 {
                    return Err(Error::Data(format!(
                        "cell {} in district {} has count {y} but the district's sampling probability is 0",
                        cells.ids[i], cells.districts[i]
                    )));
                }
                continue;
            }
            rows.push(i);
            offset.push(pi.ln());
        }
        if rows.is_empty() {
            return Err(Error::Data("no cell has both an observed count and a known sampling probability".into()));
        }
        let full_p = DesignMatrix::from_covariates(&cells.covariates, &spec.count_p, cells.len(), "cell")?;
        let full_mu = DesignMatrix::from_covariates(&cells.covariates, &spec.count_mu, cells.len(), "cell")?;
        let labels: Vec<String> = rows.iter().map(|&i| cells.districts[i].clone()).collect();
        let (districts, district, by_district) = district_index(&labels);
        let gp = match spec.gp {
            Some(g) => {
                let frame = GpFrame::from_sites(&cells.coords, g)?;
                let unit_sites: Vec<Point> = rows.iter().map(|&i| cells.coords[i]).collect();
                let basis = frame.basis(&unit_sites)?;
                Some((frame, basis))
            }
            None => None,
        };
        let y: Vec<u64> = rows.iter().map(|&i| cells.counts[i].unwrap()).collect();
        Ok(CountData {
            yf: y.iter().map(|&v| v as f64).collect(),
            y,
            x_p: full_p.select(&rows),
            x_mu: full_mu.select(&rows),
            offset,
            district,
            districts,
            cell_rows: rows,
            gp,
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

#[derive(Debug, Clone, PartialEq)]
pub struct GpParams {
    pub sigma2_gp: f64,
    pub l_scale: f64,
    pub z: Vec<f64>,
}

/// Count-model parameters on their natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CountParams {
    pub alpha0: f64,
    pub alpha1: Vec<f64>,
    pub beta0: f64,
    pub beta1: Vec<f64>,
    pub phi: f64,
    pub gamma_p: Vec<f64>,
    pub gamma_mu: Vec<f64>,
    pub sigma2_district_p: f64,
    pub sigma2_district_mu: f64,
    pub gp: Option<GpParams>,
}

impl CountParams {
    pub fn zeros(data: &CountData, effects: bool) -> Self {
        let d = if effects { data.districts.len() } else { 0 };
        CountParams {
            alpha0: 0.0,
            alpha1: vec![0.0; data.x_p.cols],
            beta0: 0.0,
            beta1: vec![0.0; data.x_mu.cols],
            phi: 1.0,
            gamma_p: vec![0.0; d],
            gamma_mu: vec![0.0; d],
            sigma2_district_p: 1.0,
            sigma2_district_mu: 1.0,
            gp: data.gp.as_ref().map(|(_, b)| GpParams { sigma2_gp: 1.0, l_scale: 1.0, z: vec![0.0; b.len()] }),
        }
    }

    /// Read draw `row` using the names written by the sampler.
    pub fn from_draw(draws: &PosteriorDraws, row: usize, districts: &[String], spec: &ModelSpec) -> Result<Self> {
        let r = draws.row(row);
        let get = |name: String| -> Result<f64> {
            draws.index(&name).map(|i| r[i]).ok_or_else(|| Error::Data(format!("draws lack parameter {name}")))
        };
        let effects = draws.index("sigma2_district_count_p").is_some();
        let gammas = |part: &str| -> Result<Vec<f64>> {
            if !effects {
                return Ok(Vec::new());
            }
            districts.iter().map(|d| get(format!("gamma_count_{part}[{d}]"))).collect()
        };
        let gp = match draws.index("sigma2_gp") {
            Some(_) => {
                let m = draws.names.iter().filter(|n| n.starts_with("z_gp[")).count();
                Some(GpParams {
                    sigma2_gp: get("sigma2_gp".into())?,
                    l_scale: get("l_scale".into())?,
                    z: (0..m).map(|k| get(format!("z_gp[{k}]"))).collect::<Result<_>>()?,
                })
            }
            None => None,
        };
        Ok(CountParams {
            alpha0: get("alpha0_count".into())?,
            alpha1: spec.count_p.iter().map(|n| get(format!("alpha1_count[{n}]"))).collect::<Result<_>>()?,
            beta0: get("beta0_count".into())?,
            beta1: spec.count_mu.iter().map(|n| get(format!("beta1_count[{n}]"))).collect::<Result<_>>()?,
            phi: get("phi".into())?,
            gamma_p: gammas("p")?,
            gamma_mu: gammas("mu")?,
            sigma2_district_p: if effects { get("sigma2_district_count_p".into())? } else { 0.0 },
            sigma2_district_mu: if effects { get("sigma2_district_count_mu".into())? } else { 0.0 },
            gp,
        })
    }
}

fn gp_field(data: &CountData, gp: &Option<GpParams>) -> Vec<f64> {
    let mut eta = vec![0.0; data.len()];
    if let (Some((_, basis)), Some(g)) = (&data.gp, gp) {
        let w = basis.spectral_weights(g.sigma2_gp, g.l_scale);
        basis.field(&w, &g.z, &mut eta);
    }
    eta
}

/// Per-unit `(logit p, log μ)` with the thinning offset included in `log μ`.
pub fn count_linear_predictors(params: &CountParams, data: &CountData) -> (Vec<f64>, Vec<f64>) {
    let eta_gp = gp_field(data, &params.gp);
    let g = |v: &[f64], d: usize| v.get(d).copied().unwrap_or(0.0);
    (0..data.len())
        .map(|i| {
            let d = data.district[i];
            (
                params.alpha0 + data.x_p.dot(i, &params.alpha1) + g(&params.gamma_p, d) + eta_gp[i],
                params.beta0 + data.x_mu.dot(i, &params.beta1) + g(&params.gamma_mu, d) + data.offset[i],
            )
        })
        .unzip()
}

/// Log-likelihood contribution of each modeled cell.
pub fn count_pointwise(params: &CountParams, data: &CountData) -> Vec<f64> {
    let (eta_p, log_mu) = count_linear_predictors(params, data);
    (0..data.len())
        .map(|i| {
            let y = data.yf[i];
            zinb_log_pmf_logit(y, eta_p[i], log_mu[i], params.phi, ln_nb_coefficient(y, params.phi))
        })
        .collect()
}

pub fn count_loglik(params: &CountParams, data: &CountData) -> f64 {
    count_pointwise(params, data).iter().sum()
}

/// Log prior on the natural scale (no Jacobian terms). A fixed dispersion
/// contributes nothing.
pub fn count_log_prior(params: &CountParams, priors: &Priors, phi_fixed: bool) -> f64 {
    let mut lp = priors.intercept_p(params.alpha0) + priors.intercept_mu(params.beta0);
    lp += params.alpha1.iter().chain(&params.beta1).map(|&b| priors.flat(b)).sum::<f64>();
    if !phi_fixed {
        lp += priors.phi(params.phi);
    }
    if !params.gamma_p.is_empty() {
        let (sp, smu) = (params.sigma2_district_p.sqrt(), params.sigma2_district_mu.sqrt());
        lp += priors.random_scale(sp) + priors.random_scale(smu);
        lp += params.gamma_p.iter().map(|&g| normal_log_pdf(g, sp)).sum::<f64>();
        lp += params.gamma_mu.iter().map(|&g| normal_log_pdf(g, smu)).sum::<f64>();
    }
    if let Some(gp) = &params.gp {
        lp += priors.random_scale(gp.sigma2_gp.sqrt()) + priors.l_scale(gp.l_scale);
        lp += gp.z.iter().map(|&z| normal_log_pdf(z, 1.0)).sum::<f64>();
    }
    lp
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum CountTag {
    FixedP,
    FixedAll,
    District(usize),
    GpCoef(usize),
    GpHyper,
    Prior,
}

/// Index layout of the unconstrained vector:
/// `[α0, α1.., β0, β1.., (log φ), (γp.., γμ.., log sp, log sμ), (log σgp, log l, z..)]`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    kp: usize,
    kmu: usize,
    phi: Option<usize>,
    districts: usize,
    effects: bool,
    gp: Option<usize>,
    m: usize,
}

impl Layout {
    fn b0(&self) -> usize {
        1 + self.kp
    }
    fn after_fixed(&self) -> usize {
        self.b0() + 1 + self.kmu + self.phi.is_some() as usize
    }
    fn gp_(&self, d: usize) -> usize {
        self.after_fixed() + d
    }
    fn gmu(&self, d: usize) -> usize {
        self.after_fixed() + self.districts + d
    }
    fn log_sp(&self) -> usize {
        self.after_fixed() + 2 * self.districts
    }
    fn after_effects(&self) -> usize {
        if self.effects {
            self.log_sp() + 2
        } else {
            self.after_fixed()
        }
    }
    fn dim(&self) -> usize {
        self.after_effects() + if self.gp.is_some() { 2 + self.m } else { 0 }
    }
}

const FIXED_SWEEPS: usize = 3;

pub(crate) struct CountModel<'a> {
    data: &'a CountData,
    priors: Priors,
    fixed_phi: Option<f64>,
    lay: Layout,
}

#[derive(Debug, Clone)]
pub(crate) struct CountCache {
    /// Covariate parts of the linear predictors, intercepts excluded so that
    /// shift moves leave the cache valid.
    xa: Vec<f64>,
    xb: Vec<f64>,
    eta_gp: Vec<f64>,
    /// `√w ∘ z`, the current basis coefficients.
    coef_gp: Vec<f64>,
    log_nb: Vec<f64>,
    ll: Vec<f64>,
    sums: Vec<f64>,
}

impl<'a> CountModel<'a> {
    pub(crate) fn new(data: &'a CountData, spec: &ModelSpec) -> Result<Self> {
        let effects = spec.district_effects && data.districts.len() >= 2;
        if spec.district_effects && !effects {
            log::warn!("count model: a single district, district effects disabled");
        }
        let kp = data.x_p.cols;
        let kmu = data.x_mu.cols;
        let phi = if spec.fixed_phi.is_some() { None } else { Some(1 + kp + 1 + kmu) };
        let mut lay =
            Layout { kp, kmu, phi, districts: data.districts.len(), effects, gp: None, m: data.gp.as_ref().map_or(0, |(_, b)| b.len()) };
        if data.gp.is_some() {
            lay.gp = Some(lay.after_effects());
        }
        Ok(CountModel { data, priors: Priors::new(spec.priors)?, fixed_phi: spec.fixed_phi, lay })
    }

    fn phi(&self, theta: &[f64]) -> f64 {
        match (self.lay.phi, self.fixed_phi) {
            (Some(i), _) => theta[i].exp(),
            (None, Some(v)) => v,
            (None, None) => unreachable!("dispersion is either sampled or fixed"),
        }
    }

    pub(crate) fn unpack(&self, theta: &[f64]) -> CountParams {
        let l = &self.lay;
        let (gp, gmu, sp, smu) = if l.effects {
            (
                (0..l.districts).map(|d| theta[l.gp_(d)]).collect(),
                (0..l.districts).map(|d| theta[l.gmu(d)]).collect(),
                (2.0 * theta[l.log_sp()]).exp(),
                (2.0 * theta[l.log_sp() + 1]).exp(),
            )
        } else {
            (Vec::new(), Vec::new(), 0.0, 0.0)
        };
        CountParams {
            alpha0: theta[0],
            alpha1: theta[1..l.b0()].to_vec(),
            beta0: theta[l.b0()],
            beta1: theta[l.b0() + 1..l.b0() + 1 + l.kmu].to_vec(),
            phi: self.phi(theta),
            gamma_p: gp,
            gamma_mu: gmu,
            sigma2_district_p: sp,
            sigma2_district_mu: smu,
            gp: l.gp.map(|g| GpParams {
                sigma2_gp: (2.0 * theta[g]).exp(),
                l_scale: theta[g + 1].exp(),
                z: theta[g + 2..g + 2 + l.m].to_vec(),
            }),
        }
    }

    fn gamma(&self, theta: &[f64], d: usize) -> (f64, f64) {
        if self.lay.effects {
            (theta[self.lay.gp_(d)], theta[self.lay.gmu(d)])
        } else {
            (0.0, 0.0)
        }
    }

    fn gp_coef(&self, theta: &[f64]) -> Vec<f64> {
        match (self.lay.gp, &self.data.gp) {
            (Some(g), Some((_, basis))) => {
                let w = basis.spectral_weights((2.0 * theta[g]).exp(), theta[g + 1].exp());
                w.iter().zip(&theta[g + 2..g + 2 + self.lay.m]).map(|(w, z)| w.sqrt() * z).collect()
            }
            _ => Vec::new(),
        }
    }

    fn fill_nb(&self, theta: &[f64], units: &[usize], c: &mut CountCache) {
        let phi = self.phi(theta);
        for &i in units {
            let (_, gmu) = self.gamma(theta, self.data.district[i]);
            let log_mu = theta[self.lay.b0()] + c.xb[i] + gmu + self.data.offset[i];
            let y = self.data.yf[i];
            c.log_nb[i] = nb_log_pmf_from_log_mu(y, log_mu, phi, ln_nb_coefficient(y, phi));
        }
    }

    fn fill_ll(&self, theta: &[f64], units: &[usize], c: &mut CountCache) {
        for &i in units {
            let (gp, _) = self.gamma(theta, self.data.district[i]);
            let eta = theta[0] + c.xa[i] + gp + c.eta_gp[i];
            let log_1mp = -softplus(eta);
            c.ll[i] = if self.data.y[i] == 0 { log_add_exp(-softplus(-eta), log_1mp + c.log_nb[i]) } else { log_1mp + c.log_nb[i] };
        }
    }

    fn fill_sums(&self, c: &mut CountCache, groups: impl Iterator<Item = usize>) {
        for d in groups {
            c.sums[d] = self.data.by_district[d].iter().map(|&i| c.ll[i]).sum();
        }
    }

    fn all(&self) -> Vec<usize> {
        (0..self.data.len()).collect()
    }
}

impl Target for CountModel<'_> {
    type Tag = CountTag;
    type Cache = CountCache;

    fn param_names(&self) -> Vec<String> {
        let l = &self.lay;
        let mut names = vec!["alpha0".to_string()];
        names.extend(self.data.x_p.names.iter().map(|n| format!("alpha1[{n}]")));
        names.push("beta0".into());
        names.extend(self.data.x_mu.names.iter().map(|n| format!("beta1[{n}]")));
        if l.phi.is_some() {
            names.push("log_phi".into());
        }
        if l.effects {
            names.extend(self.data.districts.iter().map(|d| format!("gamma_p[{d}]")));
            names.extend(self.data.districts.iter().map(|d| format!("gamma_mu[{d}]")));
            names.push("log_sd_district_p".into());
            names.push("log_sd_district_mu".into());
        }
        if l.gp.is_some() {
            names.push("log_sd_gp".into());
            names.push("log_l_scale".into());
            names.extend((0..l.m).map(|k| format!("z_gp[{k}]")));
        }
        names
    }

    fn blocks(&self) -> Vec<Block<CountTag>> {
        let l = self.lay;
        let mut mu_idx: Vec<usize> = (l.b0()..l.b0() + 1 + l.kmu).collect();
        if let Some(i) = l.phi {
            mu_idx.push(i);
        }
        // Zero inflation, mean and dispersion trade off along a curved ridge;
        // repeated joint moves cover it far better than per-part blocks.
        let all_idx: Vec<usize> = (0..l.b0()).chain(mu_idx).collect();
        let mut blocks =
            vec![Block { name: "count_p".into(), indices: (0..l.b0()).collect(), kind: BlockKind::Likelihood, tag: CountTag::FixedP }];
        for k in 0..FIXED_SWEEPS {
            blocks.push(Block {
                name: format!("count_fixed[{k}]"),
                indices: all_idx.clone(),
                kind: BlockKind::Likelihood,
                tag: CountTag::FixedAll,
            });
        }
        if l.effects {
            for (d, name) in self.data.districts.iter().enumerate() {
                blocks.push(Block {
                    name: format!("gamma[{name}]"),
                    indices: vec![l.gp_(d), l.gmu(d)],
                    kind: BlockKind::Likelihood,
                    tag: CountTag::District(d),
                });
            }
            let nd = l.districts;
            let shift = |name: &str, intercept: usize, first: usize| Block {
                name: name.into(),
                indices: std::iter::once(intercept).chain(first..first + nd).collect(),
                kind: BlockKind::Shift(std::iter::once(1.0).chain(std::iter::repeat_n(-1.0, nd)).collect()),
                tag: CountTag::Prior,
            };
            blocks.push(shift("shift_p", 0, l.gp_(0)));
            blocks.push(shift("shift_mu", l.b0(), l.gmu(0)));
            for (k, name) in ["sd_district_p", "sd_district_mu"].iter().enumerate() {
                blocks.push(Block {
                    name: (*name).into(),
                    indices: vec![l.log_sp() + k],
                    kind: BlockKind::PriorOnly,
                    tag: CountTag::Prior,
                });
            }
        }
        if let Some(g) = l.gp {
            blocks.push(Block { name: "gp_hyper".into(), indices: vec![g, g + 1], kind: BlockKind::Likelihood, tag: CountTag::GpHyper });
            for k in 0..l.m {
                blocks.push(Block {
                    name: format!("z_gp[{k}]"),
                    indices: vec![g + 2 + k],
                    kind: BlockKind::Likelihood,
                    tag: CountTag::GpCoef(k),
                });
            }
        }
        blocks
    }

    fn initial(&self) -> Vec<f64> {
        // Zeros put every scale at 1 and φ at 1; the fixed effects then start
        // at their conditional mode so warmup is not spent crawling along the
        // zero-inflation ridge.
        let l = self.lay;
        let mut theta = vec![0.0; l.dim()];
        let fixed: Vec<usize> = (0..l.after_fixed()).collect();
        let objective = |x: &[f64]| {
            let mut t = theta.clone();
            for (i, v) in fixed.iter().zip(x) {
                t[*i] = *v;
            }
            -(self.loglik(&self.cache(&t)) + self.log_prior(&t))
        };
        let start = vec![0.0; fixed.len()];
        let best = nelder_mead(objective, &start, &vec![0.5; fixed.len()], 1e-6, 200 * fixed.len());
        if best.value.is_finite() {
            for (i, v) in fixed.iter().zip(&best.x) {
                theta[*i] = v.clamp(-10.0, 10.0);
            }
        }
        theta
    }

    fn cache(&self, theta: &[f64]) -> CountCache {
        let n = self.data.len();
        let p = self.unpack(theta);
        let mut c = CountCache {
            xa: (0..n).map(|i| self.data.x_p.dot(i, &p.alpha1)).collect(),
            xb: (0..n).map(|i| self.data.x_mu.dot(i, &p.beta1)).collect(),
            eta_gp: gp_field(self.data, &p.gp),
            coef_gp: self.gp_coef(theta),
            log_nb: vec![0.0; n],
            ll: vec![0.0; n],
            sums: vec![0.0; self.lay.districts],
        };
        let all = self.all();
        self.fill_nb(theta, &all, &mut c);
        self.fill_ll(theta, &all, &mut c);
        self.fill_sums(&mut c, 0..self.lay.districts);
        c
    }

    fn loglik(&self, c: &CountCache) -> f64 {
        c.sums.iter().sum()
    }

    fn propose(&self, block: &Block<CountTag>, theta: &[f64], c: &CountCache, s: &mut CountCache) -> f64 {
        let l = self.lay;
        let all = || self.all();
        match block.tag {
            CountTag::FixedP => {
                for i in 0..self.data.len() {
                    s.xa[i] = self.data.x_p.dot(i, &theta[1..l.b0()]);
                }
                self.fill_ll(theta, &all(), s);
                self.fill_sums(s, 0..l.districts);
            }
            CountTag::FixedAll => {
                let b = &theta[l.b0() + 1..l.b0() + 1 + l.kmu];
                for i in 0..self.data.len() {
                    s.xa[i] = self.data.x_p.dot(i, &theta[1..l.b0()]);
                    s.xb[i] = self.data.x_mu.dot(i, b);
                }
                let all = all();
                self.fill_nb(theta, &all, s);
                self.fill_ll(theta, &all, s);
                self.fill_sums(s, 0..l.districts);
            }
            CountTag::District(d) => {
                let units = &self.data.by_district[d];
                self.fill_nb(theta, units, s);
                self.fill_ll(theta, units, s);
                self.fill_sums(s, std::iter::once(d));
            }
            CountTag::GpCoef(k) => {
                let (_, basis) = self.data.gp.as_ref().expect("spatial block without a basis");
                let g = l.gp.unwrap();
                let w = basis.spectral_weights((2.0 * theta[g]).exp(), theta[g + 1].exp());
                let new = w[k].sqrt() * theta[g + 2 + k];
                let delta = new - c.coef_gp[k];
                s.coef_gp[k] = new;
                for i in 0..self.data.len() {
                    s.eta_gp[i] = c.eta_gp[i] + basis.phi[(i, k)] * delta;
                }
                self.fill_ll(theta, &all(), s);
                self.fill_sums(s, 0..l.districts);
            }
            CountTag::GpHyper => {
                let (_, basis) = self.data.gp.as_ref().expect("spatial block without a basis");
                s.coef_gp = self.gp_coef(theta);
                for i in 0..self.data.len() {
                    s.eta_gp[i] = (0..basis.len()).map(|k| basis.phi[(i, k)] * s.coef_gp[k]).sum();
                }
                self.fill_ll(theta, &all(), s);
                self.fill_sums(s, 0..l.districts);
            }
            CountTag::Prior => {}
        }
        self.loglik(s)
    }

    fn sync(&self, block: &Block<CountTag>, from: &CountCache, to: &mut CountCache) {
        match block.tag {
            CountTag::FixedP => {
                to.xa.copy_from_slice(&from.xa);
                to.ll.copy_from_slice(&from.ll);
                to.sums.copy_from_slice(&from.sums);
            }
            CountTag::FixedAll => {
                to.xa.copy_from_slice(&from.xa);
                to.xb.copy_from_slice(&from.xb);
                to.log_nb.copy_from_slice(&from.log_nb);
                to.ll.copy_from_slice(&from.ll);
                to.sums.copy_from_slice(&from.sums);
            }
            CountTag::District(d) => {
                for &i in &self.data.by_district[d] {
                    to.log_nb[i] = from.log_nb[i];
                    to.ll[i] = from.ll[i];
                }
                to.sums[d] = from.sums[d];
            }
            CountTag::GpCoef(_) | CountTag::GpHyper => {
                to.coef_gp.copy_from_slice(&from.coef_gp);
                to.eta_gp.copy_from_slice(&from.eta_gp);
                to.ll.copy_from_slice(&from.ll);
                to.sums.copy_from_slice(&from.sums);
            }
            CountTag::Prior => {}
        }
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let l = &self.lay;
        let mut lp = count_log_prior(&self.unpack(theta), &self.priors, l.phi.is_none());
        if let Some(i) = l.phi {
            lp += theta[i];
        }
        if l.effects {
            lp += self.priors.scale_jacobian(theta[l.log_sp()]) + self.priors.scale_jacobian(theta[l.log_sp() + 1]);
        }
        if let Some(g) = l.gp {
            lp += self.priors.scale_jacobian(theta[g]) + theta[g + 1];
        }
        lp
    }

    fn output_names(&self) -> Vec<String> {
        let l = &self.lay;
        let mut names = vec!["alpha0_count".to_string()];
        names.extend(self.data.x_p.names.iter().map(|n| format!("alpha1_count[{n}]")));
        names.push("beta0_count".into());
        names.extend(self.data.x_mu.names.iter().map(|n| format!("beta1_count[{n}]")));
        names.push("phi".into());
        if l.effects {
            names.extend(self.data.districts.iter().map(|d| format!("gamma_count_p[{d}]")));
            names.extend(self.data.districts.iter().map(|d| format!("gamma_count_mu[{d}]")));
            names.push("sigma2_district_count_p".into());
            names.push("sigma2_district_count_mu".into());
        }
        if l.gp.is_some() {
            names.push("sigma2_gp".into());
            names.push("l_scale".into());
            names.extend((0..l.m).map(|k| format!("z_gp[{k}]")));
        }
        names
    }

    fn output(&self, theta: &[f64], out: &mut [f64]) {
        let p = self.unpack(theta);
        let mut v = vec![p.alpha0];
        v.extend(&p.alpha1);
        v.push(p.beta0);
        v.extend(&p.beta1);
        v.push(p.phi);
        if self.lay.effects {
            v.extend(&p.gamma_p);
            v.extend(&p.gamma_mu);
            v.push(p.sigma2_district_p);
            v.push(p.sigma2_district_mu);
        }
        if let Some(g) = &p.gp {
            v.push(g.sigma2_gp);
            v.push(g.l_scale);
            v.extend(&g.z);
        }
        out.copy_from_slice(&v);
    }
}

/// Count-model draws with the spatial frame needed to predict elsewhere.
#[derive(Debug, Clone)]
pub struct CountFit {
    pub draws: PosteriorDraws,
    pub gp_frame: Option<GpFrame>,
}

/// Sample the count-model posterior.
pub fn fit_count(data: &CountData, spec: &ModelSpec, config: &SamplerConfig) -> Result<CountFit> {
    spec.validate()?;
    let model = CountModel::new(data, spec)?;
    let chains = sampler::run(&model, config)?;
    Ok(CountFit {
        draws: PosteriorDraws::from_chains(
            model.output_names(),
            chains.into_iter().map(|c| (c.draws, c.stats)).collect(),
            config.iterations,
            config.warmup,
            config.seed,
        ),
        gp_frame: data.gp.as_ref().map(|(f, _)| *f),
    })
}

/// Draw × cell log-likelihood matrix.
pub fn count_pointwise_loglik(draws: &PosteriorDraws, data: &CountData, spec: &ModelSpec) -> Result<Vec<Vec<f64>>> {
    (0..draws.n_draws()).map(|r| CountParams::from_draw(draws, r, &data.districts, spec).map(|p| count_pointwise(&p, data))).collect()
}
