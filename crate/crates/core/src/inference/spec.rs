//! Model, prior and sampler configuration.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Gamma, InverseGamma, StudentsT};

use crate::error::{Error, Result};
use crate::gp::BasisLayout;

/// Covariate lists per linear predictor plus structural switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub size_p: Vec<String>,
    #[serde(default)]
    pub size_mu: Vec<String>,
    #[serde(default)]
    pub count_p: Vec<String>,
    #[serde(default)]
    pub count_mu: Vec<String>,
    #[serde(default = "default_true")]
    pub district_effects: bool,
    /// Spatial field on the count model's zero-inflation predictor.
    #[serde(default)]
    pub gp: Option<GpSpec>,
    /// Hold the NB dispersion fixed instead of sampling it.
    #[serde(default)]
    pub fixed_phi: Option<f64>,
    #[serde(default)]
    pub priors: PriorConfig,
}

fn default_true() -> bool {
    true
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            size_p: Vec::new(),
            size_mu: Vec::new(),
            count_p: Vec::new(),
            count_mu: Vec::new(),
            district_effects: true,
            gp: None,
            fixed_phi: None,
            priors: PriorConfig::default(),
        }
    }
}

impl ModelSpec {
    /// Every covariate referenced by the size model, in first-use order.
    pub fn size_covariates(&self) -> Vec<String> {
        union(&[&self.size_p, &self.size_mu])
    }

    pub fn count_covariates(&self) -> Vec<String> {
        union(&[&self.count_p, &self.count_mu])
    }

    pub fn all_covariates(&self) -> Vec<String> {
        union(&[&self.size_p, &self.size_mu, &self.count_p, &self.count_mu])
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(phi) = self.fixed_phi {
            if !(phi > 0.0 && phi.is_finite()) {
                return Err(Error::Config(format!("fixed_phi = {phi} must be positive")));
            }
        }
        if let Some(gp) = &self.gp {
            if gp.num_basis == 0 || !(gp.boundary_factor > 1.0) {
                return Err(Error::Config("gp needs num_basis ≥ 1 and boundary_factor > 1".into()));
            }
        }
        self.priors.validate()
    }
}

fn union(lists: &[&Vec<String>]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for name in lists.iter().flat_map(|l| l.iter()) {
        if !out.contains(name) {
            out.push(name.clone());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpSpec {
    #[serde(default = "default_num_basis")]
    pub num_basis: usize,
    #[serde(default = "default_boundary")]
    pub boundary_factor: f64,
    #[serde(default)]
    pub layout: BasisLayout,
}

fn default_num_basis() -> usize {
    5
}

fn default_boundary() -> f64 {
    1.25
}

impl Default for GpSpec {
    fn default() -> Self {
        GpSpec { num_basis: 5, boundary_factor: 1.25, layout: BasisLayout::TensorProduct }
    }
}

/// Which quantity the scale priors are written on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScalePriorOn {
    #[default]
    Sd,
    Variance,
}

/// Prior on district-effect and spatial-field scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RandomScalePrior {
    /// Flat up to `flat_bound`; improper in the limit and weak with few districts.
    #[default]
    Flat,
    HalfT {
        df: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub scale_prior_on: ScalePriorOn,
    pub random_scale: RandomScalePrior,
    pub intercept_mu_location: f64,
    pub intercept_mu_scale: f64,
    pub intercept_mu_df: f64,
    pub sigma_size_scale: f64,
    pub sigma_size_df: f64,
    pub phi_shape: f64,
    pub phi_rate: f64,
    pub l_scale_shape: f64,
    pub l_scale_scale: f64,
    /// Bound on the magnitude of flat-prior parameters.
    pub flat_bound: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            scale_prior_on: ScalePriorOn::Sd,
            random_scale: RandomScalePrior::Flat,
            intercept_mu_location: -2.0,
            intercept_mu_scale: 10.0,
            intercept_mu_df: 3.0,
            sigma_size_scale: 10.0,
            sigma_size_df: 3.0,
            phi_shape: 0.01,
            phi_rate: 0.01,
            l_scale_shape: 0.976289,
            l_scale_scale: 0.008892,
            flat_bound: 1e6,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("intercept_mu_scale", self.intercept_mu_scale),
            ("intercept_mu_df", self.intercept_mu_df),
            ("sigma_size_scale", self.sigma_size_scale),
            ("sigma_size_df", self.sigma_size_df),
            ("phi_shape", self.phi_shape),
            ("phi_rate", self.phi_rate),
            ("l_scale_shape", self.l_scale_shape),
            ("l_scale_scale", self.l_scale_scale),
            ("flat_bound", self.flat_bound),
        ];
        if let RandomScalePrior::HalfT { df, scale } = self.random_scale {
            if !(df > 0.0 && scale > 0.0 && df.is_finite() && scale.is_finite()) {
                return Err(Error::Config(format!("random_scale half_t needs positive df and scale, got {df} and {scale}")));
            }
        }
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("prior {name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// Evaluated prior densities.
#[derive(Debug, Clone)]
pub struct Priors {
    pub config: PriorConfig,
    intercept_mu: StudentsT,
    sigma_size: StudentsT,
    phi: Gamma,
    l_scale: InverseGamma,
    random_scale: Option<StudentsT>,
}

impl Priors {
    pub fn new(config: PriorConfig) -> Result<Self> {
        config.validate()?;
        let bad = |e: statrs::distribution::StudentsTError| Error::Config(e.to_string());
        Ok(Priors {
            intercept_mu: StudentsT::new(config.intercept_mu_location, config.intercept_mu_scale, config.intercept_mu_df).map_err(bad)?,
            sigma_size: StudentsT::new(0.0, config.sigma_size_scale, config.sigma_size_df).map_err(bad)?,
            phi: Gamma::new(config.phi_shape, config.phi_rate).map_err(|e| Error::Config(e.to_string()))?,
            l_scale: InverseGamma::new(config.l_scale_shape, config.l_scale_scale).map_err(|e| Error::Config(e.to_string()))?,
            random_scale: match config.random_scale {
                RandomScalePrior::Flat => None,
                RandomScalePrior::HalfT { df, scale } => Some(StudentsT::new(0.0, scale, df).map_err(bad)?),
            },
            config,
        })
    }

    /// Standard logistic density for the zero-inflation intercepts.
    pub fn intercept_p(&self, x: f64) -> f64 {
        -x - 2.0 * crate::distributions::softplus(-x)
    }

    pub fn intercept_mu(&self, x: f64) -> f64 {
        self.intercept_mu.ln_pdf(x)
    }

    /// Flat prior with a box.
    pub fn flat(&self, x: f64) -> f64 {
        if x.abs() <= self.config.flat_bound {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Half-t prior on the size-model scale `sigma`.
    pub fn sigma_size(&self, sigma: f64) -> f64 {
        if !(sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        let x = match self.config.scale_prior_on {
            ScalePriorOn::Sd => sigma,
            ScalePriorOn::Variance => sigma * sigma,
        };
        std::f64::consts::LN_2 + self.sigma_size.ln_pdf(x)
    }

    /// Prior on a district-effect or spatial-field scale `sigma` (or its
    /// square): flat on `(0, flat_bound]` or half-t.
    pub fn random_scale(&self, sigma: f64) -> f64 {
        if !(sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        let x = match self.config.scale_prior_on {
            ScalePriorOn::Sd => sigma,
            ScalePriorOn::Variance => sigma * sigma,
        };
        match &self.random_scale {
            Some(t) => std::f64::consts::LN_2 + t.ln_pdf(x),
            None if x <= self.config.flat_bound => 0.0,
            None => f64::NEG_INFINITY,
        }
    }

    pub fn phi(&self, phi: f64) -> f64 {
        if phi > 0.0 {
            self.phi.ln_pdf(phi)
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn l_scale(&self, l: f64) -> f64 {
        if l > 0.0 {
            self.l_scale.ln_pdf(l)
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Jacobian of the map from `log sigma` to the quantity the scale prior is on.
    pub fn scale_jacobian(&self, log_sigma: f64) -> f64 {
        match self.config.scale_prior_on {
            ScalePriorOn::Sd => log_sigma,
            ScalePriorOn::Variance => std::f64::consts::LN_2 + 2.0 * log_sigma,
        }
    }
}

/// MCMC run settings. `iterations` includes `warmup`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub initial_step: f64,
    pub init_jitter: f64,
    pub target_accept_1d: f64,
    pub target_accept_nd: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            iterations: 2000,
            warmup: 1000,
            seed: 0,
            initial_step: 0.1,
            init_jitter: 0.1,
            target_accept_1d: 0.44,
            target_accept_nd: 0.234,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("need at least one chain".into()));
        }
        if self.warmup >= self.iterations {
            return Err(Error::Config(format!("iterations ({}) must exceed warmup ({})", self.iterations, self.warmup)));
        }
        for (name, v) in [("target_accept_1d", self.target_accept_1d), ("target_accept_nd", self.target_accept_nd)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        if !(self.initial_step > 0.0) || !(self.init_jitter >= 0.0) {
            return Err(Error::Config("initial_step must be positive and init_jitter non-negative".into()));
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        self.iterations - self.warmup
    }
}
