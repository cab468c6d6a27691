//! Exponentiated-quadratic spatial field and its reduced-rank Hilbert-space
//! approximation on an expanded box.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::Point;

/// Arrangement of 2-D basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BasisLayout {
    /// `num_basis` functions per axis, `num_basis²` in total.
    #[default]
    TensorProduct,
    /// The `num_basis` lowest-frequency tensor pairs.
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub sigma2_gp: f64,
    pub l_scale: f64,
    pub num_basis: usize,
    pub boundary_factor: f64,
    #[serde(default)]
    pub layout: BasisLayout,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig { sigma2_gp: 1.0, l_scale: 0.2, num_basis: 5, boundary_factor: 1.25, layout: BasisLayout::TensorProduct }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_gp >= 0.0 && self.sigma2_gp.is_finite()) {
            return Err(Error::Domain(format!("sigma2_gp = {} must be finite and non-negative", self.sigma2_gp)));
        }
        if !(self.l_scale > 0.0 && self.l_scale.is_finite()) {
            return Err(Error::Domain(format!("l_scale = {} must be positive", self.l_scale)));
        }
        if self.num_basis == 0 {
            return Err(Error::Domain("num_basis must be at least 1".into()));
        }
        if !(self.boundary_factor > 1.0 && self.boundary_factor.is_finite()) {
            return Err(Error::Domain(format!("boundary_factor = {} must exceed 1", self.boundary_factor)));
        }
        Ok(())
    }
}

/// `sigma2 · exp(-d² / (2 l²))`.
pub fn kernel(sigma2: f64, l_scale: f64, a: Point, b: Point) -> f64 {
    let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    sigma2 * (-0.5 * d2 / (l_scale * l_scale)).exp()
}

pub fn kernel_matrix(config: &GpConfig, sites: &[Point]) -> DMatrix<f64> {
    let n = sites.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = config.sigma2_gp;
        for j in 0..i {
            let v = kernel(config.sigma2_gp, config.l_scale, sites[i], sites[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Centre and half-widths of the box the basis lives on, before expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisBox {
    pub center: Point,
    pub half_width: [f64; 2],
}

impl BasisBox {
    /// Smallest centred box holding every site.
    pub fn enclosing(sites: &[Point]) -> Result<Self> {
        let (lo, hi) = crate::spatial::geo::bbox(sites.iter().copied())
            .ok_or_else(|| Error::Data("GP basis needs at least one finite site".into()))?;
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        // A degenerate axis still needs a box of positive width.
        let half = |d: usize| (0.5 * (hi[d] - lo[d])).max(1e-6);
        Ok(BasisBox { center, half_width: [half(0), half(1)] })
    }
}

/// Basis matrix for fixed sites plus the frequencies needed to weight it.
#[derive(Debug, Clone)]
pub struct HsgpBasis {
    /// `n × m` basis matrix.
    pub phi: DMatrix<f64>,
    /// Squared frequency (Laplacian eigenvalue) of each column.
    pub eigenvalues: Vec<f64>,
    pub basis_box: BasisBox,
    pub boundary_factor: f64,
}

impl HsgpBasis {
    pub fn new(sites: &[Point], basis_box: BasisBox, num_basis: usize, boundary_factor: f64, layout: BasisLayout) -> Result<Self> {
        if num_basis == 0 || !(boundary_factor > 1.0) {
            return Err(Error::Domain("basis needs num_basis ≥ 1 and boundary_factor > 1".into()));
        }
        let l = [boundary_factor * basis_box.half_width[0], boundary_factor * basis_box.half_width[1]];
        let mut pairs: Vec<(usize, usize)> = (1..=num_basis).flat_map(|a| (1..=num_basis).map(move |b| (a, b))).collect();
        let freq = |j: usize, d: usize| (PI * j as f64 / (2.0 * l[d])).powi(2);
        if layout == BasisLayout::Total {
            pairs.sort_by(|x, y| (freq(x.0, 0) + freq(x.1, 1)).total_cmp(&(freq(y.0, 0) + freq(y.1, 1))).then(x.cmp(y)));
            pairs.truncate(num_basis);
        }
        let eigenvalues = pairs.iter().map(|&(a, b)| freq(a, 0) + freq(b, 1)).collect();

        let axis = |j: usize, d: usize, x: f64| {
            let t = x - basis_box.center[d] + l[d];
            l[d].powf(-0.5) * (PI * j as f64 * t / (2.0 * l[d])).sin()
        };
        let mut phi = DMatrix::zeros(sites.len(), pairs.len());
        for (i, s) in sites.iter().enumerate() {
            if !(s[0].is_finite() && s[1].is_finite()) {
                return Err(Error::Data(format!("GP site {i} is not finite")));
            }
            for (k, &(a, b)) in pairs.iter().enumerate() {
                phi[(i, k)] = axis(a, 0, s[0]) * axis(b, 1, s[1]);
            }
        }
        Ok(HsgpBasis { phi, eigenvalues, basis_box, boundary_factor })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Spectral density of the 2-D squared-exponential kernel at each frequency.
    pub fn spectral_weights(&self, sigma2: f64, l_scale: f64) -> Vec<f64> {
        let l2 = l_scale * l_scale;
        self.eigenvalues.iter().map(|lambda| sigma2 * 2.0 * PI * l2 * (-0.5 * l2 * lambda).exp()).collect()
    }

    /// `η = Φ · diag(√w) · z`.
    pub fn field(&self, weights: &[f64], z: &[f64], out: &mut [f64]) {
        let scaled: Vec<f64> = weights.iter().zip(z).map(|(w, z)| w.sqrt() * z).collect();
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..scaled.len()).map(|k| self.phi[(i, k)] * scaled[k]).sum();
        }
    }
}

/// Tensor-product field `Φx · (√w ∘ Z) · Φyᵀ` on the lattice `xs × ys`,
/// entry `(a, b)` at `(xs[a], ys[b])`. `z` is ordered like the columns of
/// [`HsgpBasis`] with the tensor-product layout.
#[allow(clippy::too_many_arguments)]
pub fn lattice_field(
    xs: &[f64],
    ys: &[f64],
    basis_box: BasisBox,
    num_basis: usize,
    boundary_factor: f64,
    sigma2: f64,
    l_scale: f64,
    z: &[f64],
) -> Result<DMatrix<f64>> {
    if z.len() != num_basis * num_basis {
        return Err(Error::Domain(format!("need {} coefficients, got {}", num_basis * num_basis, z.len())));
    }
    let l = [boundary_factor * basis_box.half_width[0], boundary_factor * basis_box.half_width[1]];
    let axis = |v: &[f64], d: usize| {
        DMatrix::from_fn(v.len(), num_basis, |i, j| {
            let t = v[i] - basis_box.center[d] + l[d];
            l[d].powf(-0.5) * (PI * (j + 1) as f64 * t / (2.0 * l[d])).sin()
        })
    };
    let freq = |j: usize, d: usize| (PI * (j + 1) as f64 / (2.0 * l[d])).powi(2);
    let l2 = l_scale * l_scale;
    let coef = DMatrix::from_fn(num_basis, num_basis, |a, b| {
        let w = sigma2 * 2.0 * PI * l2 * (-0.5 * l2 * (freq(a, 0) + freq(b, 1))).exp();
        w.sqrt() * z[a * num_basis + b]
    });
    Ok(axis(xs, 0) * coef * axis(ys, 1).transpose())
}

/// Basis matrix and spectral weights for `config`, with the box fitted to `sites`.
pub fn basis_features(config: &GpConfig, sites: &[Point]) -> Result<(DMatrix<f64>, Vec<f64>)> {
    config.validate()?;
    let basis = HsgpBasis::new(sites, BasisBox::enclosing(sites)?, config.num_basis, config.boundary_factor, config.layout)?;
    let weights = basis.spectral_weights(config.sigma2_gp, config.l_scale);
    Ok((basis.phi, weights))
}

/// `‖Φ W Φᵀ − K‖_F / ‖K‖_F`.
pub fn relative_frobenius_error(config: &GpConfig, sites: &[Point]) -> Result<f64> {
    let (phi, weights) = basis_features(config, sites)?;
    let approx = &phi * DMatrix::from_diagonal(&weights.into()) * phi.transpose();
    let exact = kernel_matrix(config, sites);
    let denom = exact.norm();
    Ok(if denom == 0.0 { 0.0 } else { (approx - &exact).norm() / denom })
}
