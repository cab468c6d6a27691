//! Zero-inflated negative binomial, hurdle log-normal and binomial thinning.
//!
//! The negative binomial is parameterized by its mean `mu` and dispersion
//! `phi`, with variance `mu + mu^2 / phi`:
//!
//! ```text
//! f(y) = C(y + phi - 1, y) (mu / (mu + phi))^y (phi / (mu + phi))^phi
//! ```
//!
//! The generalized binomial coefficient goes through `ln_gamma`, so `phi` may
//! be any positive real. The zero-inflated form mixes a point mass at zero with
//! probability `p` into the count kernel.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Tail mass the convolution oracle tolerates beyond its truncation point.
pub const ORACLE_TAIL_LIMIT: f64 = 1e-12;

/// Zero-inflated negative binomial parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZinbParams {
    /// Probability of an excess (structural) zero.
    pub p: f64,
    /// Mean of the negative binomial component.
    pub mu: f64,
    /// Dispersion of the negative binomial component.
    pub phi: f64,
}

impl ZinbParams {
    pub fn new(p: f64, mu: f64, phi: f64) -> Result<Self> {
        let params = ZinbParams { p, mu, phi };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Domain(format!("zero-inflation p = {} not in [0, 1]", self.p)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Domain(format!("mean mu = {} must be positive", self.mu)));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::Domain(format!("dispersion phi = {} must be positive", self.phi)));
        }
        Ok(())
    }

    /// Mean of the full zero-inflated distribution, `(1 - p) mu`.
    pub fn mean(&self) -> f64 {
        (1.0 - self.p) * self.mu
    }
}

/// Hurdle log-normal parameters: zero with probability `p`, otherwise
/// `log(Y) ~ N(mu, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurdleLogNormalParams {
    pub p: f64,
    /// Mean of the log-value.
    pub mu: f64,
    /// Standard deviation of the log-value.
    pub sigma: f64,
}

impl HurdleLogNormalParams {
    pub fn new(p: f64, mu: f64, sigma: f64) -> Result<Self> {
        let params = HurdleLogNormalParams { p, mu, sigma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Domain(format!("hurdle p = {} not in [0, 1]", self.p)));
        }
        if !self.mu.is_finite() {
            return Err(Error::Domain(format!("log-mean mu = {} must be finite", self.mu)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma = {} must be positive", self.sigma)));
        }
        Ok(())
    }
}

/// Per-unit retention probability of a binomial thinning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinningSpec {
    pub pi: f64,
}

impl ThinningSpec {
    pub fn new(pi: f64) -> Result<Self> {
        if !(pi > 0.0 && pi <= 1.0) {
            return Err(Error::Domain(format!("retention pi = {pi} not in (0, 1]")));
        }
        Ok(ThinningSpec { pi })
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse logit.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln Γ(y + φ) − ln Γ(φ) − ln Γ(y + 1)`, the log generalized binomial
/// coefficient `C(y + φ − 1, y)`.
#[inline]
pub(crate) fn ln_nb_coefficient(y: f64, phi: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        ln_gamma(y + phi) - ln_gamma(phi) - ln_gamma(y + 1.0)
    }
}

/// Log negative binomial pmf from the log of the mean. `coef` must equal
/// `ln_nb_coefficient(y, phi)`.
#[inline]
pub(crate) fn nb_log_pmf_from_log_mu(y: f64, log_mu: f64, phi: f64, coef: f64) -> f64 {
    // log(phi / (mu + phi)) = -log1p(mu / phi)
    let ratio = (log_mu - phi.ln()).exp();
    let log_zero_kernel = -phi * ratio.ln_1p();
    if y == 0.0 {
        log_zero_kernel
    } else {
        let log_mu_plus_phi = phi.ln() + ratio.ln_1p();
        coef + y * (log_mu - log_mu_plus_phi) + log_zero_kernel
    }
}

/// Log ZINB pmf with the zero-inflation given on the logit scale.
#[inline]
pub(crate) fn zinb_log_pmf_logit(y: f64, logit_p: f64, log_mu: f64, phi: f64, coef: f64) -> f64 {
    let log_1mp = -softplus(logit_p);
    let nb = nb_log_pmf_from_log_mu(y, log_mu, phi, coef);
    if y == 0.0 {
        let log_p = -softplus(-logit_p);
        log_add_exp(log_p, log_1mp + nb)
    } else {
        log_1mp + nb
    }
}

/// Log negative binomial pmf (mean `mu`, dispersion `phi`).
pub fn nb_log_pmf(mu: f64, phi: f64, y: u64) -> f64 {
    let yf = y as f64;
    nb_log_pmf_from_log_mu(yf, mu.ln(), phi, ln_nb_coefficient(yf, phi))
}

/// Log of the ZINB pmf at `y`.
pub fn zinb_log_pmf(params: &ZinbParams, y: u64) -> Result<f64> {
    params.validate()?;
    let nb = nb_log_pmf(params.mu, params.phi, y);
    let log_1mp = (1.0 - params.p).ln();
    Ok(if y == 0 {
        if params.p == 0.0 {
            nb
        } else {
            log_add_exp(params.p.ln(), log_1mp + nb)
        }
    } else {
        log_1mp + nb
    })
}

/// ZINB probability mass at `y`.
pub fn zinb_pmf(params: &ZinbParams, y: u64) -> Result<f64> {
    zinb_log_pmf(params, y).map(f64::exp)
}

/// Log-density of the hurdle log-normal at `y >= 0`.
pub fn hurdle_lognormal_logpdf(params: &HurdleLogNormalParams, y: f64) -> Result<f64> {
    params.validate()?;
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("hurdle log-normal value {y} is negative")));
    }
    Ok(hurdle_lognormal_logpdf_unchecked(params.p.ln(), (1.0 - params.p).ln(), params.mu, params.sigma, y))
}

#[inline]
pub(crate) fn hurdle_lognormal_logpdf_unchecked(log_p: f64, log_1mp: f64, mu: f64, sigma: f64, y: f64) -> f64 {
    if y == 0.0 {
        log_p
    } else {
        let ly = y.ln();
        let z = (ly - mu) / sigma;
        log_1mp - ly - sigma.ln() - LN_SQRT_2PI - 0.5 * z * z
    }
}

/// Mean of the hurdle log-normal, `(1 - p) exp(mu + sigma^2 / 2)`.
pub fn hurdle_lognormal_mean(params: &HurdleLogNormalParams) -> Result<f64> {
    params.validate()?;
    Ok((1.0 - params.p) * (params.mu + 0.5 * params.sigma * params.sigma).exp())
}

/// Binomial thinning of a count: each of the `y_true` units is retained
/// independently with probability `spec.pi`.
pub fn thin_count<R: Rng + ?Sized>(y_true: u64, spec: &ThinningSpec, rng: &mut R) -> u64 {
    if y_true == 0 || spec.pi >= 1.0 {
        return y_true;
    }
    Binomial::new(y_true, spec.pi).expect("validated retention probability").sample(rng)
}

/// Draw from a ZINB via the gamma–Poisson mixture.
pub fn sample_zinb<R: Rng + ?Sized>(params: &ZinbParams, rng: &mut R) -> u64 {
    if params.p > 0.0 && rng.random::<f64>() < params.p {
        return 0;
    }
    sample_nb(params.mu, params.phi, rng)
}

pub(crate) fn sample_nb<R: Rng + ?Sized>(mu: f64, phi: f64, rng: &mut R) -> u64 {
    let rate = Gamma::new(phi, mu / phi).expect("positive gamma parameters").sample(rng);
    sample_poisson(rate, rng)
}

pub(crate) fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    let draw: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
    draw as u64
}

/// Draw from a hurdle log-normal.
pub fn sample_hurdle_lognormal<R: Rng + ?Sized>(params: &HurdleLogNormalParams, rng: &mut R) -> f64 {
    if params.p > 0.0 && rng.random::<f64>() < params.p {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    (params.mu + params.sigma * z).exp()
}

/// Upper bound on `P(Y > truncation)` for a ZINB.
///
/// Uses the term ratio `f(y+1)/f(y) = (y + phi)/(y + 1) * mu/(mu + phi)`,
/// which is monotone in `y` and tends to `mu/(mu + phi)`, to bound the tail by
/// a geometric series.
pub fn zinb_tail_bound(params: &ZinbParams, truncation: u64) -> f64 {
    let q = params.mu / (params.mu + params.phi);
    let next = truncation + 1;
    let r_next = (next as f64 + params.phi) / (next as f64 + 1.0) * q;
    let sup = r_next.max(q);
    if sup >= 1.0 {
        return 1.0;
    }
    // For phi > 1 the ratio decreases towards q; the bound only holds once the
    // ratio has dropped below one, which `sup < 1` guarantees.
    (1.0 - params.p) * nb_log_pmf(params.mu, params.phi, next).exp() / (1.0 - sup)
}

/// Smallest truncation point whose ZINB tail bound is below `tail`.
pub fn adaptive_truncation(params: &ZinbParams, tail: f64) -> Result<u64> {
    params.validate()?;
    let mode_hint = (params.mu * (1.0 + 1.0 / params.phi)).ceil() as u64;
    let mut t = 0u64;
    loop {
        if t >= mode_hint && zinb_tail_bound(params, t) < tail {
            return Ok(t);
        }
        t += 1;
        if t > 100_000_000 {
            return Err(Error::Domain("truncation search exceeded 1e8 terms".into()));
        }
    }
}

/// Probability that the π-thinning of a ZINB variable equals `y`, computed by
/// direct convolution over the latent count up to `truncation`.
///
/// This is deliberately the slow route: it never uses the closed form of the
/// thinned law and serves as the reference the closed form is checked against.
pub fn thinned_zinb_oracle(params: &ZinbParams, pi: f64, y: u64, truncation: u64) -> Result<f64> {
    params.validate()?;
    ThinningSpec::new(pi)?;
    let tail = zinb_tail_bound(params, truncation);
    if tail > ORACLE_TAIL_LIMIT {
        return Err(Error::Truncation { truncation, tail, limit: ORACLE_TAIL_LIMIT });
    }
    if y > truncation {
        return Ok(0.0);
    }
    if pi == 1.0 {
        return zinb_pmf(params, y);
    }
    let ln_pi = pi.ln();
    let ln_1mpi = (1.0 - pi).ln();
    let yf = y as f64;
    let mut total = 0.0;
    let mut compensation = 0.0;
    for x in y..=truncation {
        let xf = x as f64;
        let ln_binom = ln_gamma(xf + 1.0) - ln_gamma(yf + 1.0) - ln_gamma(xf - yf + 1.0);
        let ln_keep = ln_binom + yf * ln_pi + (xf - yf) * ln_1mpi;
        let term = (ln_keep + zinb_log_pmf(params, x)?).exp();
        // Kahan summation keeps the long sums accurate to the last bits.
        let adj = term - compensation;
        let next = total + adj;
        compensation = (next - total) - adj;
        total = next;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use approx::assert_relative_eq;

    #[test]
    fn zinb_pmf_examples() {
        let all_zero = ZinbParams::new(1.0, 5.0, 2.0).unwrap();
        assert_eq!(zinb_pmf(&all_zero, 0).unwrap(), 1.0);
        assert_eq!(zinb_pmf(&all_zero, 3).unwrap(), 0.0);

        let half = ZinbParams::new(0.5, 2.0, 1.0).unwrap();
        assert_relative_eq!(zinb_pmf(&half, 0).unwrap(), 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(zinb_pmf(&half, 1).unwrap(), 1.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn zinb_rejects_bad_parameters() {
        assert!(ZinbParams::new(1.5, 1.0, 1.0).is_err());
        assert!(ZinbParams::new(0.5, 0.0, 1.0).is_err());
        assert!(ZinbParams::new(0.5, 1.0, -1.0).is_err());
        let bad = ZinbParams { p: 0.1, mu: -1.0, phi: 1.0 };
        assert!(matches!(zinb_pmf(&bad, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn zinb_log_pmf_is_finite_far_in_the_tail() {
        let params = ZinbParams::new(0.3, 1e4, 0.7).unwrap();
        for y in [0u64, 1, 10_000, 1_000_000] {
            assert!(zinb_log_pmf(&params, y).unwrap().is_finite(), "y = {y}");
        }
    }

    #[test]
    fn zinb_pmf_normalizes() {
        for &(p, mu, phi) in &[(0.0, 0.5, 0.3), (0.4, 10.0, 5.0), (0.9, 2.0, 1.0), (0.2, 50.0, 0.5)] {
            let params = ZinbParams::new(p, mu, phi).unwrap();
            let t = adaptive_truncation(&params, 1e-12).unwrap();
            let total: f64 = (0..=t).map(|y| zinb_pmf(&params, y).unwrap()).sum();
            assert!((1.0 - 1e-10..=1.0 + 1e-10).contains(&total), "{params:?}: {total}");
        }
    }

    #[test]
    fn logit_route_matches_probability_route() {
        let params = ZinbParams::new(0.35, 3.2, 0.8).unwrap();
        let logit = (params.p / (1.0 - params.p)).ln();
        for y in 0..30u64 {
            let yf = y as f64;
            let fast = zinb_log_pmf_logit(yf, logit, params.mu.ln(), params.phi, ln_nb_coefficient(yf, params.phi));
            assert_relative_eq!(fast, zinb_log_pmf(&params, y).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_mass_grows_with_p() {
        let h = 1e-6;
        for &p in &[0.0, 0.2, 0.5, 0.8] {
            let lo = zinb_pmf(&ZinbParams::new(p, 2.0, 1.0).unwrap(), 0).unwrap();
            let hi = zinb_pmf(&ZinbParams::new(p + h, 2.0, 1.0).unwrap(), 0).unwrap();
            assert!((hi - lo) / h >= 0.0);
        }
    }

    #[test]
    fn hurdle_examples() {
        let p03 = HurdleLogNormalParams::new(0.3, 0.0, 1.0).unwrap();
        assert_relative_eq!(hurdle_lognormal_logpdf(&p03, 0.0).unwrap(), 0.3f64.ln(), epsilon = 1e-15);

        let standard = HurdleLogNormalParams::new(0.0, 0.0, 1.0).unwrap();
        let expected = -(2.0 * std::f64::consts::PI).sqrt().ln();
        assert_relative_eq!(hurdle_lognormal_logpdf(&standard, 1.0).unwrap(), expected, epsilon = 1e-15);

        assert!(matches!(hurdle_lognormal_logpdf(&standard, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn hurdle_positive_part_integrates_to_one_minus_p() {
        // Composite Simpson on u = ln y over y in (0, 200).
        let params = HurdleLogNormalParams::new(0.3, 1.0, 0.5).unwrap();
        let (lo, hi) = (-40.0f64, 200f64.ln());
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let f = |u: f64| {
            let y = u.exp();
            hurdle_lognormal_logpdf(&params, y).unwrap().exp() * y
        };
        let mut acc = f(lo) + f(hi);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(lo + k as f64 * h);
        }
        assert_relative_eq!(acc * h / 3.0, 0.7, epsilon = 1e-9);
        let at_two = hurdle_lognormal_logpdf(&params, 2.0).unwrap();
        let direct = 0.7f64.ln() - 2f64.ln() - 0.5f64.ln() - LN_SQRT_2PI - 0.5 * ((2f64.ln() - 1.0) / 0.5).powi(2);
        assert_relative_eq!(at_two, direct, epsilon = 1e-14);
    }

    #[test]
    fn hurdle_mean_examples() {
        let degenerate = HurdleLogNormalParams::new(0.0, 0.0, 1e-9).unwrap();
        assert_relative_eq!(hurdle_lognormal_mean(&degenerate).unwrap(), 1.0, epsilon = 1e-12);
        let all_zero = HurdleLogNormalParams::new(1.0, 5.0, 2.0).unwrap();
        assert_eq!(hurdle_lognormal_mean(&all_zero).unwrap(), 0.0);

        let params = HurdleLogNormalParams::new(0.5, 1.0, 1.0).unwrap();
        let analytic = hurdle_lognormal_mean(&params).unwrap();
        assert_relative_eq!(analytic, 0.5 * 1.5f64.exp(), epsilon = 1e-14);
        let mut rng = seed::stream(11, "hurdle-mean", 0);
        let n = 10_000_000;
        let mc: f64 = (0..n).map(|_| sample_hurdle_lognormal(&params, &mut rng)).sum::<f64>() / n as f64;
        assert!((mc - 2.2408).abs() < 1e-2, "monte carlo mean {mc}");
    }

    #[test]
    fn thinning_examples() {
        let mut rng = seed::stream(3, "thin", 0);
        assert_eq!(thin_count(0, &ThinningSpec::new(0.3).unwrap(), &mut rng), 0);
        assert_eq!(thin_count(10, &ThinningSpec::new(1.0).unwrap(), &mut rng), 10);
        assert!(ThinningSpec::new(0.0).is_err());

        let half = ThinningSpec::new(0.5).unwrap();
        let calls = 400;
        let mean = (0..calls).map(|_| thin_count(1_000_000, &half, &mut rng) as f64).sum::<f64>() / calls as f64;
        // sd of the mean: sqrt(n pi (1 - pi) / calls)
        let sd = (1e6 * 0.25 / calls as f64).sqrt();
        assert!((mean - 5e5).abs() < 3.0 * sd, "{mean}");

        let mut a = seed::stream(5, "thin", 1);
        let mut b = seed::stream(5, "thin", 1);
        assert_eq!(thin_count(1000, &half, &mut a), thin_count(1000, &half, &mut b));
    }

    #[test]
    fn oracle_examples() {
        let params = ZinbParams::new(0.5, 2.0, 1.0).unwrap();
        let t = adaptive_truncation(&params, 1e-14).unwrap();
        let y0 = thinned_zinb_oracle(&params, 0.5, 0, t).unwrap();
        assert!((y0 - 0.75).abs() < 1e-10, "{y0}");

        for y in 0..8 {
            let identity = thinned_zinb_oracle(&params, 1.0, y, t).unwrap();
            assert_eq!(identity, zinb_pmf(&params, y).unwrap());
        }

        let nb = ZinbParams::new(0.0, 2.0, 1.0).unwrap();
        let t = adaptive_truncation(&nb, 1e-14).unwrap();
        let y1 = thinned_zinb_oracle(&nb, 0.5, 1, t).unwrap();
        assert!((y1 - 0.25).abs() < 1e-10, "{y1}");
    }

    #[test]
    fn oracle_refuses_short_truncation() {
        let params = ZinbParams::new(0.1, 20.0, 1.0).unwrap();
        assert!(matches!(thinned_zinb_oracle(&params, 0.5, 0, 10), Err(Error::Truncation { .. })));
    }

    #[test]
    fn samplers_follow_their_laws() {
        let mut rng = seed::stream(9, "sampler", 0);
        let never = ZinbParams::new(1.0, 3.0, 2.0).unwrap();
        assert!((0..1000).all(|_| sample_zinb(&never, &mut rng) == 0));

        let params = ZinbParams::new(0.5, 2.0, 1.0).unwrap();
        let n = 1_000_000;
        let zeros = (0..n).filter(|_| sample_zinb(&params, &mut rng) == 0).count() as f64 / n as f64;
        let sd = (2.0 / 3.0 * (1.0 / 3.0) / n as f64).sqrt();
        assert!((zeros - 2.0 / 3.0).abs() < 3.0 * sd, "{zeros}");

        let hurdle = HurdleLogNormalParams::new(0.3, 1.0, 0.5).unwrap();
        let n = 200_000;
        let zeros = (0..n).filter(|_| sample_hurdle_lognormal(&hurdle, &mut rng) == 0.0).count() as f64 / n as f64;
        let sd = (0.3 * 0.7 / n as f64).sqrt();
        assert!((zeros - 0.3).abs() < 3.0 * sd, "{zeros}");
    }
}
