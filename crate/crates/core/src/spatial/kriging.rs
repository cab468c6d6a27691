//! Universal kriging with a Matérn covariance fitted by restricted maximum
//! likelihood.
//!
//! The covariance between observations at distance `h` is
//! `sill · ρ_ν(h / range) + nugget · [h = 0]`, with the Matérn correlation
//! `ρ_ν(t) = 2^{1-ν} / Γ(ν) · t^ν K_ν(t)` (so `ν = 1.5` gives
//! `(1 + t) e^{-t}`). The trend is a linear model in a constant, optionally the
//! projected coordinates, and optionally user-supplied covariate columns.
//!
//! REML profiles the overall scale out analytically; the remaining range and
//! nugget-to-sill ratio are searched on the log scale with a four-start
//! Nelder–Mead.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::geo::{distance, Point, Projection};
use crate::error::{Error, Result};
use crate::optim::nelder_mead;

/// Values observed at point sites (e.g. survey cluster means).
#[derive(Debug, Clone, PartialEq)]
pub struct PointCovariate {
    pub name: String,
    pub sites: Vec<Point>,
    pub values: Vec<f64>,
}

impl PointCovariate {
    pub fn new(name: impl Into<String>, sites: Vec<Point>, values: Vec<f64>) -> Result<Self> {
        if sites.len() != values.len() {
            return Err(Error::Data(format!("{} sites but {} values", sites.len(), values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at site {i}")));
        }
        if let Some(i) = sites.iter().position(|s| !(s[0].is_finite() && s[1].is_finite())) {
            return Err(Error::Data(format!("non-finite coordinates at site {i}")));
        }
        Ok(PointCovariate { name: name.into(), sites, values })
    }

    /// Merge coincident sites, averaging their values.
    pub fn deduplicated(&self) -> PointCovariate {
        let groups = dedup_groups(&self.sites);
        let values = groups.iter().map(|g| g.iter().map(|&i| self.values[i]).sum::<f64>() / g.len() as f64).collect();
        PointCovariate { name: self.name.clone(), sites: groups.iter().map(|g| self.sites[g[0]]).collect(), values }
    }
}

fn dedup_groups(sites: &[Point]) -> Vec<Vec<usize>> {
    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, s) in sites.iter().enumerate() {
        // +0.0 normalizes -0.0 so both zeros share a key.
        let key = ((s[0] + 0.0).to_bits(), (s[1] + 0.0).to_bits());
        match seen.get(&key) {
            Some(&g) => groups[g].push(i),
            None => {
                seen.insert(key, groups.len());
                groups.push(vec![i]);
            }
        }
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrendKind {
    /// Unknown constant mean (ordinary kriging).
    #[default]
    Constant,
    /// Constant plus linear drift in the projected coordinates.
    Linear,
}

/// Trend specification: a built-in basis plus optional covariate columns
/// (one row per site, in site order).
#[derive(Debug, Clone, Default)]
pub struct Trend {
    pub kind: TrendKind,
    pub extra: Option<Vec<Vec<f64>>>,
}

impl Trend {
    pub fn constant() -> Self {
        Trend::default()
    }

    pub fn linear() -> Self {
        Trend { kind: TrendKind::Linear, extra: None }
    }

    fn extra_columns(&self) -> usize {
        self.extra.as_ref().and_then(|rows| rows.first()).map_or(0, Vec::len)
    }
}

/// Fitted Matérn covariance and trend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaternModel {
    pub sill: f64,
    /// Scale of the correlation in projected km.
    pub range: f64,
    pub nugget: f64,
    pub smoothness: f64,
    /// GLS trend coefficients: intercept, drift terms, extra columns.
    pub trend: Vec<f64>,
    pub trend_kind: TrendKind,
    pub extra_columns: usize,
    pub projection: Projection,
    /// Centre and scale applied to projected coordinates in the drift terms.
    pub drift_center: Point,
    pub drift_scale: f64,
    /// Minimized `-2 × restricted log-likelihood` (up to a constant).
    pub reml_objective: f64,
}

/// Matérn correlation at scaled distance `t = h / range`.
pub fn matern_correlation(t: f64, smoothness: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let nu = smoothness;
    if (nu - 0.5).abs() < 1e-12 {
        (-t).exp()
    } else if (nu - 1.5).abs() < 1e-12 {
        (1.0 + t) * (-t).exp()
    } else if (nu - 2.5).abs() < 1e-12 {
        (1.0 + t + t * t / 3.0) * (-t).exp()
    } else {
        if t > 700.0 {
            return 0.0;
        }
        let log_c = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu);
        (log_c + nu * t.ln() + bessel_k_scaled_ln(nu, t)).exp()
    }
}

/// `ln K_ν(x)` from `K_ν(x) = ∫_0^∞ exp(-x cosh u) cosh(ν u) du`, evaluated by
/// the trapezoid rule (exponentially convergent for this integrand).
fn bessel_k_scaled_ln(nu: f64, x: f64) -> f64 {
    let h = 0.02;
    // Work with exp(-x (cosh u - 1)) to avoid underflow; restore e^{-x} at the end.
    let mut sum = 0.5;
    let mut k = 1;
    loop {
        let u = k as f64 * h;
        let term = (-x * (u.cosh() - 1.0) + nu * u).exp() * 0.5 * (1.0 + (-2.0 * nu * u).exp());
        sum += term;
        if term < 1e-18 * sum || k > 100_000 {
            break;
        }
        k += 1;
    }
    (sum * h).ln() - x
}

struct System {
    sites: Vec<Point>,
    values: DVector<f64>,
    design: DMatrix<f64>,
    dist: DMatrix<f64>,
}

fn drift_frame(sites: &[Point]) -> (Point, f64) {
    let n = sites.len() as f64;
    let center = [sites.iter().map(|s| s[0]).sum::<f64>() / n, sites.iter().map(|s| s[1]).sum::<f64>() / n];
    let scale = sites.iter().map(|s| distance(*s, center)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    (center, scale)
}

fn design_row(kind: TrendKind, p: Point, center: Point, scale: f64, extra: Option<&[f64]>) -> Vec<f64> {
    let mut row = vec![1.0];
    if kind == TrendKind::Linear {
        row.push((p[0] - center[0]) / scale);
        row.push((p[1] - center[1]) / scale);
    }
    if let Some(extra) = extra {
        row.extend_from_slice(extra);
    }
    row
}

impl System {
    fn build(cov: &PointCovariate, trend: &Trend, projection: &Projection, frame: Option<(Point, f64)>) -> Result<(Self, Point, f64)> {
        if let Some(rows) = &trend.extra {
            if rows.len() != cov.sites.len() {
                return Err(Error::Data(format!("trend has {} rows for {} sites", rows.len(), cov.sites.len())));
            }
        }
        let groups = dedup_groups(&cov.sites);
        let sites: Vec<Point> = groups.iter().map(|g| projection.project(cov.sites[g[0]])).collect();
        let values =
            DVector::from_iterator(groups.len(), groups.iter().map(|g| g.iter().map(|&i| cov.values[i]).sum::<f64>() / g.len() as f64));
        let extra: Option<Vec<Vec<f64>>> = trend.extra.as_ref().map(|rows| {
            groups
                .iter()
                .map(|g| {
                    let k = rows[g[0]].len();
                    (0..k).map(|j| g.iter().map(|&i| rows[i][j]).sum::<f64>() / g.len() as f64).collect()
                })
                .collect()
        });
        let (center, scale) = frame.unwrap_or_else(|| drift_frame(&sites));
        let q = 1 + if trend.kind == TrendKind::Linear { 2 } else { 0 } + trend.extra_columns();
        let mut design = DMatrix::zeros(sites.len(), q);
        for (i, s) in sites.iter().enumerate() {
            let row = design_row(trend.kind, *s, center, scale, extra.as_ref().map(|e| e[i].as_slice()));
            if row.len() != q {
                return Err(Error::Data(format!("trend row {i} has {} columns, expected {q}", row.len())));
            }
            for (j, v) in row.into_iter().enumerate() {
                design[(i, j)] = v;
            }
        }
        let n = sites.len();
        let dist = DMatrix::from_fn(n, n, |i, j| distance(sites[i], sites[j]));
        Ok((System { sites, values, design, dist }, center, scale))
    }

    fn correlation(&self, range: f64, smoothness: f64) -> DMatrix<f64> {
        self.dist.map(|h| matern_correlation(h / range, smoothness))
    }
}

fn cholesky_with_jitter(mut m: DMatrix<f64>, base: f64) -> Option<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    let mut jitter = 0.0;
    for attempt in 0..8 {
        if let Some(ch) = m.clone().cholesky() {
            return Some(ch);
        }
        let next = base * 1e-12 * 10f64.powi(attempt * 2);
        for i in 0..n {
            m[(i, i)] += next - jitter;
        }
        jitter = next;
    }
    None
}

fn ln_det(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `-2 × restricted log-likelihood` with the scale profiled out, at
/// correlation range `range` and nugget/sill ratio `ratio`.
fn profiled_reml(sys: &System, range: f64, ratio: f64, smoothness: f64) -> f64 {
    let n = sys.sites.len();
    let q = sys.design.ncols();
    let mut v = sys.correlation(range, smoothness);
    for i in 0..n {
        v[(i, i)] += ratio;
    }
    let Some(ch) = cholesky_with_jitter(v, 1.0) else {
        return f64::INFINITY;
    };
    let l = ch.l();
    let Some(ft) = l.solve_lower_triangular(&sys.design) else {
        return f64::INFINITY;
    };
    let Some(yt) = l.solve_lower_triangular(&sys.values) else {
        return f64::INFINITY;
    };
    let g = ft.transpose() * &ft;
    let Some(gch) = g.cholesky() else {
        return f64::INFINITY;
    };
    let beta = gch.solve(&(ft.transpose() * &yt));
    let r = &yt - &ft * beta;
    let rss = r.norm_squared();
    if !(rss > 0.0) {
        return f64::NEG_INFINITY;
    }
    let dof = (n - q) as f64;
    dof * (rss / dof).ln() + ln_det(&ch) + ln_det(&gch)
}

fn check_rank(design: &DMatrix<f64>) -> Result<()> {
    let cols = design.ncols();
    let mut scaled = design.clone();
    for j in 0..cols {
        let norm = scaled.column(j).norm();
        if norm > 0.0 {
            scaled.column_mut(j).scale_mut(1.0 / norm);
        }
    }
    let sv = scaled.svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let rank = sv.iter().filter(|s| **s > 1e-10 * max.max(1e-300)).count();
    if rank < cols {
        return Err(Error::Rank { rank, columns: cols });
    }
    Ok(())
}

/// Fit the Matérn covariance and trend by REML at fixed smoothness.
pub fn fit_kriging(cov: &PointCovariate, trend: &Trend, smoothness: f64, projection: Projection) -> Result<MaternModel> {
    if !(smoothness > 0.0) {
        return Err(Error::Domain(format!("smoothness {smoothness} must be positive")));
    }
    let (sys, center, scale) = System::build(cov, trend, &projection, None)?;
    let n = sys.sites.len();
    if n < 10 {
        return Err(Error::Data(format!("kriging needs at least 10 distinct sites, got {n}")));
    }
    check_rank(&sys.design)?;
    let q = sys.design.ncols();
    if n <= q {
        return Err(Error::Data(format!("{n} sites cannot support {q} trend terms")));
    }

    // Ordinary least squares residuals decide the degenerate no-variance case.
    let xtx = sys.design.transpose() * &sys.design;
    let ols = xtx.cholesky().ok_or(Error::Rank { rank: 0, columns: q })?.solve(&(sys.design.transpose() * &sys.values));
    let resid = &sys.values - &sys.design * &ols;
    let max_abs = sys.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dmax = sys.dist.max().max(f64::MIN_POSITIVE);
    let base = MaternModel {
        sill: 0.0,
        range: dmax,
        nugget: 0.0,
        smoothness,
        trend: ols.iter().copied().collect(),
        trend_kind: trend.kind,
        extra_columns: trend.extra_columns(),
        projection,
        drift_center: center,
        drift_scale: scale,
        reml_objective: f64::NEG_INFINITY,
    };
    if resid.amax() <= 1e-12 * (1.0 + max_abs) {
        return Ok(base);
    }

    let bounds = [((1e-3 * dmax).ln(), (10.0 * dmax).ln()), (1e-8f64.ln(), 1e4f64.ln())];
    let objective = |x: &[f64]| {
        let mut penalty = 0.0;
        let clamped: Vec<f64> = x
            .iter()
            .zip(&bounds)
            .map(|(v, (lo, hi))| {
                let c = v.clamp(*lo, *hi);
                penalty += (v - c) * (v - c);
                c
            })
            .collect();
        profiled_reml(&sys, clamped[0].exp(), clamped[1].exp(), smoothness) + 1e3 * penalty
    };
    let starts = [[0.1, 0.05], [0.1, 1.0], [0.4, 0.05], [0.4, 1.0]];
    let mut best: Option<crate::optim::Minimum> = None;
    let mut any_converged = false;
    for s in starts {
        let m = nelder_mead(objective, &[(s[0] * dmax).ln(), s[1].ln()], &[0.7, 1.0], 1e-8, 600);
        any_converged |= m.converged;
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.expect("four starts");
    if !any_converged || !best.value.is_finite() {
        return Err(Error::Convergence(format!(
            "REML search failed: best objective {} at log(range, ratio) = {:?} after {} iterations",
            best.value, best.x, best.iterations
        )));
    }
    let range = best.x[0].clamp(bounds[0].0, bounds[0].1).exp();
    let ratio = best.x[1].clamp(bounds[1].0, bounds[1].1).exp();

    // Recover the profiled scale and the GLS trend at the optimum.
    let mut v = sys.correlation(range, smoothness);
    for i in 0..n {
        v[(i, i)] += ratio;
    }
    let ch = cholesky_with_jitter(v, 1.0).ok_or_else(|| Error::Convergence("covariance not positive definite at optimum".into()))?;
    let l = ch.l();
    let ft = l.solve_lower_triangular(&sys.design).expect("triangular solve");
    let yt = l.solve_lower_triangular(&sys.values).expect("triangular solve");
    let gch = (ft.transpose() * &ft).cholesky().ok_or(Error::Rank { rank: 0, columns: q })?;
    let beta = gch.solve(&(ft.transpose() * &yt));
    let rss = (&yt - &ft * &beta).norm_squared();
    let sill = rss / (n - q) as f64;
    Ok(MaternModel { sill, range, nugget: ratio * sill, trend: beta.iter().copied().collect(), reml_objective: best.value, ..base })
}

/// Kriging predictions at target points.
#[derive(Debug, Clone, PartialEq)]
pub struct KrigingPrediction {
    pub mean: Vec<f64>,
    /// Prediction variance of a new observation (includes the nugget).
    pub variance: Vec<f64>,
    /// True where the target is effectively uncorrelated with every site.
    pub extrapolated: Vec<bool>,
}

/// Predict at `targets` from a fitted model. `target_extra` supplies the
/// extra trend columns at the targets when the trend has any.
pub fn krige_predict(
    model: &MaternModel,
    cov: &PointCovariate,
    trend: &Trend,
    targets: &[Point],
    target_extra: Option<&[Vec<f64>]>,
) -> Result<KrigingPrediction> {
    if model.extra_columns > 0 && target_extra.is_none_or(|rows| rows.len() != targets.len()) {
        return Err(Error::Data("extra trend columns required at every target".into()));
    }
    let (sys, center, scale) = System::build(cov, trend, &model.projection, Some((model.drift_center, model.drift_scale)))?;
    let n = sys.sites.len();
    let q = sys.design.ncols();
    let target_rows: Vec<(Point, Vec<f64>)> = targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let p = model.projection.project(*t);
            let extra = target_extra.map(|rows| rows[i].as_slice());
            (p, design_row(model.trend_kind, p, center, scale, extra))
        })
        .collect();

    let total = model.sill + model.nugget;
    if total <= 0.0 {
        // No residual variation: the trend is the whole prediction.
        let mean = target_rows.iter().map(|(_, f0)| f0.iter().zip(&model.trend).map(|(a, b)| a * b).sum()).collect();
        return Ok(KrigingPrediction { mean, variance: vec![0.0; targets.len()], extrapolated: vec![false; targets.len()] });
    }

    let mut c = sys.correlation(model.range, model.smoothness) * model.sill;
    for i in 0..n {
        c[(i, i)] += model.nugget;
    }
    let ch = cholesky_with_jitter(c, total).ok_or_else(|| Error::Data("kriging covariance is singular".into()))?;
    let l = ch.l();
    let ft = l.solve_lower_triangular(&sys.design).expect("triangular solve");
    let yt = l.solve_lower_triangular(&sys.values).expect("triangular solve");
    let gch = (ft.transpose() * &ft).cholesky().ok_or(Error::Rank { rank: 0, columns: q })?;
    let ginv = gch.inverse();
    let beta = &ginv * (ft.transpose() * &yt);
    let alpha = ch.solve(&(&sys.values - &sys.design * &beta));

    let results: Vec<(f64, f64, bool)> = target_rows
        .par_iter()
        .map(|(p, f0)| {
            let c0 = DVector::from_iterator(
                n,
                sys.sites.iter().map(|s| model.sill * matern_correlation(distance(*s, *p) / model.range, model.smoothness)),
            );
            let max_corr = c0.iter().cloned().fold(0.0, f64::max) / model.sill.max(f64::MIN_POSITIVE);
            let w = l.solve_lower_triangular(&c0).expect("triangular solve");
            let f0v = DVector::from_column_slice(f0);
            let mean = f0v.dot(&beta) + c0.dot(&alpha);
            let u = &f0v - ft.transpose() * &w;
            let var = model.sill + model.nugget - w.norm_squared() + (u.transpose() * &ginv * &u)[(0, 0)];
            (mean, var.max(0.0), max_corr < 1e-3)
        })
        .collect();
    Ok(KrigingPrediction {
        mean: results.iter().map(|r| r.0).collect(),
        variance: results.iter().map(|r| r.1).collect(),
        extrapolated: results.iter().map(|r| r.2).collect(),
    })
}

/// Leave-one-out predictions at every (deduplicated) site with the model's
/// covariance parameters held fixed. Returns `(observed, mean, variance)`.
pub fn leave_one_out(model: &MaternModel, cov: &PointCovariate, trend: &Trend) -> Result<Vec<(f64, f64, f64)>> {
    if trend.extra.is_some() {
        return Err(Error::Data("leave-one-out supports built-in trends only".into()));
    }
    let dedup = cov.deduplicated();
    let n = dedup.sites.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let sub = PointCovariate {
                name: dedup.name.clone(),
                sites: keep.iter().map(|&j| dedup.sites[j]).collect(),
                values: keep.iter().map(|&j| dedup.values[j]).collect(),
            };
            let pred = krige_predict(model, &sub, trend, &[dedup.sites[i]], None)?;
            Ok((dedup.values[i], pred.mean[0], pred.variance[0]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn matern_closed_forms_match_bessel_route() {
        for &t in &[0.01f64, 0.3, 1.0, 2.5, 7.0] {
            let closed = (1.0 + t) * (-t).exp();
            let general = matern_correlation(t, 1.5 + 1e-9);
            assert!((closed - general).abs() < 1e-7, "t={t}: {closed} vs {general}");
            let closed = (-t).exp();
            let general = matern_correlation(t, 0.5 + 1e-9);
            assert!((closed - general).abs() < 1e-7, "t={t}: {closed} vs {general}");
        }
        assert_eq!(matern_correlation(0.0, 1.5), 1.0);
    }

    fn random_covariate(n: usize, seed_index: u64) -> PointCovariate {
        let mut rng = seed::stream(1, "kriging-unit", seed_index);
        let sites: Vec<Point> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let values = sites.iter().map(|s| (3.0 * s[0]).sin() + s[1] + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        PointCovariate::new("x", sites, values).unwrap()
    }

    #[test]
    fn exact_interpolation_without_nugget() {
        let cov = random_covariate(40, 0);
        let model = MaternModel {
            sill: 1.0,
            range: 0.3,
            nugget: 0.0,
            smoothness: 1.5,
            trend: vec![0.0],
            trend_kind: TrendKind::Constant,
            extra_columns: 0,
            projection: Projection::planar(),
            drift_center: [0.5, 0.5],
            drift_scale: 1.0,
            reml_objective: 0.0,
        };
        let pred = krige_predict(&model, &cov, &Trend::constant(), &cov.sites, None).unwrap();
        for i in 0..cov.sites.len() {
            assert!((pred.mean[i] - cov.values[i]).abs() < 1e-8);
            assert!(pred.variance[i] < 1e-8);
        }
    }

    #[test]
    fn constant_covariate_collapses_to_trend() {
        let mut cov = random_covariate(30, 1);
        cov.values.iter_mut().for_each(|v| *v = 4.25);
        let model = fit_kriging(&cov, &Trend::constant(), 1.5, Projection::planar()).unwrap();
        assert_eq!(model.sill, 0.0);
        let pred = krige_predict(&model, &cov, &Trend::constant(), &[[0.2, 0.9], [5.0, 5.0]], None).unwrap();
        assert!(pred.mean.iter().all(|m| (m - 4.25).abs() < 1e-12));
    }

    #[test]
    fn duplicate_sites_fit_like_deduplicated_input() {
        let cov = random_covariate(30, 2);
        let mut doubled = cov.clone();
        doubled.sites.push(cov.sites[3]);
        doubled.values.push(cov.values[3]);
        let a = fit_kriging(&cov, &Trend::constant(), 1.5, Projection::planar()).unwrap();
        let b = fit_kriging(&doubled, &Trend::constant(), 1.5, Projection::planar()).unwrap();
        assert_eq!(a, b);
        assert_eq!(doubled.deduplicated().sites.len(), 30);
    }

    #[test]
    fn too_few_sites_and_rank_deficiency() {
        let cov = random_covariate(5, 3);
        assert!(fit_kriging(&cov, &Trend::constant(), 1.5, Projection::planar()).is_err());
        let cov = random_covariate(20, 4);
        let trend = Trend { kind: TrendKind::Constant, extra: Some(vec![vec![2.0]; 20]) };
        assert!(matches!(fit_kriging(&cov, &trend, 1.5, Projection::planar()), Err(Error::Rank { .. })));
    }

    #[test]
    fn far_field_reverts_to_trend() {
        let cov = random_covariate(40, 5);
        let model = MaternModel {
            sill: 1.0,
            range: 0.1,
            nugget: 0.1,
            smoothness: 1.5,
            trend: vec![0.0],
            trend_kind: TrendKind::Constant,
            extra_columns: 0,
            projection: Projection::planar(),
            drift_center: [0.5, 0.5],
            drift_scale: 1.0,
            reml_objective: 0.0,
        };
        let pred = krige_predict(&model, &cov, &Trend::constant(), &[[1e4, 1e4]], None).unwrap();
        assert!(pred.extrapolated[0]);

        // Far away only the GLS mean survives: its estimate and its variance.
        let n = cov.sites.len();
        let c = DMatrix::from_fn(n, n, |i, j| {
            let h = distance(cov.sites[i], cov.sites[j]);
            matern_correlation(h / 0.1, 1.5) + if i == j { 0.1 } else { 0.0 }
        });
        let cinv = c.try_inverse().unwrap();
        let ones = DVector::from_element(n, 1.0);
        let precision = ones.dot(&(&cinv * &ones));
        let gls_mean = ones.dot(&(&cinv * DVector::from_column_slice(&cov.values))) / precision;
        assert!((pred.mean[0] - gls_mean).abs() < 1e-9);
        assert!((pred.variance[0] - (1.1 + 1.0 / precision)).abs() < 1e-9);
    }

    #[test]
    fn shift_and_permutation_invariances() {
        let cov = random_covariate(40, 6);
        let model = fit_kriging(&cov, &Trend::linear(), 1.5, Projection::planar()).unwrap();
        let targets = [[0.1, 0.2], [0.55, 0.45], [0.9, 0.05]];
        let base = krige_predict(&model, &cov, &Trend::linear(), &targets, None).unwrap();

        let mut shifted = cov.clone();
        shifted.values.iter_mut().for_each(|v| *v += 10.0);
        let moved = krige_predict(&model, &shifted, &Trend::linear(), &targets, None).unwrap();
        for i in 0..targets.len() {
            assert!((moved.mean[i] - base.mean[i] - 10.0).abs() < 1e-9);
        }

        let mut permuted = cov.clone();
        permuted.values.reverse();
        let perm = krige_predict(&model, &permuted, &Trend::linear(), &targets, None).unwrap();
        for i in 0..targets.len() {
            assert!((perm.variance[i] - base.variance[i]).abs() < 1e-12);
        }
    }
}
