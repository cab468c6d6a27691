//! Adaptive Metropolis-within-Gibbs over parameter blocks.
//!
//! Warmup runs in eighths. Multi-dimensional blocks are updated one
//! coordinate at a time in the first eighth; at each later boundary their
//! proposal covariance is re-estimated from the latter half of the warmup
//! states so far and they switch to joint Gaussian random-walk moves. Step sizes follow a
//! Robbins–Monro recursion on the log scale throughout warmup and are frozen
//! afterwards.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::spec::SamplerConfig;
use crate::error::{Error, Result};
use crate::seed::{stream, Rng};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum BlockKind {
    /// Changes the likelihood; the model recomputes the affected cache.
    Likelihood,
    /// Leaves the likelihood untouched; only prior terms move.
    PriorOnly,
    /// One-dimensional move `theta += delta * direction` over `indices`,
    /// likelihood-invariant by construction.
    Shift(Vec<f64>),
}

#[derive(Debug, Clone)]
pub(crate) struct Block<T> {
    pub name: String,
    pub indices: Vec<usize>,
    pub kind: BlockKind,
    pub tag: T,
}

impl<T> Block<T> {
    fn dim(&self) -> usize {
        match self.kind {
            BlockKind::Shift(_) => 1,
            _ => self.indices.len(),
        }
    }
}

/// A posterior the sampler can walk over, with incremental likelihood updates.
pub(crate) trait Target: Sync {
    type Tag: Clone + Send + Sync;
    type Cache: Clone + Send;

    /// Names of the unconstrained coordinates.
    fn param_names(&self) -> Vec<String>;
    fn blocks(&self) -> Vec<Block<Self::Tag>>;
    /// Starting point before per-chain jitter.
    fn initial(&self) -> Vec<f64>;
    fn cache(&self, theta: &[f64]) -> Self::Cache;
    fn loglik(&self, cache: &Self::Cache) -> f64;
    /// Write into `scratch` the cache entries that `block` affects at `theta`
    /// and return the resulting total log-likelihood. All other entries of
    /// `scratch` already equal those of `cache`.
    fn propose(&self, block: &Block<Self::Tag>, theta: &[f64], cache: &Self::Cache, scratch: &mut Self::Cache) -> f64;
    /// Copy the entries `block` affects from `from` into `to`.
    fn sync(&self, block: &Block<Self::Tag>, from: &Self::Cache, to: &mut Self::Cache);
    /// Log prior on the unconstrained scale, Jacobians included.
    fn log_prior(&self, theta: &[f64]) -> f64;
    fn output_names(&self) -> Vec<String>;
    fn output(&self, theta: &[f64], out: &mut [f64]);
}

/// Per-block acceptance over the sampling phase.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStats {
    pub name: String,
    pub accepted: u64,
    pub proposed: u64,
    pub step: f64,
}

pub(crate) struct ChainOutput {
    pub draws: Vec<f64>,
    pub stats: Vec<BlockStats>,
}

struct Adapt {
    dim: usize,
    log_step: f64,
    comp_log_step: Vec<f64>,
    chol: DMatrix<f64>,
    joint: bool,
    steps: u64,
    accepted: u64,
    proposed: u64,
}

fn finite_or_neg_inf(x: f64) -> f64 {
    if x.is_nan() {
        f64::NEG_INFINITY
    } else {
        x
    }
}

/// Run all chains, in parallel, each on its own derived stream.
pub(crate) fn run<M: Target>(model: &M, config: &SamplerConfig) -> Result<Vec<ChainOutput>> {
    config.validate()?;
    let start = model.initial();
    (0..config.chains).into_par_iter().map(|c| run_chain(model, config, &start, c)).collect()
}

fn run_chain<M: Target>(model: &M, config: &SamplerConfig, start: &[f64], chain: usize) -> Result<ChainOutput> {
    let mut rng: Rng = stream(config.seed, "chain", chain as u64);
    let blocks = model.blocks();
    let mut theta = start.to_vec();
    for t in theta.iter_mut() {
        *t += config.init_jitter * (2.0 * rng.random::<f64>() - 1.0);
    }
    let mut cache = model.cache(&theta);
    let mut ll = model.loglik(&cache);
    let mut lp = model.log_prior(&theta);
    if !(ll.is_finite() && lp.is_finite()) {
        let report: Vec<String> = model.param_names().iter().zip(&theta).map(|(n, v)| format!("{n}={v:.4}")).collect();
        return Err(Error::Initialization(format!("chain {chain}: log-likelihood {ll}, log-prior {lp} at [{}]", report.join(", "))));
    }
    let mut scratch = cache.clone();

    let mut adapt: Vec<Adapt> = blocks
        .iter()
        .map(|b| {
            let d = b.dim();
            Adapt {
                dim: d,
                log_step: if d > 1 { (2.38 / (d as f64).sqrt()).ln() + config.initial_step.ln() } else { config.initial_step.ln() },
                comp_log_step: vec![config.initial_step.ln(); d],
                chol: DMatrix::identity(d, d),
                joint: d == 1 || config.warmup < 4,
                steps: 0,
                accepted: 0,
                proposed: 0,
            }
        })
        .collect();

    let n_out = model.output_names().len();
    let n_draws = config.draws_per_chain();
    let mut draws = vec![0.0; n_draws * n_out];
    let eighth = config.warmup / 8;
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(config.warmup);
    let mut proposal = theta.clone();

    for iter in 0..config.iterations {
        let warming = iter < config.warmup;
        if warming && eighth > 0 && iter > 0 && iter % eighth == 0 && iter / eighth <= 7 {
            refresh_covariances(&blocks, &mut adapt, &history[iter / 2..iter]);
        }
        if iter == config.warmup {
            for a in adapt.iter_mut() {
                a.accepted = 0;
                a.proposed = 0;
            }
        }

        for (b, block) in blocks.iter().enumerate() {
            let a = &mut adapt[b];
            let updates: Vec<Option<usize>> = if a.joint { vec![None] } else { (0..a.dim).map(Some).collect() };
            for comp in updates {
                proposal.copy_from_slice(&theta);
                let step = match comp {
                    Some(k) => a.comp_log_step[k].exp(),
                    None => a.log_step.exp(),
                };
                match (&block.kind, comp) {
                    (BlockKind::Shift(dir), _) => {
                        let delta = step * rng.sample::<f64, _>(StandardNormal);
                        for (i, w) in block.indices.iter().zip(dir) {
                            proposal[*i] += delta * w;
                        }
                    }
                    (_, Some(k)) => {
                        proposal[block.indices[k]] += step * rng.sample::<f64, _>(StandardNormal);
                    }
                    (_, None) => {
                        let eps = DVector::from_fn(a.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                        let move_ = &a.chol * eps;
                        for (k, i) in block.indices.iter().enumerate() {
                            proposal[*i] += step * move_[k];
                        }
                    }
                }

                let lp_new = finite_or_neg_inf(model.log_prior(&proposal));
                let ll_new = if lp_new == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else if block.kind == BlockKind::Likelihood {
                    finite_or_neg_inf(model.propose(block, &proposal, &cache, &mut scratch))
                } else {
                    ll
                };
                let log_ratio = (ll_new + lp_new) - (ll + lp);
                let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
                if accept {
                    theta.copy_from_slice(&proposal);
                    ll = ll_new;
                    lp = lp_new;
                    if block.kind == BlockKind::Likelihood {
                        model.sync(block, &scratch, &mut cache);
                    }
                } else if block.kind == BlockKind::Likelihood && lp_new != f64::NEG_INFINITY {
                    model.sync(block, &cache, &mut scratch);
                }
                a.proposed += 1;
                a.accepted += accept as u64;

                if warming {
                    a.steps += 1;
                    let gain = (a.steps as f64).powf(-0.6).min(1.0);
                    let (target, log_step) = match comp {
                        Some(k) => (config.target_accept_1d, &mut a.comp_log_step[k]),
                        None if a.dim == 1 => (config.target_accept_1d, &mut a.log_step),
                        None => (config.target_accept_nd, &mut a.log_step),
                    };
                    *log_step = (*log_step + gain * (accept as u8 as f64 - target)).clamp(-25.0, 10.0);
                }
            }
        }

        if warming {
            history.push(theta.clone());
        } else {
            let row = iter - config.warmup;
            model.output(&theta, &mut draws[row * n_out..(row + 1) * n_out]);
        }
    }

    let stats = blocks
        .iter()
        .zip(&adapt)
        .map(|(b, a)| BlockStats { name: b.name.clone(), accepted: a.accepted, proposed: a.proposed, step: a.log_step.exp() })
        .collect();
    Ok(ChainOutput { draws, stats })
}

/// Re-estimate joint proposal shapes from recent warmup states.
fn refresh_covariances<T>(blocks: &[Block<T>], adapt: &mut [Adapt], window: &[Vec<f64>]) {
    let n = window.len();
    if n < 2 {
        return;
    }
    for (block, a) in blocks.iter().zip(adapt.iter_mut()) {
        if a.dim < 2 {
            continue;
        }
        let d = a.dim;
        let mut mean = DVector::zeros(d);
        for s in window {
            for (k, i) in block.indices.iter().enumerate() {
                mean[k] += s[*i];
            }
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        for s in window {
            let v = DVector::from_iterator(d, block.indices.iter().map(|i| s[*i])) - &mean;
            cov += &v * v.transpose();
        }
        cov /= (n - 1) as f64;
        // Shrink towards a small diagonal so a short window never yields a
        // singular proposal.
        let floor = 1e-10;
        let weight = n as f64 / (n as f64 + 5.0);
        let scale_diag = cov.diagonal().mean().max(floor);
        let mut shrunk = cov * weight;
        for k in 0..d {
            shrunk[(k, k)] += (1.0 - weight) * 1e-3 * scale_diag + floor;
        }
        if let Some(ch) = shrunk.cholesky() {
            a.chol = ch.l();
            if !a.joint {
                a.joint = true;
                a.steps = 0;
                a.log_step = (2.38 / (d as f64).sqrt()).ln();
            }
        }
    }
}

/// Walk every block as the sampler does, accepting each move, and check the
/// incrementally maintained cache against a fresh one after every step.
#[cfg(test)]
pub(crate) fn assert_cache_consistent<M: Target>(model: &M, theta0: &[f64], sweeps: usize, seed: u64) {
    let mut rng: Rng = stream(seed, "cache-walk", 0);
    let blocks = model.blocks();
    let mut theta = theta0.to_vec();
    let mut cache = model.cache(&theta);
    let mut scratch = cache.clone();
    for sweep in 0..sweeps {
        for block in &blocks {
            let mut proposal = theta.clone();
            match &block.kind {
                BlockKind::Shift(dir) => {
                    let delta = 0.3 * rng.sample::<f64, _>(StandardNormal);
                    for (i, w) in block.indices.iter().zip(dir) {
                        proposal[*i] += delta * w;
                    }
                }
                _ => {
                    for i in &block.indices {
                        proposal[*i] += 0.1 * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            if block.kind == BlockKind::Likelihood {
                let ll = model.propose(block, &proposal, &cache, &mut scratch);
                let fresh = model.loglik(&model.cache(&proposal));
                assert!((ll - fresh).abs() < 1e-8 * (1.0 + fresh.abs()), "sweep {sweep} block {}: {ll} vs {fresh}", block.name);
                model.sync(block, &scratch, &mut cache);
            }
            theta = proposal;
            let fresh = model.loglik(&model.cache(&theta));
            let cached = model.loglik(&cache);
            assert!((cached - fresh).abs() < 1e-8 * (1.0 + fresh.abs()), "after sweep {sweep} block {}: {cached} vs {fresh}", block.name);
        }
    }
}
