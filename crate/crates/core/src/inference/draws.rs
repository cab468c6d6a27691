//! Posterior draws, convergence diagnostics, and their file formats.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sampler::BlockStats;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub block: String,
    /// Acceptance rate after warmup, one entry per chain.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub parameters: Vec<ParameterSummary>,
    pub acceptance: Vec<BlockAcceptance>,
}

impl SamplerDiagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.parameters.iter().map(|p| p.rhat).fold(1.0, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.parameters.iter().map(|p| p.ess).fold(f64::INFINITY, f64::min)
    }
}

/// Post-warmup draws stored chain-major: draw `d` of chain `c` is row
/// `c * draws_per_chain + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub values: Vec<f64>,
    pub diagnostics: SamplerDiagnostics,
}

impl PosteriorDraws {
    pub(crate) fn from_chains(
        names: Vec<String>,
        chains: Vec<(Vec<f64>, Vec<BlockStats>)>,
        iterations: usize,
        warmup: usize,
        seed: u64,
    ) -> Self {
        let n_chains = chains.len();
        let draws_per_chain = iterations - warmup;
        let mut values = Vec::with_capacity(n_chains * draws_per_chain * names.len());
        let mut acceptance: Vec<BlockAcceptance> = Vec::new();
        for (draws, stats) in &chains {
            values.extend_from_slice(draws);
            for (k, s) in stats.iter().enumerate() {
                if acceptance.len() <= k {
                    acceptance.push(BlockAcceptance { block: s.name.clone(), rates: Vec::new() });
                }
                acceptance[k].rates.push(if s.proposed == 0 { 0.0 } else { s.accepted as f64 / s.proposed as f64 });
            }
        }
        let mut out = PosteriorDraws {
            names,
            chains: n_chains,
            draws_per_chain,
            values,
            diagnostics: SamplerDiagnostics { chains: n_chains, iterations, warmup, seed, parameters: Vec::new(), acceptance },
        };
        out.diagnostics.parameters = (0..out.names.len()).map(|p| out.summarize(p)).collect();
        out
    }

    pub fn n_draws(&self) -> usize {
        self.chains * self.draws_per_chain
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn row(&self, draw: usize) -> &[f64] {
        let n = self.names.len();
        &self.values[draw * n..(draw + 1) * n]
    }

    pub fn column(&self, p: usize) -> Vec<f64> {
        (0..self.n_draws()).map(|d| self.row(d)[p]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.index(name).map(|p| self.column(p))
    }

    fn chain_columns(&self, p: usize) -> Vec<Vec<f64>> {
        (0..self.chains).map(|c| (0..self.draws_per_chain).map(|d| self.row(c * self.draws_per_chain + d)[p]).collect()).collect()
    }

    fn summarize(&self, p: usize) -> ParameterSummary {
        let chains = self.chain_columns(p);
        let all: Vec<f64> = chains.iter().flatten().copied().collect();
        let (mean, var) = mean_var(&all);
        ParameterSummary {
            name: self.names[p].clone(),
            mean,
            sd: var.sqrt(),
            rhat: split_rhat(&chains),
            ess: effective_sample_size(&chains),
        }
    }

    /// Draws for a subset of rows, keeping names and diagnostics.
    pub fn with_rows(&self, rows: &[usize]) -> PosteriorDraws {
        let mut values = Vec::with_capacity(rows.len() * self.n_params());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        PosteriorDraws { names: self.names.clone(), chains: 1, draws_per_chain: rows.len(), values, diagnostics: self.diagnostics.clone() }
    }

    /// Copy with extra parameters appended; each column holds one value per draw.
    pub fn with_columns(&self, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<PosteriorDraws> {
        if let Some(c) = columns.iter().find(|c| c.len() != self.n_draws()) {
            return Err(Error::Data(format!("appended column has {} values for {} draws", c.len(), self.n_draws())));
        }
        if let Some(n) = names.iter().find(|n| self.index(n).is_some()) {
            return Err(Error::Data(format!("parameter {n} already present")));
        }
        let width = self.n_params() + names.len();
        let mut values = Vec::with_capacity(self.n_draws() * width);
        for d in 0..self.n_draws() {
            values.extend_from_slice(self.row(d));
            values.extend(columns.iter().map(|c| c[d]));
        }
        let mut out = PosteriorDraws {
            names: self.names.iter().cloned().chain(names).collect(),
            chains: self.chains,
            draws_per_chain: self.draws_per_chain,
            values,
            diagnostics: self.diagnostics.clone(),
        };
        for p in self.n_params()..width {
            let s = out.summarize(p);
            out.diagnostics.parameters.push(s);
        }
        Ok(out)
    }

    /// `chain,draw,<names...>` with one row per post-warmup draw.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header = vec!["chain".to_string(), "draw".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for c in 0..self.chains {
            for d in 0..self.draws_per_chain {
                let mut rec = vec![c.to_string(), d.to_string()];
                rec.extend(self.row(c * self.draws_per_chain + d).iter().map(|v| v.to_string()));
                w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Inverse of [`write_csv`](Self::write_csv); diagnostics are recomputed.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::schema(path, format!("cannot open file: {e}")),
            _ => Error::csv(path, e),
        })?;
        let headers: Vec<String> = r.headers().map_err(|e| Error::csv(path, e))?.iter().map(String::from).collect();
        if headers.len() < 2 || headers[0] != "chain" || headers[1] != "draw" {
            return Err(Error::schema(path, "draws file must start with columns `chain,draw`"));
        }
        let names = headers[2..].to_vec();
        let mut values = Vec::new();
        let mut chain_of_row = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let chain: usize = rec[0].parse().map_err(|_| Error::schema(path, format!("column `chain` row {}: not an index", i + 1)))?;
            chain_of_row.push(chain);
            for (k, field) in rec.iter().enumerate().skip(2) {
                let v: f64 =
                    field.parse().map_err(|_| Error::schema(path, format!("column `{}` row {}: not a number", headers[k], i + 1)))?;
                values.push(v);
            }
        }
        let chains = chain_of_row.iter().max().map_or(0, |m| m + 1);
        let rows = chain_of_row.len();
        if chains == 0 || rows % chains != 0 || chain_of_row.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::schema(path, "draws must be grouped by chain with equal chain lengths"));
        }
        let mut out = PosteriorDraws {
            names,
            chains,
            draws_per_chain: rows / chains,
            values,
            diagnostics: SamplerDiagnostics { chains, ..Default::default() },
        };
        out.diagnostics.parameters = (0..out.names.len()).map(|p| out.summarize(p)).collect();
        Ok(out)
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 { x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, v)
}

/// Split-R̂: each chain is halved and the potential scale reduction computed
/// over the halves. Constant parameters report 1.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::new();
    for c in chains {
        let h = c.len() / 2;
        if h < 2 {
            return f64::NAN;
        }
        halves.push(&c[..h]);
        halves.push(&c[c.len() - h..]);
    }
    rhat(&halves)
}

fn rhat(seqs: &[&[f64]]) -> f64 {
    let n = seqs[0].len() as f64;
    let stats: Vec<(f64, f64)> = seqs.iter().map(|s| mean_var(s)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let (_, var_means) = mean_var(&means);
    let var_plus = (n - 1.0) / n * w + var_means;
    if w <= 0.0 {
        return if var_plus <= 1e-300 { 1.0 } else { f64::INFINITY };
    }
    (var_plus / w).sqrt()
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(&c[..n])).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let var_means = if m > 1 { mean_var(&means).1 } else { 0.0 };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + var_means;
    if !(var_plus > 0.0) {
        return (m * n) as f64;
    }
    let acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&stats)
            .map(|(c, (mean, _))| (0..n - lag).map(|t| (c[t] - mean) * (c[t + lag] - mean)).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    // Chain variances in the biased form to match the autocovariances.
    let w_biased = w * (n as f64 - 1.0) / n as f64;
    let rho = |lag: usize| 1.0 - (w_biased - acov(lag)) / var_plus;

    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / ((m * n) as f64).log10());
    (m * n) as f64 / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ar1(n: usize, a: f64, seed: u64) -> Vec<f64> {
        let mut rng = crate::seed::stream(seed, "ar1", 0);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                x = a * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn iid_chains_have_unit_rhat_and_full_ess() {
        let chains: Vec<Vec<f64>> = (0..4).map(|s| ar1(1000, 0.0, s)).collect();
        let r = split_rhat(&chains);
        assert!((r - 1.0).abs() < 0.01, "{r}");
        let ess = effective_sample_size(&chains);
        assert!(ess > 3000.0 && ess < 5000.0, "{ess}");
    }

    #[test]
    fn ess_tracks_ar1_autocorrelation() {
        // For AR(1) the integrated time is (1 + a) / (1 - a).
        let chains: Vec<Vec<f64>> = (0..4).map(|s| ar1(5000, 0.8, 10 + s)).collect();
        let ess = effective_sample_size(&chains);
        let want = 20_000.0 / 9.0;
        assert!((ess / want - 1.0).abs() < 0.25, "{ess} vs {want}");
    }

    #[test]
    fn separated_chains_are_flagged() {
        let mut chains: Vec<Vec<f64>> = (0..4).map(|s| ar1(500, 0.0, 20 + s)).collect();
        for v in &mut chains[0] {
            *v += 5.0;
        }
        assert!(split_rhat(&chains) > 1.5);
    }

    #[test]
    fn csv_round_trip() {
        let stats = vec![BlockStats { name: "b".into(), accepted: 1, proposed: 2, step: 0.1 }];
        let chains = vec![(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], stats.clone()), (vec![0.5; 8], stats)];
        let d = PosteriorDraws::from_chains(vec!["a".into(), "b[x]".into()], chains, 6, 2, 7);
        assert_eq!(d.n_draws(), 8);
        assert_eq!(d.diagnostics.acceptance[0].rates, vec![0.5, 0.5]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("draws.csv");
        d.write_csv(&path).unwrap();
        let back = PosteriorDraws::read_csv(&path).unwrap();
        assert_eq!(back.values, d.values);
        assert_eq!(back.names, d.names);
        assert_eq!(back.chains, 2);
    }
}
