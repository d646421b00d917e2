//! Parallel simulated annealing for acquisition maximization.
//!
//! Chains are independent seeded tasks: random starts in the box, Gaussian
//! proposals clipped to it, Metropolis acceptance on the log-acquisition,
//! geometric cooling. The reduction picks the best point with ties broken
//! by the lowest chain index, so results are deterministic under a seed.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};

use super::samplers::scrambled_probe;

/// Annealing schedule parameters.
#[derive(Debug, Clone)]
pub struct AnnealConfig {
    /// Number of independent chains.
    pub chains: usize,
    /// Proposals per chain.
    pub steps: usize,
    /// Starting temperature; `None` estimates it from the log-acquisition
    /// spread over a 64-point probe.
    pub initial_temperature: Option<f64>,
    /// Geometric cooling factor in (0, 1).
    pub cooling: f64,
    /// Proposal standard deviation as a fraction of each domain width.
    pub proposal_frac: f64,
    /// Base seed for chain RNGs.
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            steps: 500,
            initial_temperature: None,
            cooling: 0.97,
            proposal_frac: 0.1,
            seed: 0,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.steps == 0 {
            return Err(Error::InvalidInput("annealing needs at least one chain and step".into()));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::InvalidInput(format!("cooling {} must lie in (0,1)", self.cooling)));
        }
        if !(self.proposal_frac > 0.0) {
            return Err(Error::InvalidInput("proposal fraction must be positive".into()));
        }
        if let Some(t) = self.initial_temperature {
            if !(t > 0.0) {
                return Err(Error::InvalidInput(format!("initial temperature {t} must be positive")));
            }
        }
        Ok(())
    }
}

/// Estimate a starting temperature from the objective spread over a
/// low-discrepancy probe.
fn auto_temperature<F>(domain: &[(f64, f64)], log_acq: &F, seed: u64) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let probe = match scrambled_probe(domain, 64, seed) {
        Ok(p) => p,
        Err(_) => return 1.0,
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in &probe {
        let v = log_acq(p);
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi > lo {
        hi - lo
    } else {
        1.0
    }
}

fn run_chain<F>(
    domain: &[(f64, f64)],
    log_acq: &F,
    cfg: &AnnealConfig,
    t0: f64,
    chain_seed: u64,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut rng = stream_rng(chain_seed, 0x616e6e65);
    let widths: Vec<f64> = domain.iter().map(|&(lo, hi)| hi - lo).collect();
    let mut current: Vec<f64> =
        domain.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
    let mut current_val = log_acq(&current);
    let mut best = current.clone();
    let mut best_val = current_val;
    let mut temp = t0;

    for _ in 0..cfg.steps {
        let proposal: Vec<f64> = current
            .iter()
            .zip(domain.iter().zip(&widths))
            .map(|(&x, (&(lo, hi), &w))| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (x + cfg.proposal_frac * w * z).clamp(lo, hi)
            })
            .collect();
        let val = log_acq(&proposal);
        let accept = if val >= current_val {
            true
        } else {
            rng.random_range(0.0..1.0) < ((val - current_val) / temp).exp()
        };
        if accept {
            current = proposal;
            current_val = val;
            if val > best_val {
                best = current.clone();
                best_val = val;
            }
        }
        temp *= cfg.cooling;
    }
    (best, best_val)
}

/// Best point over all chains; the value is the log-acquisition there
/// (`-inf` when every chain collapsed onto zero acquisition).
pub(crate) fn maximize<F>(domain: &[(f64, f64)], log_acq: &F, cfg: &AnnealConfig, stream: u64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let t0 = cfg
        .initial_temperature
        .unwrap_or_else(|| auto_temperature(domain, log_acq, derive_seed(cfg.seed, stream)));
    let results: Vec<(Vec<f64>, f64)> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let chain_seed = derive_seed(cfg.seed, stream.wrapping_mul(0x1_0000).wrapping_add(c as u64));
            run_chain(domain, log_acq, cfg, t0, chain_seed)
        })
        .collect();
    let mut best = results[0].clone();
    for r in results.into_iter().skip(1) {
        if r.1 > best.1 {
            best = r;
        }
    }
    best
}
