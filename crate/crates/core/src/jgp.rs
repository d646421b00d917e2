//! Joint GP over pooled real and simulated samples.
//!
//! Observation noise is `noise^2` for real rows and `noise^2 / gamma` for
//! simulated rows, giving the covariance `K + noise^2 V` with `V` diagonal.
//! Hyperparameters are selected by maximizing the leave-one-out
//! pseudo-likelihood of the real rows only.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gp::{argmax_candidates, log_space, Dataset, HyperGrid};
use crate::kernels::SeKernel;
use crate::linalg::{factorize_default, SpdFactorization};

/// Origin of a training row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFlag {
    Real,
    Simulated,
}

/// Inputs and targets with a per-row real/simulated flag. Ordering is
/// free; the weight matrix is built from the flags, not from position.
#[derive(Debug, Clone)]
pub struct TaggedDataset {
    inputs: Array2<f64>,
    targets: Array1<f64>,
    flags: Vec<SourceFlag>,
}

impl TaggedDataset {
    pub fn new(inputs: Array2<f64>, targets: Array1<f64>, flags: Vec<SourceFlag>) -> Result<Self> {
        if inputs.nrows() != flags.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows vs {} flags",
                inputs.nrows(),
                flags.len()
            )));
        }
        if !flags.iter().any(|f| *f == SourceFlag::Real) {
            return Err(Error::InvalidInput("tagged dataset needs at least one real row".into()));
        }
        // Re-use the plain dataset checks for finiteness and row counts.
        Dataset::new(inputs.clone(), targets.clone())?;
        Ok(Self { inputs, targets, flags })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn targets(&self) -> &Array1<f64> {
        &self.targets
    }

    pub fn flags(&self) -> &[SourceFlag] {
        &self.flags
    }

    pub fn real_count(&self) -> usize {
        self.flags.iter().filter(|f| **f == SourceFlag::Real).count()
    }

    /// Drop the flags, pooling everything as if real.
    pub fn pooled(&self) -> Dataset {
        Dataset::new(self.inputs.clone(), self.targets.clone()).expect("validated at construction")
    }

    /// Restrict to the rows with the given flag. Errors if that leaves an
    /// empty set.
    pub fn subset(&self, keep: SourceFlag) -> Result<Dataset> {
        let idx: Vec<usize> =
            (0..self.len()).filter(|&i| self.flags[i] == keep).collect();
        if idx.is_empty() {
            return Err(Error::InvalidInput(format!("no rows with flag {keep:?}")));
        }
        let inputs = self.inputs.select(ndarray::Axis(0), &idx);
        let targets = self.targets.select(ndarray::Axis(0), &idx);
        Dataset::new(inputs, targets)
    }

    /// Dataset without row `i`, preserving flags.
    fn without_row(&self, i: usize) -> Result<TaggedDataset> {
        let idx: Vec<usize> = (0..self.len()).filter(|&j| j != i).collect();
        let inputs = self.inputs.select(ndarray::Axis(0), &idx);
        let targets = self.targets.select(ndarray::Axis(0), &idx);
        let flags = idx.iter().map(|&j| self.flags[j]).collect();
        TaggedDataset::new(inputs, targets, flags)
    }
}

/// JGP hyperparameters; `gamma` is the relative trust in simulated rows
/// (`gamma = 1` recovers the standard GP).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JgpHyperparams {
    pub lengthscale: f64,
    pub noise_std: f64,
    pub gamma: f64,
    pub signal_variance: f64,
}

impl JgpHyperparams {
    pub fn new(lengthscale: f64, noise_std: f64, gamma: f64, signal_variance: f64) -> Result<Self> {
        let hp = Self { lengthscale, noise_std, gamma, signal_variance };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        crate::gp::GpHyperparams {
            lengthscale: self.lengthscale,
            noise_std: self.noise_std,
            signal_variance: self.signal_variance,
        }
        .validate()?;
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidInput(format!("gamma {} must be > 0", self.gamma)));
        }
        Ok(())
    }

    pub fn kernel(&self) -> SeKernel {
        SeKernel::with_signal_variance(self.lengthscale, self.signal_variance)
            .expect("validated hyperparameters")
    }
}

/// Diagonal weights: 1 for real rows, 1/gamma for simulated rows.
fn v_diag(flags: &[SourceFlag], gamma: f64) -> Array1<f64> {
    Array1::from_iter(flags.iter().map(|f| match f {
        SourceFlag::Real => 1.0,
        SourceFlag::Simulated => 1.0 / gamma,
    }))
}

fn weighted_gram(data: &TaggedDataset, hp: &JgpHyperparams) -> Result<Array2<f64>> {
    let kernel = hp.kernel();
    let mut gram = kernel.gram(data.inputs(), 0.0)?;
    let s2 = hp.noise_std * hp.noise_std;
    for (i, v) in v_diag(data.flags(), hp.gamma).iter().enumerate() {
        gram[[i, i]] += s2 * v;
    }
    Ok(gram)
}

/// Trained joint GP.
#[derive(Debug)]
pub struct JgpModel {
    support: Array2<f64>,
    kernel: SeKernel,
    noise_std: f64,
    gamma: f64,
    v: Array1<f64>,
    factor: SpdFactorization,
    alpha: Array1<f64>,
    variance_clamps: AtomicU64,
}

impl JgpModel {
    /// Factorize `K + noise^2 V` and precompute the weight vector.
    pub fn fit(data: &TaggedDataset, hp: &JgpHyperparams) -> Result<Self> {
        hp.validate()?;
        let gram = weighted_gram(data, hp)?;
        let factor = factorize_default(gram.view())?;
        let alpha = factor.solve_vec(data.targets().view())?;
        Ok(Self {
            support: data.inputs().to_owned(),
            kernel: hp.kernel(),
            noise_std: hp.noise_std,
            gamma: hp.gamma,
            v: v_diag(data.flags(), hp.gamma),
            factor,
            alpha,
            variance_clamps: AtomicU64::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn v_diagonal(&self) -> &Array1<f64> {
        &self.v
    }

    pub fn negative_variance_clamps(&self) -> u64 {
        self.variance_clamps.load(Ordering::Relaxed)
    }

    /// Predictive mean and variance for test outputs, with
    /// `c* = k(x*,x*) + noise^2` as in the standard GP.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "query dim {} vs training dim {}",
                x.ncols(),
                self.dim()
            )));
        }
        let m = x.nrows();
        let mut mean = Array1::zeros(m);
        let mut var = Array1::zeros(m);
        let c_star = self.kernel.signal_variance() + self.noise_std * self.noise_std;
        for (i, row) in x.rows().into_iter().enumerate() {
            let ks = Array1::from_iter(
                self.support.rows().into_iter().map(|s| self.kernel.eval(row, s).expect("dims checked")),
            );
            mean[i] = ks.dot(&self.alpha);
            let solved = self.factor.solve_vec(ks.view())?;
            let mut v = c_star - ks.dot(&solved);
            if v < 0.0 {
                self.variance_clamps.fetch_add(1, Ordering::Relaxed);
                v = 0.0;
            }
            var[i] = v;
        }
        Ok((mean, var))
    }
}

/// Leave-one-out pseudo-likelihood of the real rows, computed from the
/// precision matrix of `C = K + noise^2 V`:
/// `mu_i = y_i - [C^-1 y]_i / [C^-1]_ii`, `sigma_i^2 = 1 / [C^-1]_ii`.
pub fn loo_pseudo_likelihood(data: &TaggedDataset, hp: &JgpHyperparams) -> Result<f64> {
    if data.real_count() < 2 {
        return Err(Error::InvalidInput(format!(
            "leave-one-out needs at least 2 real rows, got {}",
            data.real_count()
        )));
    }
    let gram = weighted_gram(data, hp)?;
    let factor = factorize_default(gram.view())?;
    let precision = factor.inverse();
    let py = precision.dot(data.targets());
    let mut total = 0.0;
    for i in 0..data.len() {
        if data.flags()[i] != SourceFlag::Real {
            continue;
        }
        let pii = precision[[i, i]];
        let sigma2 = 1.0 / pii;
        let resid = py[i] / pii; // y_i - mu_i
        total += gaussian_log_density(resid, sigma2);
    }
    Ok(total)
}

fn gaussian_log_density(residual: f64, variance: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - residual * residual / (2.0 * variance)
}

/// Brute-force leave-one-out: refit without each real row and score its
/// prediction. O(n^4); kept as the oracle the identity version is tested
/// against.
pub fn loo_pseudo_likelihood_refit(data: &TaggedDataset, hp: &JgpHyperparams) -> Result<f64> {
    if data.real_count() < 2 {
        return Err(Error::InvalidInput("need at least 2 real rows".into()));
    }
    let mut total = 0.0;
    for i in 0..data.len() {
        if data.flags()[i] != SourceFlag::Real {
            continue;
        }
        let rest = data.without_row(i)?;
        let model = JgpModel::fit(&rest, hp)?;
        let x = data.inputs().row(i).insert_axis(ndarray::Axis(0)).to_owned();
        let (mean, var) = model.predict(x.view())?;
        total += gaussian_log_density(data.targets()[i] - mean[0], var[0]);
    }
    Ok(total)
}

/// JGP search grid: a base GP grid crossed with gamma candidates.
#[derive(Debug, Clone)]
pub struct JgpGrid {
    pub base: HyperGrid,
    pub gammas: Vec<f64>,
}

impl JgpGrid {
    /// Default: the GP default grid times 13 gamma values log-spaced over
    /// `[1e-3, 1e3]`.
    pub fn default_for(data: &TaggedDataset) -> Self {
        Self {
            base: HyperGrid::default_for(&data.pooled()),
            gammas: log_space(1e-3, 1e3, 13),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty() || self.gammas.is_empty()
    }

    pub fn candidates(&self) -> Vec<JgpHyperparams> {
        let mut out = Vec::new();
        for hp in self.base.candidates() {
            for &g in &self.gammas {
                out.push(JgpHyperparams {
                    lengthscale: hp.lengthscale,
                    noise_std: hp.noise_std,
                    gamma: g,
                    signal_variance: hp.signal_variance,
                });
            }
        }
        out
    }
}

/// Grid search maximizing the real-rows pseudo-likelihood.
pub fn optimize_jgp(data: &TaggedDataset, grid: &JgpGrid) -> Result<JgpHyperparams> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if data.real_count() < 2 {
        return Err(Error::InvalidInput("need at least 2 real rows".into()));
    }
    let scored: Vec<(JgpHyperparams, f64)> = grid
        .candidates()
        .into_par_iter()
        .map(|hp| {
            let val = loo_pseudo_likelihood(data, &hp).unwrap_or(f64::NEG_INFINITY);
            (hp, val)
        })
        .collect();
    argmax_candidates(scored, |hp| vec![hp.lengthscale, hp.noise_std, hp.gamma, hp.signal_variance])
}
