//! Single-output Gaussian-process regression with a squared-exponential
//! kernel: fit, prediction with error bars, log marginal likelihood, and
//! grid-based hyperparameter selection.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{median_pairwise_distance, SeKernel};
use crate::linalg::{factorize_default, SpdFactorization};

/// Training inputs and targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: Array2<f64>,
    targets: Array1<f64>,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, targets: Array1<f64>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::InvalidInput("dataset needs at least one row".into()));
        }
        if inputs.nrows() != targets.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows vs {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset contains non-finite entries".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires n >= 1
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
}

/// Kernel width, observation noise, and signal variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyperparams {
    pub lengthscale: f64,
    pub noise_std: f64,
    pub signal_variance: f64,
}

impl GpHyperparams {
    pub fn new(lengthscale: f64, noise_std: f64, signal_variance: f64) -> Result<Self> {
        let hp = Self { lengthscale, noise_std, signal_variance };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0) || !self.lengthscale.is_finite() {
            return Err(Error::InvalidInput(format!("lengthscale {} must be > 0", self.lengthscale)));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::InvalidInput(format!("noise_std {} must be >= 0", self.noise_std)));
        }
        if !(self.signal_variance > 0.0) || !self.signal_variance.is_finite() {
            return Err(Error::InvalidInput(format!(
                "signal_variance {} must be > 0",
                self.signal_variance
            )));
        }
        Ok(())
    }

    pub fn kernel(&self) -> SeKernel {
        SeKernel::with_signal_variance(self.lengthscale, self.signal_variance)
            .expect("validated hyperparameters")
    }
}

/// Trained GP state: support points, factorized Gram matrix, and the
/// weight vector `alpha = (K + noise^2 I)^-1 y`.
#[derive(Debug)]
pub struct GpModel {
    support: Array2<f64>,
    kernel: SeKernel,
    noise_std: f64,
    factor: SpdFactorization,
    alpha: Array1<f64>,
    targets: Array1<f64>,
    variance_clamps: AtomicU64,
}

impl Clone for GpModel {
    fn clone(&self) -> Self {
        Self {
            support: self.support.clone(),
            kernel: self.kernel,
            noise_std: self.noise_std,
            factor: self.factor.clone(),
            alpha: self.alpha.clone(),
            targets: self.targets.clone(),
            variance_clamps: AtomicU64::new(self.variance_clamps.load(Ordering::Relaxed)),
        }
    }
}

impl GpModel {
    /// Fit on `data`, precomputing the factorization of `K + noise^2 I`.
    pub fn fit(data: &Dataset, hp: &GpHyperparams) -> Result<Self> {
        hp.validate()?;
        let kernel = hp.kernel();
        let gram = kernel.gram(data.inputs(), hp.noise_std * hp.noise_std)?;
        let factor = factorize_default(gram.view())?;
        let alpha = factor.solve_vec(data.targets().view())?;
        Ok(Self {
            support: data.inputs().to_owned(),
            kernel,
            noise_std: hp.noise_std,
            factor,
            alpha,
            targets: data.targets().clone(),
            variance_clamps: AtomicU64::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.support.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.support.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    pub fn kernel(&self) -> &SeKernel {
        &self.kernel
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn alpha(&self) -> &Array1<f64> {
        &self.alpha
    }

    pub fn support(&self) -> ArrayView2<'_, f64> {
        self.support.view()
    }

    pub fn factorization(&self) -> &SpdFactorization {
        &self.factor
    }

    pub fn targets(&self) -> &Array1<f64> {
        &self.targets
    }

    /// Number of predictions whose variance had to be clamped up to zero.
    pub fn negative_variance_clamps(&self) -> u64 {
        self.variance_clamps.load(Ordering::Relaxed)
    }

    /// Cross-covariance vector between a query point and the support set.
    pub(crate) fn kstar(&self, x: ndarray::ArrayView1<'_, f64>) -> Array1<f64> {
        Array1::from_iter(
            self.support
                .rows()
                .into_iter()
                .map(|row| self.kernel.eval(x, row).expect("dims checked by caller")),
        )
    }

    /// Predictive mean and variance at each row of `x`.
    ///
    /// Variance includes the observation noise term: `c* = k(x*,x*) + noise^2`.
    /// Numerically negative variances are clamped to zero and counted.
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
            let ks = self.kstar(row);
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

/// log N(y; 0, K + noise^2 I) computed through the factorization.
pub fn log_marginal_likelihood(data: &Dataset, hp: &GpHyperparams) -> Result<f64> {
    hp.validate()?;
    let kernel = hp.kernel();
    let gram = kernel.gram(data.inputs(), hp.noise_std * hp.noise_std)?;
    let factor = factorize_default(gram.view())?;
    let alpha = factor.solve_vec(data.targets().view())?;
    let n = data.len() as f64;
    Ok(-0.5 * data.targets().dot(&alpha)
        - 0.5 * factor.log_det()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

/// Explicit hyperparameter search grid.
#[derive(Debug, Clone)]
pub struct HyperGrid {
    pub lengthscales: Vec<f64>,
    pub noise_stds: Vec<f64>,
    pub signal_variances: Vec<f64>,
}

/// `count` log-spaced values covering `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

impl HyperGrid {
    /// Default grid: 15 lengthscales log-spaced over `[1e-2, 1e2]` times the
    /// median pairwise distance, 10 noise levels in `[1e-4, 1]` times the
    /// target standard deviation, signal variance pinned to the target
    /// variance.
    pub fn default_for(data: &Dataset) -> Self {
        let med = median_pairwise_distance(data.inputs());
        let n = data.len() as f64;
        let mean = data.targets().sum() / n;
        let var = data.targets().iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let noise_scale = if std > 0.0 { std } else { 1.0 };
        Self {
            lengthscales: log_space(1e-2 * med, 1e2 * med, 15),
            noise_stds: log_space(1e-4 * noise_scale, noise_scale, 10),
            signal_variances: vec![if var > 0.0 { var } else { 1.0 }],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lengthscales.is_empty() || self.noise_stds.is_empty() || self.signal_variances.is_empty()
    }

    /// All grid points in deterministic order.
    pub fn candidates(&self) -> Vec<GpHyperparams> {
        let mut out = Vec::with_capacity(
            self.lengthscales.len() * self.noise_stds.len() * self.signal_variances.len(),
        );
        for &ls in &self.lengthscales {
            for &ns in &self.noise_stds {
                for &sv in &self.signal_variances {
                    out.push(GpHyperparams { lengthscale: ls, noise_std: ns, signal_variance: sv });
                }
            }
        }
        out
    }
}

/// Pick the best candidate by objective value with a deterministic
/// tie-break on the lexicographically smallest hyperparameter tuple.
pub(crate) fn argmax_candidates<H, K>(scored: Vec<(H, f64)>, key: K) -> Result<H>
where
    K: Fn(&H) -> Vec<f64>,
{
    let mut best: Option<(H, f64)> = None;
    for (hp, val) in scored {
        if !val.is_finite() {
            continue;
        }
        best = Some(match best {
            None => (hp, val),
            Some((bh, bv)) => {
                if val > bv || (val == bv && key(&hp) < key(&bh)) {
                    (hp, val)
                } else {
                    (bh, bv)
                }
            }
        });
    }
    best.map(|(h, _)| h).ok_or(Error::NoFiniteObjective)
}

/// Grid search maximizing the log marginal likelihood.
///
/// Candidates are scored in parallel; the reduction is a deterministic
/// max with lexicographic tie-breaking, so the result does not depend on
/// scheduling.
pub fn optimize_hyperparams(data: &Dataset, grid: &HyperGrid) -> Result<GpHyperparams> {
    if data.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "hyperparameter search needs at least 3 samples, got {}",
            data.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let scored: Vec<(GpHyperparams, f64)> = grid
        .candidates()
        .into_par_iter()
        .map(|hp| {
            let val = log_marginal_likelihood(data, &hp).unwrap_or(f64::NEG_INFINITY);
            (hp, val)
        })
        .collect();
    argmax_candidates(scored, |hp| vec![hp.lengthscale, hp.noise_std, hp.signal_variance])
}
