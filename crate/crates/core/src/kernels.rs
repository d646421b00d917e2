//! Squared-exponential kernel, its analytic gradient, and Gram assembly.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Isotropic squared-exponential kernel
/// `k(x, x') = signal_variance * exp(-||x - x'||^2 / (2 lengthscale^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeKernel {
    lengthscale: f64,
    signal_variance: f64,
}

impl SeKernel {
    /// Unit-variance kernel with the given lengthscale.
    pub fn new(lengthscale: f64) -> Result<Self> {
        Self::with_signal_variance(lengthscale, 1.0)
    }

    pub fn with_signal_variance(lengthscale: f64, signal_variance: f64) -> Result<Self> {
        if !(lengthscale > 0.0) || !lengthscale.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lengthscale must be positive and finite, got {lengthscale}"
            )));
        }
        if !(signal_variance > 0.0) || !signal_variance.is_finite() {
            return Err(Error::InvalidInput(format!(
                "signal_variance must be positive and finite, got {signal_variance}"
            )));
        }
        Ok(Self { lengthscale, signal_variance })
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    fn check_dims(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<()> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "kernel arguments have dimensions {} and {}",
                x.len(),
                y.len()
            )));
        }
        Ok(())
    }

    /// Kernel value from a squared distance.
    #[inline]
    pub(crate) fn eval_sq_dist(&self, sq_dist: f64) -> f64 {
        self.signal_variance * (-sq_dist / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }

    /// `k(x, y)`; symmetric in its arguments.
    pub fn eval(&self, x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
        self.check_dims(x, y)?;
        Ok(self.eval_sq_dist(sq_dist(x, y)))
    }

    /// Gradient of `k(y, y')` with respect to `y`:
    /// `-(k / lengthscale^2) (y - y')`.
    pub fn gradient(&self, y: ArrayView1<'_, f64>, y2: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_dims(y, y2)?;
        let k = self.eval_sq_dist(sq_dist(y, y2));
        let scale = -k / (self.lengthscale * self.lengthscale);
        Ok(Array1::from_iter(y.iter().zip(y2.iter()).map(|(a, b)| scale * (a - b))))
    }

    /// Gram matrix `K_ij + noise_variance [i = j]` over the rows of `x`.
    pub fn gram(&self, x: ArrayView2<'_, f64>, noise_variance: f64) -> Result<Array2<f64>> {
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("gram: need at least one row".into()));
        }
        if !(noise_variance >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise_variance must be nonnegative, got {noise_variance}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("gram: non-finite input entry".into()));
        }
        let n = x.nrows();
        let mut k = Array2::zeros((n, n));
        for i in 0..n {
            k[[i, i]] = self.signal_variance + noise_variance;
            for j in 0..i {
                let v = self.eval_sq_dist(sq_dist(x.row(i), x.row(j)));
                k[[i, j]] = v;
                k[[j, i]] = v;
            }
        }
        Ok(k)
    }
}

#[inline]
fn sq_dist(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Median pairwise Euclidean distance between the rows of `x`; the anchor
/// for default lengthscale grids. Falls back to 1.0 when fewer than two
/// distinct rows exist.
pub fn median_pairwise_distance(x: ArrayView2<'_, f64>) -> f64 {
    let n = x.nrows();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            let d = sq_dist(x.row(i), x.row(j)).sqrt();
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dists[dists.len() / 2]
}
