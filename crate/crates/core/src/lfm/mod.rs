//! Multi-output GP latent force model.
//!
//! Q output series are driven by R shared latent GPs through Gaussian
//! smoothing-kernel convolutions. Convolving twice gives closed-form
//! cross-covariances between outputs; convolving once gives the
//! cross-covariance between a latent force and an output. The convolution
//! is taken over the whole line, which keeps every closed form a plain
//! Gaussian and the joint covariance exactly positive semi-definite.
//!
//! With the latent auto-covariance `exp(-lag^2 / (2 l_r^2))` and smoothing
//! kernels `exp(-t^2 / (2 nu_q^2))`:
//!
//! * latent-output: `sqrt(2 pi) l_r nu_q / sqrt(l_r^2 + nu_q^2)
//!   * exp(-lag^2 / (2 (l_r^2 + nu_q^2)))`
//! * output-output: `2 pi l_r nu_p nu_q / w * exp(-lag^2 / (2 w^2))`
//!   with `w^2 = l_r^2 + nu_p^2 + nu_q^2`.

mod fit;

pub use fit::{fit_lfm, fit_lfm_with_starts};

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{factorize_default, SpdFactorization};
use crate::rng::stream_rng;

/// Latent force model hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LfmConfig {
    /// R x Q coupling strengths between latent forces and outputs.
    sensitivities: Array2<f64>,
    /// Lengthscale of each latent force.
    lf_lengthscales: Vec<f64>,
    /// Width of each output's Gaussian smoothing kernel.
    smoothing_widths: Vec<f64>,
    /// Per-output observation noise standard deviations.
    noise_stds: Vec<f64>,
}

impl LfmConfig {
    pub fn new(
        sensitivities: Array2<f64>,
        lf_lengthscales: Vec<f64>,
        smoothing_widths: Vec<f64>,
        noise_stds: Vec<f64>,
    ) -> Result<Self> {
        let r = lf_lengthscales.len();
        let q = smoothing_widths.len();
        if r == 0 || q == 0 {
            return Err(Error::InvalidInput("need at least one latent force and one output".into()));
        }
        if sensitivities.nrows() != r || sensitivities.ncols() != q {
            return Err(Error::DimensionMismatch(format!(
                "sensitivities are {}x{}, expected {r}x{q}",
                sensitivities.nrows(),
                sensitivities.ncols()
            )));
        }
        if noise_stds.len() != q {
            return Err(Error::DimensionMismatch(format!(
                "{} noise entries for {q} outputs",
                noise_stds.len()
            )));
        }
        if lf_lengthscales.iter().any(|&v| !(v > 0.0) || !v.is_finite())
            || smoothing_widths.iter().any(|&v| !(v > 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidInput("lengthscales and widths must be positive".into()));
        }
        if noise_stds.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("noise stds must be nonnegative".into()));
        }
        if sensitivities.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("sensitivities must be finite".into()));
        }
        Ok(Self { sensitivities, lf_lengthscales, smoothing_widths, noise_stds })
    }

    pub fn num_forces(&self) -> usize {
        self.lf_lengthscales.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.smoothing_widths.len()
    }

    pub fn sensitivities(&self) -> &Array2<f64> {
        &self.sensitivities
    }

    pub fn lf_lengthscales(&self) -> &[f64] {
        &self.lf_lengthscales
    }

    pub fn smoothing_widths(&self) -> &[f64] {
        &self.smoothing_widths
    }

    pub fn noise_stds(&self) -> &[f64] {
        &self.noise_stds
    }

    fn check_output(&self, q: usize) -> Result<()> {
        if q >= self.num_outputs() {
            return Err(Error::InvalidInput(format!(
                "output index {q} out of range (Q = {})",
                self.num_outputs()
            )));
        }
        Ok(())
    }

    fn check_force(&self, r: usize) -> Result<()> {
        if r >= self.num_forces() {
            return Err(Error::InvalidInput(format!(
                "latent force index {r} out of range (R = {})",
                self.num_forces()
            )));
        }
        Ok(())
    }

    /// Unit-variance squared-exponential auto-covariance of latent force `r`.
    pub fn lf_auto_cov(&self, r: usize, t: f64, t2: f64) -> Result<f64> {
        self.check_force(r)?;
        let l = self.lf_lengthscales[r];
        let lag = t - t2;
        Ok((-lag * lag / (2.0 * l * l)).exp())
    }

    /// Closed-form single convolution: covariance between latent force `r`
    /// at `t` and output `q` at `t2`.
    pub fn lf_output_cross_cov(&self, r: usize, q: usize, t: f64, t2: f64) -> Result<f64> {
        self.check_force(r)?;
        self.check_output(q)?;
        Ok(self.sensitivities[[r, q]] * self.single_conv(r, q, t - t2))
    }

    fn single_conv(&self, r: usize, q: usize, lag: f64) -> f64 {
        let l = self.lf_lengthscales[r];
        let nu = self.smoothing_widths[q];
        let s2 = l * l + nu * nu;
        (2.0 * std::f64::consts::PI).sqrt() * l * nu / s2.sqrt() * (-lag * lag / (2.0 * s2)).exp()
    }

    /// Closed-form double convolution of latent force `r` through the
    /// smoothing kernels of outputs `p` and `q`.
    fn double_conv(&self, r: usize, p: usize, q: usize, lag: f64) -> f64 {
        let l = self.lf_lengthscales[r];
        let np = self.smoothing_widths[p];
        let nq = self.smoothing_widths[q];
        let w2 = l * l + np * np + nq * nq;
        let w = w2.sqrt();
        2.0 * std::f64::consts::PI * l * np * nq / w * (-lag * lag / (2.0 * w2)).exp()
    }

    /// Cross-covariance between outputs `p` at `t` and `q` at `t2`,
    /// including the white-noise term on coincident samples of the same
    /// output.
    pub fn output_cross_cov(&self, p: usize, q: usize, t: f64, t2: f64) -> Result<f64> {
        self.check_output(p)?;
        self.check_output(q)?;
        let mut total = self.output_cross_cov_noise_free(p, q, t, t2);
        if p == q && t == t2 {
            total += self.noise_stds[q] * self.noise_stds[q];
        }
        Ok(total)
    }

    fn output_cross_cov_noise_free(&self, p: usize, q: usize, t: f64, t2: f64) -> f64 {
        let lag = t - t2;
        (0..self.num_forces())
            .map(|r| self.sensitivities[[r, p]] * self.sensitivities[[r, q]] * self.double_conv(r, p, q, lag))
            .sum()
    }

    /// Prior variance of a noiseless sample of output `q`.
    pub fn prior_output_variance(&self, q: usize) -> Result<f64> {
        self.check_output(q)?;
        Ok(self.output_cross_cov_noise_free(q, q, 0.0, 0.0))
    }
}

/// One observed output series; samples may be missing (they are simply
/// absent), but the times present must be strictly increasing.
#[derive(Debug, Clone)]
pub struct OutputSeries {
    pub id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl OutputSeries {
    fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::DimensionMismatch(format!(
                "output '{}': {} times vs {} values",
                self.id,
                self.times.len(),
                self.values.len()
            )));
        }
        if self.times.iter().any(|v| !v.is_finite()) || self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("output '{}': non-finite entry", self.id)));
        }
        for w in self.times.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput(format!(
                    "output '{}': times must be strictly increasing ({} then {})",
                    self.id, w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

/// A set of output series sharing the time axis.
#[derive(Debug, Clone)]
pub struct MultiOutputSeries {
    outputs: Vec<OutputSeries>,
}

impl MultiOutputSeries {
    pub fn new(outputs: Vec<OutputSeries>) -> Result<Self> {
        if outputs.is_empty() {
            return Err(Error::InvalidInput("need at least one output series".into()));
        }
        for o in &outputs {
            o.validate()?;
        }
        Ok(Self { outputs })
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn outputs(&self) -> &[OutputSeries] {
        &self.outputs
    }

    pub fn total_samples(&self) -> usize {
        self.outputs.iter().map(|o| o.times.len()).sum()
    }

    /// Flattened (output, time) order used by the joint Gram matrix.
    pub fn sample_index(&self) -> Vec<(usize, f64)> {
        let mut idx = Vec::with_capacity(self.total_samples());
        for (q, o) in self.outputs.iter().enumerate() {
            for &t in &o.times {
                idx.push((q, t));
            }
        }
        idx
    }

    pub fn stacked_values(&self) -> Array1<f64> {
        Array1::from_iter(self.outputs.iter().flat_map(|o| o.values.iter().copied()))
    }
}

/// Joint covariance over all observed samples, block-structured by output
/// pair, with each output's noise variance on its diagonal entries.
pub fn build_joint_gram(config: &LfmConfig, series: &MultiOutputSeries) -> Result<Array2<f64>> {
    if series.num_outputs() != config.num_outputs() {
        return Err(Error::DimensionMismatch(format!(
            "series has {} outputs, config has {}",
            series.num_outputs(),
            config.num_outputs()
        )));
    }
    let idx = series.sample_index();
    let n = idx.len();
    if n == 0 {
        return Err(Error::InvalidInput("series has no samples".into()));
    }
    let mut gram = Array2::zeros((n, n));
    for a in 0..n {
        let (qa, ta) = idx[a];
        for b in 0..=a {
            let (qb, tb) = idx[b];
            let v = config.output_cross_cov(qa, qb, ta, tb)?;
            gram[[a, b]] = v;
            gram[[b, a]] = v;
        }
    }
    Ok(gram)
}

/// Trained latent force model: configuration, training samples, and the
/// factorized joint Gram with its weight vector.
#[derive(Debug, Clone)]
pub struct LfmModel {
    config: LfmConfig,
    series: MultiOutputSeries,
    index: Vec<(usize, f64)>,
    factor: SpdFactorization,
    alpha: Array1<f64>,
    log_marginal: f64,
}

impl LfmModel {
    /// Condition the joint GP on `series` under a fixed configuration.
    pub fn from_config(config: LfmConfig, series: MultiOutputSeries) -> Result<Self> {
        let gram = build_joint_gram(&config, &series)?;
        let factor = factorize_default(gram.view())?;
        let y = series.stacked_values();
        let alpha = factor.solve_vec(y.view())?;
        let n = y.len() as f64;
        let log_marginal =
            -0.5 * y.dot(&alpha) - 0.5 * factor.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
        let index = series.sample_index();
        Ok(Self { config, series, index, factor, alpha, log_marginal })
    }

    pub fn config(&self) -> &LfmConfig {
        &self.config
    }

    pub fn series(&self) -> &MultiOutputSeries {
        &self.series
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    /// Conditional mean and variance of each output at the given query
    /// times. The variance is that of a new noisy observation, matching
    /// the single-output GP convention.
    pub fn predict_outputs(&self, query_times: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        if query_times.len() != self.config.num_outputs() {
            return Err(Error::DimensionMismatch(format!(
                "{} query lists for {} outputs",
                query_times.len(),
                self.config.num_outputs()
            )));
        }
        let mut out = Vec::with_capacity(query_times.len());
        for (q, times) in query_times.iter().enumerate() {
            let mut means = Vec::with_capacity(times.len());
            let mut vars = Vec::with_capacity(times.len());
            let eta2 = self.config.noise_stds[q] * self.config.noise_stds[q];
            let prior = self.config.prior_output_variance(q)? + eta2;
            for &t in times {
                let ks = Array1::from_iter(
                    self.index
                        .iter()
                        .map(|&(p, tp)| self.config.output_cross_cov_noise_free(q, p, t, tp)),
                );
                means.push(ks.dot(&self.alpha));
                let solved = self.factor.solve_vec(ks.view())?;
                vars.push((prior - ks.dot(&solved)).max(0.0));
            }
            out.push((means, vars));
        }
        Ok(out)
    }

    /// Posterior mean and variance of each latent force at the given
    /// times. The prior is unit variance, so the posterior variance never
    /// exceeds 1.
    pub fn infer_latent_forces(&self, times: &[f64]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let mut out = Vec::with_capacity(self.config.num_forces());
        for r in 0..self.config.num_forces() {
            let mut means = Vec::with_capacity(times.len());
            let mut vars = Vec::with_capacity(times.len());
            for &t in times {
                let ks = Array1::from_iter(self.index.iter().map(|&(p, tp)| {
                    self.config.sensitivities[[r, p]] * self.config.single_conv(r, p, t - tp)
                }));
                means.push(ks.dot(&self.alpha));
                let solved = self.factor.solve_vec(ks.view())?;
                vars.push((1.0 - ks.dot(&solved)).max(0.0));
            }
            out.push((means, vars));
        }
        Ok(out)
    }
}

/// Draw a series exactly from the model prior at the given times.
pub fn sample_series(config: &LfmConfig, times: &[Vec<f64>], seed: u64) -> Result<MultiOutputSeries> {
    if times.len() != config.num_outputs() {
        return Err(Error::DimensionMismatch(format!(
            "{} time lists for {} outputs",
            times.len(),
            config.num_outputs()
        )));
    }
    let skeleton = MultiOutputSeries::new(
        times
            .iter()
            .enumerate()
            .map(|(q, t)| OutputSeries { id: format!("y{q}"), times: t.clone(), values: vec![0.0; t.len()] })
            .collect(),
    )?;
    let gram = build_joint_gram(config, &skeleton)?;
    let factor = factorize_default(gram.view())?;
    let mut rng = stream_rng(seed, 0x4c464d);
    let z = Array1::from_iter((0..gram.nrows()).map(|_| StandardNormal.sample(&mut rng)));
    let y = factor.lower().dot(&z);
    let mut outputs = Vec::with_capacity(times.len());
    let mut offset = 0;
    for (q, t) in times.iter().enumerate() {
        let values = y.slice(ndarray::s![offset..offset + t.len()]).to_vec();
        offset += t.len();
        outputs.push(OutputSeries { id: format!("y{q}"), times: t.clone(), values });
    }
    MultiOutputSeries::new(outputs)
}

/// Mean squared error and normalised MSE (percent) of a prediction.
pub fn mse_nmse(truth: &[f64], prediction: &[f64]) -> Result<(f64, f64)> {
    if truth.len() != prediction.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} truth values vs {} predictions",
            truth.len(),
            prediction.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("cannot score an empty prediction".into()));
    }
    let n = truth.len() as f64;
    let mse = truth.iter().zip(prediction).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / n;
    let power = truth.iter().map(|y| y * y).sum::<f64>() / n;
    if power == 0.0 {
        return Err(Error::InvalidInput("normalised MSE undefined for an all-zero signal".into()));
    }
    Ok((mse, mse / power * 100.0))
}

/// Least-squares fit of `fapar = 1 - exp(alpha * lai)` in the log domain:
/// `alpha = sum(lai * ln(1 - fapar)) / sum(lai^2)`.
pub fn fit_exponential_relation(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("need at least one (lai, fapar) pair".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &(lai, fapar) in pairs {
        if !lai.is_finite() || !(lai >= 0.0) {
            return Err(Error::InvalidInput(format!("lai {lai} must be finite and nonnegative")));
        }
        if !fapar.is_finite() || fapar >= 1.0 || fapar < 0.0 {
            return Err(Error::InvalidInput(format!("fapar {fapar} must lie in [0, 1)")));
        }
        num += lai * (1.0 - fapar).ln();
        den += lai * lai;
    }
    if den == 0.0 {
        return Err(Error::InvalidInput("all lai values are zero; slope undefined".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn two_output_config() -> LfmConfig {
        LfmConfig::new(
            array![[1.0, 0.8]],
            vec![1.2],
            vec![0.4, 0.6],
            vec![0.1, 0.05],
        )
        .unwrap()
    }

    #[test]
    fn lf_auto_cov_basics() {
        let c = two_output_config();
        assert_eq!(c.lf_auto_cov(0, 3.0, 3.0).unwrap(), 1.0);
        let at_lengthscale = c.lf_auto_cov(0, 0.0, 1.2).unwrap();
        assert_abs_diff_eq!(at_lengthscale, (-0.5f64).exp(), epsilon = 1e-12);
        assert_eq!(
            c.lf_auto_cov(0, 0.0, 0.7).unwrap(),
            c.lf_auto_cov(0, 0.7, 0.0).unwrap()
        );
        assert!(c.lf_auto_cov(1, 0.0, 0.0).is_err());
    }

    #[test]
    fn zero_lag_double_conv_matches_closed_form() {
        // R = 1, S = 1, eta = 0, p = q: 2 pi l nu^2 / sqrt(l^2 + 2 nu^2).
        let c = LfmConfig::new(array![[1.0]], vec![1.3], vec![0.5], vec![0.0]).unwrap();
        let v = c.output_cross_cov(0, 0, 2.0, 2.0).unwrap();
        let expect = 2.0 * std::f64::consts::PI * 1.3 * 0.25 / (1.3f64 * 1.3 + 2.0 * 0.25).sqrt();
        assert_abs_diff_eq!(v, expect, epsilon = 1e-12);
    }

    #[test]
    fn large_lag_leaves_noise_only() {
        let c = two_output_config();
        let far = c.output_cross_cov(0, 1, 0.0, 1e4).unwrap();
        assert_abs_diff_eq!(far, 0.0, epsilon = 1e-300);
        let same_far = c.output_cross_cov(0, 0, 0.0, 1e4).unwrap();
        assert_abs_diff_eq!(same_far, 0.0, epsilon = 1e-300);
    }

    #[test]
    fn cross_cov_symmetry() {
        let c = two_output_config();
        for &(p, q, t, t2) in &[(0usize, 1usize, 0.3, 1.7), (0, 0, 0.5, 0.5), (1, 1, -1.0, 2.0)] {
            let a = c.output_cross_cov(p, q, t, t2).unwrap();
            let b = c.output_cross_cov(q, p, t2, t).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_sensitivity_kills_lf_output_cov() {
        let c = LfmConfig::new(array![[0.0, 2.0]], vec![1.0], vec![0.3, 0.3], vec![0.0, 0.0]).unwrap();
        assert_eq!(c.lf_output_cross_cov(0, 0, 0.4, 0.9).unwrap(), 0.0);
        assert!(c.lf_output_cross_cov(0, 0, 0.0, 0.0).unwrap() == 0.0);
        let v = c.lf_output_cross_cov(0, 1, 0.0, 0.0).unwrap();
        // Zero lag is the maximum.
        assert!(v > c.lf_output_cross_cov(0, 1, 0.0, 0.5).unwrap());
    }

    #[test]
    fn gram_permuting_outputs_permutes_blocks() {
        let c = two_output_config();
        let series = MultiOutputSeries::new(vec![
            OutputSeries { id: "a".into(), times: vec![0.0, 1.0], values: vec![0.1, 0.2] },
            OutputSeries { id: "b".into(), times: vec![0.5], values: vec![-0.3] },
        ])
        .unwrap();
        let gram = build_joint_gram(&c, &series).unwrap();

        let c_swapped = LfmConfig::new(
            array![[0.8, 1.0]],
            vec![1.2],
            vec![0.6, 0.4],
            vec![0.05, 0.1],
        )
        .unwrap();
        let series_swapped = MultiOutputSeries::new(vec![
            OutputSeries { id: "b".into(), times: vec![0.5], values: vec![-0.3] },
            OutputSeries { id: "a".into(), times: vec![0.0, 1.0], values: vec![0.1, 0.2] },
        ])
        .unwrap();
        let gram2 = build_joint_gram(&c_swapped, &series_swapped).unwrap();
        // Sample order was [a0, a1, b0]; now [b0, a0, a1], so original
        // sample i sits at position perm[i] of the swapped Gram.
        let perm = [1usize, 2, 0];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(gram[[i, j]], gram2[[perm[i], perm[j]]], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn single_output_single_force_matches_matched_se_gp() {
        // The stationary reduction: one output, one force, the output
        // covariance is an SE kernel with variance S^2 2 pi l nu^2 / w and
        // lengthscale w, where w^2 = l^2 + 2 nu^2.
        let s = 0.9;
        let l = 1.1;
        let nu = 0.5;
        let eta = 0.2;
        let c = LfmConfig::new(array![[s]], vec![l], vec![nu], vec![eta]).unwrap();
        let times = vec![0.0, 0.4, 1.1, 2.0, 3.3, 4.1];
        let values = vec![0.3, -0.1, 0.5, 0.2, -0.4, 0.0];
        let series = MultiOutputSeries::new(vec![OutputSeries {
            id: "y".into(),
            times: times.clone(),
            values: values.clone(),
        }])
        .unwrap();
        let model = LfmModel::from_config(c, series).unwrap();

        let w2 = l * l + 2.0 * nu * nu;
        let sv = s * s * 2.0 * std::f64::consts::PI * l * nu * nu / w2.sqrt();
        let hp = crate::gp::GpHyperparams::new(w2.sqrt(), eta, sv).unwrap();
        let inputs = Array2::from_shape_vec((times.len(), 1), times.clone()).unwrap();
        let data = crate::gp::Dataset::new(inputs, Array1::from(values)).unwrap();
        let gp = crate::gp::GpModel::fit(&data, &hp).unwrap();

        let query = vec![vec![-0.5, 0.2, 1.7, 5.0]];
        let lfm_pred = model.predict_outputs(&query).unwrap();
        let gp_query = Array2::from_shape_vec((4, 1), query[0].clone()).unwrap();
        let (gm, gv) = gp.predict(gp_query.view()).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(lfm_pred[0].0[i], gm[i], epsilon = 1e-8);
            assert_abs_diff_eq!(lfm_pred[0].1[i], gv[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn noiseless_training_points_are_reproduced() {
        let c = LfmConfig::new(array![[1.0, 0.7]], vec![1.0], vec![0.4, 0.5], vec![0.0, 0.0]).unwrap();
        let times = vec![vec![0.0, 1.0, 2.0], vec![0.5, 1.5]];
        let series = sample_series(&c, &times, 3).unwrap();
        let model = LfmModel::from_config(c, series.clone()).unwrap();
        let preds = model.predict_outputs(&times).unwrap();
        for (q, o) in series.outputs().iter().enumerate() {
            for (i, &v) in o.values.iter().enumerate() {
                let scale = v.abs().max(1e-3);
                assert!(
                    (preds[q].0[i] - v).abs() / scale < 1e-6,
                    "output {q} sample {i}: {} vs {v}",
                    preds[q].0[i]
                );
            }
        }
    }

    #[test]
    fn far_future_reverts_to_prior() {
        let c = two_output_config();
        let times = vec![vec![0.0, 0.7, 1.9], vec![0.2, 1.1]];
        let series = sample_series(&c, &times, 4).unwrap();
        let model = LfmModel::from_config(c.clone(), series).unwrap();
        let preds = model.predict_outputs(&[vec![500.0], vec![500.0]]).unwrap();
        for q in 0..2 {
            let prior = c.prior_output_variance(q).unwrap() + c.noise_stds()[q] * c.noise_stds()[q];
            assert_abs_diff_eq!(preds[q].0[0], 0.0, epsilon = 1e-8);
            assert_abs_diff_eq!(preds[q].1[0], prior, epsilon = 1e-8);
        }
    }

    #[test]
    fn latent_posterior_without_information_is_the_prior() {
        // No observations at all is impossible (the Gram would be empty),
        // so decouple instead: a zero sensitivity row leaves the posterior
        // at the prior.
        let c = LfmConfig::new(
            array![[1.0, 1.0], [0.0, 0.0]],
            vec![1.0, 0.7],
            vec![0.4, 0.4],
            vec![0.05, 0.05],
        )
        .unwrap();
        let times = vec![vec![0.0, 1.0, 2.0], vec![0.5, 1.5]];
        let series = sample_series(&c, &times, 9).unwrap();
        let model = LfmModel::from_config(c, series).unwrap();
        let lf = model.infer_latent_forces(&[0.3, 1.2, 4.0]).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(lf[1].0[i], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(lf[1].1[i], 1.0, epsilon = 1e-12);
            assert!(lf[0].1[i] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn metrics_hand_cases() {
        assert_eq!(mse_nmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
        let (mse, nmse) = mse_nmse(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(mse, 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(nmse, 100.0, epsilon = 1e-12);
        let (mse, nmse) = mse_nmse(&[1.0, 2.0], &[1.0, 3.0]).unwrap();
        assert_abs_diff_eq!(mse, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(nmse, 20.0, epsilon = 1e-12);
    }

    #[test]
    fn exponential_fit_single_pair_and_validation() {
        let alpha = fit_exponential_relation(&[(1.0, 1.0 - (-1.0f64).exp())]).unwrap();
        assert_abs_diff_eq!(alpha, -1.0, epsilon = 1e-12);
        assert!(fit_exponential_relation(&[(1.0, 1.0)]).is_err());
        assert!(fit_exponential_relation(&[(1.0, 1.5)]).is_err());
        assert!(fit_exponential_relation(&[(-0.1, 0.5)]).is_err());
        assert!(fit_exponential_relation(&[]).is_err());
        assert!(fit_exponential_relation(&[(0.0, 0.0)]).is_err());
    }

    #[test]
    fn exponential_fit_recovers_generating_slope() {
        let alpha = -0.4047;
        let pairs: Vec<(f64, f64)> =
            (1..40).map(|i| i as f64 * 0.2).map(|lai| (lai, 1.0 - (alpha * lai).exp())).collect();
        let got = fit_exponential_relation(&pairs).unwrap();
        assert_abs_diff_eq!(got, alpha, epsilon = 1e-10);
    }
}
