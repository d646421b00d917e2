//! Hyperparameter search for the latent force model.
//!
//! Joint log marginal likelihood is maximized by a multi-start pattern
//! search: positive parameters move in log space, sensitivities in raw
//! space. Restarts are independent seeded tasks reduced by best likelihood
//! with ties broken by the lowest restart index. The latent-force sign
//! ambiguity is fixed by keeping each force's coupling to the first output
//! nonnegative.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

use super::{build_joint_gram, LfmConfig, LfmModel, MultiOutputSeries};

const DEFAULT_STARTS: usize = 4;
const MIN_LOG_STEP: f64 = 1e-3;

/// Flat parameter vector: [ln nu_q (Q), ln l_r (R), S_{r,q} (R*Q), ln eta_q (Q)].
#[derive(Debug, Clone)]
struct ParamVec {
    r: usize,
    q: usize,
    values: Vec<f64>,
}

impl ParamVec {
    fn from_config(config: &LfmConfig) -> Self {
        let r = config.num_forces();
        let q = config.num_outputs();
        let mut values = Vec::with_capacity(2 * q + r + r * q);
        values.extend(config.smoothing_widths().iter().map(|v| v.ln()));
        values.extend(config.lf_lengthscales().iter().map(|v| v.ln()));
        values.extend(config.sensitivities().iter().copied());
        values.extend(config.noise_stds().iter().map(|v| v.max(1e-8).ln()));
        Self { r, q, values }
    }

    fn to_config(&self) -> Result<LfmConfig> {
        let (r, q) = (self.r, self.q);
        let widths: Vec<f64> = self.values[..q].iter().map(|v| v.exp()).collect();
        let lengths: Vec<f64> = self.values[q..q + r].iter().map(|v| v.exp()).collect();
        let sens_flat = &self.values[q + r..q + r + r * q];
        let mut sens = Array2::zeros((r, q));
        for i in 0..r {
            for j in 0..q {
                sens[[i, j]] = sens_flat[i * q + j];
            }
        }
        let noises: Vec<f64> = self.values[q + r + r * q..].iter().map(|v| v.exp()).collect();
        LfmConfig::new(sens, lengths, widths, noises)
    }

    fn len(&self) -> usize {
        self.values.len()
    }

    fn is_sensitivity(&self, i: usize) -> bool {
        i >= self.q + self.r && i < self.q + self.r + self.r * self.q
    }

    /// Flip sensitivity rows so S_{r,0} >= 0; the likelihood is invariant.
    fn canonicalize_signs(&mut self) {
        let base = self.q + self.r;
        for row in 0..self.r {
            if self.values[base + row * self.q] < 0.0 {
                for col in 0..self.q {
                    self.values[base + row * self.q + col] *= -1.0;
                }
            }
        }
    }
}

struct Objective<'a> {
    series: &'a MultiOutputSeries,
    evals_left: usize,
}

impl Objective<'_> {
    fn eval(&mut self, params: &ParamVec) -> Option<f64> {
        if self.evals_left == 0 {
            return None;
        }
        self.evals_left -= 1;
        let config = match params.to_config() {
            Ok(c) => c,
            Err(_) => return Some(f64::NEG_INFINITY),
        };
        Some(log_marginal(&config, self.series))
    }
}

fn log_marginal(config: &LfmConfig, series: &MultiOutputSeries) -> f64 {
    let gram = match build_joint_gram(config, series) {
        Ok(g) => g,
        Err(_) => return f64::NEG_INFINITY,
    };
    let factor = match crate::linalg::factorize_default(gram.view()) {
        Ok(f) => f,
        Err(_) => return f64::NEG_INFINITY,
    };
    let y = series.stacked_values();
    let alpha = match factor.solve_vec(y.view()) {
        Ok(a) => a,
        Err(_) => return f64::NEG_INFINITY,
    };
    let n = y.len() as f64;
    let lml = -0.5 * y.dot(&alpha) - 0.5 * factor.log_det()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
    if lml.is_finite() {
        lml
    } else {
        f64::NEG_INFINITY
    }
}

/// Greedy coordinate pattern search from one start.
fn pattern_search(
    series: &MultiOutputSeries,
    start: ParamVec,
    budget: usize,
) -> (Option<ParamVec>, f64) {
    let mut obj = Objective { series, evals_left: budget };
    let mut current = start;
    current.canonicalize_signs();
    let mut best_val = match obj.eval(&current) {
        Some(v) => v,
        None => return (None, f64::NEG_INFINITY),
    };
    let mut steps: Vec<f64> = (0..current.len())
        .map(|i| if current.is_sensitivity(i) { 0.4 * current.values[i].abs().max(0.25) } else { 0.6 })
        .collect();

    loop {
        let mut improved = false;
        for i in 0..current.len() {
            for sign in [1.0, -1.0] {
                let mut cand = current.clone();
                cand.values[i] += sign * steps[i];
                cand.canonicalize_signs();
                match obj.eval(&cand) {
                    None => {
                        let ok = best_val.is_finite();
                        return (ok.then_some(current), best_val);
                    }
                    Some(v) => {
                        if v > best_val {
                            best_val = v;
                            current = cand;
                            improved = true;
                            break;
                        }
                    }
                }
            }
        }
        if !improved {
            for s in steps.iter_mut() {
                *s *= 0.5;
            }
            if steps.iter().all(|&s| s < MIN_LOG_STEP) {
                break;
            }
        }
    }
    let ok = best_val.is_finite();
    (ok.then_some(current), best_val)
}

/// Data-driven initial configuration for one restart.
fn heuristic_start(series: &MultiOutputSeries, r: usize, seed: u64, restart: u64) -> ParamVec {
    let mut rng = stream_rng(seed, 0x6c666d00 + restart);
    let q = series.num_outputs();
    let (mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut gaps: Vec<f64> = Vec::new();
    for o in series.outputs() {
        for w in o.times.windows(2) {
            gaps.push(w[1] - w[0]);
        }
        if let (Some(&first), Some(&last)) = (o.times.first(), o.times.last()) {
            tmin = tmin.min(first);
            tmax = tmax.max(last);
        }
    }
    let span = (tmax - tmin).max(1e-6);
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dt = gaps.get(gaps.len() / 2).copied().unwrap_or(span / 10.0).max(1e-6);

    let jitter = |rng: &mut rand_chacha::ChaCha8Rng| (rng.random_range(-0.5..0.5f64)).exp();

    let mut lengths = Vec::with_capacity(r);
    for k in 0..r {
        lengths.push((span / (6.0 * (k + 1) as f64)).max(2.0 * dt) * jitter(&mut rng));
    }
    let widths: Vec<f64> = (0..q).map(|_| (2.0 * dt).min(span / 8.0) * jitter(&mut rng)).collect();

    let stds: Vec<f64> = series
        .outputs()
        .iter()
        .map(|o| {
            if o.values.is_empty() {
                return 1.0;
            }
            let n = o.values.len() as f64;
            let mean = o.values.iter().sum::<f64>() / n;
            let var = o.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            var.sqrt().max(1e-3)
        })
        .collect();

    let mut sens = Array2::zeros((r, q));
    for i in 0..r {
        for j in 0..q {
            let l = lengths[i];
            let nu = widths[j];
            let c0 = 2.0 * std::f64::consts::PI * l * nu * nu / (l * l + 2.0 * nu * nu).sqrt();
            sens[[i, j]] = (stds[j] * stds[j] / (r as f64 * c0)).sqrt() * jitter(&mut rng);
        }
    }
    let noises: Vec<f64> = stds.iter().map(|s| 0.15 * s * jitter(&mut rng)).collect();

    let config = LfmConfig::new(sens, lengths, widths, noises).expect("heuristic start is valid");
    ParamVec::from_config(&config)
}

/// Fit an LFM with `r` latent forces by budgeted multi-start search.
pub fn fit_lfm(series: &MultiOutputSeries, r: usize, budget: usize, seed: u64) -> Result<LfmModel> {
    fit_lfm_with_starts(series, r, budget, seed, &[])
}

/// As [`fit_lfm`], with caller-provided configurations added to the start
/// set (each must match `r` and the series' output count).
pub fn fit_lfm_with_starts(
    series: &MultiOutputSeries,
    r: usize,
    budget: usize,
    seed: u64,
    extra_starts: &[LfmConfig],
) -> Result<LfmModel> {
    if r == 0 {
        return Err(Error::InvalidInput("need at least one latent force".into()));
    }
    if series.total_samples() < 10 {
        return Err(Error::InvalidInput(format!(
            "need at least 10 samples to fit, got {}",
            series.total_samples()
        )));
    }
    if budget == 0 {
        return Err(Error::InvalidInput("optimizer budget must be positive".into()));
    }
    for c in extra_starts {
        if c.num_forces() != r || c.num_outputs() != series.num_outputs() {
            return Err(Error::DimensionMismatch(format!(
                "extra start has R={} Q={}, expected R={r} Q={}",
                c.num_forces(),
                c.num_outputs(),
                series.num_outputs()
            )));
        }
    }

    let total_starts = DEFAULT_STARTS + extra_starts.len();
    let per_start = (budget / total_starts).max(1);

    let starts: Vec<ParamVec> = (0..DEFAULT_STARTS)
        .map(|i| heuristic_start(series, r, seed, i as u64))
        .chain(extra_starts.iter().map(ParamVec::from_config))
        .collect();

    let results: Vec<(Option<ParamVec>, f64)> = starts
        .into_par_iter()
        .map(|s| pattern_search(series, s, per_start))
        .collect();

    let mut best: Option<(ParamVec, f64)> = None;
    for (params, val) in results {
        let Some(p) = params else { continue };
        match &best {
            Some((_, bv)) if val <= *bv => {}
            _ => best = Some((p, val)),
        }
    }
    let (params, _) = best.ok_or(Error::NoFiniteObjective)?;
    let mut params = params;
    params.canonicalize_signs();
    LfmModel::from_config(params.to_config()?, series.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lfm::{sample_series, OutputSeries};
    use ndarray::array;

    fn grid(n: usize, span: f64) -> Vec<f64> {
        (0..n).map(|i| span * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn fit_recovers_at_least_the_generating_likelihood() {
        let truth = LfmConfig::new(array![[1.0, 0.8]], vec![1.5], vec![0.4, 0.5], vec![0.08, 0.08])
            .unwrap();
        let times = vec![grid(20, 8.0), grid(18, 8.0)];
        let series = sample_series(&truth, &times, 42).unwrap();
        let model = fit_lfm(&series, 1, 1200, 7).unwrap();
        let truth_lml = {
            let m = LfmModel::from_config(truth, series.clone()).unwrap();
            m.log_marginal_likelihood()
        };
        assert!(
            model.log_marginal_likelihood() >= truth_lml - 1e-3,
            "fit {} vs generating {}",
            model.log_marginal_likelihood(),
            truth_lml
        );
        // Sign convention: couplings to the first output are nonnegative.
        for r in 0..model.config().num_forces() {
            assert!(model.config().sensitivities()[[r, 0]] >= 0.0);
        }
    }

    #[test]
    fn nested_model_never_scores_worse_with_a_seeded_start() {
        let truth = LfmConfig::new(array![[1.0, 0.7]], vec![1.2], vec![0.4, 0.4], vec![0.1, 0.1])
            .unwrap();
        let times = vec![grid(15, 6.0), grid(15, 6.0)];
        let series = sample_series(&truth, &times, 5).unwrap();
        let r1 = fit_lfm(&series, 1, 800, 3).unwrap();

        // Embed the R=1 solution into an R=3 configuration with inert rows.
        let c1 = r1.config();
        let mut sens = Array2::zeros((3, 2));
        for j in 0..2 {
            sens[[0, j]] = c1.sensitivities()[[0, j]];
        }
        let embedded = LfmConfig::new(
            sens,
            vec![c1.lf_lengthscales()[0], 1.0, 2.0],
            c1.smoothing_widths().to_vec(),
            c1.noise_stds().to_vec(),
        )
        .unwrap();
        let r3 = fit_lfm_with_starts(&series, 3, 800, 3, &[embedded]).unwrap();
        assert!(
            r3.log_marginal_likelihood() >= r1.log_marginal_likelihood() - 1e-9,
            "R=3 {} vs R=1 {}",
            r3.log_marginal_likelihood(),
            r1.log_marginal_likelihood()
        );
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let series = MultiOutputSeries::new(vec![OutputSeries {
            id: "y".into(),
            times: vec![0.0, 1.0],
            values: vec![0.0, 1.0],
        }])
        .unwrap();
        assert!(fit_lfm(&series, 1, 100, 0).is_err());
    }
}
