//! Automatic GP emulation of a costly function.
//!
//! The loop interpolates the oracle with one zero-noise GP per output and
//! adds the node maximizing the acquisition
//! `A_t(y) = [H_t(y)]^{beta_t} D_t(y)`, where `D` is the interpolator's
//! predictive variance (zero exactly at every node), `H` is the norm of
//! the interpolant gradient, and `beta_t = 1 - exp(-gamma t)` phases the
//! geometry term in as the surrogate becomes trustworthy. For several
//! outputs both terms are products over the per-output interpolators and
//! a single acquisition drives the shared node set.

mod anneal;
mod oracle;
pub mod samplers;

pub use anneal::AnnealConfig;
pub use oracle::{atmospheric_2d, Oracle};
pub use samplers::{sample_nodes, SamplerKind};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::gp::{Dataset, GpHyperparams, GpModel};
use crate::kernels::{median_pairwise_distance, SeKernel};
use crate::rng::derive_seed;

/// Floor applied to the geometry product before exponentiation so the
/// acquisition stays defined on an exactly flat interpolant.
const GEOMETRY_FLOOR: f64 = 1e-12;

/// Minimum separation between nodes, as a fraction of the domain width,
/// keeping the zero-noise Gram matrix factorizable.
const MIN_SEPARATION: f64 = 1e-9;

/// Tempering schedule `beta_t = 1 - exp(-rate * t)`.
pub fn tempering(t: u64, rate: f64) -> f64 {
    1.0 - (-rate * t as f64).exp()
}

/// One zero-noise GP per output, fitted to centered outputs.
#[derive(Debug, Clone)]
struct OutputInterpolator {
    model: GpModel,
    shift: f64,
}

/// Emulation loop state: nodes, outputs, per-output interpolators, and the
/// snapshots used by the stopping rule.
#[derive(Debug, Clone)]
pub struct EmulatorState {
    domain: Vec<(f64, f64)>,
    nodes: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    iteration: u64,
    tempering_rate: f64,
    interp: Vec<OutputInterpolator>,
    stop_grid: Vec<Vec<f64>>,
    last_snapshot: Option<Vec<Vec<f64>>>,
    prev_snapshot: Option<Vec<Vec<f64>>>,
}

impl EmulatorState {
    /// Build a state from already-evaluated nodes and fit the
    /// interpolators. `seed` fixes the stopping grid for domains beyond
    /// two dimensions.
    pub fn from_data(
        domain: Vec<(f64, f64)>,
        nodes: Vec<Vec<f64>>,
        outputs: Vec<Vec<f64>>,
        tempering_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        if domain.is_empty() || domain.iter().any(|&(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidInput("domain must be nonempty intervals".into()));
        }
        if nodes.len() != outputs.len() || nodes.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} nodes vs {} output rows",
                nodes.len(),
                outputs.len()
            )));
        }
        let k = outputs[0].len();
        if k == 0 || outputs.iter().any(|o| o.len() != k) {
            return Err(Error::InvalidInput("output rows must share a positive length".into()));
        }
        for n in &nodes {
            if n.len() != domain.len() {
                return Err(Error::DimensionMismatch(format!(
                    "node has {} coordinates, domain has {}",
                    n.len(),
                    domain.len()
                )));
            }
            if !n.iter().zip(&domain).all(|(v, &(lo, hi))| *v >= lo && *v <= hi) {
                return Err(Error::InvalidInput(format!("node {n:?} lies outside the domain")));
            }
        }
        for i in 0..nodes.len() {
            for j in 0..i {
                if normalized_distance(&nodes[i], &nodes[j], &domain) < MIN_SEPARATION {
                    return Err(Error::InvalidInput(format!(
                        "nodes {j} and {i} coincide within the minimum separation"
                    )));
                }
            }
        }
        let stop_grid = stopping_grid(&domain, seed)?;
        let mut state = Self {
            domain,
            nodes,
            outputs,
            iteration: 0,
            tempering_rate,
            interp: Vec::new(),
            stop_grid,
            last_snapshot: None,
            prev_snapshot: None,
        };
        state.refit()?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.domain.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs[0].len()
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    /// Current tempering exponent.
    pub fn beta(&self) -> f64 {
        tempering(self.iteration, self.tempering_rate)
    }

    fn node_matrix(&self) -> Array2<f64> {
        let d = self.input_dim();
        let mut m = Array2::zeros((self.nodes.len(), d));
        for (i, n) in self.nodes.iter().enumerate() {
            for (j, v) in n.iter().enumerate() {
                m[[i, j]] = *v;
            }
        }
        m
    }

    /// Refit every per-output interpolator, re-selecting the lengthscale
    /// by leave-one-out cross-validation over a log-spaced grid. Marginal
    /// likelihood degenerates under exact interpolation once node gaps
    /// span orders of magnitude (any wide lengthscale makes the Gram
    /// numerically singular and the jitter that rescues it acts as hidden
    /// noise in the density), while the leave-one-out error directly
    /// scores mid-gap prediction, which is what the emulator is used for.
    fn refit(&mut self) -> Result<()> {
        let inputs = self.node_matrix();
        let med = median_pairwise_distance(inputs.view());
        let mut interp = Vec::with_capacity(self.num_outputs());
        for k in 0..self.num_outputs() {
            let raw = Array1::from_iter(self.outputs.iter().map(|o| o[k]));
            let shift = raw.sum() / raw.len() as f64;
            let centered = &raw - shift;
            let var = centered.iter().map(|v| v * v).sum::<f64>() / raw.len() as f64;
            let signal_variance = if var > 1e-12 { var } else { 1e-12 };
            let data = Dataset::new(inputs.clone(), centered)?;
            let hp = self
                .select_interpolation_lengthscale(&data, med, signal_variance)?
                .unwrap_or(GpHyperparams { lengthscale: med, noise_std: 0.0, signal_variance });
            let model = GpModel::fit(&data, &hp)?;
            interp.push(OutputInterpolator { model, shift });
        }
        self.interp = interp;
        Ok(())
    }

    fn select_interpolation_lengthscale(
        &self,
        data: &Dataset,
        med: f64,
        signal_variance: f64,
    ) -> Result<Option<GpHyperparams>> {
        if data.len() < 3 {
            return Ok(None);
        }
        let candidates = crate::gp::log_space(1e-2 * med, 1e2 * med, 15);
        let y = data.targets();
        let mut best: Option<(f64, f64)> = None;
        for ls in candidates {
            let kernel = match SeKernel::with_signal_variance(ls, signal_variance) {
                Ok(k) => k,
                Err(_) => continue,
            };
            let gram = kernel.gram(data.inputs(), 0.0)?;
            let Ok(factor) = crate::linalg::factorize_default(gram.view()) else {
                continue;
            };
            // Leave-one-out log predictive density from the precision
            // identities: residual_i = [K^-1 y]_i / [K^-1]_ii and
            // sigma_i^2 = 1 / [K^-1]_ii. Scoring the density rather than
            // the squared error matters: an over-wide lengthscale whose
            // jittered fit claims near-zero variance everywhere would ace
            // a pure error criterion while destroying the diversity term.
            let precision = factor.inverse();
            let py = precision.dot(y);
            let mut score = 0.0;
            for i in 0..data.len() {
                let pii = precision[[i, i]];
                let r = py[i] / pii;
                let s2 = 1.0 / pii;
                score += -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - r * r / (2.0 * s2);
            }
            if !score.is_finite() {
                continue;
            }
            match best {
                Some((_, bv)) if score <= bv => {}
                _ => best = Some((ls, score)),
            }
        }
        Ok(best.map(|(ls, _)| GpHyperparams {
            lengthscale: ls,
            noise_std: 0.0,
            signal_variance,
        }))
    }

    /// Interpolated value of output `k` at `y`.
    pub fn predict(&self, k: usize, y: &[f64]) -> Result<f64> {
        let it = self.interp.get(k).ok_or_else(|| {
            Error::InvalidInput(format!("output index {k} out of range"))
        })?;
        let q = Array2::from_shape_vec((1, y.len()), y.to_vec())
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        let (mean, _) = it.model.predict(q.view())?;
        Ok(mean[0] + it.shift)
    }

    /// All interpolated outputs at `y`.
    pub fn predict_all(&self, y: &[f64]) -> Result<Vec<f64>> {
        (0..self.num_outputs()).map(|k| self.predict(k, y)).collect()
    }

    /// Diversity term for output `k`: the zero-noise GP predictive
    /// variance, exactly zero at every node.
    pub fn diversity(&self, k: usize, y: &[f64]) -> Result<f64> {
        let it = self.interp.get(k).ok_or_else(|| {
            Error::InvalidInput(format!("output index {k} out of range"))
        })?;
        let q = Array2::from_shape_vec((1, y.len()), y.to_vec())
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        let (_, var) = it.model.predict(q.view())?;
        Ok(var[0])
    }

    /// Geometry term for output `k`: the norm of the interpolant gradient
    /// `|| sum_i alpha_i grad k(y, y_i) ||`.
    pub fn geometry(&self, k: usize, y: &[f64]) -> Result<f64> {
        let it = self.interp.get(k).ok_or_else(|| {
            Error::InvalidInput(format!("output index {k} out of range"))
        })?;
        let q = Array1::from(y.to_vec());
        let kernel: &SeKernel = it.model.kernel();
        let alpha = it.model.alpha();
        let mut grad = Array1::<f64>::zeros(y.len());
        for (i, row) in it.model.support().rows().into_iter().enumerate() {
            let g = kernel.gradient(q.view(), row)?;
            grad.scaled_add(alpha[i], &g);
        }
        Ok(grad.dot(&grad).sqrt())
    }

    /// Acquisition `[prod_k H_k]^beta * prod_k D_k`, zero at every node.
    /// The geometry product is floored at 1e-12 before exponentiation so
    /// the `H = 0, beta > 0` corner stays defined.
    pub fn acquisition(&self, y: &[f64]) -> Result<f64> {
        let beta = self.beta();
        let mut diversity = 1.0;
        let mut geometry = 1.0;
        for k in 0..self.num_outputs() {
            diversity *= self.diversity(k, y)?;
            geometry *= self.geometry(k, y)?;
        }
        Ok(geometry.max(GEOMETRY_FLOOR).powf(beta) * diversity)
    }

    fn log_acquisition(&self, y: &[f64]) -> f64 {
        match self.acquisition(y) {
            Ok(a) if a > 0.0 => a.ln(),
            _ => f64::NEG_INFINITY,
        }
    }

    fn min_normalized_node_distance(&self, y: &[f64]) -> f64 {
        self.nodes
            .iter()
            .map(|n| normalized_distance(n, y, &self.domain))
            .fold(f64::INFINITY, f64::min)
    }

    /// Acquisition maximizer for the next node: best point over the
    /// annealing chains, falling back to a scrambled low-discrepancy probe
    /// when every chain collapses onto the current nodes.
    pub fn maximize_acquisition(&self, cfg: &AnnealConfig) -> Result<Vec<f64>> {
        cfg.validate()?;
        if self.nodes.is_empty() {
            return Err(Error::InvalidInput("state has no nodes".into()));
        }
        let log_acq = |y: &[f64]| self.log_acquisition(y);
        let (best, best_val) = anneal::maximize(&self.domain, &log_acq, cfg, self.iteration);
        if best_val.is_finite() && self.min_normalized_node_distance(&best) >= MIN_SEPARATION {
            return Ok(best);
        }
        // Fallback probe: maximize acquisition, breaking ties (and the
        // all-zero case) by distance to the nearest node.
        let probe = samplers::scrambled_probe(
            &self.domain,
            1024,
            derive_seed(cfg.seed, self.iteration ^ 0x70726f62),
        )?;
        let mut best: Option<(Vec<f64>, f64, f64)> = None;
        for p in probe {
            let sep = self.min_normalized_node_distance(&p);
            if sep < MIN_SEPARATION {
                continue;
            }
            let a = self.acquisition(&p)?;
            let better = match &best {
                None => true,
                Some((_, ba, bsep)) => a > *ba || (a == *ba && sep > *bsep),
            };
            if better {
                best = Some((p, a, sep));
            }
        }
        best.map(|(p, _, _)| p)
            .ok_or_else(|| Error::InvalidInput("no probe point clears the node separation".into()))
    }

    /// One emulation step: pick the next node, evaluate the oracle there
    /// once, refit the interpolators, and rotate the stopping snapshots.
    pub fn step(&mut self, oracle: &mut Oracle, cfg: &AnnealConfig) -> Result<StepInfo> {
        let node = self.maximize_acquisition(cfg)?;
        let acquisition = self.acquisition(&node)?;
        let value = oracle.evaluate(&node)?;
        if value.len() != self.num_outputs() {
            return Err(Error::DimensionMismatch(format!(
                "oracle returned {} outputs, state has {}",
                value.len(),
                self.num_outputs()
            )));
        }
        self.nodes.push(node.clone());
        self.outputs.push(value);
        self.refit()?;
        let grid_values = self.snapshot_on_grid()?;
        self.prev_snapshot = self.last_snapshot.take();
        self.last_snapshot = Some(grid_values);
        self.iteration += 1;
        Ok(StepInfo { node, acquisition })
    }

    fn snapshot_on_grid(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.num_outputs())
            .map(|k| self.stop_grid.iter().map(|p| self.predict(k, p)).collect())
            .collect()
    }

    /// Root-mean-square change between the two most recent post-step
    /// interpolants on the fixed grid, aggregated over outputs by max.
    /// Infinite until two steps have completed.
    pub fn stopping_distance(&self) -> f64 {
        let (Some(prev), Some(last)) = (&self.prev_snapshot, &self.last_snapshot) else {
            return f64::INFINITY;
        };
        let mut worst: f64 = 0.0;
        for (a, b) in prev.iter().zip(last) {
            let ms = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
            worst = worst.max(ms.sqrt());
        }
        worst
    }

    fn has_comparable_snapshots(&self) -> bool {
        self.prev_snapshot.is_some() && self.last_snapshot.is_some()
    }

    /// Mean squared error of the interpolant against reference values,
    /// averaged over grid points and outputs.
    pub fn mse_on(&self, truth: &TruthGrid) -> Result<f64> {
        if truth.points.len() != truth.values.len() || truth.points.is_empty() {
            return Err(Error::InvalidInput("truth grid points/values mismatch".into()));
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for (p, vals) in truth.points.iter().zip(&truth.values) {
            let pred = self.predict_all(p)?;
            if vals.len() != pred.len() {
                return Err(Error::DimensionMismatch(format!(
                    "truth row has {} outputs, state has {}",
                    vals.len(),
                    pred.len()
                )));
            }
            for (a, b) in vals.iter().zip(&pred) {
                total += (a - b) * (a - b);
                count += 1;
            }
        }
        Ok(total / count as f64)
    }
}

fn normalized_distance(a: &[f64], b: &[f64], domain: &[(f64, f64)]) -> f64 {
    a.iter()
        .zip(b)
        .zip(domain)
        .map(|((x, y), &(lo, hi))| {
            let d = (x - y) / (hi - lo);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Deterministic stopping grid: a full 33-per-axis lattice up to two
/// dimensions, a 4096-point scrambled low-discrepancy set beyond.
fn stopping_grid(domain: &[(f64, f64)], seed: u64) -> Result<Vec<Vec<f64>>> {
    let d = domain.len();
    if d <= 2 {
        let per_axis = 33usize;
        let axis = |lo: f64, hi: f64| -> Vec<f64> {
            (0..per_axis).map(|i| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64).collect()
        };
        if d == 1 {
            let (lo, hi) = domain[0];
            Ok(axis(lo, hi).into_iter().map(|v| vec![v]).collect())
        } else {
            let xs = axis(domain[0].0, domain[0].1);
            let ys = axis(domain[1].0, domain[1].1);
            let mut grid = Vec::with_capacity(per_axis * per_axis);
            for x in &xs {
                for y in &ys {
                    grid.push(vec![*x, *y]);
                }
            }
            Ok(grid)
        }
    } else {
        samplers::scrambled_probe(domain, 4096, derive_seed(seed, 0x73746f70))
    }
}

/// Node and acquisition value chosen by one step.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub node: Vec<f64>,
    pub acquisition: f64,
}

/// Stopping rule: interpolant-change threshold and a hard node budget.
#[derive(Debug, Clone, Copy)]
pub struct StopRule {
    pub epsilon: f64,
    pub max_nodes: usize,
}

/// Reference evaluations of the true function on a dense grid.
#[derive(Debug, Clone)]
pub struct TruthGrid {
    pub points: Vec<Vec<f64>>,
    /// One row per point, one column per output.
    pub values: Vec<Vec<f64>>,
}

/// Per-iteration history of an emulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// MSE of the initial interpolant against the truth grid, if provided.
    pub initial_true_mse: Option<f64>,
    pub iterations: Vec<IterationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Node count after this step.
    pub nodes: usize,
    pub node: Vec<f64>,
    pub acquisition: f64,
    pub stopping_distance: f64,
    pub true_mse: Option<f64>,
}

/// Run the emulation loop from initial nodes until the interpolant change
/// drops to `epsilon` (measured once two post-step snapshots exist) or the
/// node budget is reached.
pub fn run(
    oracle: &mut Oracle,
    initial_nodes: &[Vec<f64>],
    anneal_cfg: &AnnealConfig,
    tempering_rate: f64,
    stop: &StopRule,
    truth: Option<&TruthGrid>,
) -> Result<(EmulatorState, RunRecord)> {
    if initial_nodes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 initial nodes, got {}",
            initial_nodes.len()
        )));
    }
    if !(tempering_rate >= 0.0) {
        return Err(Error::InvalidInput("tempering rate must be nonnegative".into()));
    }
    for n in initial_nodes {
        if !oracle.contains(n) {
            return Err(Error::InvalidInput(format!("initial node {n:?} outside the oracle domain")));
        }
    }
    let mut outputs = Vec::with_capacity(initial_nodes.len());
    for n in initial_nodes {
        outputs.push(oracle.evaluate(n)?);
    }
    let mut state = EmulatorState::from_data(
        oracle.domain().to_vec(),
        initial_nodes.to_vec(),
        outputs,
        tempering_rate,
        anneal_cfg.seed,
    )?;
    let mut record = RunRecord {
        initial_true_mse: truth.map(|t| state.mse_on(t)).transpose()?,
        iterations: Vec::new(),
    };
    while state.len() < stop.max_nodes {
        let info = state.step(oracle, anneal_cfg)?;
        let distance = state.stopping_distance();
        record.iterations.push(IterationRecord {
            nodes: state.len(),
            node: info.node,
            acquisition: info.acquisition,
            stopping_distance: distance,
            true_mse: truth.map(|t| state.mse_on(t)).transpose()?,
        });
        if state.has_comparable_snapshots() && distance <= stop.epsilon {
            break;
        }
    }
    Ok((state, record))
}
