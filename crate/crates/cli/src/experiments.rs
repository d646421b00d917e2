//! Experiment runners: k-fold JGP comparisons on one site, cross-site
//! transfer matrices, and node-efficiency benchmarks for the emulation
//! loop against space-filling baselines.

use ndarray::{Array1, Axis};
use rayon::prelude::*;

use gpkit_core::agape::{sample_nodes, AnnealConfig, EmulatorState, Oracle, SamplerKind, TruthGrid};
use gpkit_core::gp::{log_space, optimize_hyperparams, GpModel, HyperGrid};
use gpkit_core::jgp::{optimize_jgp, JgpGrid, JgpModel};
use gpkit_core::kernels::median_pairwise_distance;
use gpkit_core::rng::{derive_seed, stream_rng};
use gpkit_core::{SourceFlag, TaggedDataset};
use rand::seq::SliceRandom;

use crate::config::{BenchEmulationConfig, BenchJgpConfig, SearchSpec};
use crate::error::{CliError, Result};
use crate::synth::{concat_tagged, generate_site_data};
use crate::tables::{RecordRow, RunRecord};

/// Training strategies compared in the JGP experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Standard GP on real rows only.
    GpReal,
    /// Standard GP on real and simulated rows pooled without distinction.
    GpPooled,
    /// Joint GP with the gamma weighting learned from the data.
    Jgp,
    /// Standard GP on simulated rows only (cross-site).
    GpSim,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::GpReal => "gp_r",
            Strategy::GpPooled => "gp_r+s",
            Strategy::Jgp => "jgp",
            Strategy::GpSim => "gp_s",
        }
    }
}

/// Shared grid construction: lengthscales and noise levels are log-spaced
/// over the default ranges anchored on the training data; gamma covers
/// [1e-3, 1e3] for the JGP and collapses to {1} for the unweighted
/// strategies.
fn build_grid(train: &TaggedDataset, spec: &SearchSpec, learn_gamma: bool) -> JgpGrid {
    let pooled = train.pooled();
    let med = median_pairwise_distance(pooled.inputs());
    let n = pooled.len() as f64;
    let mean = pooled.targets().sum() / n;
    let var = pooled.targets().iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    JgpGrid {
        base: HyperGrid {
            lengthscales: log_space(1e-2 * med, 1e2 * med, spec.lengthscales),
            noise_stds: log_space(1e-4 * std, std, spec.noise_levels),
            signal_variances: vec![if var > 0.0 { var } else { 1.0 }],
        },
        gammas: if learn_gamma { log_space(1e-3, 1e3, spec.gammas) } else { vec![1.0] },
    }
}

/// The full JGP search grid (gamma learned) for a dataset.
pub fn jgp_grid_for(data: &TaggedDataset, spec: &SearchSpec) -> JgpGrid {
    build_grid(data, spec, true)
}

fn select_rows(data: &TaggedDataset, keep: &[usize], override_flags: Option<SourceFlag>) -> Result<TaggedDataset> {
    let inputs = data.inputs().select(Axis(0), keep);
    let targets = data.targets().select(Axis(0), keep);
    let flags = keep
        .iter()
        .map(|&i| override_flags.unwrap_or(data.flags()[i]))
        .collect();
    Ok(TaggedDataset::new(inputs, targets, flags)?)
}

fn rmse(truth: &Array1<f64>, pred: &Array1<f64>) -> f64 {
    let n = truth.len() as f64;
    (truth
        .iter()
        .zip(pred.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Fit one strategy on a training set and predict the given inputs.
/// Hyperparameters are selected on the training set: real-row leave-one-out
/// pseudo-likelihood for the GP/JGP strategies (one shared rule, so the
/// strategies coincide exactly when no simulated rows exist) and marginal
/// likelihood for the sim-only model, which has no real rows to score.
fn fit_predict(
    strategy: Strategy,
    train: &TaggedDataset,
    query: ndarray::ArrayView2<'_, f64>,
    spec: &SearchSpec,
) -> Result<Array1<f64>> {
    let prepared = match strategy {
        Strategy::GpReal => {
            let keep: Vec<usize> = (0..train.len())
                .filter(|&i| train.flags()[i] == SourceFlag::Real)
                .collect();
            select_rows(train, &keep, Some(SourceFlag::Real))?
        }
        Strategy::GpPooled => {
            let all: Vec<usize> = (0..train.len()).collect();
            select_rows(train, &all, Some(SourceFlag::Real))?
        }
        Strategy::Jgp => train.clone(),
        Strategy::GpSim => {
            let data = train.subset(SourceFlag::Simulated)?;
            let hp = optimize_hyperparams(&data, &HyperGrid::default_for(&data))
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            let model = GpModel::fit(&data, &hp)?;
            let (mean, _) = model.predict(query)?;
            return Ok(mean);
        }
    };
    let grid = build_grid(&prepared, spec, strategy == Strategy::Jgp);
    let hp = optimize_jgp(&prepared, &grid).map_err(|e| CliError::Numeric(e.to_string()))?;
    let model = JgpModel::fit(&prepared, &hp)?;
    let (mean, _) = model.predict(query)?;
    Ok(mean)
}

/// K-fold cross-validation over the real rows; simulated rows stay in
/// every training fold.
pub struct KfoldOutcome {
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
    /// (row index into `data`, prediction) for every held-out real row.
    pub predictions: Vec<(usize, f64)>,
}

pub fn kfold_rmse(
    data: &TaggedDataset,
    strategy: Strategy,
    k: usize,
    seed: u64,
    spec: &SearchSpec,
) -> Result<KfoldOutcome> {
    let real_idx: Vec<usize> =
        (0..data.len()).filter(|&i| data.flags()[i] == SourceFlag::Real).collect();
    if k < 2 || k > real_idx.len() {
        return Err(CliError::config(format!(
            "fold count {k} must lie in [2, {}] (number of real rows)",
            real_idx.len()
        )));
    }
    let mut shuffled = real_idx.clone();
    let mut rng = stream_rng(derive_seed(seed, 0x666f6c64), 0);
    shuffled.shuffle(&mut rng);

    let mut fold_rmse = Vec::with_capacity(k);
    let mut predictions = Vec::new();
    for fold in 0..k {
        let test: Vec<usize> =
            shuffled.iter().copied().skip(fold).step_by(k).collect();
        let train: Vec<usize> = (0..data.len()).filter(|i| !test.contains(i)).collect();
        let train_set = select_rows(data, &train, None)?;
        let query = data.inputs().select(Axis(0), &test);
        let truth = data.targets().select(Axis(0), &test);
        let pred = fit_predict(strategy, &train_set, query.view(), spec)?;
        fold_rmse.push(rmse(&truth, &pred));
        predictions.extend(test.iter().copied().zip(pred.iter().copied()));
    }
    let mean_rmse = fold_rmse.iter().sum::<f64>() / k as f64;
    predictions.sort_by_key(|(i, _)| *i);
    Ok(KfoldOutcome { fold_rmse, mean_rmse, predictions })
}

/// Same-site experiment: RMSE of GP_r, GP_r+s, and JGP under k-fold
/// cross-validation as the simulated-to-real ratio sweeps the config grid.
/// Uses the first configured site.
pub fn run_samesite(cfg: &BenchJgpConfig, seeds: &[u64]) -> Result<RunRecord> {
    let site = cfg
        .sites
        .first()
        .ok_or_else(|| CliError::config("bench_jgp needs at least one [[bench_jgp.sites]]"))?;
    let strategies = [Strategy::GpReal, Strategy::GpPooled, Strategy::Jgp];
    let per_seed: Vec<Vec<RecordRow>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<RecordRow>> {
            let mut rows = Vec::new();
            for &ratio in &cfg.ratios {
                let n_sim = (ratio * cfg.real_rows as f64).round() as usize;
                let data = generate_site_data(
                    site,
                    &cfg.target_model,
                    cfg.real_rows,
                    n_sim,
                    cfg.real_noise,
                    cfg.sim_noise,
                    cfg.sim_bias,
                    seed,
                    0,
                )?;
                for strategy in strategies {
                    let outcome = kfold_rmse(&data, strategy, cfg.folds, seed, &cfg.search)?;
                    rows.push(RecordRow {
                        experiment: "samesite".into(),
                        method: strategy.label().into(),
                        param: format!("{ratio}"),
                        iteration: None,
                        seed,
                        metric: "rmse".into(),
                        value: outcome.mean_rmse,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut record = RunRecord::default();
    for rows in per_seed {
        record.extend(rows);
    }
    Ok(record)
}

/// Cross-site experiment: for every source/target pair, train each
/// strategy on source-real plus target-simulated data and score it on the
/// target's real rows.
pub fn run_crosssite(cfg: &BenchJgpConfig, seeds: &[u64]) -> Result<RunRecord> {
    if cfg.sites.len() < 2 {
        return Err(CliError::config("cross-site runs need at least two sites"));
    }
    let n_sim = cfg.sim_rows.unwrap_or(cfg.real_rows);
    let strategies = [Strategy::GpReal, Strategy::GpSim, Strategy::GpPooled, Strategy::Jgp];
    let per_seed: Vec<Vec<RecordRow>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<RecordRow>> {
            // One dataset per site, reused across every pair.
            let mut site_data = Vec::new();
            for (i, site) in cfg.sites.iter().enumerate() {
                site_data.push(generate_site_data(
                    site,
                    &cfg.target_model,
                    cfg.real_rows,
                    n_sim,
                    cfg.real_noise,
                    cfg.sim_noise,
                    cfg.sim_bias,
                    seed,
                    i as u64,
                )?);
            }
            let mut rows = Vec::new();
            for (si, src_site) in cfg.sites.iter().enumerate() {
                for (ti, tgt_site) in cfg.sites.iter().enumerate() {
                    let src_real_idx: Vec<usize> = (0..site_data[si].len())
                        .filter(|&r| site_data[si].flags()[r] == SourceFlag::Real)
                        .collect();
                    let src_real = select_rows(&site_data[si], &src_real_idx, None)?;
                    let tgt_sim_idx: Vec<usize> = (0..site_data[ti].len())
                        .filter(|&r| site_data[ti].flags()[r] == SourceFlag::Simulated)
                        .collect();
                    let tgt_sim = select_rows(&site_data[ti], &tgt_sim_idx, None)?;
                    let train = concat_tagged(&src_real, &tgt_sim)?;

                    let tgt_real = site_data[ti].subset(SourceFlag::Real)?;
                    for strategy in strategies {
                        let pred =
                            fit_predict(strategy, &train, tgt_real.inputs(), &cfg.search)?;
                        rows.push(RecordRow {
                            experiment: "crosssite".into(),
                            method: strategy.label().into(),
                            param: format!("{}->{}", src_site.name, tgt_site.name),
                            iteration: None,
                            seed,
                            metric: "rmse".into(),
                            value: rmse(tgt_real.targets(), &pred),
                        });
                    }
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut record = RunRecord::default();
    for rows in per_seed {
        record.extend(rows);
    }
    Ok(record)
}

/// Tensor grid over the oracle domain with the given per-axis counts.
pub fn build_truth_grid(oracle_name: &str, counts: &[usize]) -> Result<TruthGrid> {
    let mut oracle = Oracle::builtin(oracle_name)?;
    if counts.len() != oracle.input_dim() {
        return Err(CliError::config(format!(
            "truth_grid has {} axes, oracle '{oracle_name}' has {}",
            counts.len(),
            oracle.input_dim()
        )));
    }
    let axes: Vec<Vec<f64>> = oracle
        .domain()
        .iter()
        .zip(counts)
        .map(|(&(lo, hi), &n)| {
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64).collect()
        })
        .collect();
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for v in axis {
                let mut q = p.clone();
                q.push(*v);
                next.push(q);
            }
        }
        points = next;
    }
    let mut values = Vec::with_capacity(points.len());
    for p in &points {
        values.push(oracle.evaluate(p)?);
    }
    Ok(TruthGrid { points, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BenchMethod {
    Agape,
    Sampler(SamplerKind),
}

fn parse_method(name: &str) -> Result<BenchMethod> {
    match name.to_ascii_lowercase().as_str() {
        "agape" | "amogape" => Ok(BenchMethod::Agape),
        other => Ok(BenchMethod::Sampler(
            SamplerKind::parse(other).map_err(|e| CliError::config(e.to_string()))?,
        )),
    }
}

#[derive(Debug, Clone, Copy)]
enum BenchMode {
    /// Grow until the truth-grid RMS distance drops below epsilon.
    ToEpsilon(f64),
    /// Add exactly this many nodes, recording the error curve.
    FixedBudget(usize),
}

fn bench_mode(cfg: &BenchEmulationConfig) -> Result<BenchMode> {
    match cfg.mode.as_str() {
        "to-epsilon" => Ok(BenchMode::ToEpsilon(cfg.epsilon.ok_or_else(|| {
            CliError::config("mode 'to-epsilon' requires an epsilon value")
        })?)),
        "fixed-budget" => Ok(BenchMode::FixedBudget(cfg.added_points.ok_or_else(|| {
            CliError::config("mode 'fixed-budget' requires added_points")
        })?)),
        other => Err(CliError::config(format!(
            "unknown bench mode '{other}' (expected 'to-epsilon' or 'fixed-budget')"
        ))),
    }
}

fn initial_state(
    oracle: &mut Oracle,
    initial_nodes: &[Vec<f64>],
    tempering_rate: f64,
    seed: u64,
) -> Result<EmulatorState> {
    let mut outputs = Vec::with_capacity(initial_nodes.len());
    for n in initial_nodes {
        outputs.push(oracle.evaluate(n)?);
    }
    Ok(EmulatorState::from_data(
        oracle.domain().to_vec(),
        initial_nodes.to_vec(),
        outputs,
        tempering_rate,
        seed,
    )?)
}

/// One method on one seed: the per-node-count MSE trace up to the stopping
/// point, plus the node count at which the truth distance first crossed
/// epsilon (capped at max_nodes when it never does).
fn bench_one(
    cfg: &BenchEmulationConfig,
    method: BenchMethod,
    mode: BenchMode,
    truth: &TruthGrid,
    seed: u64,
) -> Result<Vec<RecordRow>> {
    let method_label = match method {
        BenchMethod::Agape => "agape".to_string(),
        BenchMethod::Sampler(kind) => kind.label().to_string(),
    };
    let m0 = cfg.initial_nodes.len();
    let cap = match mode {
        BenchMode::ToEpsilon(_) => cfg.max_nodes,
        BenchMode::FixedBudget(added) => m0 + added,
    };
    let mut rows = Vec::new();
    let mut crossed: Option<usize> = None;
    let eps = match mode {
        BenchMode::ToEpsilon(e) => Some(e),
        BenchMode::FixedBudget(_) => None,
    };

    let push_mse = |rows: &mut Vec<RecordRow>, m: usize, mse: f64| {
        rows.push(RecordRow {
            experiment: "emulation".into(),
            method: method_label.clone(),
            param: String::new(),
            iteration: Some(m as u64),
            seed,
            metric: "mse".into(),
            value: mse,
        });
    };

    match method {
        BenchMethod::Agape => {
            let mut oracle = Oracle::builtin(&cfg.oracle)?;
            let anneal = AnnealConfig {
                seed: derive_seed(seed, 0x6147_0000),
                ..cfg.anneal.to_config(0)
            };
            let mut state =
                initial_state(&mut oracle, &cfg.initial_nodes, cfg.tempering_rate, anneal.seed)?;
            let mut mse = state.mse_on(truth)?;
            push_mse(&mut rows, state.len(), mse);
            if eps.is_some_and(|e| mse.sqrt() < e) {
                crossed = Some(state.len());
            }
            while state.len() < cap && crossed.is_none() {
                state.step(&mut oracle, &anneal)?;
                mse = state.mse_on(truth)?;
                push_mse(&mut rows, state.len(), mse);
                if eps.is_some_and(|e| mse.sqrt() < e) {
                    crossed = Some(state.len());
                }
            }
        }
        BenchMethod::Sampler(kind) => {
            let mut oracle = Oracle::builtin(&cfg.oracle)?;
            let domain = oracle.domain().to_vec();
            let redraw_lhc = kind == SamplerKind::Lhc;
            let sequence = if redraw_lhc {
                Vec::new()
            } else {
                sample_nodes(kind, &domain, cap - m0, derive_seed(seed, 0x7361_0000))?
            };
            for m in m0..=cap {
                let added: Vec<Vec<f64>> = if redraw_lhc {
                    if m == m0 {
                        Vec::new()
                    } else {
                        sample_nodes(
                            SamplerKind::Lhc,
                            &domain,
                            m - m0,
                            derive_seed(seed, 0x4c48_0000 + m as u64),
                        )?
                    }
                } else {
                    sequence[..m - m0].to_vec()
                };
                let mut nodes = cfg.initial_nodes.clone();
                nodes.extend(added);
                let mut outputs = Vec::with_capacity(nodes.len());
                for n in &nodes {
                    outputs.push(oracle.evaluate(n)?);
                }
                let state = EmulatorState::from_data(
                    domain.clone(),
                    nodes,
                    outputs,
                    cfg.tempering_rate,
                    derive_seed(seed, 0x7374_0000),
                )?;
                let mse = state.mse_on(truth)?;
                push_mse(&mut rows, m, mse);
                if eps.is_some_and(|e| mse.sqrt() < e) {
                    crossed = Some(m);
                    break;
                }
            }
        }
    }

    if let BenchMode::ToEpsilon(_) = mode {
        rows.push(RecordRow {
            experiment: "emulation".into(),
            method: method_label,
            param: String::new(),
            iteration: None,
            seed,
            metric: "nodes_to_eps".into(),
            value: crossed.unwrap_or(cap) as f64,
        });
    }
    Ok(rows)
}

/// Full emulation benchmark: every configured method on every seed.
pub fn run_emulation_bench(cfg: &BenchEmulationConfig, seeds: &[u64]) -> Result<RunRecord> {
    let mode = bench_mode(cfg)?;
    let truth = build_truth_grid(&cfg.oracle, &cfg.truth_grid)?;
    let methods: Vec<BenchMethod> =
        cfg.methods.iter().map(|m| parse_method(m)).collect::<Result<_>>()?;
    let mut record = RunRecord::default();
    for (mi, &method) in methods.iter().enumerate() {
        let per_seed: Vec<Vec<RecordRow>> = seeds
            .par_iter()
            .map(|&seed| bench_one(cfg, method, mode, &truth, derive_seed(seed, mi as u64)))
            .collect::<Result<_>>()?;
        for rows in per_seed {
            record.extend(rows);
        }
    }
    Ok(record)
}

/// Median of a slice; shared by the experiment summaries and tests.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
