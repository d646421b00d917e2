//! Subcommand implementations. Each takes the loaded config plus the
//! effective seed list and output directory, runs the work, and writes its
//! artifacts under the output directory.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use serde_json::json;

use gpkit_core::agape::{run as agape_run, Oracle, StopRule};
use gpkit_core::gp::{log_marginal_likelihood, optimize_hyperparams, Dataset, GpModel, HyperGrid};
use gpkit_core::jgp::{loo_pseudo_likelihood, optimize_jgp, JgpModel};
use gpkit_core::lfm::{fit_lfm, mse_nmse};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::experiments::{build_truth_grid, run_crosssite, run_emulation_bench, run_samesite};
use crate::io::{load_eval_csv, load_series_csv, load_tagged_csv, load_matrix_csv, write_csv};
use crate::tables::{emit_tables, RunRecord};

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::config(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn ensure_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

/// Plain regression CSV: every column except `target` (and an optional
/// `source`) is a feature.
fn load_regression_csv(path: &Path) -> Result<Dataset> {
    let tagged = if has_source_column(path)? {
        load_tagged_csv(path)?
    } else {
        // Reuse the tagged loader by synthesizing an all-real source.
        let matrix_with_target = load_target_csv(path)?;
        return Ok(matrix_with_target);
    };
    Ok(tagged.pooled())
}

fn has_source_column(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .next()
        .map(|h| h.split(',').any(|c| c.trim() == "source"))
        .unwrap_or(false))
}

fn load_target_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::config(format!("{} is empty", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let target_idx = cols
        .iter()
        .position(|c| *c == "target")
        .ok_or_else(|| CliError::config(format!("{} is missing a 'target' column", path.display())))?;
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut n = 0;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(CliError::config(format!(
                "{} line {}: expected {} fields, found {}",
                path.display(),
                i + 1,
                cols.len(),
                fields.len()
            )));
        }
        for (j, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| {
                CliError::config(format!("{} line {}: bad number '{}'", path.display(), i + 1, f))
            })?;
            if !v.is_finite() {
                return Err(CliError::config(format!(
                    "{} line {}: non-finite value",
                    path.display(),
                    i + 1
                )));
            }
            if j == target_idx {
                targets.push(v);
            } else {
                rows.push(v);
            }
        }
        n += 1;
    }
    let d = cols.len() - 1;
    Ok(Dataset::new(
        Array2::from_shape_vec((n, d), rows).map_err(|e| CliError::config(e.to_string()))?,
        Array1::from(targets),
    )?)
}

pub fn fit_gp(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::section(&config.fit_gp, "fit_gp")?;
    ensure_out(out)?;
    let data = load_regression_csv(&cfg.data)?;
    let grid = HyperGrid::default_for(&data);
    let hp = optimize_hyperparams(&data, &grid).map_err(|e| CliError::Numeric(e.to_string()))?;
    let lml = log_marginal_likelihood(&data, &hp).map_err(|e| CliError::Numeric(e.to_string()))?;
    let model = GpModel::fit(&data, &hp)?;

    write_json(
        &out.join("hyperparams.json"),
        &json!({
            "model": "gp",
            "lengthscale": hp.lengthscale,
            "noise_std": hp.noise_std,
            "signal_variance": hp.signal_variance,
            "log_marginal_likelihood": lml,
            "training_rows": data.len(),
            "config_hash": config.hash,
        }),
    )?;

    if let Some(query_path) = &cfg.query {
        let query = load_matrix_csv(query_path)?;
        let (mean, var) = model.predict(query.view())?;
        write_predictions_csv(&out.join("predictions.csv"), query.view(), &mean, &var)?;
    }
    Ok(())
}

fn write_predictions_csv(
    path: &Path,
    query: ndarray::ArrayView2<'_, f64>,
    mean: &Array1<f64>,
    var: &Array1<f64>,
) -> Result<()> {
    let d = query.ncols();
    let mut header = String::new();
    for j in 0..d {
        write!(header, "x{j},").unwrap();
    }
    header.push_str("mean,variance");
    let rows: Vec<String> = (0..query.nrows())
        .map(|i| {
            let mut line = String::new();
            for j in 0..d {
                write!(line, "{},", query[[i, j]]).unwrap();
            }
            write!(line, "{},{}", mean[i], var[i]).unwrap();
            line
        })
        .collect();
    write_csv(path, &header, &rows)
}

pub fn fit_jgp(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::section(&config.fit_jgp, "fit_jgp")?;
    ensure_out(out)?;
    let data = load_tagged_csv(&cfg.data)?;
    let grid = crate::experiments::jgp_grid_for(&data, &cfg.search);
    let hp = optimize_jgp(&data, &grid).map_err(|e| CliError::Numeric(e.to_string()))?;
    let loo = loo_pseudo_likelihood(&data, &hp).map_err(|e| CliError::Numeric(e.to_string()))?;
    let model = JgpModel::fit(&data, &hp)?;

    write_json(
        &out.join("hyperparams.json"),
        &json!({
            "model": "jgp",
            "lengthscale": hp.lengthscale,
            "noise_std": hp.noise_std,
            "gamma": hp.gamma,
            "signal_variance": hp.signal_variance,
            "loo_pseudo_likelihood": loo,
            "real_rows": data.real_count(),
            "simulated_rows": data.len() - data.real_count(),
            "config_hash": config.hash,
        }),
    )?;

    if let Some(query_path) = &cfg.query {
        let query = load_matrix_csv(query_path)?;
        let (mean, var) = model.predict(query.view())?;
        write_predictions_csv(&out.join("predictions.csv"), query.view(), &mean, &var)?;
    }
    Ok(())
}

pub fn fit_lfm_cmd(config: &ExperimentConfig, seeds: &[u64], out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::section(&config.fit_lfm, "fit_lfm")?;
    ensure_out(out)?;
    let series = load_series_csv(&cfg.series)?;
    let seed = seeds[0];
    let model = fit_lfm(&series, cfg.latent_forces, cfg.budget, seed)
        .map_err(|e| CliError::Numeric(e.to_string()))?;

    let c = model.config();
    write_json(
        &out.join("hyperparams.json"),
        &json!({
            "model": "lfm",
            "latent_forces": c.num_forces(),
            "outputs": c.num_outputs(),
            "lf_lengthscales": c.lf_lengthscales(),
            "smoothing_widths": c.smoothing_widths(),
            "noise_stds": c.noise_stds(),
            "sensitivities": c.sensitivities().rows().into_iter()
                .map(|r| r.to_vec()).collect::<Vec<_>>(),
            "log_marginal_likelihood": model.log_marginal_likelihood(),
            "total_samples": series.total_samples(),
            "seed": seed,
            "config_hash": config.hash,
        }),
    )?;

    // Query grid over the observed span.
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for o in series.outputs() {
        if let (Some(&a), Some(&b)) = (o.times.first(), o.times.last()) {
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    let grid: Vec<f64> = (0..cfg.query_count)
        .map(|i| lo + (hi - lo) * i as f64 / (cfg.query_count - 1).max(1) as f64)
        .collect();
    let queries: Vec<Vec<f64>> = vec![grid.clone(); series.num_outputs()];
    let preds = model.predict_outputs(&queries)?;
    let mut rows = Vec::new();
    for (q, o) in series.outputs().iter().enumerate() {
        for (i, &t) in grid.iter().enumerate() {
            rows.push(format!("{},{t},{},{}", o.id, preds[q].0[i], preds[q].1[i]));
        }
    }
    write_csv(&out.join("predictions.csv"), "output,time,mean,variance", &rows)?;

    let latents = model.infer_latent_forces(&grid)?;
    let mut rows = Vec::new();
    for (r, (means, vars)) in latents.iter().enumerate() {
        for (i, &t) in grid.iter().enumerate() {
            rows.push(format!("f{r},{t},{},{}", means[i], vars[i]));
        }
    }
    write_csv(&out.join("latent_forces.csv"), "force,time,mean,variance", &rows)?;

    // Training-sample reconstruction metrics.
    let train_queries: Vec<Vec<f64>> =
        series.outputs().iter().map(|o| o.times.clone()).collect();
    let train_preds = model.predict_outputs(&train_queries)?;
    let mut rows = Vec::new();
    for (q, o) in series.outputs().iter().enumerate() {
        if o.values.is_empty() {
            continue;
        }
        let (mse, nmse) =
            mse_nmse(&o.values, &train_preds[q].0).map_err(|e| CliError::Numeric(e.to_string()))?;
        rows.push(format!("{},{mse},{nmse}", o.id));
    }
    write_csv(&out.join("metrics.csv"), "output,mse,nmse_percent", &rows)?;
    Ok(())
}

pub fn emulate(
    config: &ExperimentConfig,
    seeds: &[u64],
    out: &Path,
    oracle_cmd: Option<&str>,
) -> Result<()> {
    let cfg = ExperimentConfig::section(&config.emulation, "emulation")?;
    ensure_out(out)?;
    let mut oracle = if cfg.oracle == "external" {
        let cmd = oracle_cmd.ok_or_else(|| {
            CliError::config("oracle 'external' requires --oracle-cmd <program>")
        })?;
        let domain = cfg
            .domain
            .clone()
            .ok_or_else(|| CliError::config("external oracle requires a domain"))?;
        let output_dim = cfg
            .output_dim
            .ok_or_else(|| CliError::config("external oracle requires output_dim"))?;
        Oracle::external(cmd, domain, output_dim)?
    } else {
        Oracle::builtin(&cfg.oracle)?
    };

    let truth = match (&cfg.truth_grid, cfg.oracle.as_str()) {
        (Some(counts), name) if name != "external" => Some(build_truth_grid(name, counts)?),
        _ => None,
    };

    let anneal = cfg.anneal.to_config(seeds[0]);
    let stop = StopRule { epsilon: cfg.epsilon, max_nodes: cfg.max_nodes };
    let (state, record) = agape_run(
        &mut oracle,
        &cfg.initial_nodes,
        &anneal,
        cfg.tempering_rate,
        &stop,
        truth.as_ref(),
    )?;

    let d = state.input_dim();
    let k = state.num_outputs();
    let mut header = String::from("nodes,");
    for j in 0..d {
        write!(header, "y{j},").unwrap();
    }
    header.push_str("acquisition,stopping_distance,true_mse");
    let rows: Vec<String> = record
        .iterations
        .iter()
        .map(|it| {
            let mut line = format!("{},", it.nodes);
            for v in &it.node {
                write!(line, "{v},").unwrap();
            }
            write!(line, "{},{},", it.acquisition, it.stopping_distance).unwrap();
            match it.true_mse {
                Some(m) => write!(line, "{m}").unwrap(),
                None => {}
            }
            line
        })
        .collect();
    write_csv(&out.join("trace.csv"), &header, &rows)?;

    let mut header = String::new();
    for j in 0..d {
        write!(header, "y{j},").unwrap();
    }
    let mut outs = Vec::new();
    for j in 0..k {
        outs.push(format!("g{j}"));
    }
    header.push_str(&outs.join(","));
    let rows: Vec<String> = state
        .nodes()
        .iter()
        .zip(state.outputs())
        .map(|(n, o)| {
            let mut line = String::new();
            for v in n {
                write!(line, "{v},").unwrap();
            }
            line.push_str(&o.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","));
            line
        })
        .collect();
    write_csv(&out.join("nodes.csv"), &header, &rows)?;

    write_json(
        &out.join("summary.json"),
        &json!({
            "oracle": cfg.oracle,
            "oracle_calls": oracle.calls(),
            "final_nodes": state.len(),
            "iterations": record.iterations.len(),
            "final_stopping_distance": record.iterations.last()
                .map(|it| it.stopping_distance),
            "initial_true_mse": record.initial_true_mse,
            "final_true_mse": record.iterations.last().and_then(|it| it.true_mse),
            "seed": seeds[0],
            "config_hash": config.hash,
        }),
    )?;
    Ok(())
}

pub fn bench_emulation(config: &ExperimentConfig, seeds: &[u64], out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::section(&config.bench_emulation, "bench_emulation")?;
    ensure_out(out)?;
    let start = Instant::now();
    let mut record = run_emulation_bench(cfg, seeds)?;
    record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    emit_tables(&record, out, &config.hash)?;
    Ok(())
}

pub fn bench_jgp(config: &ExperimentConfig, seeds: &[u64], out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::section(&config.bench_jgp, "bench_jgp")?;
    ensure_out(out)?;
    let start = Instant::now();
    let mut record: RunRecord = match cfg.mode.as_str() {
        "samesite" => run_samesite(cfg, seeds)?,
        "crosssite" => run_crosssite(cfg, seeds)?,
        other => {
            return Err(CliError::config(format!(
                "unknown bench_jgp mode '{other}' (expected 'samesite' or 'crosssite')"
            )))
        }
    };
    record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    emit_tables(&record, out, &config.hash)?;
    Ok(())
}

pub fn eval(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::section(&config.eval, "eval")?;
    ensure_out(out)?;
    let rows = load_eval_csv(
        &cfg.data,
        &cfg.truth_col,
        &cfg.pred_col,
        cfg.group_col.as_deref(),
    )?;
    if rows.is_empty() {
        return Err(CliError::config("eval input has no data rows"));
    }
    let mut groups: std::collections::BTreeMap<String, (Vec<f64>, Vec<f64>)> = Default::default();
    for (g, t, p) in rows {
        let entry = groups.entry(g).or_default();
        entry.0.push(t);
        entry.1.push(p);
    }
    let mut lines = Vec::new();
    for (g, (truth, pred)) in &groups {
        let (mse, nmse) =
            mse_nmse(truth, pred).map_err(|e| CliError::Numeric(e.to_string()))?;
        lines.push(format!("{g},{},{mse},{},{nmse}", truth.len(), mse.sqrt()));
    }
    write_csv(&out.join("metrics.csv"), "group,count,mse,rmse,nmse_percent", &lines)?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "groups": groups.len(),
            "config_hash": config.hash,
        }),
    )?;
    Ok(())
}
