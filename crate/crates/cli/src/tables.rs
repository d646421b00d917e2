//! Experiment records and table emission. Long-format rows go to
//! `records.csv`, per-group median/quartile aggregates to
//! `aggregates.csv`, and a JSON summary carries the config hash and total
//! wall clock. Wall-clock times stay out of the CSVs so reruns under a
//! fixed seed are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::io::write_csv;

/// One observation from an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub experiment: String,
    pub method: String,
    /// Free-form parameter label (ratio, site pair, ...); empty if unused.
    pub param: String,
    /// Iteration / node count / fold index when applicable.
    pub iteration: Option<u64>,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// Append-only record of an experiment run.
#[derive(Debug, Clone, Default)]
pub struct RunRecord {
    pub rows: Vec<RecordRow>,
    /// Not emitted to CSV; surfaced in the JSON summary only.
    pub wall_ms: f64,
}

impl RunRecord {
    pub fn push(&mut self, row: RecordRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = RecordRow>) {
        self.rows.extend(rows);
    }
}

fn fmt_iteration(it: Option<u64>) -> String {
    it.map(|v| v.to_string()).unwrap_or_default()
}

fn median_of_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn quantile_of_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    }
}

/// Write `records.csv`, `aggregates.csv`, and `summary.json` under
/// `out_dir`. Rows are sorted into a canonical order first, so emission is
/// idempotent and independent of production order.
pub fn emit_tables(record: &RunRecord, out_dir: &Path, config_hash: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut rows = record.rows.clone();
    rows.sort_by(|a, b| {
        (&a.experiment, &a.method, &a.param, a.iteration, a.seed, &a.metric)
            .partial_cmp(&(&b.experiment, &b.method, &b.param, b.iteration, b.seed, &b.metric))
            .unwrap()
    });

    let records_path = out_dir.join("records.csv");
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.experiment,
                r.method,
                r.param,
                fmt_iteration(r.iteration),
                r.seed,
                r.metric,
                r.value,
                config_hash
            )
        })
        .collect();
    write_csv(
        &records_path,
        "experiment,method,param,iteration,seed,metric,value,config_hash",
        &lines,
    )?;

    // Aggregate over seeds per (experiment, method, param, iteration, metric).
    let mut groups: std::collections::BTreeMap<(String, String, String, Option<u64>, String), Vec<f64>> =
        Default::default();
    for r in &rows {
        groups
            .entry((
                r.experiment.clone(),
                r.method.clone(),
                r.param.clone(),
                r.iteration,
                r.metric.clone(),
            ))
            .or_default()
            .push(r.value);
    }
    let agg_path = out_dir.join("aggregates.csv");
    let agg_lines: Vec<String> = groups
        .iter()
        .map(|((exp, method, param, it, metric), values)| {
            let mut v = values.clone();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            format!(
                "{},{},{},{},{},{},{},{},{}",
                exp,
                method,
                param,
                fmt_iteration(*it),
                metric,
                v.len(),
                quantile_of_sorted(&v, 0.25),
                median_of_sorted(&v),
                quantile_of_sorted(&v, 0.75),
            )
        })
        .collect();
    write_csv(
        &agg_path,
        "experiment,method,param,iteration,metric,count,q25,median,q75",
        &agg_lines,
    )?;

    let summary_path = out_dir.join("summary.json");
    let mut json = String::from("{\n");
    writeln!(json, "  \"config_hash\": \"{config_hash}\",").unwrap();
    writeln!(json, "  \"rows\": {},", rows.len()).unwrap();
    writeln!(json, "  \"groups\": {},", groups.len()).unwrap();
    writeln!(json, "  \"wall_ms\": {},", record.wall_ms).unwrap();
    writeln!(json, "  \"files\": [\"records.csv\", \"aggregates.csv\"]").unwrap();
    json.push('}');
    json.push('\n');
    std::fs::write(&summary_path, json)?;

    Ok(vec![records_path, agg_path, summary_path])
}
