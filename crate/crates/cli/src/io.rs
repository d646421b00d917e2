//! CSV loading and writing. Formats are plain header + comma rows; floats
//! are written with Rust's shortest round-trip formatting so identical
//! runs produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use gpkit_core::{MultiOutputSeries, OutputSeries, SourceFlag, TaggedDataset};

use crate::error::{CliError, Result};

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn parse_field(path: &Path, line_no: usize, field: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| {
        CliError::config(format!(
            "{} line {line_no}: cannot parse '{}' as a number",
            path.display(),
            field.trim()
        ))
    })?;
    if !v.is_finite() {
        return Err(CliError::config(format!(
            "{} line {line_no}: non-finite value '{}'",
            path.display(),
            field.trim()
        )));
    }
    Ok(v)
}

/// Load a tagged dataset: any number of feature columns, a `target`
/// column, and a `source` column with values `real` or `sim`. Rows with
/// non-finite entries are rejected with their line numbers.
pub fn load_tagged_csv(path: &Path) -> Result<TaggedDataset> {
    let lines = read_lines(path)?;
    let mut it = lines.iter().enumerate();
    let (_, header) = it
        .next()
        .ok_or_else(|| CliError::config(format!("{} is empty", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let target_idx = cols
        .iter()
        .position(|c| *c == "target")
        .ok_or_else(|| CliError::config(format!("{} is missing a 'target' column", path.display())))?;
    let source_idx = cols
        .iter()
        .position(|c| *c == "source")
        .ok_or_else(|| CliError::config(format!("{} is missing a 'source' column", path.display())))?;
    let feature_idx: Vec<usize> =
        (0..cols.len()).filter(|i| *i != target_idx && *i != source_idx).collect();
    if feature_idx.is_empty() {
        return Err(CliError::config(format!("{} has no feature columns", path.display())));
    }

    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut flags = Vec::new();
    for (i, line) in it {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(CliError::config(format!(
                "{} line {line_no}: expected {} fields, found {}",
                path.display(),
                cols.len(),
                fields.len()
            )));
        }
        for &fi in &feature_idx {
            rows.push(parse_field(path, line_no, fields[fi])?);
        }
        targets.push(parse_field(path, line_no, fields[target_idx])?);
        flags.push(match fields[source_idx].trim() {
            "real" => SourceFlag::Real,
            "sim" => SourceFlag::Simulated,
            other => {
                return Err(CliError::config(format!(
                    "{} line {line_no}: unknown source tag '{other}' (expected 'real' or 'sim')",
                    path.display()
                )))
            }
        });
    }
    let n = targets.len();
    let d = feature_idx.len();
    let inputs = Array2::from_shape_vec((n, d), rows)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(TaggedDataset::new(inputs, Array1::from(targets), flags)?)
}

pub fn write_tagged_csv(path: &Path, data: &TaggedDataset) -> Result<()> {
    let d = data.dim();
    let mut out = String::new();
    for j in 0..d {
        write!(out, "x{j},").unwrap();
    }
    out.push_str("target,source\n");
    for i in 0..data.len() {
        for j in 0..d {
            write!(out, "{},", data.inputs()[[i, j]]).unwrap();
        }
        let tag = match data.flags()[i] {
            SourceFlag::Real => "real",
            SourceFlag::Simulated => "sim",
        };
        writeln!(out, "{},{tag}", data.targets()[i]).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load a plain numeric matrix CSV (all columns are features).
pub fn load_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let lines = read_lines(path)?;
    let mut it = lines.iter().enumerate();
    let (_, header) = it
        .next()
        .ok_or_else(|| CliError::config(format!("{} is empty", path.display())))?;
    let width = header.split(',').count();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, line) in it {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(CliError::config(format!(
                "{} line {line_no}: expected {width} fields, found {}",
                path.display(),
                fields.len()
            )));
        }
        for f in fields {
            values.push(parse_field(path, line_no, f)?);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, width), values)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Load a multi-output series CSV with columns `output,time,value`.
/// Outputs appear in order of first appearance; times must be strictly
/// increasing within each output.
pub fn load_series_csv(path: &Path) -> Result<MultiOutputSeries> {
    let lines = read_lines(path)?;
    let mut it = lines.iter().enumerate();
    let (_, header) = it
        .next()
        .ok_or_else(|| CliError::config(format!("{} is empty", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| -> Result<usize> {
        cols.iter().position(|c| *c == name).ok_or_else(|| {
            CliError::config(format!("{} is missing an '{name}' column", path.display()))
        })
    };
    let o_idx = find("output")?;
    let t_idx = find("time")?;
    let v_idx = find("value")?;

    let mut order: Vec<String> = Vec::new();
    let mut series: std::collections::HashMap<String, (Vec<f64>, Vec<f64>)> = Default::default();
    for (i, line) in it {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(CliError::config(format!(
                "{} line {line_no}: expected {} fields, found {}",
                path.display(),
                cols.len(),
                fields.len()
            )));
        }
        let id = fields[o_idx].trim().to_string();
        let t = parse_field(path, line_no, fields[t_idx])?;
        let v = parse_field(path, line_no, fields[v_idx])?;
        if !series.contains_key(&id) {
            order.push(id.clone());
        }
        let entry = series.entry(id).or_default();
        entry.0.push(t);
        entry.1.push(v);
    }
    let outputs: Vec<OutputSeries> = order
        .into_iter()
        .map(|id| {
            let (times, values) = series.remove(&id).unwrap();
            OutputSeries { id, times, values }
        })
        .collect();
    Ok(MultiOutputSeries::new(outputs)?)
}

pub fn write_series_csv(path: &Path, series: &MultiOutputSeries) -> Result<()> {
    let mut out = String::from("output,time,value\n");
    for o in series.outputs() {
        for (t, v) in o.times.iter().zip(&o.values) {
            writeln!(out, "{},{t},{v}", o.id).unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write a generic CSV from a header and rows of preformatted fields.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 32 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load named columns from a CSV with arbitrary extra columns; returns the
/// requested columns plus the optional group labels.
pub fn load_eval_csv(
    path: &Path,
    truth_col: &str,
    pred_col: &str,
    group_col: Option<&str>,
) -> Result<Vec<(String, f64, f64)>> {
    let lines = read_lines(path)?;
    let mut it = lines.iter().enumerate();
    let (_, header) = it
        .next()
        .ok_or_else(|| CliError::config(format!("{} is empty", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| -> Result<usize> {
        cols.iter().position(|c| *c == name).ok_or_else(|| {
            CliError::config(format!("{} is missing an '{name}' column", path.display()))
        })
    };
    let t_idx = find(truth_col)?;
    let p_idx = find(pred_col)?;
    let g_idx = group_col.map(find).transpose()?;
    let mut out = Vec::new();
    for (i, line) in it {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(CliError::config(format!(
                "{} line {line_no}: expected {} fields, found {}",
                path.display(),
                cols.len(),
                fields.len()
            )));
        }
        let group = g_idx.map(|g| fields[g].trim().to_string()).unwrap_or_else(|| "all".into());
        out.push((
            group,
            parse_field(path, line_no, fields[t_idx])?,
            parse_field(path, line_no, fields[p_idx])?,
        ));
    }
    Ok(out)
}
