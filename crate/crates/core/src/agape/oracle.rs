//! Costly-function abstraction for the emulation loop.
//!
//! The oracle is the expensive resource the loop conserves, so every
//! evaluation goes through a call counter. Built-in synthetic oracles
//! cover the test problems; `Oracle::external` drives an arbitrary child
//! process over a line-per-query pipe so a real simulator can be hooked
//! up without linking one.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};

use crate::error::{Error, Result};

type OracleFn = Box<dyn FnMut(&[f64]) -> std::result::Result<Vec<f64>, String> + Send>;

/// A deterministic vector-valued function on a box domain, with an
/// evaluation counter that increments exactly once per call.
pub struct Oracle {
    name: String,
    domain: Vec<(f64, f64)>,
    output_dim: usize,
    calls: u64,
    f: OracleFn,
}

impl std::fmt::Debug for Oracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Oracle")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("output_dim", &self.output_dim)
            .field("calls", &self.calls)
            .finish()
    }
}

impl Oracle {
    pub fn new<F>(name: &str, domain: Vec<(f64, f64)>, output_dim: usize, f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Vec<f64> + Send + 'static,
    {
        Self::fallible(name, domain, output_dim, {
            let mut f = f;
            move |y: &[f64]| Ok(f(y))
        })
    }

    pub fn fallible<F>(name: &str, domain: Vec<(f64, f64)>, output_dim: usize, f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> std::result::Result<Vec<f64>, String> + Send + 'static,
    {
        if domain.is_empty() || domain.iter().any(|&(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidInput("oracle domain must be nonempty finite intervals".into()));
        }
        if output_dim == 0 {
            return Err(Error::InvalidInput("oracle must have at least one output".into()));
        }
        Ok(Self { name: name.to_string(), domain, output_dim, calls: 0, f: Box::new(f) })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn input_dim(&self) -> usize {
        self.domain.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.len() == self.domain.len()
            && y.iter().zip(&self.domain).all(|(v, &(lo, hi))| *v >= lo && *v <= hi)
    }

    /// Evaluate the function, counting the call. Failures carry the
    /// offending input point.
    pub fn evaluate(&mut self, y: &[f64]) -> Result<Vec<f64>> {
        self.calls += 1;
        if y.len() != self.domain.len() {
            return Err(Error::OracleFailure {
                point: y.to_vec(),
                message: format!("expected {} coordinates, got {}", self.domain.len(), y.len()),
            });
        }
        let out = (self.f)(y)
            .map_err(|message| Error::OracleFailure { point: y.to_vec(), message })?;
        if out.len() != self.output_dim {
            return Err(Error::OracleFailure {
                point: y.to_vec(),
                message: format!("expected {} outputs, got {}", self.output_dim, out.len()),
            });
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::OracleFailure {
                point: y.to_vec(),
                message: "non-finite oracle output".into(),
            });
        }
        Ok(out)
    }

    /// Look up a built-in synthetic oracle by name.
    ///
    /// * `toy-log-pair`: `[ln(y), 0.5 ln(3y)]` on `[0.1, 10]`.
    /// * `atmospheric-2d`: a smooth transmission-like surface over optical
    ///   thickness `[0.05, 0.4]` times elevation `[0, 3]` km.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "toy-log-pair" => Oracle::new(name, vec![(0.1, 10.0)], 2, |y: &[f64]| {
                vec![y[0].ln(), 0.5 * (3.0 * y[0]).ln()]
            }),
            "atmospheric-2d" => Oracle::new(name, vec![(0.05, 0.4), (0.0, 3.0)], 1, |y: &[f64]| {
                vec![atmospheric_2d(y[0], y[1])]
            }),
            other => Err(Error::InvalidInput(format!("unknown built-in oracle '{other}'"))),
        }
    }

    /// Wrap an external program: one query per line on its stdin
    /// (comma-separated decimals), one response line with `output_dim`
    /// decimals (comma or whitespace separated) on its stdout.
    pub fn external(command: &str, domain: Vec<(f64, f64)>, output_dim: usize) -> Result<Self> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::InvalidInput("empty oracle command".into()))?;
        let args: Vec<String> = parts.map(str::to_string).collect();
        let mut child = Command::new(program)
            .args(&args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::InvalidInput(format!("cannot spawn oracle '{command}': {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut pipe = ProcessPipe { child, stdin, stdout };
        let dim = output_dim;
        Oracle::fallible(&format!("external:{command}"), domain, output_dim, move |y: &[f64]| {
            pipe.query(y, dim)
        })
    }
}

struct ProcessPipe {
    child: Child,
    stdin: std::process::ChildStdin,
    stdout: BufReader<std::process::ChildStdout>,
}

impl ProcessPipe {
    fn query(&mut self, y: &[f64], output_dim: usize) -> std::result::Result<Vec<f64>, String> {
        let row = y.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",");
        writeln!(self.stdin, "{row}").map_err(|e| format!("write to child failed: {e}"))?;
        self.stdin.flush().map_err(|e| format!("flush to child failed: {e}"))?;
        let mut line = String::new();
        let read = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| format!("read from child failed: {e}"))?;
        if read == 0 {
            return Err("child closed its stdout".into());
        }
        let values: std::result::Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse::<f64>)
            .collect();
        let values = values.map_err(|e| format!("cannot parse child reply '{}': {e}", line.trim()))?;
        if values.len() != output_dim {
            return Err(format!("child replied with {} values, expected {output_dim}", values.len()));
        }
        Ok(values)
    }
}

impl Drop for ProcessPipe {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Smooth stand-in for an atmospheric radiative transfer code at a fixed
/// wavelength: transmission decays with optical thickness, recovers with
/// elevation, plus a mild bump so the surface is not separable.
pub fn atmospheric_2d(tau: f64, h: f64) -> f64 {
    let absorb = (-tau * (2.4 + 3.1 * (-h / 1.3).exp())).exp();
    let bump = 0.12 * (-((tau - 0.12) * (tau - 0.12)) / 0.004 - ((h - 0.8) * (h - 0.8)) / 0.9).exp();
    absorb + bump + 0.08 * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_increments_exactly_once_per_call() {
        let mut o = Oracle::builtin("toy-log-pair").unwrap();
        assert_eq!(o.calls(), 0);
        o.evaluate(&[1.0]).unwrap();
        assert_eq!(o.calls(), 1);
        let _ = o.evaluate(&[1.0, 2.0]); // dimension failure still counts
        assert_eq!(o.calls(), 2);
    }

    #[test]
    fn toy_log_pair_values() {
        let mut o = Oracle::builtin("toy-log-pair").unwrap();
        let out = o.evaluate(&[1.0]).unwrap();
        assert!((out[0] - 0.0).abs() < 1e-15);
        assert!((out[1] - 0.5 * 3.0f64.ln()).abs() < 1e-15);
        assert_eq!(o.output_dim(), 2);
        assert!(o.contains(&[5.0]));
        assert!(!o.contains(&[11.0]));
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        assert!(Oracle::builtin("nope").is_err());
    }

    #[test]
    fn atmospheric_surface_is_bounded_and_smoothish() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..36 {
            for j in 0..51 {
                let tau = 0.05 + 0.35 * i as f64 / 35.0;
                let h = 3.0 * j as f64 / 50.0;
                let v = atmospheric_2d(tau, h);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        assert!(lo > 0.0 && hi < 2.0, "range [{lo}, {hi}]");
        assert!(hi - lo > 0.3, "surface should have usable contrast, got {}", hi - lo);
    }
}
