//! Experiment configuration: one TOML file per invocation, with a section
//! per subcommand. The raw file bytes are hashed so every emitted record
//! row can be traced back to the exact configuration that produced it.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub fit_gp: Option<FitGpConfig>,
    pub fit_jgp: Option<FitJgpConfig>,
    pub fit_lfm: Option<FitLfmConfig>,
    pub emulation: Option<EmulationConfig>,
    pub bench_emulation: Option<BenchEmulationConfig>,
    pub bench_jgp: Option<BenchJgpConfig>,
    pub eval: Option<EvalConfig>,
    #[serde(skip)]
    pub hash: String,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitGpConfig {
    pub data: PathBuf,
    pub query: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitJgpConfig {
    pub data: PathBuf,
    pub query: Option<PathBuf>,
    #[serde(default)]
    pub search: SearchSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitLfmConfig {
    pub series: PathBuf,
    #[serde(default = "default_latent_forces")]
    pub latent_forces: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Number of evenly spaced query times over the observed span.
    #[serde(default = "default_query_count")]
    pub query_count: usize,
}

fn default_latent_forces() -> usize {
    1
}

fn default_budget() -> usize {
    1500
}

fn default_query_count() -> usize {
    200
}

/// Grid sizes for hyperparameter selection; counts of log-spaced values
/// over the default ranges.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    #[serde(default = "default_lengthscales")]
    pub lengthscales: usize,
    #[serde(default = "default_noises")]
    pub noise_levels: usize,
    #[serde(default = "default_gammas")]
    pub gammas: usize,
}

fn default_lengthscales() -> usize {
    15
}

fn default_noises() -> usize {
    10
}

fn default_gammas() -> usize {
    13
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            lengthscales: default_lengthscales(),
            noise_levels: default_noises(),
            gammas: default_gammas(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSpec {
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_cooling")]
    pub cooling: f64,
    #[serde(default = "default_proposal_frac")]
    pub proposal_frac: f64,
}

fn default_chains() -> usize {
    4
}

fn default_steps() -> usize {
    500
}

fn default_cooling() -> f64 {
    0.97
}

fn default_proposal_frac() -> f64 {
    0.1
}

impl Default for AnnealSpec {
    fn default() -> Self {
        Self {
            chains: default_chains(),
            steps: default_steps(),
            cooling: default_cooling(),
            proposal_frac: default_proposal_frac(),
        }
    }
}

impl AnnealSpec {
    pub fn to_config(&self, seed: u64) -> gpkit_core::agape::AnnealConfig {
        gpkit_core::agape::AnnealConfig {
            chains: self.chains,
            steps: self.steps,
            initial_temperature: None,
            cooling: self.cooling,
            proposal_frac: self.proposal_frac,
            seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmulationConfig {
    /// Built-in oracle name, or "external" together with `--oracle-cmd`.
    pub oracle: String,
    /// Required for external oracles; ignored for built-ins.
    pub domain: Option<Vec<(f64, f64)>>,
    pub output_dim: Option<usize>,
    pub initial_nodes: Vec<Vec<f64>>,
    #[serde(default = "default_tempering_rate")]
    pub tempering_rate: f64,
    /// Stopping threshold on the change between successive interpolants.
    pub epsilon: f64,
    pub max_nodes: usize,
    /// Per-axis point counts of an optional truth grid for error tracking
    /// (built-in oracles only).
    pub truth_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub anneal: AnnealSpec,
}

fn default_tempering_rate() -> f64 {
    0.2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchEmulationConfig {
    pub oracle: String,
    pub initial_nodes: Vec<Vec<f64>>,
    pub methods: Vec<String>,
    /// "to-epsilon": grow until the truth-grid RMS distance crosses
    /// `epsilon`; "fixed-budget": add exactly `added_points` nodes.
    pub mode: String,
    pub epsilon: Option<f64>,
    pub added_points: Option<usize>,
    #[serde(default = "default_bench_cap")]
    pub max_nodes: usize,
    pub truth_grid: Vec<usize>,
    #[serde(default = "default_tempering_rate")]
    pub tempering_rate: f64,
    #[serde(default)]
    pub anneal: AnnealSpec,
}

fn default_bench_cap() -> usize {
    150
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchJgpConfig {
    /// "samesite" or "crosssite".
    pub mode: String,
    pub real_rows: usize,
    /// Simulated-to-real ratios for same-site runs.
    #[serde(default)]
    pub ratios: Vec<f64>,
    /// Simulated rows per site for cross-site runs.
    pub sim_rows: Option<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub real_noise: f64,
    pub sim_noise: f64,
    pub sim_bias: f64,
    #[serde(default)]
    pub search: SearchSpec,
    pub sites: Vec<SiteSpec>,
    pub target_model: TargetModelSpec,
}

fn default_folds() -> usize {
    10
}

/// Gaussian-mixture input distribution of one site over a 4-band
/// reflectance-like space.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSpec {
    pub name: String,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub std: f64,
}

/// Saturating-exponential response of the target to a normalized band
/// contrast index: `y = scale * (1 - exp(-rate * u))`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetModelSpec {
    pub scale: f64,
    pub rate: f64,
    #[serde(default = "default_offset")]
    pub offset: f64,
}

fn default_offset() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub data: PathBuf,
    #[serde(default = "default_truth_col")]
    pub truth_col: String,
    #[serde(default = "default_pred_col")]
    pub pred_col: String,
    pub group_col: Option<String>,
}

fn default_truth_col() -> String {
    "truth".into()
}

fn default_pred_col() -> String {
    "pred".into()
}

impl ExperimentConfig {
    /// Load, validate, and hash a config file. Paths referenced by the
    /// config must exist at load time.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|e| CliError::config(format!("{} is not utf-8: {e}", path.display())))?;
        let mut config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        config.hash = hex[..16].to_string();
        if config.seeds.is_empty() {
            return Err(CliError::config("seeds must be non-empty"));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        for p in config.referenced_paths() {
            let resolved = resolve(base, &p);
            if !resolved.exists() {
                return Err(CliError::config(format!(
                    "referenced path does not exist: {}",
                    resolved.display()
                )));
            }
        }
        config.resolve_paths(base);
        Ok(config)
    }

    fn referenced_paths(&self) -> Vec<PathBuf> {
        let mut out = Vec::new();
        if let Some(c) = &self.fit_gp {
            out.push(c.data.clone());
            out.extend(c.query.clone());
        }
        if let Some(c) = &self.fit_jgp {
            out.push(c.data.clone());
            out.extend(c.query.clone());
        }
        if let Some(c) = &self.fit_lfm {
            out.push(c.series.clone());
        }
        if let Some(c) = &self.eval {
            out.push(c.data.clone());
        }
        out
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let Some(c) = &mut self.fit_gp {
            c.data = resolve(base, &c.data);
            c.query = c.query.as_ref().map(|q| resolve(base, q));
        }
        if let Some(c) = &mut self.fit_jgp {
            c.data = resolve(base, &c.data);
            c.query = c.query.as_ref().map(|q| resolve(base, q));
        }
        if let Some(c) = &mut self.fit_lfm {
            c.series = resolve(base, &c.series);
        }
        if let Some(c) = &mut self.eval {
            c.data = resolve(base, &c.data);
        }
    }

    pub fn section<'a, T>(opt: &'a Option<T>, name: &str) -> Result<&'a T> {
        opt.as_ref()
            .ok_or_else(|| CliError::config(format!("config is missing the [{name}] section")))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
