//! Synthetic campaign generators. Inputs are drawn from site-specific
//! Gaussian mixtures over a 4-band reflectance-like space; the true target
//! is a saturating exponential of a normalized band-contrast index.
//! Simulated rows use the same truth plus a configurable bias and their
//! own noise level. Everything is a pure function of the seed.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use gpkit_core::rng::{derive_seed, stream_rng};
use gpkit_core::{SourceFlag, TaggedDataset};

use crate::config::{SiteSpec, TargetModelSpec};
use crate::error::{CliError, Result};

/// True response: a band-contrast index squashed through a saturating
/// exponential.
pub fn true_target(bands: &[f64], tm: &TargetModelSpec) -> f64 {
    let contrast = (bands[3] - bands[2]) / (bands[3] + bands[2] + tm.offset);
    let u = ((contrast + 1.0) / 2.0).clamp(0.0, 1.0);
    tm.scale * (1.0 - (-tm.rate * u).exp())
}

fn draw_bands(site: &SiteSpec, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if site.weights.len() != site.means.len() || site.means.is_empty() {
        return Err(CliError::config(format!(
            "site '{}': weights and means must be non-empty and equal-length",
            site.name
        )));
    }
    let total: f64 = site.weights.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let mut component = 0;
    for (i, w) in site.weights.iter().enumerate() {
        if pick < *w {
            component = i;
            break;
        }
        pick -= w;
    }
    let mean = &site.means[component];
    if mean.len() != 4 {
        return Err(CliError::config(format!(
            "site '{}': component means must have 4 bands",
            site.name
        )));
    }
    Ok(mean
        .iter()
        .map(|m| {
            let z: f64 = StandardNormal.sample(rng);
            (m + site.std * z).clamp(0.0, 1.0)
        })
        .collect())
}

/// Rows with flags for one site: `n_real` real rows and `n_sim` simulated
/// rows (bias + own noise), deterministic in `(seed, site, role)`.
pub fn generate_site_data(
    site: &SiteSpec,
    tm: &TargetModelSpec,
    n_real: usize,
    n_sim: usize,
    real_noise: f64,
    sim_noise: f64,
    sim_bias: f64,
    seed: u64,
    site_index: u64,
) -> Result<TaggedDataset> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut flags = Vec::new();

    let mut real_rng = stream_rng(derive_seed(seed, 0x5349_0000 + site_index), 0);
    for _ in 0..n_real {
        let bands = draw_bands(site, &mut real_rng)?;
        let z: f64 = StandardNormal.sample(&mut real_rng);
        targets.push(true_target(&bands, tm) + real_noise * z);
        rows.extend(bands);
        flags.push(SourceFlag::Real);
    }
    let mut sim_rng = stream_rng(derive_seed(seed, 0x5349_8000 + site_index), 0);
    for _ in 0..n_sim {
        let bands = draw_bands(site, &mut sim_rng)?;
        let z: f64 = StandardNormal.sample(&mut sim_rng);
        targets.push(true_target(&bands, tm) + sim_bias + sim_noise * z);
        rows.extend(bands);
        flags.push(SourceFlag::Simulated);
    }
    let n = targets.len();
    let inputs = Array2::from_shape_vec((n, 4), rows)
        .map_err(|e| CliError::config(e.to_string()))?;
    Ok(TaggedDataset::new(inputs, Array1::from(targets), flags)?)
}

/// Merge the rows of two tagged datasets.
pub fn concat_tagged(a: &TaggedDataset, b: &TaggedDataset) -> Result<TaggedDataset> {
    let mut inputs = a.inputs().to_owned().into_raw_vec_and_offset().0;
    inputs.extend(b.inputs().iter().copied());
    let mut targets = a.targets().to_vec();
    targets.extend(b.targets().iter().copied());
    let mut flags = a.flags().to_vec();
    flags.extend_from_slice(b.flags());
    let n = targets.len();
    let d = a.dim();
    Ok(TaggedDataset::new(
        Array2::from_shape_vec((n, d), inputs).map_err(|e| CliError::config(e.to_string()))?,
        Array1::from(targets),
        flags,
    )?)
}
