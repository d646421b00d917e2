//! Space-filling node samplers used as emulation baselines: uniform
//! random, scrambled Sobol, and Latin hypercube designs (plain and
//! sequential-release).

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};

/// Baseline node-selection scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    /// Uniform points in the box.
    Random,
    /// Digitally-shifted Sobol sequence (midpoint-start).
    Sobol,
    /// Latin hypercube design drawn in one shot.
    Lhc,
    /// Latin hypercube design released one point per iteration.
    SeqLhc,
}

impl SamplerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Self::Random),
            "sobol" => Ok(Self::Sobol),
            "lhc" => Ok(Self::Lhc),
            "seq-lhc" | "seq_lhc" | "seqlhc" => Ok(Self::SeqLhc),
            other => Err(Error::InvalidInput(format!("unknown sampler '{other}'"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Sobol => "sobol",
            Self::Lhc => "lhc",
            Self::SeqLhc => "seq-lhc",
        }
    }
}

/// Direction-number table for the first eight Sobol dimensions
/// (degree, coefficient, initial m values).
const SOBOL_POLYS: [(u32, u32, [u32; 5]); 7] = [
    (1, 0, [1, 0, 0, 0, 0]),
    (2, 1, [1, 3, 0, 0, 0]),
    (3, 1, [1, 3, 1, 0, 0]),
    (3, 2, [1, 1, 1, 0, 0]),
    (4, 1, [1, 1, 3, 3, 0]),
    (4, 4, [1, 3, 5, 13, 0]),
    (5, 2, [1, 1, 5, 5, 17]),
];

const SOBOL_BITS: u32 = 32;
pub const SOBOL_MAX_DIM: usize = 8;

fn direction_numbers(dim: usize) -> Vec<[u32; SOBOL_BITS as usize]> {
    let mut dirs = Vec::with_capacity(dim);
    // First dimension: van der Corput in base 2.
    let mut v0 = [0u32; SOBOL_BITS as usize];
    for (i, v) in v0.iter_mut().enumerate() {
        *v = 1 << (SOBOL_BITS - 1 - i as u32);
    }
    dirs.push(v0);
    for d in 1..dim {
        let (s, a, m_init) = SOBOL_POLYS[d - 1];
        let s = s as usize;
        let mut m = vec![0u32; SOBOL_BITS as usize];
        m[..s].copy_from_slice(&m_init[..s]);
        for i in s..SOBOL_BITS as usize {
            let mut value = m[i - s] << s;
            value ^= m[i - s];
            for k in 1..s {
                if (a >> (s - 1 - k)) & 1 == 1 {
                    value ^= m[i - k] << k;
                }
            }
            m[i] = value;
        }
        let mut v = [0u32; SOBOL_BITS as usize];
        for i in 0..SOBOL_BITS as usize {
            v[i] = m[i] << (SOBOL_BITS - 1 - i as u32);
        }
        dirs.push(v);
    }
    dirs
}

/// Raw Sobol points in `[0,1)^dim` starting at sequence index 1, so the
/// first point is the unit-cube midpoint. `shift` applies a digital
/// scramble (XOR) per dimension; zeros leave the standard sequence.
pub fn sobol_unit(dim: usize, count: usize, shift: &[u32]) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || dim > SOBOL_MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "sobol supports 1..={SOBOL_MAX_DIM} dimensions, got {dim}"
        )));
    }
    if shift.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "{} shift words for {dim} dimensions",
            shift.len()
        )));
    }
    let dirs = direction_numbers(dim);
    let mut state = vec![0u32; dim];
    let mut out = Vec::with_capacity(count);
    // Gray-code construction: point n differs from point n-1 in the bit
    // position of the lowest zero bit of n-1.
    for n in 1..=count {
        let c = (n as u32 - 1).trailing_ones() as usize;
        for d in 0..dim {
            state[d] ^= dirs[d][c];
        }
        out.push(
            state
                .iter()
                .zip(shift)
                .map(|(s, sh)| (s ^ sh) as f64 / (1u64 << SOBOL_BITS) as f64)
                .collect(),
        );
    }
    Ok(out)
}

fn scale(unit: Vec<Vec<f64>>, domain: &[(f64, f64)]) -> Vec<Vec<f64>> {
    unit.into_iter()
        .map(|p| p.iter().zip(domain).map(|(u, &(lo, hi))| lo + u * (hi - lo)).collect())
        .collect()
}

/// Latin hypercube in the unit cube: one point per stratum in every
/// marginal, strata paired by independent seeded permutations.
fn lhc_unit(dim: usize, count: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut coords: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(rng);
        coords.push(
            strata
                .iter()
                .map(|&s| (s as f64 + rng.random_range(0.0..1.0)) / count as f64)
                .collect(),
        );
    }
    (0..count).map(|i| coords.iter().map(|c| c[i]).collect()).collect()
}

/// Generate `count` nodes in `domain` under the given scheme,
/// deterministically from `seed`.
pub fn sample_nodes(
    kind: SamplerKind,
    domain: &[(f64, f64)],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if domain.is_empty() || domain.iter().any(|&(lo, hi)| !(lo < hi)) {
        return Err(Error::InvalidInput("sampler domain must be nonempty intervals".into()));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    match kind {
        SamplerKind::Random => {
            let mut rng = stream_rng(seed, 0x72616e64);
            Ok((0..count)
                .map(|_| domain.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect())
                .collect())
        }
        SamplerKind::Sobol => {
            let mut rng = stream_rng(seed, 0x736f626f);
            let shift: Vec<u32> = (0..domain.len()).map(|_| rng.random::<u32>()).collect();
            Ok(scale(sobol_unit(domain.len(), count, &shift)?, domain))
        }
        SamplerKind::Lhc | SamplerKind::SeqLhc => {
            let mut rng = stream_rng(seed, 0x6c686300);
            Ok(scale(lhc_unit(domain.len(), count, &mut rng), domain))
        }
    }
}

/// Scrambled low-discrepancy probe set for stopping grids and acquisition
/// fallbacks.
pub fn scrambled_probe(domain: &[(f64, f64)], count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = stream_rng(derive_seed(seed, 0x70726f62), 0);
    let shift: Vec<u32> = (0..domain.len()).map(|_| rng.random::<u32>()).collect();
    Ok(scale(sobol_unit(domain.len(), count, &shift)?, domain))
}
