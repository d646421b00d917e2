//! GP models for blending measured and simulated data, multi-output
//! latent force regression, and active emulation of costly simulators.
//!
//! Four model families share the kernel and linear-algebra core:
//!
//! * [`gp`] — standard single-output GP regression with grid-based
//!   hyperparameter selection.
//! * [`jgp`] — a joint GP over pooled real and simulated samples whose
//!   per-source noise scaling is tuned by leave-one-out pseudo-likelihood
//!   on the real rows.
//! * [`lfm`] — multi-output latent force models built from Gaussian
//!   convolution kernels, with latent-function inference and gap filling.
//! * [`agape`] — an active emulation loop that grows a compact node set
//!   for an expensive oracle by maximizing a variance-times-gradient
//!   acquisition, plus the space-filling baselines it is judged against.

pub mod agape;
pub mod error;
pub mod gp;
pub mod jgp;
pub mod kernels;
pub mod lfm;
pub mod linalg;
pub mod rng;

pub use error::{Error, Result};
pub use gp::{Dataset, GpHyperparams, GpModel, HyperGrid};
pub use jgp::{JgpGrid, JgpHyperparams, JgpModel, SourceFlag, TaggedDataset};
pub use kernels::SeKernel;
pub use lfm::{LfmConfig, LfmModel, MultiOutputSeries, OutputSeries};
pub use linalg::SpdFactorization;
