//! Ring-artifact simulation and unsupervised domain adaptation workbench.
//!
//! The crate covers a full pipeline: parallel-beam projection and filtered
//! backprojection ([`projection`]), detector-gain ring-artifact synthesis via
//! reconstruction-error transfer ([`distortion`]), distorted dataset
//! generation with NPZ I/O ([`dataset`], [`npy`]), a small tape-based
//! autodiff engine ([`autodiff`]), a domain-adversarial classifier
//! ([`dann`]), macro-averaged evaluation ([`metrics`]), and a k-fold
//! experiment harness ([`experiments`]).
//!
//! Start with the examples directory for runnable walkthroughs of each
//! stage; the `ringadapt` binary exposes the same capabilities as
//! subcommands.

pub mod autodiff;
pub mod dann;
pub mod dataset;
pub mod distortion;
pub mod error;
pub mod experiments;
pub mod imaging;
pub mod metrics;
pub mod npy;
pub mod phantom;
pub mod projection;
pub mod rng;
pub mod selfcheck;
pub mod synth;

pub use error::{Error, Result};
pub use imaging::{Image, PadPlan};
pub use projection::Sinogram;
