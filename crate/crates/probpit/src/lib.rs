//! Probabilistic permutation invariant training for single-channel
//! source separation.
//!
//! The crate provides:
//!
//! - [`dsp`]: STFT analysis/synthesis, mixture-phase reconstruction,
//!   controlled-SIR mixing, synthetic sources, and WAV I/O.
//! - [`perm`]: permutation enumeration, pairwise separation costs, and a
//!   polynomial assignment oracle.
//! - [`loss`]: the soft-minimum objective over permutation costs, its
//!   PIT limit at gamma = 0, and analytic gradients.
//! - [`separator`]: a small recurrent mask network with exact manual
//!   backpropagation, Adam training, and checkpointing.
//! - [`metrics`]: SDR/SIR/SAR evaluation, kernel density estimation, and
//!   a paired t-test.

pub mod dsp;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod perm;
pub mod separator;

pub use error::{Error, Result};
