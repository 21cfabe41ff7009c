//! Link-level simulation of the 5G NR random-access preamble (PRACH) and a
//! hybrid receiver that replaces the classical threshold test with a small
//! neural network operating on correlation windows.
//!
//! The crate covers the full chain: Zadoff-Chu preamble construction, a
//! frequency-domain channel (AWGN or a 300 ns tapped-delay-line profile),
//! per-antenna correlation with equal-gain combining, window extraction,
//! dataset generation, an MLP classifier trained from scratch, timing-advance
//! estimation, and exact Shapley attribution for the classifier inputs.

pub mod channel;
pub mod correlator;
pub mod dataset;
pub mod detect;
pub mod error;
pub mod explain;
pub mod mlp;
pub mod preamble;
pub mod rng;
pub mod ta;

pub use error::{Error, Result};

/// Complex baseband sample.
pub type C64 = num_complex::Complex64;
