//! Timing-advance estimation from a detected correlation window.
//!
//! A zero-delay preamble peaks at the rightmost bin of its window, and
//! every D * (N / L_RA) time samples of propagation delay move the peak one
//! bin left. The estimate is therefore the distance of the power peak from
//! the rightmost bin: ta_bins = (N_CS - 1) - argmax. One bin spans
//! N / L_RA time samples, about 29.47 samples or 71.9 m of one-way range at
//! the default numerology.

use serde::{Deserialize, Serialize};

use crate::channel::{mean_channel_delay_samples, ChannelConfig};
use crate::correlator::WindowInstance;
use crate::error::{Error, Result};
use crate::preamble::PreambleConfig;

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// One timing-advance estimate in the three unit systems callers need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaEstimate {
    pub ta_bins: u32,
    pub ta_time_samples: f64,
    pub ta_meters: f64,
}

/// Converts a bin count into time samples and one-way meters.
pub fn ta_units(ta_bins: u32, p: &PreambleConfig) -> TaEstimate {
    let ta_time_samples = f64::from(ta_bins) * p.samples_per_bin();
    TaEstimate {
        ta_bins,
        ta_time_samples,
        ta_meters: ta_time_samples * SPEED_OF_LIGHT_M_S / p.sample_rate_hz(),
    }
}

/// Peak position of the window, ties broken toward the larger bin index so
/// the reported delay errs toward the smaller timing advance.
pub fn argmax_rightmost(powers: &[f64]) -> usize {
    let mut best = 0usize;
    for (j, v) in powers.iter().enumerate() {
        if *v >= powers[best] {
            best = j;
        }
    }
    best
}

/// Estimates the timing advance of a window flagged as present.
pub fn estimate_ta(w: &WindowInstance, p: &PreambleConfig) -> Result<TaEstimate> {
    let powers = w.bin_powers();
    if powers.len() != p.n_cs as usize {
        return Err(Error::Estimation(format!(
            "window has {} bins, expected {}",
            powers.len(),
            p.n_cs
        )));
    }
    if powers.iter().all(|&v| v == 0.0) {
        return Err(Error::Estimation("window is all zero, no peak to locate".into()));
    }
    if powers.iter().any(|v| !v.is_finite()) {
        return Err(Error::Estimation("window contains non-finite power".into()));
    }
    let peak = argmax_rightmost(&powers);
    Ok(ta_units((p.n_cs as usize - 1 - peak) as u32, p))
}

/// Match tolerance for accuracy accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthScheme {
    /// Estimate must equal the true bin exactly.
    Exact,
    /// Estimate may be off by one bin.
    Tol1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaGroundTruth {
    pub scheme: TruthScheme,
    pub value_bins: u32,
}

/// True timing advance in bins: the propagation delay plus the power-
/// weighted mean channel delay, rounded half-up to the bin grid. Errors
/// when the result falls outside the window's unambiguous range; dataset
/// generation regenerates such draws.
pub fn make_ground_truth(
    delay_samples: f64,
    c: &ChannelConfig,
    p: &PreambleConfig,
    scheme: TruthScheme,
) -> Result<TaGroundTruth> {
    if !(delay_samples >= 0.0) {
        return Err(Error::Argument(format!(
            "delay_samples must be >= 0, got {}",
            delay_samples
        )));
    }
    let mean_ch = mean_channel_delay_samples(c.model, c.delay_spread_s, p);
    let bins = ((delay_samples + mean_ch) / p.samples_per_bin()).round();
    if bins < 0.0 || bins > f64::from(p.n_cs - 1) {
        return Err(Error::Estimation(format!(
            "true delay {} samples rounds to bin {}, outside [0, {}]",
            delay_samples,
            bins,
            p.n_cs - 1
        )));
    }
    Ok(TaGroundTruth {
        scheme,
        value_bins: bins as u32,
    })
}

/// Whether an estimate agrees with the truth under its scheme.
pub fn ta_matches(est: &TaEstimate, truth: &TaGroundTruth) -> bool {
    let diff = (i64::from(est.ta_bins) - i64::from(truth.value_bins)).abs();
    match truth.scheme {
        TruthScheme::Exact => diff == 0,
        TruthScheme::Tol1 => diff <= 1,
    }
}
