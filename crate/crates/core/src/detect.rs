//! Preamble presence decisions, classical and learned.
//!
//! The conventional detector declares a window occupied when its largest
//! PDP bin exceeds alpha times the profile noise floor, where the floor is
//! the median over all bins divided by ln 2 (the median of an exponential
//! is mu ln 2, so this is an outlier-robust mean estimate) and alpha comes
//! from offline Monte-Carlo calibration to a per-window false-alarm target
//! on noise-only input. The hybrid detector feeds the normalized window to
//! the trained classifier and thresholds the present-class probability at
//! 0.5. Both are invariant to rescaling the received grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{simulate_reception_with_rng, ChannelConfig, ChannelModel, RxGrid};
use crate::correlator::{
    compute_pdp, compute_profiles, extract_cdp_windows, extract_pdp_windows, root_spectrum,
    window_bins, InputKind, Pdp, WindowContext, WindowInstance,
};
use crate::error::{Error, Result};
use crate::mlp::{forward, normalize_features, MlpModel};
use crate::preamble::{PreambleConfig, RootTable};
use crate::rng::{substream, STREAM_CALIBRATION};
use crate::ta::{estimate_ta, TaEstimate};

/// Robust per-bin noise power estimate: median of the profile divided by
/// ln 2. Unbiased for the mean of exponential bins, insensitive to the few
/// bins that carry signal.
pub fn noise_floor(pdp: &Pdp) -> f64 {
    let mut sorted = pdp.values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    median / std::f64::consts::LN_2
}

/// Calibrated threshold multiplier for one antenna count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConventionalCal {
    pub alpha: f64,
    pub num_rx: usize,
    pub target_fa: f64,
    pub occasions: usize,
    pub seed: u64,
}

/// Monte-Carlo calibration on noise-only occasions: alpha is the empirical
/// (1 - target_fa) quantile of the per-window statistic max_bin / floor.
/// The statistic is scale-free, so the SNR used here is immaterial. The
/// floor distribution depends on the antenna count through equal-gain
/// combining, hence one calibration per num_rx.
pub fn calibrate_conventional(
    p: &PreambleConfig,
    num_rx: usize,
    target_fa: f64,
    occasions: usize,
    seed: u64,
) -> Result<ConventionalCal> {
    p.validate()?;
    if !(target_fa > 0.0 && target_fa < 1.0) {
        return Err(Error::Config(format!(
            "target_fa must be in (0, 1), got {}",
            target_fa
        )));
    }
    if occasions == 0 {
        return Err(Error::Config("calibration needs at least one occasion".into()));
    }
    let windows = p.num_windows() as usize;
    if ((occasions * windows) as f64 * target_fa) < 1.0 {
        return Err(Error::Config(format!(
            "{} occasions give too few windows to resolve a {} false-alarm rate",
            occasions, target_fa
        )));
    }
    let root = root_spectrum(p)?;
    let chan = ChannelConfig {
        model: ChannelModel::Awgn,
        num_rx,
        snr_db: 0.0,
        ..Default::default()
    };
    let mut ratios: Vec<f64> = (0..occasions)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, STREAM_CALIBRATION | i as u64);
            let grid = simulate_reception_with_rng(p, &chan, false, &mut rng)
                .expect("noise-only simulation cannot fail after validation");
            let pdp = compute_pdp(&grid, &root).expect("correlation of validated grid");
            let floor = noise_floor(&pdp);
            (0..p.num_windows())
                .map(|v| {
                    let max = pdp.values[window_bins(p, v)].iter().cloned().fold(0.0, f64::max);
                    max / floor
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = ratios.len();
    let k = (((1.0 - target_fa) * n as f64).ceil() as usize).clamp(1, n) - 1;
    Ok(ConventionalCal {
        alpha: ratios[k],
        num_rx,
        target_fa,
        occasions,
        seed,
    })
}

/// Per-window outcome of the conventional detector. `score` is the margin
/// max_bin / (alpha * floor); values above 1 mean present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowDecision {
    pub window_index: u32,
    pub present: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConventionalDetection {
    pub noise_floor: f64,
    pub decisions: Vec<WindowDecision>,
}

/// Below this fraction of the strongest bin the floor is considered
/// numerically zero. Noise-free input leaves only double-precision residue
/// (~1e-30 of the peak) off the true lag; without the guard, ratios of
/// residue would be compared against alpha. Any real noise level sits many
/// orders of magnitude above the guard, and it scales with the profile, so
/// margins stay scale-invariant.
const FLOOR_GUARD: f64 = 1e-20;

/// Threshold test per window: max bin > alpha * noise floor.
pub fn detect_conventional(pdp: &Pdp, p: &PreambleConfig, cal: &ConventionalCal) -> Result<ConventionalDetection> {
    if pdp.values.len() != p.l_ra as usize {
        return Err(Error::Argument(format!(
            "profile length {} does not match l_ra {}",
            pdp.values.len(),
            p.l_ra
        )));
    }
    let global_max = pdp.values.iter().cloned().fold(0.0, f64::max);
    let floor = noise_floor(pdp).max(FLOOR_GUARD * global_max);
    let decisions = (0..p.num_windows())
        .map(|v| {
            let max = pdp.values[window_bins(p, v)].iter().cloned().fold(0.0, f64::max);
            let score = if floor > 0.0 {
                max / (cal.alpha * floor)
            } else if max > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            WindowDecision {
                window_index: v,
                present: score > 1.0,
                score,
            }
        })
        .collect();
    Ok(ConventionalDetection {
        noise_floor: floor,
        decisions,
    })
}

/// Hybrid decision for one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridDecision {
    pub present: bool,
    pub p_present: f64,
}

/// Classifier decision: present iff p(present) >= 0.5. The window must
/// match the model's input kind and width.
pub fn detect_hybrid(w: &WindowInstance, m: &MlpModel) -> Result<HybridDecision> {
    if w.input_kind != m.input_kind {
        return Err(Error::Argument(format!(
            "window kind {} does not match model kind {}",
            w.input_kind, m.input_kind
        )));
    }
    if w.features.len() != m.input_dim() {
        return Err(Error::Argument(format!(
            "window has {} features, model expects {}",
            w.features.len(),
            m.input_dim()
        )));
    }
    if w.features.iter().any(|f| !f.is_finite()) {
        return Err(Error::Argument("window features must be finite".into()));
    }
    let x = normalize_features(w, m.normalization)?;
    let p = forward(m, &x)?;
    Ok(HybridDecision {
        present: p[1] >= 0.5,
        p_present: p[1],
    })
}

/// One reported preamble: identity, confidence, timing advance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub rapid: u32,
    pub p_present: f64,
    pub ta: TaEstimate,
}

/// Full receiver pass over one occasion: correlate against every root in
/// the table, classify each window holding a valid RAPID, and estimate the
/// timing advance of every detection from the PDP peak. Results are
/// ordered by RAPID.
pub fn run_receiver(grid: &RxGrid, table: &RootTable, m: &MlpModel) -> Result<Vec<Detection>> {
    let p = grid.preamble;
    let mut detections = Vec::new();
    for b in 0..table.num_bases() {
        let root_cfg = p.with_root(table.root(b)).with_v(0);
        let root = root_spectrum(&root_cfg)?;
        let ctx = WindowContext {
            snr_db: grid.channel.snr_db,
            channel: grid.channel.model,
            num_rx: grid.num_rx(),
            base_index: b,
            label: None,
            true_delay_samples: None,
        };
        let (feature_windows, pdp) = match m.input_kind {
            InputKind::Pdp => {
                let pdp = compute_pdp(grid, &root)?;
                (extract_pdp_windows(&pdp, &p, table, &ctx), pdp)
            }
            InputKind::Cdp => {
                let (cdp, pdp) = compute_profiles(grid, &root)?;
                (extract_cdp_windows(&cdp, &p, table, &ctx), pdp)
            }
        };
        let pdp_windows = match m.input_kind {
            InputKind::Pdp => feature_windows.clone(),
            InputKind::Cdp => extract_pdp_windows(&pdp, &p, table, &ctx),
        };
        for (w, wp) in feature_windows.iter().zip(&pdp_windows) {
            let Some(rapid) = w.rapid else { continue };
            let decision = detect_hybrid(w, m)?;
            if decision.present {
                detections.push(Detection {
                    rapid,
                    p_present: decision.p_present,
                    ta: estimate_ta(wp, &p)?,
                });
            }
        }
    }
    detections.sort_by_key(|d| d.rapid);
    Ok(detections)
}
