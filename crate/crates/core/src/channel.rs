//! Frequency-domain channel simulation for one PRACH occasion.
//!
//! The received grid per antenna i is
//!
//!   y_i(k) = h_i(k) * y(k) * exp(-j 2 pi k * d / N) + w_i(k)
//!
//! where k is the local RE index (0..L_RA-1), y(k) the transmitted preamble
//! spectrum normalized to unit power per RE, d the propagation delay in
//! time samples at the system rate, and w_i complex white Gaussian noise.
//! SNR is defined per resource element: noise variance 10^(-snr_db/10)
//! against unit signal power, so the quoted SNR is exact at every RE.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preamble::{preamble_freq, PreambleConfig};
use crate::rng::substream;
use crate::C64;

/// Propagation models. `Tdlc300` is the TR 38.901 TDL-C power-delay profile
/// scaled to a 300 ns RMS delay spread, with Rayleigh (NLOS) taps, block
/// fading over the occasion and no Doppler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelModel {
    Awgn,
    Tdlc300,
}

impl std::fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChannelModel::Awgn => write!(f, "awgn"),
            ChannelModel::Tdlc300 => write!(f, "tdlc300"),
        }
    }
}

impl std::str::FromStr for ChannelModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "awgn" => Ok(ChannelModel::Awgn),
            "tdlc300" => Ok(ChannelModel::Tdlc300),
            other => Err(Error::Config(format!(
                "unknown channel '{}', valid values: awgn, tdlc300",
                other
            ))),
        }
    }
}

/// TR 38.901 Table 7.7.2-3 (TDL-C): delays normalized to unit RMS spread.
// tap 6 (0.6366) is a standardized table value, not an approximation of 2/pi
#[allow(clippy::approx_constant)]
pub const TDLC_DELAYS_NORM: [f64; 24] = [
    0.0, 0.2099, 0.2219, 0.2329, 0.2176, 0.6366, 0.6448, 0.6560, 0.6584, 0.7935, 0.8213, 0.9336,
    1.2285, 1.3083, 2.1704, 2.7105, 4.2589, 4.6003, 5.4902, 5.6077, 6.3065, 6.6374, 7.0427,
    8.6523,
];

/// Tap powers in dB for the same table.
pub const TDLC_POWERS_DB: [f64; 24] = [
    -4.4, -1.2, -3.5, -5.2, -2.5, 0.0, -2.2, -3.9, -7.4, -7.1, -10.7, -11.1, -5.1, -6.8, -8.7,
    -13.2, -13.9, -13.9, -15.8, -17.1, -16.0, -15.7, -21.6, -22.8,
];

/// Tap powers normalized to sum to one, so E[|h(k)|^2] = 1 at every RE.
pub fn tdlc_powers_linear() -> [f64; 24] {
    let mut p = [0.0; 24];
    let mut sum = 0.0;
    for (slot, db) in p.iter_mut().zip(TDLC_POWERS_DB) {
        *slot = 10f64.powf(db / 10.0);
        sum += *slot;
    }
    for slot in &mut p {
        *slot /= sum;
    }
    p
}

/// One channel configuration for `simulate_reception`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub model: ChannelModel,
    pub num_rx: usize,
    /// RMS delay spread in seconds (only meaningful for Tdlc300).
    pub delay_spread_s: f64,
    /// Per-RE SNR in dB; +inf disables noise.
    pub snr_db: f64,
    /// Propagation delay in time samples at the system rate, >= 0.
    pub delay_samples: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            model: ChannelModel::Awgn,
            num_rx: 1,
            delay_spread_s: 300e-9,
            snr_db: 0.0,
            delay_samples: 0.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self, p: &PreambleConfig) -> Result<()> {
        if self.num_rx == 0 {
            return Err(Error::Config("num_rx must be >= 1".into()));
        }
        if !(self.delay_spread_s >= 0.0) {
            return Err(Error::Config(format!(
                "delay_spread_s must be >= 0, got {}",
                self.delay_spread_s
            )));
        }
        if !(self.delay_samples >= 0.0) {
            return Err(Error::Config(format!(
                "delay_samples must be >= 0, got {}",
                self.delay_samples
            )));
        }
        let max_delay = f64::from(p.n_cs) * p.samples_per_bin();
        if self.delay_samples >= max_delay {
            return Err(Error::Config(format!(
                "delay_samples {} exceeds the unambiguous range {} (n_cs bins)",
                self.delay_samples, max_delay
            )));
        }
        if self.snr_db.is_nan() {
            return Err(Error::Config("snr_db must not be NaN".into()));
        }
        Ok(())
    }
}

/// Received frequency-domain samples, one row per antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct RxGrid {
    pub antennas: Vec<Vec<C64>>,
    pub preamble: PreambleConfig,
    pub channel: ChannelConfig,
    pub user_present: bool,
}

impl RxGrid {
    pub fn num_rx(&self) -> usize {
        self.antennas.len()
    }
}

/// Multiplies the per-subcarrier delay ramp exp(-j 2 pi k d / N) onto a
/// spectrum. Fractional delays are exact here; there is no resampling.
pub fn apply_delay(y: &[C64], delay_samples: f64, fft_size: u32) -> Result<Vec<C64>> {
    if !(delay_samples >= 0.0) {
        return Err(Error::Argument(format!(
            "delay_samples must be >= 0, got {}",
            delay_samples
        )));
    }
    let n = f64::from(fft_size);
    Ok(y.iter()
        .enumerate()
        .map(|(k, yk)| {
            yk * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 * delay_samples / n)
        })
        .collect())
}

/// Frequency response generator for the TDL profile at fixed RE positions.
/// Tap phasors depend only on the configuration, so they are computed once
/// and reused across fading draws.
pub struct TdlRealizer {
    /// powers[t] and phasors[t][k] = exp(-j 2 pi k scs tau_t).
    powers: [f64; 24],
    phasors: Vec<Vec<C64>>,
    mean_delay_s: f64,
}

impl TdlRealizer {
    pub fn new(p: &PreambleConfig, delay_spread_s: f64) -> Self {
        let powers = tdlc_powers_linear();
        let l = p.l_ra as usize;
        let phasors = TDLC_DELAYS_NORM
            .iter()
            .map(|dn| {
                let tau = dn * delay_spread_s;
                (0..l)
                    .map(|k| {
                        Complex64::from_polar(
                            1.0,
                            -2.0 * std::f64::consts::PI * k as f64 * p.scs_hz * tau,
                        )
                    })
                    .collect()
            })
            .collect();
        let mean_delay_s = powers
            .iter()
            .zip(TDLC_DELAYS_NORM)
            .map(|(pw, dn)| pw * dn * delay_spread_s)
            .sum();
        TdlRealizer {
            powers,
            phasors,
            mean_delay_s,
        }
    }

    /// Power-weighted mean tap delay in seconds.
    pub fn mean_delay_s(&self) -> f64 {
        self.mean_delay_s
    }

    /// One independent Rayleigh block-fading realization: h(k) = sum_t g_t
    /// exp(-j 2 pi k scs tau_t) with g_t ~ CN(0, p_t). Draw order: taps in
    /// table order, real part then imaginary part.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<C64> {
        let l = self.phasors[0].len();
        let mut h = vec![Complex64::new(0.0, 0.0); l];
        for (pw, ph) in self.powers.iter().zip(&self.phasors) {
            let s = (pw / 2.0).sqrt();
            let g = Complex64::new(
                s * rng.sample::<f64, _>(StandardNormal),
                s * rng.sample::<f64, _>(StandardNormal),
            );
            for (hk, pk) in h.iter_mut().zip(ph) {
                *hk += g * pk;
            }
        }
        h
    }
}

/// Per-antenna frequency responses for one occasion. AWGN is the identity
/// channel; Tdlc300 draws one independent realization per antenna.
pub fn draw_channel(c: &ChannelConfig, p: &PreambleConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<C64>> {
    match c.model {
        ChannelModel::Awgn => {
            vec![vec![Complex64::new(1.0, 0.0); p.l_ra as usize]; c.num_rx]
        }
        ChannelModel::Tdlc300 => {
            let realizer = TdlRealizer::new(p, c.delay_spread_s);
            (0..c.num_rx).map(|_| realizer.draw(rng)).collect()
        }
    }
}

/// Power-weighted mean channel delay in time samples; zero for AWGN. The
/// timing-advance ground truth adds this to the propagation delay.
pub fn mean_channel_delay_samples(model: ChannelModel, delay_spread_s: f64, p: &PreambleConfig) -> f64 {
    match model {
        ChannelModel::Awgn => 0.0,
        ChannelModel::Tdlc300 => {
            let powers = tdlc_powers_linear();
            let mean_s: f64 = powers
                .iter()
                .zip(TDLC_DELAYS_NORM)
                .map(|(pw, dn)| pw * dn * delay_spread_s)
                .sum();
            mean_s * p.sample_rate_hz()
        }
    }
}

/// Adds complex white Gaussian noise of variance 10^(-snr_db/10) per RE to
/// every antenna. snr_db = +inf leaves the grid untouched. Draw order:
/// antennas in order, REs in order, real part then imaginary part.
pub fn add_awgn(grid: &mut RxGrid, snr_db: f64, rng: &mut ChaCha8Rng) {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return;
    }
    let sigma = (10f64.powf(-snr_db / 10.0) / 2.0).sqrt();
    for ant in &mut grid.antennas {
        for re in ant.iter_mut() {
            let w = Complex64::new(
                sigma * rng.sample::<f64, _>(StandardNormal),
                sigma * rng.sample::<f64, _>(StandardNormal),
            );
            *re += w;
        }
    }
}

/// Simulates one occasion with the RNG substream derived from
/// `c.seed` (stream 0). See `simulate_reception_with_rng` for the loop form.
pub fn simulate_reception(p: &PreambleConfig, c: &ChannelConfig, user_present: bool) -> Result<RxGrid> {
    let mut rng = substream(c.seed, 0);
    simulate_reception_with_rng(p, c, user_present, &mut rng)
}

/// Simulates one occasion with an explicit RNG so Monte-Carlo loops can
/// hand each instance its own substream. Consumption order: fading draws
/// for all antennas first (user present, TDL only), then noise for all
/// antennas. The transmitted spectrum is the preamble scaled by
/// 1/sqrt(L_RA) so every signal RE carries unit power before fading.
pub fn simulate_reception_with_rng(
    p: &PreambleConfig,
    c: &ChannelConfig,
    user_present: bool,
    rng: &mut ChaCha8Rng,
) -> Result<RxGrid> {
    p.validate()?;
    c.validate(p)?;
    let l = p.l_ra as usize;
    let antennas = if user_present {
        let tx = preamble_freq(p)?;
        let scale = 1.0 / f64::from(p.l_ra).sqrt();
        let tx: Vec<C64> = tx.values.iter().map(|z| z * scale).collect();
        let delayed = apply_delay(&tx, c.delay_samples, p.fft_size)?;
        let h = draw_channel(c, p, rng);
        h.into_iter()
            .map(|hi| hi.into_iter().zip(&delayed).map(|(hk, yk)| hk * yk).collect())
            .collect()
    } else {
        vec![vec![Complex64::new(0.0, 0.0); l]; c.num_rx]
    };
    let mut grid = RxGrid {
        antennas,
        preamble: *p,
        channel: *c,
        user_present,
    };
    add_awgn(&mut grid, c.snr_db, rng);
    Ok(grid)
}
