//! Correlation of a received grid against a root sequence, and the window
//! view the detectors consume.
//!
//! Per antenna the receiver divides the grid by the root spectrum and takes
//! the L-point inverse DFT scaled by sqrt(L_RA), so a noiseless unit-power
//! zero-delay occasion yields a unit-magnitude impulse. The resulting delay
//! profile is stored window-major: profile bin j holds raw correlation lag
//! (N_CS - 1 - j) mod L_RA. In that orientation window v occupies the
//! contiguous bins [v*N_CS, v*N_CS + N_CS - 1], a zero-delay preamble v
//! peaks exactly at the rightmost bin of window v, and a delay of
//! D*(N/L_RA) time samples moves the peak D bins to the left. The trailing
//! L_RA - num_windows*N_CS bins are the guard region and belong to no
//! window.
//!
//! Two combining orders are exposed: CDP averages the complex correlations
//! over antennas before any magnitude is taken; PDP averages the per-antenna
//! magnitude squares (equal-gain combining). They coincide only for one
//! antenna. Integer-bin delays keep all preamble energy inside one window;
//! fractional delays physically leak Dirichlet sidelobes into neighboring
//! windows, which is why the isolation guarantees below are stated for
//! integer-bin delays.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, RxGrid};
use crate::error::{Error, Result};
use crate::preamble::{dft, generate_base_sequence, idft_direct, ComplexSeq, Domain, PreambleConfig, RootTable};
use crate::C64;

/// Which feature layout a window carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// N_CS real power values.
    Pdp,
    /// N_CS complex values interleaved as re0, im0, re1, im1, ...
    Cdp,
}

impl std::fmt::Display for InputKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputKind::Pdp => write!(f, "pdp"),
            InputKind::Cdp => write!(f, "cdp"),
        }
    }
}

impl std::str::FromStr for InputKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pdp" => Ok(InputKind::Pdp),
            "cdp" => Ok(InputKind::Cdp),
            other => Err(Error::Config(format!(
                "unknown input kind '{}', valid values: pdp, cdp",
                other
            ))),
        }
    }
}

/// Coherently combined delay profile (complex).
#[derive(Debug, Clone, PartialEq)]
pub struct Cdp {
    pub values: Vec<C64>,
    pub num_rx_combined: usize,
}

/// Equal-gain combined power delay profile (real, nonnegative).
#[derive(Debug, Clone, PartialEq)]
pub struct Pdp {
    pub values: Vec<f64>,
    pub num_rx_combined: usize,
}

impl Pdp {
    /// Mean power over the full profile; the noise-floor estimate used for
    /// input normalization.
    pub fn mean_power(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

impl Cdp {
    /// Mean per-bin power of the combined profile.
    pub fn mean_power(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }
}

/// Spectrum of the root (v = 0) sequence the receiver correlates against.
pub fn root_spectrum(cfg: &PreambleConfig) -> Result<ComplexSeq> {
    dft(&generate_base_sequence(cfg)?)
}

/// Per-antenna oriented complex correlation profiles.
fn correlate_antennas(grid: &RxGrid, root: &ComplexSeq) -> Result<Vec<Vec<C64>>> {
    if root.domain != Domain::Freq {
        return Err(Error::Argument("correlation needs the root spectrum".into()));
    }
    let l = root.values.len();
    if grid.antennas.is_empty() {
        return Err(Error::Argument("grid has no antennas".into()));
    }
    for ant in &grid.antennas {
        if ant.len() != l {
            return Err(Error::Argument(format!(
                "antenna length {} does not match root length {}",
                ant.len(),
                l
            )));
        }
    }
    let n_cs = grid.preamble.n_cs as usize;
    let scale = (l as f64).sqrt();
    Ok(grid
        .antennas
        .iter()
        .map(|ant| {
            let ratio: Vec<C64> = ant.iter().zip(&root.values).map(|(y, x)| y / x).collect();
            let raw = idft_direct(&ratio);
            // window-major orientation: bin j <- raw lag (n_cs - 1 - j) mod l
            (0..l)
                .map(|j| raw[(n_cs - 1 + l - j) % l] * scale)
                .collect()
        })
        .collect())
}

/// Complex delay profile: the per-antenna correlations averaged coherently.
pub fn compute_cdp(grid: &RxGrid, root: &ComplexSeq) -> Result<Cdp> {
    let per_ant = correlate_antennas(grid, root)?;
    let n = per_ant.len();
    let l = per_ant[0].len();
    let mut values = vec![C64::new(0.0, 0.0); l];
    for ant in &per_ant {
        for (acc, z) in values.iter_mut().zip(ant) {
            *acc += z;
        }
    }
    for z in &mut values {
        *z /= n as f64;
    }
    Ok(Cdp {
        values,
        num_rx_combined: n,
    })
}

/// Power delay profile: per-antenna magnitude squares averaged (equal-gain
/// combining). Not |CDP|^2 unless there is a single antenna.
pub fn compute_pdp(grid: &RxGrid, root: &ComplexSeq) -> Result<Pdp> {
    let per_ant = correlate_antennas(grid, root)?;
    let n = per_ant.len();
    let l = per_ant[0].len();
    let mut values = vec![0.0; l];
    for ant in &per_ant {
        for (acc, z) in values.iter_mut().zip(ant) {
            *acc += z.norm_sqr();
        }
    }
    for v in &mut values {
        *v /= n as f64;
    }
    Ok(Pdp {
        values,
        num_rx_combined: n,
    })
}

/// Both profiles from one correlation pass.
pub fn compute_profiles(grid: &RxGrid, root: &ComplexSeq) -> Result<(Cdp, Pdp)> {
    let per_ant = correlate_antennas(grid, root)?;
    let n = per_ant.len();
    let l = per_ant[0].len();
    let mut cdp = vec![C64::new(0.0, 0.0); l];
    let mut pdp = vec![0.0; l];
    for ant in &per_ant {
        for ((c, p), z) in cdp.iter_mut().zip(pdp.iter_mut()).zip(ant) {
            *c += z;
            *p += z.norm_sqr();
        }
    }
    for (c, p) in cdp.iter_mut().zip(pdp.iter_mut()) {
        *c /= n as f64;
        *p /= n as f64;
    }
    Ok((
        Cdp {
            values: cdp,
            num_rx_combined: n,
        },
        Pdp {
            values: pdp,
            num_rx_combined: n,
        },
    ))
}

/// Bin range of correlation window v in the oriented profile.
pub fn window_bins(p: &PreambleConfig, v: u32) -> std::ops::Range<usize> {
    let start = (v * p.n_cs) as usize;
    start..start + p.n_cs as usize
}

/// Rightmost bin of window v, where a zero-delay preamble v peaks.
pub fn window_rightmost_bin(p: &PreambleConfig, v: u32) -> usize {
    (v * p.n_cs + p.n_cs - 1) as usize
}

/// Guard bins covered by no window.
pub fn guard_bins(p: &PreambleConfig) -> std::ops::Range<usize> {
    (p.num_windows() * p.n_cs) as usize..p.l_ra as usize
}

/// Truth label of a window instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Presence {
    Present,
    Absent,
}

/// One correlation window plus the provenance the detectors, trainers and
/// evaluators need. `features` holds N_CS powers (pdp) or N_CS complex bins
/// interleaved re, im (cdp). `profile_mean` is the mean per-bin power of
/// the full profile this window was cut from; input normalization divides
/// by it (pdp) or by its square root (cdp), making decisions invariant to
/// any positive rescaling of the received grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowInstance {
    pub snr_db: f64,
    pub channel: ChannelModel,
    pub num_rx: usize,
    pub input_kind: InputKind,
    pub base_index: usize,
    pub window_index: u32,
    pub rapid: Option<u32>,
    pub label: Option<Presence>,
    pub true_delay_samples: Option<f64>,
    pub features: Vec<f64>,
    pub profile_mean: f64,
}

impl WindowInstance {
    /// Per-bin powers regardless of feature layout.
    pub fn bin_powers(&self) -> Vec<f64> {
        match self.input_kind {
            InputKind::Pdp => self.features.clone(),
            InputKind::Cdp => self
                .features
                .chunks_exact(2)
                .map(|c| c[0] * c[0] + c[1] * c[1])
                .collect(),
        }
    }

    pub fn num_bins(&self) -> usize {
        match self.input_kind {
            InputKind::Pdp => self.features.len(),
            InputKind::Cdp => self.features.len() / 2,
        }
    }
}

/// Provenance attached to every window cut from one occasion.
#[derive(Debug, Clone, Copy)]
pub struct WindowContext {
    pub snr_db: f64,
    pub channel: ChannelModel,
    pub num_rx: usize,
    pub base_index: usize,
    pub label: Option<Presence>,
    pub true_delay_samples: Option<f64>,
}

/// Cuts all windows of a PDP into instances. RAPIDs follow the root table;
/// windows beyond the RAPID space carry `rapid: None`.
pub fn extract_pdp_windows(
    pdp: &Pdp,
    p: &PreambleConfig,
    table: &RootTable,
    ctx: &WindowContext,
) -> Vec<WindowInstance> {
    let mean = pdp.mean_power();
    (0..p.num_windows())
        .map(|v| WindowInstance {
            snr_db: ctx.snr_db,
            channel: ctx.channel,
            num_rx: ctx.num_rx,
            input_kind: InputKind::Pdp,
            base_index: ctx.base_index,
            window_index: v,
            rapid: table.rapid(ctx.base_index, v),
            label: ctx.label,
            true_delay_samples: ctx.true_delay_samples,
            features: pdp.values[window_bins(p, v)].to_vec(),
            profile_mean: mean,
        })
        .collect()
}

/// Cuts all windows of a CDP into instances with interleaved re/im features.
pub fn extract_cdp_windows(
    cdp: &Cdp,
    p: &PreambleConfig,
    table: &RootTable,
    ctx: &WindowContext,
) -> Vec<WindowInstance> {
    let mean = cdp.mean_power();
    (0..p.num_windows())
        .map(|v| {
            let mut features = Vec::with_capacity(2 * p.n_cs as usize);
            for z in &cdp.values[window_bins(p, v)] {
                features.push(z.re);
                features.push(z.im);
            }
            WindowInstance {
                snr_db: ctx.snr_db,
                channel: ctx.channel,
                num_rx: ctx.num_rx,
                input_kind: InputKind::Cdp,
                base_index: ctx.base_index,
                window_index: v,
                rapid: table.rapid(ctx.base_index, v),
                label: ctx.label,
                true_delay_samples: ctx.true_delay_samples,
                features,
                profile_mean: mean,
            }
        })
        .collect()
}
