//! Zadoff-Chu preamble construction and the direct DFT it is analyzed with.
//!
//! The base sequence is x_u(n) = exp(-j pi u n (n+1) / L_RA) for a prime
//! length L_RA. Preamble v applies the cyclic shift C_v = v * N_CS. All
//! spectra here use the unnormalized forward DFT with kernel
//! exp(-j 2 pi n k / L); the inverse carries the 1/L factor. Under that
//! convention a forward shift x((n+C) mod L) multiplies the spectrum by
//! exp(+j 2 pi k C / L).
//!
//! Transforms are direct O(L^2) sums with a precomputed twiddle table. At
//! L = 139 that is both fast enough for every loop in this crate and exact
//! enough to serve as the reference (round-trip error stays below 1e-13).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Sequence lengths accepted for the preamble (short and long formats).
pub const SUPPORTED_LENGTHS: [u32; 2] = [139, 839];

/// Which domain a buffer of samples lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Time,
    Freq,
}

/// A length-L_RA complex sequence tagged with its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeq {
    pub values: Vec<C64>,
    pub domain: Domain,
}

/// Physical and numerological parameters of one preamble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreambleConfig {
    /// Zadoff-Chu root index, coprime with `l_ra`.
    pub u: u32,
    /// Preamble (cyclic shift) index within the root.
    pub v: u32,
    /// Sequence length, prime.
    pub l_ra: u32,
    /// Cyclic shift stride; also the correlation window width in bins.
    pub n_cs: u32,
    /// IFFT size of the surrounding OFDM system.
    pub fft_size: u32,
    /// Subcarrier spacing in Hz.
    pub scs_hz: f64,
}

impl Default for PreambleConfig {
    fn default() -> Self {
        PreambleConfig {
            u: 1,
            v: 0,
            l_ra: 139,
            n_cs: 13,
            fft_size: 4096,
            scs_hz: 30_000.0,
        }
    }
}

fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl PreambleConfig {
    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_LENGTHS.contains(&self.l_ra) || !is_prime(self.l_ra) {
            return Err(Error::Config(format!(
                "l_ra must be one of {:?} (prime), got {}",
                SUPPORTED_LENGTHS, self.l_ra
            )));
        }
        if self.u == 0 || self.u >= self.l_ra || gcd(self.u, self.l_ra) != 1 {
            return Err(Error::Config(format!(
                "root u must satisfy 0 < u < {} and gcd(u, l_ra) = 1, got {}",
                self.l_ra, self.u
            )));
        }
        if self.n_cs == 0 || self.n_cs > self.l_ra {
            return Err(Error::Config(format!("n_cs out of range: {}", self.n_cs)));
        }
        if u64::from(self.v) * u64::from(self.n_cs) >= u64::from(self.l_ra) {
            return Err(Error::Config(format!(
                "cyclic shift v*n_cs = {} must be < l_ra = {}",
                self.v * self.n_cs,
                self.l_ra
            )));
        }
        if self.fft_size < self.l_ra {
            return Err(Error::Config(format!(
                "fft_size {} smaller than l_ra {}",
                self.fft_size, self.l_ra
            )));
        }
        if !(self.scs_hz > 0.0) {
            return Err(Error::Config(format!("scs_hz must be > 0, got {}", self.scs_hz)));
        }
        Ok(())
    }

    /// Cyclic shift C_v in sequence samples.
    pub fn cyclic_shift(&self) -> u32 {
        self.v * self.n_cs
    }

    /// Number of complete correlation windows (preambles per root).
    pub fn num_windows(&self) -> u32 {
        self.l_ra / self.n_cs
    }

    /// Width of one correlation bin in time samples at the system rate.
    pub fn samples_per_bin(&self) -> f64 {
        f64::from(self.fft_size) / f64::from(self.l_ra)
    }

    /// System sample rate in Hz.
    pub fn sample_rate_hz(&self) -> f64 {
        f64::from(self.fft_size) * self.scs_hz
    }

    pub fn with_v(&self, v: u32) -> Self {
        PreambleConfig { v, ..*self }
    }

    pub fn with_root(&self, u: u32) -> Self {
        PreambleConfig { u, ..*self }
    }
}

/// x_u(n) = exp(-j pi u n (n+1) / L_RA), n = 0..L_RA-1. Unit modulus by
/// construction; the phase argument is reduced mod 2 L_RA before the trig
/// calls so precision does not degrade with n.
pub fn generate_base_sequence(cfg: &PreambleConfig) -> Result<ComplexSeq> {
    cfg.validate()?;
    let l = u64::from(cfg.l_ra);
    let u = u64::from(cfg.u);
    let values = (0..l)
        .map(|n| {
            // phase = -pi * (u n (n+1) mod 2L) / L, exact in u64
            let m = (u * n % (2 * l)) * ((n + 1) % (2 * l)) % (2 * l);
            let phase = -std::f64::consts::PI * m as f64 / l as f64;
            Complex64::from_polar(1.0, phase)
        })
        .collect();
    Ok(ComplexSeq {
        values,
        domain: Domain::Time,
    })
}

/// x_{u,v}(n) = x_u((n + C_v) mod L_RA).
pub fn apply_cyclic_shift(x: &ComplexSeq, cfg: &PreambleConfig) -> Result<ComplexSeq> {
    if x.domain != Domain::Time {
        return Err(Error::Argument("cyclic shift operates on time-domain sequences".into()));
    }
    let l = x.values.len();
    if l != cfg.l_ra as usize {
        return Err(Error::Argument(format!(
            "sequence length {} does not match l_ra {}",
            l, cfg.l_ra
        )));
    }
    let c = cfg.cyclic_shift() as usize;
    let values = (0..l).map(|n| x.values[(n + c) % l]).collect();
    Ok(ComplexSeq {
        values,
        domain: Domain::Time,
    })
}

/// Twiddle table for length `l`: w[m] = exp(sign * j 2 pi m / l).
fn twiddles(l: usize, sign: f64) -> Vec<C64> {
    (0..l)
        .map(|m| Complex64::from_polar(1.0, sign * 2.0 * std::f64::consts::PI * m as f64 / l as f64))
        .collect()
}

/// Direct forward DFT, X(k) = sum_n x(n) exp(-j 2 pi n k / L). The index
/// n*k is reduced mod L exactly in integers, so the kernel is periodic to
/// the last bit.
pub fn dft_direct(x: &[C64]) -> Vec<C64> {
    let l = x.len();
    let w = twiddles(l, -1.0);
    (0..l)
        .map(|k| (0..l).map(|n| x[n] * w[n * k % l]).sum())
        .collect()
}

/// Direct inverse DFT, x(n) = (1/L) sum_k X(k) exp(+j 2 pi n k / L).
pub fn idft_direct(xf: &[C64]) -> Vec<C64> {
    let l = xf.len();
    let w = twiddles(l, 1.0);
    let scale = 1.0 / l as f64;
    (0..l)
        .map(|n| (0..l).map(|k| xf[k] * w[n * k % l]).sum::<C64>() * scale)
        .collect()
}

/// Forward DFT of a tagged sequence.
pub fn dft(x: &ComplexSeq) -> Result<ComplexSeq> {
    if x.domain != Domain::Time {
        return Err(Error::Argument("dft expects a time-domain sequence".into()));
    }
    Ok(ComplexSeq {
        values: dft_direct(&x.values),
        domain: Domain::Freq,
    })
}

/// Inverse DFT of a tagged sequence.
pub fn idft(xf: &ComplexSeq) -> Result<ComplexSeq> {
    if xf.domain != Domain::Freq {
        return Err(Error::Argument("idft expects a frequency-domain sequence".into()));
    }
    Ok(ComplexSeq {
        values: idft_direct(&xf.values),
        domain: Domain::Time,
    })
}

/// Spectrum of the base sequence rotated per the shift theorem:
/// X_{u,v}(k) = X_u(k) * exp(+j 2 pi k C_v / L_RA).
pub fn rotate_spectrum(base_freq: &ComplexSeq, cfg: &PreambleConfig) -> Result<ComplexSeq> {
    if base_freq.domain != Domain::Freq {
        return Err(Error::Argument("rotate_spectrum expects a spectrum".into()));
    }
    let l = base_freq.values.len();
    if l != cfg.l_ra as usize {
        return Err(Error::Argument(format!(
            "spectrum length {} does not match l_ra {}",
            l, cfg.l_ra
        )));
    }
    let c = cfg.cyclic_shift() as usize;
    let values = base_freq
        .values
        .iter()
        .enumerate()
        .map(|(k, xk)| {
            let m = k * c % l;
            xk * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * m as f64 / l as f64)
        })
        .collect();
    Ok(ComplexSeq {
        values,
        domain: Domain::Freq,
    })
}

/// Frequency-domain preamble y_{u,v}(k) = DFT[x_u((n + C_v) mod L)](k).
pub fn preamble_freq(cfg: &PreambleConfig) -> Result<ComplexSeq> {
    let base = generate_base_sequence(cfg)?;
    let shifted = apply_cyclic_shift(&base, cfg)?;
    dft(&shifted)
}

/// Ordered table of root indices in use. Preamble identities (RAPIDs) are
/// assigned as `num_windows * base_index + v`, valid while below
/// `MAX_RAPIDS`; the last root only contributes its leading windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootTable {
    roots: Vec<u32>,
    rapids_per_base: u32,
}

/// Total number of preamble identities an occasion can signal.
pub const MAX_RAPIDS: u32 = 64;

impl RootTable {
    pub fn new(roots: Vec<u32>, template: &PreambleConfig) -> Result<Self> {
        if roots.is_empty() {
            return Err(Error::Config("root table must not be empty".into()));
        }
        for &u in &roots {
            template.with_root(u).validate()?;
        }
        let mut sorted = roots.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != roots.len() {
            return Err(Error::Config("root table contains duplicate roots".into()));
        }
        Ok(RootTable {
            roots,
            rapids_per_base: template.num_windows(),
        })
    }

    /// Default table: roots 1..=7, enough for 64 RAPIDs at 10 windows per root.
    pub fn default_for(template: &PreambleConfig) -> Self {
        let per_base = template.num_windows().max(1);
        let needed = (MAX_RAPIDS + per_base - 1) / per_base;
        RootTable {
            roots: (1..=needed).collect(),
            rapids_per_base: per_base,
        }
    }

    pub fn num_bases(&self) -> usize {
        self.roots.len()
    }

    pub fn root(&self, base_index: usize) -> u32 {
        self.roots[base_index]
    }

    /// Number of RAPIDs the table actually maps.
    pub fn num_rapids(&self) -> u32 {
        (self.roots.len() as u32).saturating_mul(self.rapids_per_base).min(MAX_RAPIDS)
    }

    /// Number of leading windows of this base that carry a RAPID.
    pub fn valid_windows(&self, base_index: usize) -> u32 {
        let start = base_index as u32 * self.rapids_per_base;
        MAX_RAPIDS.saturating_sub(start).min(self.rapids_per_base)
    }

    /// RAPID for (base, v), or None when the slot is beyond MAX_RAPIDS.
    pub fn rapid(&self, base_index: usize, v: u32) -> Option<u32> {
        let r = base_index as u32 * self.rapids_per_base + v;
        (v < self.rapids_per_base && r < MAX_RAPIDS).then_some(r)
    }

    /// Inverse of `rapid`.
    pub fn base_and_v(&self, rapid: u32) -> Result<(usize, u32)> {
        if rapid >= MAX_RAPIDS {
            return Err(Error::Argument(format!("rapid {} out of range", rapid)));
        }
        let base = (rapid / self.rapids_per_base) as usize;
        if base >= self.roots.len() {
            return Err(Error::Argument(format!(
                "rapid {} needs base index {} but table has {} roots",
                rapid,
                base,
                self.roots.len()
            )));
        }
        Ok((base, rapid % self.rapids_per_base))
    }
}
