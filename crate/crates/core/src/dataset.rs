//! Labeled window datasets and on-disk formats.
//!
//! A dataset is a flat list of `WindowInstance` records, stratified exactly
//! per SNR point: the first `round(present_ratio * n)` instances of each
//! SNR are present, the rest absent. Absent instances are an even mix of
//! two provenances, pure noise and non-user windows cut from occasions
//! that do contain a preamble. The second kind matters: fractional delays
//! leak sidelobe energy into neighbouring windows, and a classifier that
//! never saw such windows learns to fire on leakage.
//!
//! Per-instance randomness comes from one dedicated substream, so any
//! instance can be regenerated in isolation and generation order (or
//! thread count) cannot change the data.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{simulate_reception_with_rng, ChannelConfig, ChannelModel, RxGrid};
use crate::correlator::{
    compute_cdp, compute_pdp, extract_cdp_windows, extract_pdp_windows, root_spectrum, InputKind,
    Presence, WindowContext, WindowInstance,
};
use crate::error::{Error, Result};
use crate::preamble::{PreambleConfig, RootTable};
use crate::rng::{substream, STREAM_DATASET};
use crate::ta::{make_ground_truth, TruthScheme};

/// Everything that determines a dataset's content. Two equal specs produce
/// byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub preamble: PreambleConfig,
    pub snr_list_db: Vec<f64>,
    pub instances_per_snr: usize,
    pub channel: ChannelModel,
    pub num_rx: usize,
    pub delay_spread_s: f64,
    pub input_kind: InputKind,
    pub present_ratio: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            preamble: PreambleConfig::default(),
            snr_list_db: (-4..=4).map(|i| f64::from(i) * 5.0).collect(),
            instances_per_snr: 10_000,
            channel: ChannelModel::Awgn,
            num_rx: 1,
            delay_spread_s: 300e-9,
            input_kind: InputKind::Pdp,
            present_ratio: 0.5,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        self.preamble.validate()?;
        if self.snr_list_db.is_empty() {
            return Err(Error::Config("snr_list_db must not be empty".into()));
        }
        if self.snr_list_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("snr_list_db must not contain NaN".into()));
        }
        if self.instances_per_snr == 0 {
            return Err(Error::Config("instances_per_snr must be >= 1".into()));
        }
        if self.num_rx == 0 {
            return Err(Error::Config("num_rx must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.present_ratio) {
            return Err(Error::Config(format!(
                "present_ratio must be in [0, 1], got {}",
                self.present_ratio
            )));
        }
        if !(self.delay_spread_s >= 0.0) {
            return Err(Error::Config(format!(
                "delay_spread_s must be >= 0, got {}",
                self.delay_spread_s
            )));
        }
        Ok(())
    }

    pub fn num_present_per_snr(&self) -> usize {
        (self.present_ratio * self.instances_per_snr as f64).round() as usize
    }

    pub fn num_instances(&self) -> usize {
        self.snr_list_db.len() * self.instances_per_snr
    }

    fn channel_config(&self, snr_db: f64, delay_samples: f64) -> ChannelConfig {
        ChannelConfig {
            model: self.channel,
            num_rx: self.num_rx,
            delay_spread_s: self.delay_spread_s,
            snr_db,
            delay_samples,
            seed: 0,
        }
    }
}

/// Sidecar written next to every dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub library_version: String,
    pub spec: DatasetSpec,
    pub num_instances: usize,
    pub num_present: usize,
}

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Uniform delay draws cover [0, 12.5) bins so that both halves of every
/// bin's rounding region are populated; draws whose ground truth would
/// round outside the window range (possible once the mean channel delay is
/// added) are redrawn from the same stream.
const MAX_DELAY_BINS: f64 = 12.5;

/// Among absent instances, the share cut from occupied occasions.
const DECOY_RATIO: f64 = 0.5;

/// Draws a uniform propagation delay whose ground truth stays inside the
/// window range under the given channel, retrying from the same stream
/// when the mean channel delay pushes it out.
pub fn draw_admissible_delay(
    p: &PreambleConfig,
    c: &ChannelConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let spb = p.samples_per_bin();
    for _ in 0..1000 {
        let d = rng.gen_range(0.0..MAX_DELAY_BINS * spb);
        if make_ground_truth(d, c, p, TruthScheme::Exact).is_ok() {
            return Ok(d);
        }
    }
    Err(Error::Config(
        "mean channel delay leaves no admissible propagation delays".into(),
    ))
}

fn draw_delay(spec: &DatasetSpec, rng: &mut impl Rng) -> Result<f64> {
    draw_admissible_delay(&spec.preamble, &spec.channel_config(0.0, 0.0), rng)
}

fn cut_window(
    spec: &DatasetSpec,
    grid: &RxGrid,
    base_index: usize,
    window: u32,
    table: &RootTable,
    ctx: &WindowContext,
) -> Result<WindowInstance> {
    let root_cfg = spec.preamble.with_root(table.root(base_index)).with_v(0);
    let root = root_spectrum(&root_cfg)?;
    let inst = match spec.input_kind {
        InputKind::Pdp => {
            let pdp = compute_pdp(grid, &root)?;
            extract_pdp_windows(&pdp, &spec.preamble, table, ctx)
                .swap_remove(window as usize)
        }
        InputKind::Cdp => {
            let cdp = compute_cdp(grid, &root)?;
            extract_cdp_windows(&cdp, &spec.preamble, table, ctx)
                .swap_remove(window as usize)
        }
    };
    Ok(inst)
}

/// Builds instance `global_index` of the dataset from its own substream.
/// Configuration draws (identity, delay, decoy window) precede channel and
/// noise draws, so the recipe is frozen by construction.
fn build_instance(spec: &DatasetSpec, table: &RootTable, global_index: usize) -> Result<WindowInstance> {
    let snr_db = spec.snr_list_db[global_index / spec.instances_per_snr];
    let j = global_index % spec.instances_per_snr;
    let present = j < spec.num_present_per_snr();
    let mut rng = substream(spec.seed, STREAM_DATASET | global_index as u64);
    let windows = spec.preamble.num_windows();

    if present {
        let rapid = rng.gen_range(0..table.num_rapids());
        let (b, v) = table.base_and_v(rapid)?;
        let delay = draw_delay(spec, &mut rng)?;
        let chan = spec.channel_config(snr_db, delay);
        let tx = spec.preamble.with_root(table.root(b)).with_v(v);
        let grid = simulate_reception_with_rng(&tx, &chan, true, &mut rng)?;
        let ctx = WindowContext {
            snr_db,
            channel: spec.channel,
            num_rx: spec.num_rx,
            base_index: b,
            label: Some(Presence::Present),
            true_delay_samples: Some(delay),
        };
        return cut_window(spec, &grid, b, v, table, &ctx);
    }

    let decoy = rng.gen_bool(DECOY_RATIO);
    if decoy {
        let rapid = rng.gen_range(0..table.num_rapids());
        let (b, v) = table.base_and_v(rapid)?;
        let delay = draw_delay(spec, &mut rng)?;
        // any non-user window of the occupied occasion
        let mut w = rng.gen_range(0..windows - 1);
        if w >= v {
            w += 1;
        }
        let chan = spec.channel_config(snr_db, delay);
        let tx = spec.preamble.with_root(table.root(b)).with_v(v);
        let grid = simulate_reception_with_rng(&tx, &chan, true, &mut rng)?;
        let ctx = WindowContext {
            snr_db,
            channel: spec.channel,
            num_rx: spec.num_rx,
            base_index: b,
            label: Some(Presence::Absent),
            true_delay_samples: None,
        };
        cut_window(spec, &grid, b, w, table, &ctx)
    } else {
        let b = rng.gen_range(0..table.num_bases());
        let w = rng.gen_range(0..windows);
        let chan = spec.channel_config(snr_db, 0.0);
        let tx = spec.preamble.with_root(table.root(b)).with_v(0);
        let grid = simulate_reception_with_rng(&tx, &chan, false, &mut rng)?;
        let ctx = WindowContext {
            snr_db,
            channel: spec.channel,
            num_rx: spec.num_rx,
            base_index: b,
            label: Some(Presence::Absent),
            true_delay_samples: None,
        };
        cut_window(spec, &grid, b, w, table, &ctx)
    }
}

/// Generates the full dataset in memory, in global-index order.
pub fn generate_instances(spec: &DatasetSpec) -> Result<Vec<WindowInstance>> {
    spec.validate()?;
    let table = RootTable::default_for(&spec.preamble);
    (0..spec.num_instances())
        .into_par_iter()
        .map(|g| build_instance(spec, &table, g))
        .collect()
}

fn is_gz(path: &Path) -> bool {
    path.extension().map_or(false, |e| e == "gz")
}

/// The sidecar path for a dataset file.
pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

fn write_lines<W: Write>(out: &mut W, instances: &[WindowInstance]) -> Result<()> {
    for inst in instances {
        let line = serde_json::to_string(inst)
            .map_err(|e| Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e)))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Generates and writes a dataset as JSON lines (gzip when the path ends
/// in .gz), plus a `<path>.meta.json` sidecar describing the spec.
pub fn generate(spec: &DatasetSpec, path: &Path) -> Result<DatasetMeta> {
    let instances = generate_instances(spec)?;
    write_instances(&instances, path)?;
    let meta = DatasetMeta {
        format_version: DATASET_FORMAT_VERSION,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        spec: spec.clone(),
        num_instances: instances.len(),
        num_present: instances
            .iter()
            .filter(|i| i.label == Some(Presence::Present))
            .count(),
    };
    let meta_json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    std::fs::write(meta_path(path), meta_json)?;
    Ok(meta)
}

/// Writes instances as JSON lines; gzip is chosen by the .gz extension.
pub fn write_instances(instances: &[WindowInstance], path: &Path) -> Result<()> {
    let file = File::create(path)?;
    if is_gz(path) {
        let mut enc = GzEncoder::new(file, Compression::default());
        write_lines(&mut enc, instances)?;
        enc.finish()?;
    } else {
        let mut buf = BufWriter::new(file);
        write_lines(&mut buf, instances)?;
        buf.flush()?;
    }
    Ok(())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads a dataset written by `write_instances`. Lines are numbered from 1
/// in parse errors; blank lines are ignored.
pub fn read_dataset(path: &Path) -> Result<Vec<WindowInstance>> {
    let file = File::open(path)?;
    let reader: Box<dyn BufRead> = if is_gz(path) {
        Box::new(BufReader::new(GzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: WindowInstance = serde_json::from_str(&line)
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        out.push(inst);
    }
    Ok(out)
}

/// Reads the sidecar written by `generate`.
pub fn read_meta(path: &Path) -> Result<DatasetMeta> {
    let mp = meta_path(path);
    let text = std::fs::read_to_string(&mp)?;
    let meta: DatasetMeta =
        serde_json::from_str(&text).map_err(|e| parse_err(&mp, 1, e.to_string()))?;
    if meta.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Parse {
            path: mp.display().to_string(),
            line: 1,
            message: format!(
                "dataset format version {} not supported (expected {})",
                meta.format_version, DATASET_FORMAT_VERSION
            ),
        });
    }
    Ok(meta)
}

/// Splits instances into two parts with `fraction` of every (SNR, label)
/// stratum going to the first. Order within strata is shuffled
/// deterministically from the seed; output keeps the original global order
/// inside each part.
pub fn split(
    instances: &[WindowInstance],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<WindowInstance>, Vec<WindowInstance>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!(
            "split fraction must be in (0, 1), got {}",
            fraction
        )));
    }
    use rand::seq::SliceRandom;
    let mut strata: std::collections::BTreeMap<(u64, u8), Vec<usize>> = Default::default();
    for (i, inst) in instances.iter().enumerate() {
        let label = match inst.label {
            Some(Presence::Present) => 1,
            Some(Presence::Absent) => 0,
            None => return Err(Error::Argument(format!("instance {} is unlabeled", i))),
        };
        strata
            .entry((inst.snr_db.to_bits(), label))
            .or_default()
            .push(i);
    }
    // disjoint from per-instance streams, which use the low bits
    let mut rng = substream(seed, STREAM_DATASET | (1 << 48));
    let mut first_idx = Vec::new();
    let mut second_idx = Vec::new();
    for idx in strata.values() {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        let n_first = (fraction * idx.len() as f64).round() as usize;
        first_idx.extend_from_slice(&idx[..n_first]);
        second_idx.extend_from_slice(&idx[n_first..]);
    }
    first_idx.sort_unstable();
    second_idx.sort_unstable();
    let first = first_idx.iter().map(|&i| instances[i].clone()).collect();
    let second = second_idx.iter().map(|&i| instances[i].clone()).collect();
    Ok((first, second))
}

/// Writes a received grid as text: `# key value` headers for the
/// numerology, then one line per antenna with the subcarrier samples as
/// comma-separated floats, interleaved re,im. Floats print in shortest
/// round-trip form, so import reproduces the grid exactly.
pub fn export_capture(grid: &RxGrid, path: &Path) -> Result<()> {
    let p = grid.preamble;
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# capture v1")?;
    writeln!(out, "# l_ra {}", p.l_ra)?;
    writeln!(out, "# n_cs {}", p.n_cs)?;
    writeln!(out, "# fft_size {}", p.fft_size)?;
    writeln!(out, "# scs_hz {}", p.scs_hz)?;
    writeln!(out, "# num_rx {}", grid.num_rx())?;
    writeln!(out, "# one line per antenna: re,im interleaved per subcarrier")?;
    for ant in &grid.antennas {
        let mut line = String::with_capacity(ant.len() * 40);
        for (k, z) in ant.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&format!("{},{}", z.re, z.im));
        }
        writeln!(out, "{}", line)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a capture written by `export_capture`. The grid carries the file's
/// numerology; transmit identity and channel provenance are unknown, so
/// those fields hold defaults.
pub fn import_capture(path: &Path) -> Result<RxGrid> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut headers: std::collections::BTreeMap<String, String> = Default::default();
    let mut antennas: Vec<Vec<crate::C64>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let mut parts = rest.split_whitespace();
            if let (Some(k), Some(v)) = (parts.next(), parts.next()) {
                headers.insert(k.to_string(), v.to_string());
            }
            continue;
        }
        let values: Vec<f64> = trimmed
            .split(',')
            .enumerate()
            .map(|(j, tok)| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(path, n, format!("bad float in field {}", j + 1)))
            })
            .collect::<Result<_>>()?;
        if values.len() % 2 != 0 {
            return Err(parse_err(path, n, "odd number of fields, expected re,im pairs"));
        }
        antennas.push(
            values
                .chunks_exact(2)
                .map(|c| crate::C64::new(c[0], c[1]))
                .collect(),
        );
    }
    let get_u32 = |key: &str| -> Result<u32> {
        headers
            .get(key)
            .ok_or_else(|| parse_err(path, 1, format!("missing header '# {} ...'", key)))?
            .parse::<u32>()
            .map_err(|_| parse_err(path, 1, format!("header {} is not an integer", key)))
    };
    let l_ra = get_u32("l_ra")?;
    let n_cs = get_u32("n_cs")?;
    let fft_size = get_u32("fft_size")?;
    let num_rx = get_u32("num_rx")? as usize;
    let scs_hz = headers
        .get("scs_hz")
        .ok_or_else(|| parse_err(path, 1, "missing header '# scs_hz ...'"))?
        .parse::<f64>()
        .map_err(|_| parse_err(path, 1, "header scs_hz is not a number"))?;
    let preamble = PreambleConfig {
        u: 1,
        v: 0,
        l_ra,
        n_cs,
        fft_size,
        scs_hz,
    };
    preamble.validate()?;
    if antennas.len() != num_rx {
        return Err(parse_err(
            path,
            1,
            format!("header says {} antennas, file has {}", num_rx, antennas.len()),
        ));
    }
    for (a, ant) in antennas.iter().enumerate() {
        if ant.len() != l_ra as usize {
            return Err(parse_err(
                path,
                1,
                format!(
                    "antenna {} has {} subcarriers, expected {}",
                    a,
                    ant.len(),
                    l_ra
                ),
            ));
        }
    }
    Ok(RxGrid {
        antennas,
        preamble,
        channel: ChannelConfig {
            num_rx,
            ..Default::default()
        },
        user_present: false,
    })
}
