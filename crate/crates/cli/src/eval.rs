//! Detection and timing-advance measurement over a simulation grid.
//!
//! Every (channel, antennas, SNR) cell runs `trials` independent occasions,
//! each with one active user at a uniform random identity and admissible
//! delay. All receivers under test see the same realizations, so their
//! numbers are directly comparable. Per-trial randomness comes from a
//! dedicated substream keyed by cell and trial, which makes every cell
//! reproducible in isolation and immune to thread scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use prach_core::channel::{simulate_reception_with_rng, ChannelConfig, ChannelModel};
use prach_core::correlator::{
    compute_pdp, compute_profiles, extract_cdp_windows, extract_pdp_windows, root_spectrum,
    InputKind, WindowContext,
};
use prach_core::dataset::draw_admissible_delay;
use prach_core::detect::{
    calibrate_conventional, detect_conventional, detect_hybrid, ConventionalCal,
};
use prach_core::mlp::MlpModel;
use prach_core::preamble::{ComplexSeq, PreambleConfig, RootTable};
use prach_core::rng::{substream, STREAM_EVAL};
use prach_core::ta::{estimate_ta, make_ground_truth, ta_matches, TruthScheme};
use prach_core::{Error, Result};

/// Which detector decides window presence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiverKind {
    Conventional,
    Hybrid,
}

impl fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReceiverKind::Conventional => write!(f, "conventional"),
            ReceiverKind::Hybrid => write!(f, "hybrid"),
        }
    }
}

impl FromStr for ReceiverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conventional" => Ok(ReceiverKind::Conventional),
            "hybrid" => Ok(ReceiverKind::Hybrid),
            other => Err(Error::Config(format!(
                "unknown receiver '{}' (expected conventional or hybrid)",
                other
            ))),
        }
    }
}

/// The measurement grid and its shared parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub preamble: PreambleConfig,
    pub channels: Vec<ChannelModel>,
    pub num_rx_list: Vec<usize>,
    pub snr_list_db: Vec<f64>,
    pub receivers: Vec<ReceiverKind>,
    pub trials: usize,
    pub delay_spread_s: f64,
    /// Per-window false-alarm target for conventional calibration.
    pub target_fa: f64,
    /// Noise-only occasions per antenna count during calibration.
    pub cal_occasions: usize,
    pub seed: u64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            preamble: PreambleConfig::default(),
            channels: vec![ChannelModel::Awgn, ChannelModel::Tdlc300],
            num_rx_list: vec![1],
            snr_list_db: (-4..=0).map(|i| f64::from(i) * 5.0).collect(),
            receivers: vec![ReceiverKind::Conventional, ReceiverKind::Hybrid],
            trials: 1000,
            delay_spread_s: 300e-9,
            target_fa: 1e-3,
            cal_occasions: 20_000,
            seed: 0,
        }
    }
}

impl EvalSpec {
    pub fn validate(&self) -> Result<()> {
        self.preamble.validate()?;
        for (name, empty) in [
            ("channels", self.channels.is_empty()),
            ("num_rx_list", self.num_rx_list.is_empty()),
            ("snr_list_db", self.snr_list_db.is_empty()),
            ("receivers", self.receivers.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("{} must not be empty", name)));
            }
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.snr_list_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("snr_list_db must not contain NaN".into()));
        }
        if self.num_rx_list.iter().any(|&n| n == 0) {
            return Err(Error::Config("num_rx must be >= 1".into()));
        }
        Ok(())
    }
}

/// One measured grid cell for one receiver. Timing-advance accuracies are
/// conditional on detection and NaN when nothing was detected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub channel: ChannelModel,
    pub num_rx: usize,
    pub snr_db: f64,
    pub receiver: ReceiverKind,
    pub detector_input: InputKind,
    pub n_trials: usize,
    /// Fraction of trials whose own window was declared present.
    pub p_detect: f64,
    /// Fraction of other valid windows declared present, per window.
    pub p_false_alarm: f64,
    pub ta_acc_exact: f64,
    pub ta_acc_tol1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub rows: Vec<EvalRow>,
    pub calibrations: Vec<ConventionalCal>,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    detect: u64,
    ta_exact: u64,
    ta_tol1: u64,
    fa: u64,
    other_windows: u64,
}

impl Counts {
    fn add(&mut self, o: &Counts) {
        self.detect += o.detect;
        self.ta_exact += o.ta_exact;
        self.ta_tol1 += o.ta_tol1;
        self.fa += o.fa;
        self.other_windows += o.other_windows;
    }
}

/// Runs the whole grid. `model` is required when any receiver is hybrid;
/// the conventional receiver is calibrated here, once per antenna count.
pub fn run_eval(spec: &EvalSpec, model: Option<&MlpModel>) -> Result<EvalOutput> {
    spec.validate()?;
    let wants_hybrid = spec.receivers.contains(&ReceiverKind::Hybrid);
    let wants_conventional = spec.receivers.contains(&ReceiverKind::Conventional);
    if wants_hybrid && model.is_none() {
        return Err(Error::Config(
            "hybrid receiver requested but no model given".into(),
        ));
    }
    let p = spec.preamble;
    let table = RootTable::default_for(&p);
    let roots: Vec<_> = (0..table.num_bases())
        .map(|b| root_spectrum(&p.with_root(table.root(b)).with_v(0)))
        .collect::<Result<_>>()?;

    let mut calibrations: BTreeMap<usize, ConventionalCal> = BTreeMap::new();
    if wants_conventional {
        for &num_rx in &spec.num_rx_list {
            if !calibrations.contains_key(&num_rx) {
                let cal = calibrate_conventional(
                    &p,
                    num_rx,
                    spec.target_fa,
                    spec.cal_occasions,
                    spec.seed,
                )?;
                calibrations.insert(num_rx, cal);
            }
        }
    }

    let need_cdp = model.map_or(false, |m| m.input_kind == InputKind::Cdp) && wants_hybrid;
    let mut rows = Vec::new();
    let mut cell: u64 = 0;
    for &channel in &spec.channels {
        for &num_rx in &spec.num_rx_list {
            for &snr_db in &spec.snr_list_db {
                let cal = calibrations.get(&num_rx);
                let (conv, hyb) = (0..spec.trials)
                    .into_par_iter()
                    .map(|t| {
                        run_trial(
                            spec, &p, &table, &roots, model, cal, channel, num_rx, snr_db,
                            need_cdp, cell, t as u64,
                        )
                    })
                    .try_reduce(
                        || (Counts::default(), Counts::default()),
                        |mut a, b| {
                            a.0.add(&b.0);
                            a.1.add(&b.1);
                            Ok(a)
                        },
                    )?;
                for &receiver in &spec.receivers {
                    let c = match receiver {
                        ReceiverKind::Conventional => &conv,
                        ReceiverKind::Hybrid => &hyb,
                    };
                    let detector_input = match receiver {
                        ReceiverKind::Conventional => InputKind::Pdp,
                        ReceiverKind::Hybrid => model.unwrap().input_kind,
                    };
                    let n = spec.trials as f64;
                    let d = c.detect as f64;
                    rows.push(EvalRow {
                        channel,
                        num_rx,
                        snr_db,
                        receiver,
                        detector_input,
                        n_trials: spec.trials,
                        p_detect: d / n,
                        p_false_alarm: c.fa as f64 / c.other_windows.max(1) as f64,
                        ta_acc_exact: c.ta_exact as f64 / d,
                        ta_acc_tol1: c.ta_tol1 as f64 / d,
                    });
                }
                cell += 1;
            }
        }
    }
    Ok(EvalOutput {
        rows,
        calibrations: calibrations.into_values().collect(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    spec: &EvalSpec,
    p: &PreambleConfig,
    table: &RootTable,
    roots: &[ComplexSeq],
    model: Option<&MlpModel>,
    cal: Option<&ConventionalCal>,
    channel: ChannelModel,
    num_rx: usize,
    snr_db: f64,
    need_cdp: bool,
    cell: u64,
    trial: u64,
) -> Result<(Counts, Counts)> {
    let mut rng = substream(spec.seed, STREAM_EVAL | (cell << 40) | trial);
    let rapid = rng.gen_range(0..table.num_rapids());
    let (b_own, v_own) = table.base_and_v(rapid)?;
    let chan_template = ChannelConfig {
        model: channel,
        num_rx,
        delay_spread_s: spec.delay_spread_s,
        snr_db,
        delay_samples: 0.0,
        seed: 0,
    };
    let delay = draw_admissible_delay(p, &chan_template, &mut rng)?;
    let chan = ChannelConfig {
        delay_samples: delay,
        ..chan_template
    };
    let tx = p.with_root(table.root(b_own)).with_v(v_own);
    let grid = simulate_reception_with_rng(&tx, &chan, true, &mut rng)?;
    let truth_exact = make_ground_truth(delay, &chan, p, TruthScheme::Exact)?;
    let truth_tol1 = make_ground_truth(delay, &chan, p, TruthScheme::Tol1)?;

    let ctx = WindowContext {
        snr_db,
        channel,
        num_rx,
        base_index: 0,
        label: None,
        true_delay_samples: None,
    };
    let mut conv = Counts::default();
    let mut hyb = Counts::default();
    for b in 0..table.num_bases() {
        let (cdp, pdp) = if need_cdp {
            let (c, d) = compute_profiles(&grid, &roots[b])?;
            (Some(c), d)
        } else {
            (None, compute_pdp(&grid, &roots[b])?)
        };
        let ctx = WindowContext { base_index: b, ..ctx };
        let pdp_windows = extract_pdp_windows(&pdp, p, table, &ctx);

        if let Some(cal) = cal {
            let det = detect_conventional(&pdp, p, cal)?;
            for v in 0..table.valid_windows(b) {
                let fired = det.decisions[v as usize].present;
                record(
                    &mut conv, b, v, b_own, v_own, fired,
                    || estimate_ta(&pdp_windows[v as usize], p),
                    &truth_exact, &truth_tol1,
                )?;
            }
        }
        if let Some(m) = model {
            let feature_windows = match m.input_kind {
                InputKind::Pdp => pdp_windows.clone(),
                InputKind::Cdp => extract_cdp_windows(cdp.as_ref().unwrap(), p, table, &ctx),
            };
            for v in 0..table.valid_windows(b) {
                let fired = detect_hybrid(&feature_windows[v as usize], m)?.present;
                record(
                    &mut hyb, b, v, b_own, v_own, fired,
                    || estimate_ta(&pdp_windows[v as usize], p),
                    &truth_exact, &truth_tol1,
                )?;
            }
        }
    }
    Ok((conv, hyb))
}

#[allow(clippy::too_many_arguments)]
fn record(
    c: &mut Counts,
    b: usize,
    v: u32,
    b_own: usize,
    v_own: u32,
    fired: bool,
    ta: impl FnOnce() -> Result<prach_core::ta::TaEstimate>,
    truth_exact: &prach_core::ta::TaGroundTruth,
    truth_tol1: &prach_core::ta::TaGroundTruth,
) -> Result<()> {
    if b == b_own && v == v_own {
        if fired {
            c.detect += 1;
            let est = ta()?;
            if ta_matches(&est, truth_exact) {
                c.ta_exact += 1;
            }
            if ta_matches(&est, truth_tol1) {
                c.ta_tol1 += 1;
            }
        }
    } else {
        c.other_windows += 1;
        if fired {
            c.fa += 1;
        }
    }
    Ok(())
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{}", x)
    }
}

/// Writes rows as CSV with `#` comment headers carrying the resolved
/// configuration, calibration results and model description.
pub fn write_eval_csv(
    out: &mut impl Write,
    spec: &EvalSpec,
    output: &EvalOutput,
    model_desc: Option<&str>,
) -> Result<()> {
    writeln!(out, "# eval v1")?;
    writeln!(out, "# library {}", env!("CARGO_PKG_VERSION"))?;
    let p = spec.preamble;
    writeln!(
        out,
        "# preamble l_ra={} n_cs={} fft_size={} scs_hz={}",
        p.l_ra, p.n_cs, p.fft_size, p.scs_hz
    )?;
    writeln!(
        out,
        "# trials={} target_fa={} cal_occasions={} delay_spread_s={} seed={}",
        spec.trials, spec.target_fa, spec.cal_occasions, spec.delay_spread_s, spec.seed
    )?;
    for cal in &output.calibrations {
        writeln!(out, "# alpha num_rx={}: {}", cal.num_rx, cal.alpha)?;
    }
    if let Some(desc) = model_desc {
        writeln!(out, "# model {}", desc)?;
    }
    writeln!(
        out,
        "channel,num_rx,snr_db,receiver,detector_input,n_trials,p_detect,p_false_alarm,ta_acc_exact,ta_acc_tol1"
    )?;
    for r in &output.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.channel,
            r.num_rx,
            r.snr_db,
            r.receiver,
            r.detector_input,
            r.n_trials,
            fmt_f64(r.p_detect),
            fmt_f64(r.p_false_alarm),
            fmt_f64(r.ta_acc_exact),
            fmt_f64(r.ta_acc_tol1)
        )?;
    }
    Ok(())
}

/// Emits a gnuplot script that plots detection probability against SNR,
/// one curve per channel, antenna count and receiver, reading the CSV
/// written by `write_eval_csv`.
pub fn write_gnuplot_script(out: &mut impl Write, spec: &EvalSpec, csv_path: &Path) -> Result<()> {
    writeln!(out, "set datafile separator comma")?;
    writeln!(out, "set datafile missing 'nan'")?;
    writeln!(out, "set datafile commentschars '#'")?;
    writeln!(out, "set xlabel 'SNR per resource element (dB)'")?;
    writeln!(out, "set ylabel 'detection probability'")?;
    writeln!(out, "set yrange [0:1.02]")?;
    writeln!(out, "set key right bottom")?;
    writeln!(out, "set grid")?;
    let path = csv_path.display();
    let mut plots = Vec::new();
    for &ch in &spec.channels {
        for &rx in &spec.num_rx_list {
            for &rec in &spec.receivers {
                plots.push(format!(
                    "'{}' using (strcol(1) eq '{}' && column(2)=={} && strcol(4) eq '{}' ? column(3) : NaN):(column(7)) \
                     with linespoints title '{} {}rx {}'",
                    path, ch, rx, rec, ch, rx, rec
                ));
            }
        }
    }
    writeln!(out, "plot \\\n  {}", plots.join(", \\\n  "))?;
    Ok(())
}
