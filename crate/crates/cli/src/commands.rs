//! Subcommand implementations. Every option can also come from the config
//! file under its long flag name; explicit flags win.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;

use prach_core::channel::{simulate_reception, ChannelConfig, ChannelModel};
use prach_core::correlator::Presence;
use prach_core::dataset::{
    export_capture, generate, import_capture, read_dataset, DatasetSpec,
};
use prach_core::detect::run_receiver;
use prach_core::explain::{explain_report, mean_baseline, MAX_EXACT_FEATURES};
use prach_core::mlp::{count_flops, load_model, save_model, train, Normalization, TrainConfig};
use prach_core::preamble::{PreambleConfig, RootTable};
use prach_core::ta::make_ground_truth;
use prach_core::{Error, Result};

use crate::config::{
    parse_f64_list, parse_list, parse_usize_list, resolve, resolve_required, resolve_seed,
    Overrides,
};
use crate::eval::{run_eval, write_eval_csv, write_gnuplot_script, EvalSpec, ReceiverKind};

fn layer_shape(model: &prach_core::mlp::MlpModel) -> String {
    let mut dims = vec![model.input_dim()];
    dims.extend(model.layers.iter().map(|l| l.out_dim));
    dims.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

#[derive(Args, Debug, Default)]
pub struct GenerateArgs {
    /// Dataset path; .gz suffix enables gzip (a .meta.json sidecar is
    /// written next to it)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Comma-separated SNR points in dB
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<String>,
    /// Instances per SNR point
    #[arg(long)]
    pub instances_per_snr: Option<usize>,
    /// Channel model: awgn or tdlc300
    #[arg(long)]
    pub channel: Option<String>,
    /// Receive antennas
    #[arg(long)]
    pub num_rx: Option<usize>,
    /// RMS delay spread in seconds (tdlc300 only)
    #[arg(long)]
    pub delay_spread_s: Option<f64>,
    /// Window features: pdp (powers) or cdp (complex bins)
    #[arg(long)]
    pub input: Option<String>,
    /// Fraction of present-labeled instances per SNR
    #[arg(long)]
    pub present_ratio: Option<f64>,
    /// Master seed (also config `seed` or PRACH_SEED)
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn cmd_generate(a: GenerateArgs, cfg: &Overrides) -> Result<()> {
    let output: PathBuf = resolve_required(a.output, cfg, "output")?;
    let defaults = DatasetSpec::default();
    let spec = DatasetSpec {
        preamble: PreambleConfig::default(),
        snr_list_db: match resolve(a.snr, cfg, "snr", String::new())? {
            s if s.is_empty() => defaults.snr_list_db,
            s => parse_f64_list(&s)?,
        },
        instances_per_snr: resolve(
            a.instances_per_snr,
            cfg,
            "instances-per-snr",
            defaults.instances_per_snr,
        )?,
        channel: resolve(a.channel, cfg, "channel", defaults.channel.to_string())?.parse()?,
        num_rx: resolve(a.num_rx, cfg, "num-rx", defaults.num_rx)?,
        delay_spread_s: resolve(a.delay_spread_s, cfg, "delay-spread-s", defaults.delay_spread_s)?,
        input_kind: resolve(a.input, cfg, "input", defaults.input_kind.to_string())?.parse()?,
        present_ratio: resolve(a.present_ratio, cfg, "present-ratio", defaults.present_ratio)?,
        seed: resolve_seed(a.seed, cfg)?,
    };
    let meta = generate(&spec, &output)?;
    outln!(
        "wrote {} instances ({} present) to {}",
        meta.num_instances,
        meta.num_present,
        output.display()
    );
    Ok(())
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// Training dataset (.jsonl or .jsonl.gz)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Where to write the model JSON
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Hidden layer widths, comma separated
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Epochs without validation improvement before stopping
    #[arg(long)]
    pub patience: Option<usize>,
    /// Epochs without improvement before the learning rate halves
    #[arg(long)]
    pub plateau_patience: Option<usize>,
    #[arg(long)]
    pub min_lr: Option<f64>,
    /// Fraction of instances held out for validation
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Input conditioning: profile_mean or none
    #[arg(long)]
    pub normalization: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn cmd_train(a: TrainArgs, cfg: &Overrides) -> Result<()> {
    let data_path: PathBuf = resolve_required(a.data, cfg, "data")?;
    let output: PathBuf = resolve_required(a.output, cfg, "output")?;
    let d = TrainConfig::default();
    let tc = TrainConfig {
        hidden: match resolve(a.hidden, cfg, "hidden", String::new())? {
            s if s.is_empty() => d.hidden,
            s => parse_usize_list(&s)?,
        },
        learning_rate: resolve(a.learning_rate, cfg, "learning-rate", d.learning_rate)?,
        batch_size: resolve(a.batch_size, cfg, "batch-size", d.batch_size)?,
        max_epochs: resolve(a.max_epochs, cfg, "max-epochs", d.max_epochs)?,
        patience: resolve(a.patience, cfg, "patience", d.patience)?,
        plateau_patience: resolve(a.plateau_patience, cfg, "plateau-patience", d.plateau_patience)?,
        min_lr: resolve(a.min_lr, cfg, "min-lr", d.min_lr)?,
        validation_fraction: resolve(
            a.validation_fraction,
            cfg,
            "validation-fraction",
            d.validation_fraction,
        )?,
        normalization: resolve(a.normalization, cfg, "normalization", d.normalization.to_string())?
            .parse::<Normalization>()?,
        seed: resolve_seed(a.seed, cfg)?,
        ..d
    };
    let instances = read_dataset(&data_path)?;
    let model = train(&instances, &tc)?;
    save_model(&model, &output)?;
    outln!(
        "trained {} classifier {}: best epoch {}, val loss {:.6}, {} flops per window",
        model.input_kind,
        layer_shape(&model),
        model.train_meta.best_epoch,
        model.train_meta.final_val_loss,
        count_flops(&model)
    );
    outln!("model written to {}", output.display());
    Ok(())
}

#[derive(Args, Debug, Default)]
pub struct EvalArgs {
    /// Trained model JSON (needed for the hybrid receiver)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Receivers to measure: conventional,hybrid
    #[arg(long)]
    pub receivers: Option<String>,
    /// Channels to sweep: awgn,tdlc300
    #[arg(long)]
    pub channels: Option<String>,
    /// Antenna counts to sweep
    #[arg(long)]
    pub num_rx: Option<String>,
    /// SNR points in dB
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<String>,
    /// Occasions per grid cell
    #[arg(long)]
    pub trials: Option<usize>,
    /// Per-window false-alarm target for the conventional threshold
    #[arg(long)]
    pub target_fa: Option<f64>,
    /// Noise-only occasions used to calibrate the threshold
    #[arg(long)]
    pub cal_occasions: Option<usize>,
    #[arg(long)]
    pub delay_spread_s: Option<f64>,
    /// Results CSV path
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional gnuplot script path plotting the CSV
    #[arg(long)]
    pub gnuplot: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn cmd_eval(a: EvalArgs, cfg: &Overrides) -> Result<()> {
    let output: PathBuf = resolve_required(a.output, cfg, "output")?;
    let d = EvalSpec::default();
    let spec = EvalSpec {
        preamble: PreambleConfig::default(),
        channels: match resolve(a.channels, cfg, "channels", String::new())? {
            s if s.is_empty() => d.channels,
            s => parse_list::<ChannelModel>(&s)?,
        },
        num_rx_list: match resolve(a.num_rx, cfg, "num-rx", String::new())? {
            s if s.is_empty() => d.num_rx_list,
            s => parse_usize_list(&s)?,
        },
        snr_list_db: match resolve(a.snr, cfg, "snr", String::new())? {
            s if s.is_empty() => d.snr_list_db,
            s => parse_f64_list(&s)?,
        },
        receivers: match resolve(a.receivers, cfg, "receivers", String::new())? {
            s if s.is_empty() => d.receivers,
            s => parse_list::<ReceiverKind>(&s)?,
        },
        trials: resolve(a.trials, cfg, "trials", d.trials)?,
        delay_spread_s: resolve(a.delay_spread_s, cfg, "delay-spread-s", d.delay_spread_s)?,
        target_fa: resolve(a.target_fa, cfg, "target-fa", d.target_fa)?,
        cal_occasions: resolve(a.cal_occasions, cfg, "cal-occasions", d.cal_occasions)?,
        seed: resolve_seed(a.seed, cfg)?,
    };
    let model_path: Option<PathBuf> = match a.model {
        Some(p) => Some(p),
        None => cfg.get::<PathBuf>("model")?,
    };
    let model = model_path.as_deref().map(load_model).transpose()?;
    let model_desc = model.as_ref().map(|m| {
        format!(
            "{} kind={} layers={} flops={}",
            model_path.as_ref().unwrap().display(),
            m.input_kind,
            layer_shape(m),
            count_flops(m)
        )
    });

    let out = run_eval(&spec, model.as_ref())?;
    let mut file = std::fs::File::create(&output)?;
    write_eval_csv(&mut file, &spec, &out, model_desc.as_deref())?;
    file.flush()?;
    outln!("wrote {} rows to {}", out.rows.len(), output.display());
    let gnuplot: Option<PathBuf> = match a.gnuplot {
        Some(p) => Some(p),
        None => cfg.get::<PathBuf>("gnuplot")?,
    };
    if let Some(gp) = gnuplot {
        let mut f = std::fs::File::create(&gp)?;
        write_gnuplot_script(&mut f, &spec, &output)?;
        f.flush()?;
        outln!("wrote plot script to {}", gp.display());
    }
    Ok(())
}

#[derive(Args, Debug, Default)]
pub struct CaptureArgs {
    /// Capture file path
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Preamble identity to transmit (0..63)
    #[arg(long)]
    pub rapid: Option<u32>,
    /// Write a noise-only occasion instead of a transmission
    #[arg(long)]
    pub absent: bool,
    #[arg(long, allow_negative_numbers = true)]
    pub snr: Option<f64>,
    /// awgn or tdlc300
    #[arg(long)]
    pub channel: Option<String>,
    #[arg(long)]
    pub num_rx: Option<usize>,
    /// Propagation delay in correlation bins (may be fractional)
    #[arg(long)]
    pub delay_bins: Option<f64>,
    #[arg(long)]
    pub delay_spread_s: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn cmd_capture(a: CaptureArgs, cfg: &Overrides) -> Result<()> {
    let output: PathBuf = resolve_required(a.output, cfg, "output")?;
    let template = PreambleConfig::default();
    let table = RootTable::default_for(&template);
    let rapid = resolve(a.rapid, cfg, "rapid", 0)?;
    let delay_bins = resolve(a.delay_bins, cfg, "delay-bins", 0.0)?;
    let chan = ChannelConfig {
        model: resolve(a.channel, cfg, "channel", ChannelModel::Awgn.to_string())?.parse()?,
        num_rx: resolve(a.num_rx, cfg, "num-rx", 1)?,
        delay_spread_s: resolve(a.delay_spread_s, cfg, "delay-spread-s", 300e-9)?,
        snr_db: resolve(a.snr, cfg, "snr", 0.0)?,
        delay_samples: delay_bins * template.samples_per_bin(),
        seed: resolve_seed(a.seed, cfg)?,
    };
    let (b, v) = table.base_and_v(rapid)?;
    let p = template.with_root(table.root(b)).with_v(v);
    let grid = simulate_reception(&p, &chan, !a.absent)?;
    export_capture(&grid, &output)?;
    if a.absent {
        outln!("wrote noise-only occasion to {}", output.display());
    } else {
        let truth = make_ground_truth(
            chan.delay_samples,
            &chan,
            &p,
            prach_core::ta::TruthScheme::Exact,
        )?;
        outln!(
            "wrote occasion with rapid {} (root {}, shift index {}) at {} dB, true timing advance {} bins, to {}",
            rapid, p.u, v, chan.snr_db, truth.value_bins, output.display()
        );
    }
    Ok(())
}

#[derive(Args, Debug, Default)]
pub struct DetectArgs {
    /// Capture file written by the capture subcommand
    #[arg(long)]
    pub capture: Option<PathBuf>,
    /// Trained model JSON
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Optional CSV output; default prints a table
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn cmd_detect(a: DetectArgs, cfg: &Overrides) -> Result<()> {
    let capture: PathBuf = resolve_required(a.capture, cfg, "capture")?;
    let model_path: PathBuf = resolve_required(a.model, cfg, "model")?;
    let grid = import_capture(&capture)?;
    let model = load_model(&model_path)?;
    let table = RootTable::default_for(&grid.preamble);
    let detections = run_receiver(&grid, &table, &model)?;
    let seconds = |samples: f64| samples / grid.preamble.sample_rate_hz();
    if let Some(out) = a.output.or(cfg.get::<PathBuf>("output")?) {
        let mut f = std::fs::File::create(&out)?;
        writeln!(f, "# detections from {}", capture.display())?;
        writeln!(f, "rapid,p_present,ta_bins,ta_seconds,ta_meters")?;
        for det in &detections {
            writeln!(
                f,
                "{},{},{},{},{}",
                det.rapid,
                det.p_present,
                det.ta.ta_bins,
                seconds(det.ta.ta_time_samples),
                det.ta.ta_meters
            )?;
        }
        f.flush()?;
        outln!("wrote {} detections to {}", detections.len(), out.display());
    } else if detections.is_empty() {
        outln!("no preambles detected");
    } else {
        outln!("rapid  p_present  ta_bins  ta_seconds    ta_meters");
        for det in &detections {
            outln!(
                "{:>5}  {:>9.6}  {:>7}  {:>11.4e}  {:>11.3}",
                det.rapid,
                det.p_present,
                det.ta.ta_bins,
                seconds(det.ta.ta_time_samples),
                det.ta.ta_meters
            );
        }
    }
    Ok(())
}

#[derive(Args, Debug, Default)]
pub struct ExplainArgs {
    /// Dataset with instances to explain
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Trained model JSON (power input only)
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Attribution CSV path
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Explain at most this many instances, in file order
    #[arg(long)]
    pub max_instances: Option<usize>,
    /// Absent-labeled instances averaged into the baseline
    #[arg(long)]
    pub baseline_size: Option<usize>,
}

pub fn cmd_explain(a: ExplainArgs, cfg: &Overrides) -> Result<()> {
    let data_path: PathBuf = resolve_required(a.data, cfg, "data")?;
    let model_path: PathBuf = resolve_required(a.model, cfg, "model")?;
    let output: PathBuf = resolve_required(a.output, cfg, "output")?;
    let max_instances = resolve(a.max_instances, cfg, "max-instances", 64)?;
    let baseline_size = resolve(a.baseline_size, cfg, "baseline-size", 256)?;
    let model = load_model(&model_path)?;
    if model.input_dim() > MAX_EXACT_FEATURES {
        return Err(Error::Argument(format!(
            "model takes {} inputs; exact attribution supports at most {}",
            model.input_dim(),
            MAX_EXACT_FEATURES
        )));
    }
    let instances = read_dataset(&data_path)?;
    let reference: Vec<_> = instances
        .iter()
        .filter(|i| i.label == Some(Presence::Absent))
        .take(baseline_size)
        .cloned()
        .collect();
    if reference.is_empty() {
        return Err(Error::Argument(
            "dataset has no absent-labeled instances to build a baseline from".into(),
        ));
    }
    let baseline = mean_baseline(&model, &reference)?;
    let subset: Vec<_> = instances.into_iter().take(max_instances).collect();
    let report = explain_report(&model, &subset, &baseline)?;

    let mut f = std::fs::File::create(&output)?;
    writeln!(f, "# attribution v1")?;
    writeln!(f, "# model {} ({})", model_path.display(), layer_shape(&model))?;
    writeln!(f, "# baseline: mean of {} absent instances", reference.len())?;
    writeln!(
        f,
        "# argmax_match_rate {} neighbor_match_rate {}",
        report.argmax_match_rate, report.neighbor_match_rate
    )?;
    let phi_cols = (0..model.input_dim())
        .map(|i| format!("phi_{}", i))
        .collect::<Vec<_>>()
        .join(",");
    writeln!(
        f,
        "index,snr_db,rapid,label,p_present,top_feature,peak_bin,{}",
        phi_cols
    )?;
    for (i, row) in report.rows.iter().enumerate() {
        let rapid = row.rapid.map(|r| r.to_string()).unwrap_or_default();
        let label = match row.label {
            Some(Presence::Present) => "present",
            Some(Presence::Absent) => "absent",
            None => "",
        };
        let phis = row
            .phi
            .iter()
            .map(|p| format!("{}", p))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            i, row.snr_db, rapid, label, row.p_present, row.top_feature, row.peak_bin, phis
        )?;
    }
    f.flush()?;
    outln!(
        "explained {} instances: top attribution hits the peak bin in {:.1}% (within one bin {:.1}%)",
        report.rows.len(),
        100.0 * report.argmax_match_rate,
        100.0 * report.neighbor_match_rate
    );
    outln!("wrote attributions to {}", output.display());
    Ok(())
}
