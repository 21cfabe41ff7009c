//! Command line front end: dataset generation, training, receiver
//! evaluation, single-occasion capture and detection, and attribution
//! reports, all driving the core library.

/// Status output; a consumer closing the pipe (e.g. `head`) must not
/// abort the command, so broken-pipe write errors are swallowed.
macro_rules! outln {
    ($($arg:tt)*) => { crate::emit(format_args!($($arg)*)) };
}

pub mod commands;
pub mod config;
pub mod eval;

pub(crate) fn emit(args: std::fmt::Arguments) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_fmt(args).and_then(|()| out.write_all(b"\n")) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("error: cannot write to stdout: {}", e);
            std::process::exit(3);
        }
    }
}

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use prach_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "prach",
    version,
    about = "Random-access preamble simulator with a classical and a learned detector"
)]
pub struct Cli {
    /// key = value file supplying defaults for any long option
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Synthesize a labeled window dataset
    Generate(commands::GenerateArgs),
    /// Train the window classifier on a dataset
    Train(commands::TrainArgs),
    /// Measure detection, false alarm and timing accuracy over a grid
    Eval(commands::EvalArgs),
    /// Simulate one occasion and write it as a capture file
    Capture(commands::CaptureArgs),
    /// Run the receiver on a capture file
    Detect(commands::DetectArgs),
    /// Attribute classifier decisions to window bins
    Explain(commands::ExplainArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => config::load_config(path)?,
        None => config::Overrides::empty(),
    };
    let threads = config::resolve(cli.threads, &cfg, "threads", 0)?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size thread pool: {}", e)))?;
    }
    match cli.cmd {
        Cmd::Generate(a) => commands::cmd_generate(a, &cfg)?,
        Cmd::Train(a) => commands::cmd_train(a, &cfg)?,
        Cmd::Eval(a) => commands::cmd_eval(a, &cfg)?,
        Cmd::Capture(a) => commands::cmd_capture(a, &cfg)?,
        Cmd::Detect(a) => commands::cmd_detect(a, &cfg)?,
        Cmd::Explain(a) => commands::cmd_explain(a, &cfg)?,
    }
    for key in cfg.unused_keys() {
        eprintln!("warning: config key '{}' was not used by this command", key);
    }
    Ok(())
}

/// Process exit code for an error: 2 for bad usage or configuration, 3 for
/// unreadable or malformed inputs, 4 for runtime failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Argument(_) => 2,
        Error::Parse { .. } | Error::Io(_) | Error::ModelFormat(_) => 3,
        Error::Training(_) | Error::Estimation(_) => 4,
    }
}
