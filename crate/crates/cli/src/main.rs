//! `rsvp`: serve synthetic EEG, calibrate, train, spell and inspect spectra.

mod commands;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "rsvp", version, about = "Closed-loop RSVP speller engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stream generated or recorded data over TCP until interrupted.
    Serve(ServeArgs),
    /// Record a calibration session and train a signal model from it.
    Calibrate(CalibrateArgs),
    /// Retrain the signal model of an existing session directory.
    Train(TrainArgs),
    /// Spell a phrase with a simulated user in the closed loop.
    Simulate(SimulateArgs),
    /// Recompute every posterior and decision of a saved session.
    Replay(ReplayArgs),
    /// Power spectral density of recorded or generated data.
    Psd(PsdArgs),
}

/// Flags shared by every subcommand that reads a configuration.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Parameters file (JSON); absent entries keep their defaults.
    #[arg(long, value_name = "FILE")]
    params: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory under which the session directory is created
    /// (overrides `data_save_loc`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

/// Device shape overrides.
#[derive(Args, Debug, Clone)]
struct DeviceArgs {
    /// Sample rate in Hz (overrides the device's).
    #[arg(long)]
    rate: Option<f64>,
    /// Channel count (overrides the device's).
    #[arg(long)]
    channels: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GeneratorKind {
    Random,
    Erp,
    Sinusoid,
    File,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    device: DeviceArgs,
    #[arg(long, value_enum, default_value_t = GeneratorKind::Random)]
    generator: GeneratorKind,
    /// Address to bind (overrides `acq_host`).
    #[arg(long)]
    host: Option<String>,
    /// Port to bind, 0 for any free port (overrides `acq_port`).
    #[arg(long)]
    port: Option<u16>,
    /// Signal-to-noise ratio of the ERP generator (overrides `snr`).
    #[arg(long)]
    snr: Option<f64>,
    /// raw_data.csv to replay with `--generator file`.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Sinusoid frequency in Hz.
    #[arg(long, default_value_t = 4.0)]
    freq: f64,
    /// Stop after this many seconds instead of waiting for an interrupt.
    #[arg(long)]
    duration: Option<f64>,
    /// Stream this many times faster than real time (overrides `stream_speed`).
    #[arg(long)]
    speed: Option<f64>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    /// Record from a running server instead of simulating in process. The
    /// server must play `serve --generator erp` with the same parameters
    /// and seed.
    #[arg(long)]
    live: bool,
    /// Server address (overrides `acq_host`).
    #[arg(long)]
    host: Option<String>,
    /// Server port (overrides `acq_port`).
    #[arg(long)]
    port: Option<u16>,
    /// Signal-to-noise ratio of the simulated user (overrides `snr`).
    #[arg(long)]
    snr: Option<f64>,
    /// Cross-validation folds (overrides `k_folds`).
    #[arg(long)]
    k_folds: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Session directory holding raw_data.csv and triggers.txt.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Parameters file; defaults to the session's parameters.json.
    #[arg(long, value_name = "FILE")]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cross-validation folds (overrides `k_folds`).
    #[arg(long)]
    k_folds: Option<usize>,
    /// Where to write model.json; defaults to the session directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Phrase to copy; spaces are spelled as '_'.
    #[arg(long, default_value = "HELLO")]
    phrase: String,
    /// Signal-to-noise ratio of the simulated user (overrides `snr`).
    #[arg(long)]
    snr: Option<f64>,
    /// Trained model.json. Without it a calibration session is simulated
    /// first.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Use a perfect user (ratio 10 for the intent, 1 otherwise) instead
    /// of a model.
    #[arg(long, conflicts_with_all = ["model", "self_serve"])]
    oracle: bool,
    /// Language model training text (overrides `lm_corpus`).
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
    /// Spell without the language model.
    #[arg(long)]
    no_lm: bool,
    /// Decision threshold (overrides `decision_threshold`).
    #[arg(long)]
    threshold: Option<f64>,
    /// Sequences before a forced commit (overrides `max_sequences`).
    #[arg(long)]
    max_sequences: Option<usize>,
    /// Host a data server in process and read evidence from the live stream.
    #[arg(long)]
    self_serve: bool,
    /// Pacing factor of the in-process server (overrides `stream_speed`).
    #[arg(long)]
    speed: Option<f64>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// session.json, or the session directory holding it.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Welch,
    Multitaper,
}

#[derive(Args, Debug)]
struct PsdArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    device: DeviceArgs,
    /// raw_data.csv to analyse; without it data is generated.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GeneratorKind::Sinusoid)]
    generator: GeneratorKind,
    /// Sinusoid frequency in Hz.
    #[arg(long, default_value_t = 4.0)]
    freq: f64,
    /// Sinusoid amplitude over the noise sigma, or ERP signal-to-noise ratio.
    #[arg(long)]
    snr: Option<f64>,
    /// Seconds of generated data.
    #[arg(long, default_value_t = 20.0)]
    duration: f64,
    /// Channel index to analyse.
    #[arg(long, default_value_t = 0)]
    channel: usize,
    /// Band edges in Hz.
    #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"], default_values_t = [3.5, 4.5])]
    band: Vec<f64>,
    /// Segment length in seconds.
    #[arg(long, default_value_t = 2.0)]
    window: f64,
    #[arg(long, value_enum, default_value_t = Method::Welch)]
    method: Method,
    /// Report the band's fraction of total power.
    #[arg(long)]
    relative: bool,
}

/// A problem with the invocation rather than with the run.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Sends log records to `session.log` in `dir`, appending.
fn init_log(dir: &Path) -> anyhow::Result<()> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join(rsvp_core::task::files::LOG))?;
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Pipe(Box::new(file)))
        .try_init()
        .ok();
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Serve(a) => commands::serve(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Train(a) => commands::train(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Replay(a) => commands::replay(a),
        Command::Psd(a) => commands::psd(a),
    };
    std::io::stdout().flush().ok();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
