use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::Context;
use log::info;

use rsvp_core::acquisition::{find_device, list_devices, read_raw_csv, AcquisitionClient, BufferConfig, ClientConfig};
use rsvp_core::datastream::{
    gen_random_data, gen_sinusoid, serve as start_server, ErpGenerator, ErpSchedule, FileReplay, Generator, Pacing,
    ServerConfig,
};
use rsvp_core::dsp::{power_spectral_density, spectrum, PsdMethod};
use rsvp_core::model::SignalModel;
use rsvp_core::params::Parameters;
use rsvp_core::task::calibration::calibration_stream;
use rsvp_core::task::evidence::SimulatedUser;
use rsvp_core::task::{
    calibration_schedule, create_session_dir, files, replay_session, run_calibration, run_copy_phrase,
    train_from_session, CalibrationSource, EvidenceSource, LiveStream, Outcome, RatioOracle, SessionRecord,
    SimulatedEeg, TaskConfig, TaskError,
};
use rsvp_core::{DeviceSpec, TimeSeriesBlock};

use crate::{
    init_log, usage, CalibrateArgs, Common, DeviceArgs, GeneratorKind, Method, PsdArgs, ReplayArgs, ServeArgs,
    SimulateArgs, TrainArgs,
};

/// Uniform noise bounds of the random generator, in microvolts.
const RANDOM_RANGE: (f64, f64) = (-50.0, 50.0);

fn load_config(params: Option<&Path>) -> anyhow::Result<TaskConfig> {
    let Some(path) = params else {
        return Ok(TaskConfig::default());
    };
    if !path.is_file() {
        return Err(usage(format!("parameters file {} does not exist", path.display())));
    }
    let p = Parameters::load(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(TaskConfig::from_parameters(&p)?)
}

/// Creates the run's session directory and starts logging into it.
fn open_session(config: &TaskConfig, common: &Common) -> anyhow::Result<PathBuf> {
    let root = common.out.clone().unwrap_or_else(|| config.data_save_loc.clone());
    let dir = create_session_dir(&root, &config.user_id)
        .with_context(|| format!("creating a session directory under {}", root.display()))?;
    init_log(&dir)?;
    info!("session directory {}", dir.display());
    Ok(dir)
}

fn pacing(speed: f64) -> Pacing {
    if speed == 1.0 {
        Pacing::RealTime
    } else if speed > 0.0 {
        Pacing::Scaled(speed)
    } else {
        Pacing::Unpaced
    }
}

/// The configured device, reshaped by `--rate` and `--channels`. A changed
/// channel count takes the first registered device with that many
/// channels, or generic names.
fn device(config: &TaskConfig, args: &DeviceArgs) -> anyhow::Result<DeviceSpec> {
    let mut spec = find_device(&config.acq_device)
        .map_err(|_| usage(format!("unknown device {:?}; known: {}", config.acq_device, list_devices().join(", "))))?;
    if let Some(n) = args.channels {
        if n == 0 {
            return Err(usage("--channels must be at least 1"));
        }
        if n != spec.channel_count() {
            spec.channels = list_devices()
                .iter()
                .filter_map(|name| find_device(name).ok())
                .find(|d| d.channel_count() == n)
                .map(|d| d.channels)
                .unwrap_or_else(|| (1..=n).map(|i| format!("Ch{i}")).collect());
            spec.name = format!("{}-{n}", spec.name);
        }
    }
    if let Some(rate) = args.rate {
        spec.sample_rate = rate;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

fn generator(
    kind: GeneratorKind,
    config: &TaskConfig,
    spec: &DeviceSpec,
    freq: f64,
    seed: u64,
) -> anyhow::Result<Box<dyn Generator>> {
    Ok(match kind {
        GeneratorKind::Random => Box::new(gen_random_data(RANDOM_RANGE.0, RANDOM_RANGE.1, spec.channel_count(), seed)?),
        GeneratorKind::Erp => {
            let schedule = calibration_schedule(config, seed)?;
            Box::new(calibration_stream(config, spec, &schedule, seed)?)
        }
        GeneratorKind::Sinusoid => Box::new(gen_sinusoid(
            freq,
            config.snr * config.noise_sigma,
            config.noise_sigma,
            spec,
            seed,
        )?),
        GeneratorKind::File => return Err(usage("--generator file needs --data <raw_data.csv>")),
    })
}

pub fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let mut config = load_config(args.common.params.as_deref())?;
    if let Some(h) = &args.host {
        config.acq_host = h.clone();
    }
    if let Some(p) = args.port {
        config.acq_port = p;
    }
    if let Some(s) = args.snr {
        config.snr = s;
    }
    if let Some(s) = args.speed {
        config.stream_speed = s;
    }
    let (gen, spec): (Box<dyn Generator>, DeviceSpec) = match (args.generator, &args.data) {
        (GeneratorKind::File, Some(path)) => {
            if !path.is_file() {
                return Err(usage(format!("{} does not exist", path.display())));
            }
            let replay = FileReplay::open(path)?;
            let spec = replay.device().clone();
            (Box::new(replay), spec)
        }
        (kind, _) => {
            let spec = device(&config, &args.device)?;
            (generator(kind, &config, &spec, args.freq, args.common.seed)?, spec)
        }
    };
    let dir = open_session(&config, &args.common)?;
    config.to_parameters().save(&dir.join(files::PARAMETERS))?;

    let server = start_server(
        gen,
        spec.clone(),
        ServerConfig {
            host: config.acq_host.clone(),
            port: config.acq_port,
            pacing: pacing(config.stream_speed),
        },
    )?;
    println!(
        "serving {} ({} channels at {} Hz) on {}",
        spec.name,
        spec.channel_count(),
        spec.sample_rate,
        server.local_addr()
    );
    use std::io::Write;
    std::io::stdout().flush().ok();

    let interrupted = Arc::new(AtomicBool::new(false));
    {
        let flag = Arc::clone(&interrupted);
        ctrlc::set_handler(move || flag.store(true, Ordering::Release)).context("installing the interrupt handler")?;
    }
    let started = Instant::now();
    let limit = args.duration.map(Duration::from_secs_f64);
    while !interrupted.load(Ordering::Acquire) && limit.is_none_or(|d| started.elapsed() < d) {
        thread::sleep(Duration::from_millis(20));
    }
    let stats = server.stop();
    info!("stopped after {} frames to {} clients", stats.frames_sent, stats.clients);
    println!("sent {} frames to {} clients", stats.frames_sent, stats.clients);
    Ok(())
}

fn client_config(config: &TaskConfig, spec: &DeviceSpec) -> ClientConfig {
    ClientConfig {
        fifo_capacity: config.fifo_capacity.max(1),
        buffer: BufferConfig {
            capacity: ((config.buffer_seconds * spec.sample_rate).ceil() as usize).max(1),
            archive_path: None,
        },
    }
}

pub fn calibrate(args: CalibrateArgs) -> anyhow::Result<()> {
    let mut config = load_config(args.common.params.as_deref())?;
    if let Some(h) = &args.host {
        config.acq_host = h.clone();
    }
    if let Some(p) = args.port {
        config.acq_port = p;
    }
    if let Some(s) = args.snr {
        config.snr = s;
    }
    if let Some(k) = args.k_folds {
        config.k_folds = k;
    }
    let seed = args.common.seed;
    let dir = open_session(&config, &args.common)?;

    let outcome = if args.live {
        let session = rsvp_core::acquisition::connect(&config.acq_host, config.acq_port)?;
        let spec = session.device().clone();
        let mut client = AcquisitionClient::new(session, client_config(&config, &spec))?;
        client.start_acquisition()?;
        let handle = client.handle();
        let outcome = run_calibration(&config, &spec, CalibrationSource::Live(&handle), seed, &dir);
        let summary = client.stop_acquisition()?;
        info!(
            "acquired {} samples, {} dropped",
            summary.total_samples, summary.dropped_frames
        );
        outcome?
    } else {
        let spec = find_device(&config.acq_device)?;
        run_calibration(&config, &spec, CalibrationSource::Simulated, seed, &dir)?
    };
    let report = &outcome.report;
    println!("session: {}", dir.display());
    println!("trials: {} ({} targets)", report.trials, report.targets);
    println!(
        "selected lambda {} gamma {}, cross-validated AUC {:.4}",
        report.cv.lambda, report.cv.gamma, report.cv.mean_auc
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> anyhow::Result<()> {
    if !args.data.is_dir() {
        return Err(usage(format!("session directory {} does not exist", args.data.display())));
    }
    for name in [files::RAW_DATA, files::TRIGGERS] {
        if !args.data.join(name).is_file() {
            return Err(usage(format!("{} has no {name}", args.data.display())));
        }
    }
    let params = args
        .params
        .clone()
        .or_else(|| Some(args.data.join(files::PARAMETERS)).filter(|p| p.is_file()));
    let mut config = load_config(params.as_deref())?;
    if let Some(k) = args.k_folds {
        config.k_folds = k;
    }
    init_log(&args.data)?;
    let report = train_from_session(&args.data, &config, args.seed)?;
    let out = args.out.unwrap_or_else(|| args.data.clone());
    fs::create_dir_all(&out)?;
    let path = out.join(files::MODEL);
    report.model.save(&path)?;
    info!("model written to {}", path.display());
    println!("trials: {} ({} targets)", report.trials, report.targets);
    println!(
        "selected lambda {} gamma {}, cross-validated AUC {:.4}",
        report.cv.lambda, report.cv.gamma, report.cv.mean_auc
    );
    println!("model: {}", path.display());
    Ok(())
}

/// Keeps the in-process server and client alive while the session runs.
struct SelfServe {
    client: AcquisitionClient,
    _server: rsvp_core::datastream::ServerHandle,
}

pub fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let mut config = load_config(args.common.params.as_deref())?;
    if let Some(s) = args.snr {
        config.snr = s;
    }
    if let Some(c) = &args.corpus {
        if !c.is_file() {
            return Err(usage(format!("corpus {} does not exist", c.display())));
        }
        config.lm_corpus = c.display().to_string();
    }
    if args.no_lm {
        config.lm_enabled = false;
    }
    if let Some(t) = args.threshold {
        config.decision_threshold = t;
    }
    if let Some(m) = args.max_sequences {
        config.max_sequences = m;
    }
    if let Some(s) = args.speed {
        config.stream_speed = s;
    }
    if let Some(m) = &args.model {
        if !m.is_file() {
            return Err(usage(format!("model {} does not exist", m.display())));
        }
    }
    let seed = args.common.seed;
    let dir = open_session(&config, &args.common)?;
    config.to_parameters().save(&dir.join(files::PARAMETERS))?;
    let lm = config.language_model()?;

    let model = if args.oracle {
        None
    } else if let Some(path) = &args.model {
        Some(SignalModel::load(path).with_context(|| format!("loading {}", path.display()))?)
    } else {
        let spec = find_device(&config.acq_device)?;
        let outcome = run_calibration(&config, &spec, CalibrationSource::Simulated, seed, &dir)?;
        println!(
            "calibrated in process: {} trials, cross-validated AUC {:.4}",
            outcome.report.trials, outcome.report.cv.mean_auc
        );
        Some(outcome.report.model)
    };

    let mut live: Option<SelfServe> = None;
    let mut source: Box<dyn EvidenceSource> = match model {
        None => Box::new(RatioOracle::default()),
        Some(model) if args.self_serve => {
            let spec = DeviceSpec::new("SIM", model.sample_rate, model.channels.clone())?;
            let schedule = ErpSchedule::new();
            let gen = ErpGenerator::new(
                config.erp_template(),
                schedule.clone(),
                config.snr,
                config.noise_sigma,
                &spec,
                seed,
            )?;
            let server = start_server(
                Box::new(gen),
                spec.clone(),
                ServerConfig {
                    host: "127.0.0.1".into(),
                    port: 0,
                    pacing: pacing(config.stream_speed),
                },
            )?;
            let session = rsvp_core::acquisition::connect("127.0.0.1", server.local_addr().port())?;
            let mut client = AcquisitionClient::new(session, client_config(&config, &spec))?;
            client.start_acquisition()?;
            let source = LiveStream::new(model, client.handle(), Some(schedule));
            live = Some(SelfServe { client, _server: server });
            Box::new(source)
        }
        Some(model) => Box::new(SimulatedEeg::new(model, &SimulatedUser::from_config(&config), seed)?),
    };

    let record = match run_copy_phrase(&config, &args.phrase, source.as_mut(), lm.as_ref(), seed) {
        Ok(r) => r,
        Err(e @ (TaskError::InvalidPhrase(_) | TaskError::EmptyPhrase)) => return Err(usage(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    if let Some(mut s) = live {
        let summary = s.client.stop_acquisition()?;
        info!("acquired {} samples, {} dropped", summary.total_samples, summary.dropped_frames);
    }
    record.save(&dir.join(files::SESSION))?;
    write_posterior_trace(&dir.join("posterior_trace.csv"), &record)?;
    print_summary(&record);
    Ok(())
}

/// One row per sequence: the intent's posterior and the leading symbol.
fn write_posterior_trace(path: &Path, record: &SessionRecord) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["letter", "sequence", "intent", "intent_posterior", "leading", "leading_posterior"])?;
    for e in &record.entries {
        let lead = e.posterior.argmax();
        w.write_record([
            e.letter.to_string(),
            e.sequence.to_string(),
            e.intent.as_char().to_string(),
            format!("{:.6}", e.posterior.get(e.intent)),
            lead.as_char().to_string(),
            format!("{:.6}", e.posterior.get(lead)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn print_summary(record: &SessionRecord) {
    println!("phrase:  {}", record.phrase);
    println!("spelled: {}", record.final_text);
    let outcome = match record.outcome {
        Outcome::Completed => "completed",
        Outcome::BudgetExhausted => "letter budget exhausted",
    };
    let correct = record.letters.iter().filter(|l| l.correct()).count();
    println!("outcome: {outcome}, {correct}/{} commits correct", record.letters.len());
    println!();
    println!("{:>6}  {:>6}  {:>9}  {:>9}", "letter", "intent", "committed", "sequences");
    for (i, l) in record.letters.iter().enumerate() {
        println!(
            "{:>6}  {:>6}  {:>9}  {:>9}",
            i + 1,
            l.intent.as_char(),
            l.committed.as_char(),
            l.sequences
        );
    }
    println!("mean sequences per letter: {:.3}", record.mean_sequences_per_letter());
}

pub fn replay(args: ReplayArgs) -> anyhow::Result<()> {
    let path = if args.data.is_dir() {
        args.data.join(files::SESSION)
    } else {
        args.data.clone()
    };
    if !path.is_file() {
        return Err(usage(format!("no session file at {}", path.display())));
    }
    if let Some(dir) = path.parent() {
        init_log(if dir.as_os_str().is_empty() { Path::new(".") } else { dir })?;
    }
    let record = SessionRecord::load(&path)?;
    let report = replay_session(&record)?;
    info!("replayed {}", path.display());
    println!(
        "replayed {} sequences over {} letters: every posterior and decision reproduced",
        report.entries, report.letters
    );
    println!("spelled: {}", record.final_text);
    Ok(())
}

pub fn psd(args: PsdArgs) -> anyhow::Result<()> {
    let mut config = load_config(args.common.params.as_deref())?;
    if let Some(s) = args.snr {
        config.snr = s;
    }
    let (lo, hi) = (args.band[0], args.band[1]);
    let block: TimeSeriesBlock = match &args.data {
        Some(path) => {
            if !path.is_file() {
                return Err(usage(format!("{} does not exist", path.display())));
            }
            read_raw_csv(path)?.block
        }
        None => {
            if !(args.duration > 0.0) {
                return Err(usage("--duration must be positive"));
            }
            let spec = device(&config, &args.device)?;
            let gen = generator(args.generator, &config, &spec, args.freq, args.common.seed)?;
            let frames = (args.duration * spec.sample_rate).round() as u64;
            gen.block(spec.sample_rate, spec.channels.clone(), 0, frames)
        }
    };
    if args.channel >= block.channel_count() {
        return Err(usage(format!(
            "channel {} out of range, the data has {} channels",
            args.channel,
            block.channel_count()
        )));
    }
    let dir = open_session(&config, &args.common)?;
    let method = match args.method {
        Method::Welch => PsdMethod::Welch,
        Method::Multitaper => PsdMethod::Multitaper,
    };
    let fs = block.sample_rate;
    let x = block.channel(args.channel).to_vec();
    let csv = dir.join("spectrum.csv");
    let power = power_spectral_density(&x, (lo, hi), fs, args.window, method, args.relative, Some(&csv))?;
    let spec = spectrum(&x, fs, args.window, method)?;
    println!("channel: {}", block.channels[args.channel]);
    println!("peak: {:.2} Hz", spec.freqs[spec.peak_bin()]);
    let kind = if args.relative { "relative power" } else { "power" };
    println!("{kind} in {lo}-{hi} Hz: {power:.6e}");
    println!("spectrum: {}", csv.display());
    Ok(())
}
