//! Two-stage acquisition client.
//!
//! The ingest stage owns the socket: it decodes frames, stamps each with
//! `seq / sample_rate` and pushes it into a bounded FIFO. The process stage
//! drains the FIFO into the [`Buffer`] and any attached [`Processor`]s
//! (typically the CSV writer). Queries go straight to the buffer and can be
//! issued from any thread while both stages run.

use std::io::BufReader;
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, SendTimeoutError, Sender};
use log::{debug, warn};

use crate::device::DeviceSpec;
use crate::series::TimeSeriesBlock;

use super::buffer::{Buffer, BufferConfig};
use super::protocol::{read_frame, read_handshake};
use super::{AcquisitionError, Processor};

const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(5);
/// Longest the ingest stage waits on a full FIFO before counting a drop.
const ENQUEUE_TIMEOUT: Duration = Duration::from_millis(50);
const PROCESS_BATCH: usize = 256;

/// A connected, handshaken stream that has not started acquiring yet.
pub struct Session {
    stream: TcpStream,
    reader: BufReader<TcpStream>,
    device: DeviceSpec,
}

impl Session {
    pub fn device(&self) -> &DeviceSpec {
        &self.device
    }
}

pub fn connect(host: &str, port: u16) -> Result<Session, AcquisitionError> {
    let addrs: Vec<_> = (host, port)
        .to_socket_addrs()
        .map_err(|e| AcquisitionError::ConnectionRefused(format!("{host}:{port}: {e}")))?
        .collect();
    let stream = addrs
        .iter()
        .find_map(|a| TcpStream::connect_timeout(a, Duration::from_secs(5)).ok())
        .ok_or_else(|| AcquisitionError::ConnectionRefused(format!("{host}:{port}")))?;
    stream.set_nodelay(true).ok();
    stream.set_read_timeout(Some(HANDSHAKE_TIMEOUT))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let device = read_handshake(&mut reader)?;
    stream.set_read_timeout(None)?;
    debug!("connected to {host}:{port}, device {}", device.name);
    Ok(Session {
        stream,
        reader,
        device,
    })
}

#[derive(Clone, Debug)]
pub struct ClientConfig {
    pub fifo_capacity: usize,
    pub buffer: BufferConfig,
}

impl ClientConfig {
    pub fn for_device(device: &DeviceSpec) -> Self {
        ClientConfig {
            fifo_capacity: 4096,
            buffer: BufferConfig::for_rate(device.sample_rate),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionSummary {
    pub total_samples: u64,
    /// Seconds of data covered, `total_samples / sample_rate`.
    pub duration: f64,
    /// Missing frames: sequence gaps plus FIFO overflow drops.
    pub dropped_frames: u64,
    pub seq_gaps: u64,
    pub overflow_drops: u64,
}

#[derive(Default)]
struct Stats {
    received: AtomicU64,
    seq_gaps: AtomicU64,
    overflow: AtomicU64,
    ended: AtomicBool,
    error: Mutex<Option<String>>,
}

/// Cheap, cloneable read access to a running client.
#[derive(Clone)]
pub struct QueryHandle {
    buffer: Arc<Buffer>,
    stats: Arc<Stats>,
}

impl QueryHandle {
    pub fn get_data(&self, start: f64, end: f64) -> Result<TimeSeriesBlock, AcquisitionError> {
        self.buffer.query(start, end)
    }

    pub fn samples(&self) -> u64 {
        self.buffer.len()
    }

    pub fn latest_timestamp(&self) -> Option<f64> {
        self.buffer.latest_timestamp()
    }

    /// True once the server closed the stream (or it failed).
    pub fn stream_ended(&self) -> bool {
        self.stats.ended.load(Ordering::Acquire)
    }

    pub fn error(&self) -> Option<String> {
        self.stats.error.lock().unwrap().clone()
    }

    /// Blocks until data up to `time` has been buffered. Returns false if the
    /// stream ended first or the timeout expired.
    pub fn wait_until(&self, time: f64, timeout: Duration) -> bool {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            if self.latest_timestamp().is_some_and(|t| t >= time) {
                return true;
            }
            if self.stream_ended() || std::time::Instant::now() >= deadline {
                return self.latest_timestamp().is_some_and(|t| t >= time);
            }
            thread::sleep(Duration::from_millis(2));
        }
    }
}

struct Running {
    ingest: JoinHandle<()>,
    process: JoinHandle<Result<(), AcquisitionError>>,
    socket: TcpStream,
    stop: Arc<AtomicBool>,
}

enum Phase {
    Connected(Session),
    Running(Running),
    Stopped,
}

pub struct AcquisitionClient {
    device: DeviceSpec,
    config: ClientConfig,
    phase: Phase,
    processors: Vec<Box<dyn Processor>>,
    buffer: Arc<Buffer>,
    stats: Arc<Stats>,
}

impl AcquisitionClient {
    pub fn new(session: Session, config: ClientConfig) -> Result<Self, AcquisitionError> {
        let device = session.device.clone();
        let buffer = Buffer::new(device.sample_rate, device.channels.clone(), config.buffer.clone())?;
        Ok(AcquisitionClient {
            device,
            config,
            phase: Phase::Connected(session),
            processors: Vec::new(),
            buffer: Arc::new(buffer),
            stats: Arc::new(Stats::default()),
        })
    }

    /// Connects with the default configuration for the negotiated device.
    pub fn connect(host: &str, port: u16) -> Result<Self, AcquisitionError> {
        let session = connect(host, port)?;
        let config = ClientConfig::for_device(&session.device);
        Self::new(session, config)
    }

    pub fn device(&self) -> &DeviceSpec {
        &self.device
    }

    /// Attaches a processor fed by the process stage. Only effective before
    /// acquisition starts.
    pub fn add_processor(&mut self, processor: Box<dyn Processor>) {
        self.processors.push(processor);
    }

    pub fn is_running(&self) -> bool {
        matches!(self.phase, Phase::Running(_))
    }

    pub fn handle(&self) -> QueryHandle {
        QueryHandle {
            buffer: Arc::clone(&self.buffer),
            stats: Arc::clone(&self.stats),
        }
    }

    pub fn start_acquisition(&mut self) -> Result<(), AcquisitionError> {
        let session = match std::mem::replace(&mut self.phase, Phase::Stopped) {
            Phase::Connected(s) => s,
            other => {
                self.phase = other;
                return Err(AcquisitionError::AlreadyStarted);
            }
        };
        let (tx, rx) = bounded(self.config.fifo_capacity.max(1));
        let stop = Arc::new(AtomicBool::new(false));
        let socket = session.stream.try_clone()?;

        let ingest = {
            let stats = Arc::clone(&self.stats);
            let stop = Arc::clone(&stop);
            let device = self.device.clone();
            let reader = session.reader;
            thread::Builder::new()
                .name("rsvp-ingest".into())
                .spawn(move || ingest_loop(reader, device, tx, stats, stop))?
        };
        let process = {
            let buffer = Arc::clone(&self.buffer);
            let processors = std::mem::take(&mut self.processors);
            thread::Builder::new()
                .name("rsvp-process".into())
                .spawn(move || process_loop(rx, buffer, processors))?
        };
        drop(session.stream);
        self.phase = Phase::Running(Running {
            ingest,
            process,
            socket,
            stop,
        });
        Ok(())
    }

    pub fn get_data(&self, start: f64, end: f64) -> Result<TimeSeriesBlock, AcquisitionError> {
        if matches!(self.phase, Phase::Connected(_)) {
            return Err(AcquisitionError::NotStarted);
        }
        self.buffer.query(start, end)
    }

    pub fn stop_acquisition(&mut self) -> Result<SessionSummary, AcquisitionError> {
        let running = match std::mem::replace(&mut self.phase, Phase::Stopped) {
            Phase::Running(r) => r,
            other => {
                self.phase = other;
                return Err(AcquisitionError::NotStarted);
            }
        };
        running.stop.store(true, Ordering::Release);
        // Unblocks the ingest stage if it is parked in a socket read.
        running.socket.shutdown(Shutdown::Both).ok();
        running.ingest.join().expect("ingest stage panicked");
        running.process.join().expect("process stage panicked")?;
        self.buffer.flush()?;

        let total = self.buffer.len();
        let seq_gaps = self.stats.seq_gaps.load(Ordering::Acquire);
        let overflow = self.stats.overflow.load(Ordering::Acquire);
        Ok(SessionSummary {
            total_samples: total,
            duration: total as f64 / self.device.sample_rate,
            dropped_frames: seq_gaps + overflow,
            seq_gaps,
            overflow_drops: overflow,
        })
    }
}

impl Drop for AcquisitionClient {
    fn drop(&mut self) {
        if self.is_running() {
            let _ = self.stop_acquisition();
        }
    }
}

fn ingest_loop(
    mut reader: BufReader<TcpStream>,
    device: DeviceSpec,
    tx: Sender<(f64, Vec<f32>)>,
    stats: Arc<Stats>,
    stop: Arc<AtomicBool>,
) {
    let n_ch = device.channel_count();
    let mut scratch = Vec::new();
    let mut expected: Option<u32> = None;
    loop {
        let frame = match read_frame(&mut reader, n_ch, &mut scratch) {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => {
                if !stop.load(Ordering::Acquire) {
                    warn!("acquisition stream failed: {e}");
                    *stats.error.lock().unwrap() = Some(e.to_string());
                }
                break;
            }
        };
        if let Some(exp) = expected {
            let ahead = frame.seq.wrapping_sub(exp);
            if ahead > u32::MAX / 2 {
                // Repeated or stale frame; never reorder or duplicate.
                continue;
            }
            if ahead > 0 {
                stats.seq_gaps.fetch_add(ahead as u64, Ordering::AcqRel);
            }
        }
        expected = Some(frame.seq.wrapping_add(1));
        stats.received.fetch_add(1, Ordering::AcqRel);
        let timestamp = frame.seq as f64 / device.sample_rate;
        match tx.send_timeout((timestamp, frame.values), ENQUEUE_TIMEOUT) {
            Ok(()) => {}
            Err(SendTimeoutError::Timeout(_)) => {
                stats.overflow.fetch_add(1, Ordering::AcqRel);
            }
            Err(SendTimeoutError::Disconnected(_)) => break,
        }
    }
    stats.ended.store(true, Ordering::Release);
}

fn process_loop(
    rx: Receiver<(f64, Vec<f32>)>,
    buffer: Arc<Buffer>,
    mut processors: Vec<Box<dyn Processor>>,
) -> Result<(), AcquisitionError> {
    let mut batch = Vec::with_capacity(PROCESS_BATCH);
    let mut result = Ok(());
    while let Ok(first) = rx.recv() {
        batch.clear();
        batch.push(first);
        while batch.len() < PROCESS_BATCH {
            match rx.try_recv() {
                Ok(item) => batch.push(item),
                Err(_) => break,
            }
        }
        if let Err(e) = buffer.append_batch(batch.iter().map(|(t, v)| (*t, v.as_slice()))) {
            result = Err(e);
            break;
        }
        for p in processors.iter_mut() {
            for (t, v) in &batch {
                p.process(*t, v)?;
            }
        }
    }
    for p in processors.iter_mut() {
        p.close()?;
    }
    result
}
