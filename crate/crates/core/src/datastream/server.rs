//! TCP server streaming generator output in the acquisition wire format.
//!
//! One client at a time. Each connection gets the handshake line and then
//! frames `0, 1, 2, ...`, frame `i` being due at `start + i / (fs · speed)`.
//! Pacing against that absolute schedule keeps long runs from drifting.

use std::io::{self, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info};

use crate::acquisition::protocol::{encode_frame, write_handshake};
use crate::device::DeviceSpec;

use super::{DatastreamError, Generator};

const ACCEPT_POLL: Duration = Duration::from_millis(5);
const MAX_SLEEP: Duration = Duration::from_millis(20);
/// Frames written per syscall when the server is behind schedule.
const MAX_BURST: u64 = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pacing {
    RealTime,
    /// Stream `factor` times faster than real time.
    Scaled(f64),
    /// As fast as the socket accepts.
    Unpaced,
}

impl Pacing {
    fn frame_period(self, sample_rate: f64) -> Option<f64> {
        match self {
            Pacing::RealTime => Some(1.0 / sample_rate),
            Pacing::Scaled(f) if f > 0.0 && f.is_finite() => Some(1.0 / (sample_rate * f)),
            Pacing::Scaled(_) | Pacing::Unpaced => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub host: String,
    /// 0 picks a free port; see [`ServerHandle::local_addr`].
    pub port: u16,
    pub pacing: Pacing,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            host: "127.0.0.1".into(),
            port: crate::acquisition::DEFAULT_PORT,
            pacing: Pacing::RealTime,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ServeStats {
    pub clients: u64,
    pub frames_sent: u64,
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    frames: Arc<AtomicU64>,
    thread: Option<JoinHandle<ServeStats>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Frames sent over all connections so far.
    pub fn frames_sent(&self) -> u64 {
        self.frames.load(Ordering::Acquire)
    }

    pub fn is_finished(&self) -> bool {
        self.thread.as_ref().is_none_or(|t| t.is_finished())
    }

    /// Stops serving and joins the server thread. The current client, if
    /// any, sees EOF on a frame boundary.
    pub fn stop(mut self) -> ServeStats {
        self.shutdown()
    }

    fn shutdown(&mut self) -> ServeStats {
        self.stop.store(true, Ordering::Release);
        match self.thread.take() {
            Some(t) => t.join().expect("server thread panicked"),
            None => ServeStats::default(),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn serve(
    generator: Box<dyn Generator>,
    device: DeviceSpec,
    config: ServerConfig,
) -> Result<ServerHandle, DatastreamError> {
    if generator.channel_count() != device.channel_count() {
        return Err(DatastreamError::ChannelMismatch {
            generator: generator.channel_count(),
            device: device.channel_count(),
        });
    }
    let listener = TcpListener::bind((config.host.as_str(), config.port))
        .map_err(|e| DatastreamError::BindFailure(format!("{}:{}: {e}", config.host, config.port)))?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    info!("serving {} on {addr}", device.name);

    let stop = Arc::new(AtomicBool::new(false));
    let frames = Arc::new(AtomicU64::new(0));
    let thread = {
        let stop = Arc::clone(&stop);
        let frames = Arc::clone(&frames);
        thread::Builder::new()
            .name("rsvp-server".into())
            .spawn(move || accept_loop(listener, generator, device, config.pacing, stop, frames))?
    };
    Ok(ServerHandle {
        addr,
        stop,
        frames,
        thread: Some(thread),
    })
}

fn accept_loop(
    listener: TcpListener,
    generator: Box<dyn Generator>,
    device: DeviceSpec,
    pacing: Pacing,
    stop: Arc<AtomicBool>,
    frames: Arc<AtomicU64>,
) -> ServeStats {
    let mut stats = ServeStats::default();
    while !stop.load(Ordering::Acquire) {
        match listener.accept() {
            Ok((stream, peer)) => {
                debug!("client connected from {peer}");
                stats.clients += 1;
                match stream_to(stream, generator.as_ref(), &device, pacing, &stop, &frames) {
                    Ok(n) => debug!("client {peer} done after {n} frames"),
                    Err(e) => debug!("client {peer} dropped: {e}"),
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
            Err(e) => {
                debug!("accept failed: {e}");
                thread::sleep(ACCEPT_POLL);
            }
        }
    }
    stats.frames_sent = frames.load(Ordering::Acquire);
    stats
}

fn stream_to(
    mut stream: TcpStream,
    generator: &dyn Generator,
    device: &DeviceSpec,
    pacing: Pacing,
    stop: &AtomicBool,
    frames: &AtomicU64,
) -> io::Result<u64> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true).ok();
    write_handshake(&mut stream, device)?;

    let period = pacing.frame_period(device.sample_rate);
    let end = generator.len();
    let start = Instant::now();
    let mut next: u64 = 0;
    let mut buf = Vec::new();
    let mut values = Vec::with_capacity(device.channel_count());

    let result = loop {
        if stop.load(Ordering::Acquire) || end.is_some_and(|n| next >= n) {
            break Ok(next);
        }
        let due = match period {
            Some(p) => {
                let elapsed = start.elapsed().as_secs_f64();
                let due = (elapsed / p).floor() as u64 + 1;
                if due <= next {
                    let wait = Duration::from_secs_f64(next as f64 * p - elapsed);
                    thread::sleep(wait.min(MAX_SLEEP));
                    continue;
                }
                due
            }
            None => next + MAX_BURST,
        };
        let upto = due.min(next + MAX_BURST).min(end.unwrap_or(u64::MAX));
        buf.clear();
        for i in next..upto {
            let Some(frame) = generator.frame(i) else {
                break;
            };
            values.clear();
            values.extend(frame.iter().map(|&v| v as f32));
            encode_frame(&mut buf, i as u32, &values);
        }
        // Whole frames only: a stop request takes effect between writes.
        if let Err(e) = stream.write_all(&buf) {
            break Err(e);
        }
        frames.fetch_add(upto - next, Ordering::AcqRel);
        next = upto;
    };
    stream.flush().ok();
    stream.shutdown(Shutdown::Write).ok();
    result
}
