//! Time-indexed sample buffer: an in-memory window backed by an
//! append-only disk log.
//!
//! Every appended sample goes to both. The window keeps the most recent
//! `capacity` samples (plus up to one eviction chunk); samples only leave the
//! window after the log has been flushed past them, so a query can always be
//! answered from disk for the evicted prefix and from memory for the rest.
//!
//! Log records are fixed size: `f64` timestamp then one `f32` per channel,
//! all little-endian. A sparse index maps the timestamp of every
//! `INDEX_STRIDE`-th record to its byte offset.

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use crate::series::TimeSeriesBlock;

use super::AcquisitionError;

pub const INDEX_STRIDE: u64 = 1024;

#[derive(Clone, Debug)]
pub struct BufferConfig {
    /// Samples kept in memory.
    pub capacity: usize,
    /// Where the disk log lives. `None` creates a temporary file that is
    /// removed with the buffer.
    pub archive_path: Option<PathBuf>,
}

impl BufferConfig {
    /// Ten seconds of samples at `sample_rate`.
    pub fn for_rate(sample_rate: f64) -> Self {
        BufferConfig {
            capacity: (sample_rate * 10.0).ceil() as usize,
            archive_path: None,
        }
    }
}

struct Archive {
    writer: BufWriter<File>,
    /// Records guaranteed to be readable from the file.
    flushed: u64,
    /// (timestamp, byte offset) for records 0, STRIDE, 2*STRIDE, ...
    index: Vec<(f64, u64)>,
}

struct State {
    times: VecDeque<f64>,
    values: VecDeque<f32>,
    /// Global index of the first sample still in memory.
    window_start: u64,
    total: u64,
    archive: Archive,
}

pub struct Buffer {
    channels: Vec<String>,
    sample_rate: f64,
    capacity: usize,
    evict_chunk: usize,
    record_size: u64,
    path: PathBuf,
    // Holds the temporary archive alive for the buffer's lifetime.
    _temp: Option<tempfile::TempPath>,
    state: RwLock<State>,
}

impl Buffer {
    pub fn new(
        sample_rate: f64,
        channels: Vec<String>,
        config: BufferConfig,
    ) -> Result<Self, AcquisitionError> {
        let (file, path, temp) = match &config.archive_path {
            Some(p) => {
                let file = OpenOptions::new()
                    .create(true)
                    .truncate(true)
                    .write(true)
                    .open(p)?;
                (file, p.clone(), None)
            }
            None => {
                let tmp = tempfile::Builder::new()
                    .prefix("rsvp-buffer-")
                    .suffix(".bin")
                    .tempfile()?;
                let (file, temp_path) = tmp.into_parts();
                (file, temp_path.to_path_buf(), Some(temp_path))
            }
        };
        let capacity = config.capacity.max(1);
        Ok(Buffer {
            record_size: 8 + 4 * channels.len() as u64,
            channels,
            sample_rate,
            capacity,
            evict_chunk: (capacity / 4).clamp(1, INDEX_STRIDE as usize),
            path,
            _temp: temp,
            state: RwLock::new(State {
                times: VecDeque::with_capacity(capacity + 1),
                values: VecDeque::new(),
                window_start: 0,
                total: 0,
                archive: Archive {
                    writer: BufWriter::new(file),
                    flushed: 0,
                    index: Vec::new(),
                },
            }),
        })
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn archive_path(&self) -> &Path {
        &self.path
    }

    /// Total samples committed so far.
    pub fn len(&self) -> u64 {
        self.state.read().expect("buffer lock poisoned").total
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples currently held in memory.
    pub fn window_len(&self) -> usize {
        self.state.read().expect("buffer lock poisoned").times.len()
    }

    pub fn latest_timestamp(&self) -> Option<f64> {
        self.state
            .read()
            .expect("buffer lock poisoned")
            .times
            .back()
            .copied()
    }

    /// Appends a batch of samples. Timestamps must be strictly increasing
    /// and later than anything already stored; offending rows are skipped
    /// and counted in the return value.
    pub fn append_batch<'a, I>(&self, rows: I) -> Result<usize, AcquisitionError>
    where
        I: IntoIterator<Item = (f64, &'a [f32])>,
    {
        let mut state = self.state.write().expect("buffer lock poisoned");
        let mut rejected = 0;
        for (t, values) in rows {
            debug_assert_eq!(values.len(), self.channels.len());
            if state.times.back().is_some_and(|&last| t <= last) || values.len() != self.channels.len() {
                rejected += 1;
                continue;
            }
            let idx = state.total;
            let archive = &mut state.archive;
            if idx % INDEX_STRIDE == 0 {
                archive.index.push((t, idx * self.record_size));
            }
            archive.writer.write_all(&t.to_le_bytes())?;
            for v in values {
                archive.writer.write_all(&v.to_le_bytes())?;
            }
            state.times.push_back(t);
            state.values.extend(values.iter().copied());
            state.total += 1;
        }
        if state.times.len() >= self.capacity + self.evict_chunk {
            state.archive.writer.flush()?;
            state.archive.flushed = state.total;
            let evict = state.times.len() - self.capacity;
            state.times.drain(..evict);
            state.values.drain(..evict * self.channels.len());
            state.window_start += evict as u64;
        }
        Ok(rejected)
    }

    pub fn append(&self, timestamp: f64, values: &[f32]) -> Result<bool, AcquisitionError> {
        Ok(self.append_batch(std::iter::once((timestamp, values)))? == 0)
    }

    /// Flushes the disk log so that every committed sample is on disk.
    pub fn flush(&self) -> Result<(), AcquisitionError> {
        let mut state = self.state.write().expect("buffer lock poisoned");
        state.archive.writer.flush()?;
        state.archive.flushed = state.total;
        Ok(())
    }

    /// All samples with `start <= t < end`, in time order.
    pub fn query(&self, start: f64, end: f64) -> Result<TimeSeriesBlock, AcquisitionError> {
        if !(start <= end) {
            return Err(AcquisitionError::InvalidRange { start, end });
        }
        let n_ch = self.channels.len();
        let mut timestamps = Vec::new();
        let mut values: Vec<f32> = Vec::new();

        // Snapshot the in-memory part and the disk boundary under the lock.
        // Evicted records are flushed and never rewritten, so the disk part
        // can be read after the lock is released.
        let (disk_seek, window_start) = {
            let state = self.state.read().expect("buffer lock poisoned");
            let first_in_window = state.times.front().copied();
            let need_disk = state.window_start > 0 && first_in_window.is_none_or(|t0| start < t0);
            let disk_seek = if need_disk {
                debug_assert!(state.archive.flushed >= state.window_start);
                let pos = state.archive.index.partition_point(|(t, _)| *t <= start);
                Some(state.archive.index[pos.saturating_sub(1)].1)
            } else {
                None
            };
            let lo = state.times.partition_point(|&t| t < start);
            let hi = state.times.partition_point(|&t| t < end);
            if lo < hi {
                timestamps.extend(state.times.range(lo..hi));
                values.extend(state.values.range(lo * n_ch..hi * n_ch));
            }
            (disk_seek, state.window_start)
        };

        if let Some(offset) = disk_seek {
            let (t_disk, v_disk) = self.read_archive(offset, window_start, start, end)?;
            let mut t_all = t_disk;
            t_all.extend(timestamps);
            let mut v_all = v_disk;
            v_all.extend(values);
            timestamps = t_all;
            values = v_all;
        }

        let rows = timestamps.len();
        let data = ndarray::Array2::from_shape_fn((n_ch, rows), |(c, i)| values[i * n_ch + c] as f64);
        Ok(TimeSeriesBlock {
            sample_rate: self.sample_rate,
            channels: self.channels.clone(),
            timestamps,
            data,
        })
    }

    fn read_archive(
        &self,
        offset: u64,
        stop_index: u64,
        start: f64,
        end: f64,
    ) -> io::Result<(Vec<f64>, Vec<f32>)> {
        let mut file = BufReader::new(File::open(&self.path)?);
        file.seek(SeekFrom::Start(offset))?;
        let mut idx = offset / self.record_size;
        let mut record = vec![0u8; self.record_size as usize];
        let mut times = Vec::new();
        let mut values = Vec::new();
        while idx < stop_index {
            file.read_exact(&mut record)?;
            idx += 1;
            let t = f64::from_le_bytes(record[..8].try_into().unwrap());
            if t >= end {
                break;
            }
            if t >= start {
                times.push(t);
                values.extend(
                    record[8..]
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes(b.try_into().unwrap())),
                );
            }
        }
        Ok((times, values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(n: usize, capacity: usize) -> Buffer {
        let buf = Buffer::new(
            100.0,
            vec!["a".into(), "b".into()],
            BufferConfig {
                capacity,
                archive_path: None,
            },
        )
        .unwrap();
        for i in 0..n {
            let v = [i as f32, -(i as f32)];
            assert!(buf.append(i as f64 / 100.0, &v).unwrap());
        }
        buf
    }

    #[test]
    fn query_memory_only() {
        let buf = filled(50, 1000);
        let block = buf.query(0.1, 0.2).unwrap();
        assert_eq!(block.len(), 10);
        assert_eq!(block.channel(0)[0], 10.0);
        assert_eq!(block.channel(1)[9], -19.0);
    }

    #[test]
    fn query_spans_disk_and_memory() {
        let buf = filled(5000, 100);
        assert!(buf.window_len() < 200);
        let block = buf.query(0.0, 50.0).unwrap();
        assert_eq!(block.len(), 5000);
        for (i, v) in block.channel(0).iter().enumerate() {
            assert_eq!(*v, i as f64);
        }
        let mid = buf.query(12.345, 30.0).unwrap();
        assert_eq!(mid.channel(0)[0], 1235.0);
        assert_eq!(mid.len(), 3000 - 1235);
    }

    #[test]
    fn empty_and_invalid_ranges() {
        let buf = filled(10, 100);
        assert_eq!(buf.query(0.0, 0.0).unwrap().len(), 0);
        assert!(matches!(
            buf.query(5.0, 3.0),
            Err(AcquisitionError::InvalidRange { .. })
        ));
        assert_eq!(buf.query(100.0, 200.0).unwrap().len(), 0);
    }

    #[test]
    fn rejects_out_of_order_samples() {
        let buf = filled(10, 100);
        assert!(!buf.append(0.05, &[0.0, 0.0]).unwrap());
        assert_eq!(buf.len(), 10);
    }

    #[test]
    fn archive_is_fixed_record_log() {
        let buf = filled(3000, 64);
        buf.flush().unwrap();
        let bytes = std::fs::read(buf.archive_path()).unwrap();
        assert_eq!(bytes.len(), 3000 * 16);
        let t = f64::from_le_bytes(bytes[16 * 2999..16 * 2999 + 8].try_into().unwrap());
        assert_eq!(t, 29.99);
    }
}
