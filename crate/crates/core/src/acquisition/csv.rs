//! The `raw_data.csv` session format.
//!
//! ```text
//! daq_type,<device name>
//! sample_rate,<rate>
//! timestamp,<ch1>,...,<chN>,TRG
//! 0.000000,1.234567,...,0
//! ```
//!
//! Values are printed with six fractional digits. The `TRG` column holds
//! the label of a trigger whose onset falls on that sample, or `0`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter};
use std::path::Path;

use crate::device::DeviceSpec;
use crate::series::TimeSeriesBlock;
use crate::trigger::TriggerRecord;

use super::{AcquisitionError, Processor};

pub const TRIGGER_COLUMN: &str = "TRG";

/// Streaming writer for `raw_data.csv`; also usable as a client processor.
pub struct RawCsvWriter {
    writer: csv::Writer<BufWriter<File>>,
    channel_count: usize,
    sample_rate: f64,
    labels: HashMap<i64, String>,
    rows: usize,
    field: String,
}

impl RawCsvWriter {
    pub fn create(path: &Path, spec: &DeviceSpec) -> Result<Self, AcquisitionError> {
        let file = BufWriter::new(File::create(path)?);
        let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(file);
        writer.write_record(["daq_type", spec.name.as_str()]).map_err(csv_io)?;
        writer
            .write_record(["sample_rate", spec.sample_rate.to_string().as_str()])
            .map_err(csv_io)?;
        let mut header = vec!["timestamp".to_string()];
        header.extend(spec.channels.iter().cloned());
        header.push(TRIGGER_COLUMN.into());
        writer.write_record(&header).map_err(csv_io)?;
        Ok(RawCsvWriter {
            writer,
            channel_count: spec.channel_count(),
            sample_rate: spec.sample_rate,
            labels: HashMap::new(),
            rows: 0,
            field: String::new(),
        })
    }

    /// Registers triggers whose labels should be written into the TRG column.
    /// Only samples written after this call are affected.
    pub fn with_triggers(mut self, triggers: &[TriggerRecord]) -> Self {
        for t in triggers {
            let idx = (t.timestamp * self.sample_rate).round() as i64;
            self.labels.entry(idx).or_insert_with(|| t.label.clone());
        }
        self
    }

    pub fn write_row<T: Copy + Into<f64>>(
        &mut self,
        timestamp: f64,
        values: &[T],
    ) -> Result<(), AcquisitionError> {
        if values.len() != self.channel_count {
            return Err(AcquisitionError::Io(io::Error::new(
                io::ErrorKind::InvalidInput,
                "row width does not match the channel count",
            )));
        }
        use std::fmt::Write;
        let idx = (timestamp * self.sample_rate).round() as i64;
        self.field.clear();
        write!(self.field, "{timestamp:.6}").unwrap();
        self.writer.write_field(&self.field).map_err(csv_io)?;
        for v in values {
            self.field.clear();
            write!(self.field, "{:.6}", (*v).into()).unwrap();
            self.writer.write_field(&self.field).map_err(csv_io)?;
        }
        let label = self.labels.get(&idx).map(String::as_str).unwrap_or("0");
        self.writer.write_field(label).map_err(csv_io)?;
        self.writer.write_record(None::<&[u8]>).map_err(csv_io)?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows_written(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self) -> Result<usize, AcquisitionError> {
        self.writer.flush()?;
        Ok(self.rows)
    }
}

impl Processor for RawCsvWriter {
    fn process(&mut self, timestamp: f64, values: &[f32]) -> Result<(), AcquisitionError> {
        self.write_row(timestamp, values)
    }

    fn close(&mut self) -> Result<(), AcquisitionError> {
        self.writer.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> AcquisitionError {
    AcquisitionError::Io(io::Error::other(e))
}

/// Writes a complete block. Returns the number of data rows.
pub fn write_raw_csv(
    path: &Path,
    spec: &DeviceSpec,
    block: &TimeSeriesBlock,
    triggers: &[TriggerRecord],
) -> Result<usize, AcquisitionError> {
    let mut writer = RawCsvWriter::create(path, spec)?.with_triggers(triggers);
    let mut row = vec![0.0f64; block.channel_count()];
    for (i, &t) in block.timestamps.iter().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = block.data[[c, i]];
        }
        writer.write_row(t, &row)?;
    }
    writer.finish()
}

/// Contents of a `raw_data.csv` file.
#[derive(Clone, Debug)]
pub struct RawRecording {
    pub device: DeviceSpec,
    pub block: TimeSeriesBlock,
    pub trigger_labels: Vec<String>,
}

pub fn read_raw_csv(path: &Path) -> Result<RawRecording, AcquisitionError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(File::open(path)?);
    let mut records = reader.records();
    let mut next = |expect: &str| -> Result<(u64, csv::StringRecord), AcquisitionError> {
        match records.next() {
            Some(Ok(r)) => Ok((r.position().map(|p| p.line()).unwrap_or(0), r)),
            Some(Err(e)) => Err(AcquisitionError::MalformedCsv {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                reason: e.to_string(),
            }),
            None => Err(AcquisitionError::MalformedCsv {
                line: 0,
                reason: format!("missing {expect} line"),
            }),
        }
    };
    let malformed = |line: u64, reason: &str| AcquisitionError::MalformedCsv {
        line,
        reason: reason.to_string(),
    };

    let (line, daq) = next("daq_type")?;
    if daq.len() != 2 || &daq[0] != "daq_type" {
        return Err(malformed(line, "expected 'daq_type,<name>'"));
    }
    let name = daq[1].to_string();
    let (line, rate) = next("sample_rate")?;
    if rate.len() != 2 || &rate[0] != "sample_rate" {
        return Err(malformed(line, "expected 'sample_rate,<rate>'"));
    }
    let sample_rate: f64 = rate[1]
        .parse()
        .map_err(|_| malformed(line, "sample rate is not a number"))?;
    let (line, header) = next("header")?;
    let width = header.len();
    if width < 3 || &header[0] != "timestamp" || &header[width - 1] != TRIGGER_COLUMN {
        return Err(malformed(line, "expected 'timestamp,<channels>,TRG' header"));
    }
    let channels: Vec<String> = header.iter().skip(1).take(width - 2).map(String::from).collect();
    let device = DeviceSpec::new(name, sample_rate, channels.clone())
        .map_err(|e| malformed(line, &e.to_string()))?;

    let n_ch = channels.len();
    let mut timestamps = Vec::new();
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| AcquisitionError::MalformedCsv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != width {
            return Err(malformed(
                line,
                &format!("expected {width} columns, found {}", rec.len()),
            ));
        }
        let t: f64 = rec[0]
            .parse()
            .map_err(|_| malformed(line, "timestamp is not a number"))?;
        if timestamps.last().is_some_and(|&last| t <= last) {
            return Err(malformed(line, "timestamps must increase"));
        }
        timestamps.push(t);
        for field in rec.iter().skip(1).take(n_ch) {
            let v: f64 = field
                .parse()
                .map_err(|_| malformed(line, "sample value is not a number"))?;
            flat.push(v);
        }
        labels.push(rec[width - 1].to_string());
    }
    let n = timestamps.len();
    let data = ndarray::Array2::from_shape_fn((n_ch, n), |(c, i)| flat[i * n_ch + c]);
    Ok(RawRecording {
        device,
        block: TimeSeriesBlock {
            sample_rate,
            channels,
            timestamps,
            data,
        },
        trigger_labels: labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trigger::Targetness;

    fn spec(n: usize) -> DeviceSpec {
        DeviceSpec::new("SIM", 300.0, (0..n).map(|i| format!("c{i}")).collect()).unwrap()
    }

    #[test]
    fn structure_and_trigger_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw_data.csv");
        let data = ndarray::Array2::from_shape_fn((3, 10), |(c, i)| (c * 100 + i) as f64 + 0.25);
        let block = TimeSeriesBlock::regular(300.0, spec(3).channels, 0.0, data);
        let triggers = [TriggerRecord::new("H", Targetness::Target, 4.0 / 300.0)];
        let n = write_raw_csv(&path, &spec(3), &block, &triggers).unwrap();
        assert_eq!(n, 10);
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 13);
        assert_eq!(lines[0], "daq_type,SIM");
        assert_eq!(lines[1], "sample_rate,300");
        assert_eq!(lines[2], "timestamp,c0,c1,c2,TRG");
        assert_eq!(lines[3], "0.000000,0.250000,100.250000,200.250000,0");
        assert!(lines[7].ends_with(",H"));
    }

    #[test]
    fn empty_file_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw_data.csv");
        let block = TimeSeriesBlock::empty(300.0, spec(2).channels);
        assert_eq!(write_raw_csv(&path, &spec(2), &block, &[]).unwrap(), 0);
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
        let rec = read_raw_csv(&path).unwrap();
        assert!(rec.block.is_empty());
        assert_eq!(rec.device, spec(2));
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "daq_type,SIM\nsample_rate,300\ntimestamp,a,b,TRG\n0.0,1,2,0\n0.1,1,0\n",
        )
        .unwrap();
        match read_raw_csv(&path) {
            Err(AcquisitionError::MalformedCsv { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }
}
