//! Time-stamped multichannel sample blocks.

use ndarray::{Array2, ArrayView1, Axis};

/// A run of samples as returned by a time-range query.
///
/// Samples are stored channel-major (`channels × samples`) because every
/// consumer downstream filters or epochs per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesBlock {
    pub sample_rate: f64,
    pub channels: Vec<String>,
    pub timestamps: Vec<f64>,
    pub data: Array2<f64>,
}

impl TimeSeriesBlock {
    pub fn empty(sample_rate: f64, channels: Vec<String>) -> Self {
        let n = channels.len();
        TimeSeriesBlock {
            sample_rate,
            channels,
            timestamps: Vec::new(),
            data: Array2::zeros((n, 0)),
        }
    }

    /// Builds a block from `(timestamp, values)` rows.
    pub fn from_rows<'a, I>(sample_rate: f64, channels: Vec<String>, rows: I) -> Self
    where
        I: IntoIterator<Item = (f64, &'a [f64])>,
    {
        let n_ch = channels.len();
        let mut timestamps = Vec::new();
        let mut flat = Vec::new();
        for (t, values) in rows {
            assert_eq!(values.len(), n_ch, "row width does not match channel count");
            timestamps.push(t);
            flat.extend_from_slice(values);
        }
        let n = timestamps.len();
        let data = Array2::from_shape_vec((n, n_ch), flat)
            .expect("shape checked above")
            .reversed_axes()
            .as_standard_layout()
            .to_owned();
        TimeSeriesBlock {
            sample_rate,
            channels,
            timestamps,
            data,
        }
    }

    /// Regularly sampled block starting at `start` seconds.
    pub fn regular(sample_rate: f64, channels: Vec<String>, start: f64, data: Array2<f64>) -> Self {
        assert_eq!(data.nrows(), channels.len());
        let timestamps = (0..data.ncols())
            .map(|i| start + i as f64 / sample_rate)
            .collect();
        TimeSeriesBlock {
            sample_rate,
            channels,
            timestamps,
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Timestamp of the first sample, if any.
    pub fn start(&self) -> Option<f64> {
        self.timestamps.first().copied()
    }

    /// Time just past the last sample.
    pub fn end(&self) -> Option<f64> {
        self.timestamps.last().map(|t| t + 1.0 / self.sample_rate)
    }

    pub fn channel(&self, index: usize) -> ArrayView1<'_, f64> {
        self.data.row(index)
    }

    /// Sample `i` across all channels.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.column(i).to_vec()
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, Vec<f64>)> + '_ {
        self.timestamps
            .iter()
            .zip(self.data.axis_iter(Axis(1)))
            .map(|(t, col)| (*t, col.to_vec()))
    }

    /// Same timestamps, new sample values.
    pub fn with_data(&self, data: Array2<f64>) -> Self {
        assert_eq!(data.dim(), self.data.dim(), "replacement data changes shape");
        TimeSeriesBlock {
            sample_rate: self.sample_rate,
            channels: self.channels.clone(),
            timestamps: self.timestamps.clone(),
            data,
        }
    }

    /// Keeps every `factor`-th sample (and its timestamp).
    pub fn decimated(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        let keep: Vec<usize> = (0..self.len()).step_by(factor).collect();
        TimeSeriesBlock {
            sample_rate: self.sample_rate / factor as f64,
            channels: self.channels.clone(),
            timestamps: keep.iter().map(|&i| self.timestamps[i]).collect(),
            data: self.data.select(Axis(1), &keep),
        }
    }

    /// Whether consecutive timestamps are spaced `1/sample_rate` apart.
    pub fn is_regular(&self, tolerance: f64) -> bool {
        let dt = 1.0 / self.sample_rate;
        self.timestamps
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= tolerance)
    }
}
