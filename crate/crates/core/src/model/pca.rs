//! Channel-wise PCA.
//!
//! Each channel gets its own projection fitted on that channel's trials
//! (`T × N`). Features are the per-channel projections concatenated in
//! channel order.

use nalgebra::DMatrix;
use ndarray::{s, Axis};
use serde::{Deserialize, Serialize};

use super::{EpochTensor, ModelError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelProjection {
    /// Mean trial, length `N`.
    pub mean: Vec<f64>,
    /// `M × N` matrix, one orthonormal component per row.
    pub components: Vec<Vec<f64>>,
    /// Fraction of the channel's variance the kept components explain.
    pub explained: f64,
    /// Set when the channel had no variance; it then contributes one
    /// arbitrary unit component.
    pub degenerate: bool,
}

impl ChannelProjection {
    pub fn dim(&self) -> usize {
        self.components.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelPca {
    pub retained: f64,
    pub channels: Vec<ChannelProjection>,
}

impl ChannelPca {
    /// Keeps, per channel, the fewest leading components whose cumulative
    /// explained variance reaches `retained`, never more than the rank of
    /// the channel's data.
    pub fn fit(x: &EpochTensor, retained: f64) -> Result<Self, ModelError> {
        if !(retained > 0.0 && retained <= 1.0) {
            return Err(ModelError::InvalidRetained(retained));
        }
        let t = x.trials();
        if t < 2 {
            return Err(ModelError::TooFewTrials { needed: 2, got: t });
        }
        let n = x.samples();
        let channels = (0..x.channels())
            .map(|c| {
                let view = x.data.slice(s![.., c, ..]);
                let mean: Vec<f64> = view.mean_axis(Axis(0)).expect("at least two trials").to_vec();
                let centered = DMatrix::from_fn(t, n, |i, j| view[[i, j]] - mean[j]);
                let cov = centered.transpose() * &centered / (t as f64 - 1.0);
                fit_channel(cov, mean, retained, &view)
            })
            .collect();
        Ok(ChannelPca { retained, channels })
    }

    /// Feature dimension `d = Σ M_c`.
    pub fn dim(&self) -> usize {
        self.channels.iter().map(ChannelProjection::dim).sum()
    }

    pub fn degenerate_channels(&self) -> Vec<usize> {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, p)| p.degenerate)
            .map(|(i, _)| i)
            .collect()
    }

    /// Features, one row per trial.
    pub fn transform(&self, x: &EpochTensor) -> Result<DMatrix<f64>, ModelError> {
        if x.channels() != self.channels.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.channels.len(),
                actual: x.channels(),
            });
        }
        let n = self.channels.first().map_or(0, |p| p.mean.len());
        if x.samples() != n {
            return Err(ModelError::DimensionMismatch {
                expected: n,
                actual: x.samples(),
            });
        }
        let mut out = DMatrix::zeros(x.trials(), self.dim());
        let mut col = 0;
        for (c, proj) in self.channels.iter().enumerate() {
            for comp in &proj.components {
                for trial in 0..x.trials() {
                    let mut acc = 0.0;
                    for (j, w) in comp.iter().enumerate() {
                        acc += w * (x.data[[trial, c, j]] - proj.mean[j]);
                    }
                    out[(trial, col)] = acc;
                }
                col += 1;
            }
        }
        Ok(out)
    }
}

fn fit_channel(
    cov: DMatrix<f64>,
    mean: Vec<f64>,
    retained: f64,
    raw: &ndarray::ArrayView2<'_, f64>,
) -> ChannelProjection {
    let n = mean.len();
    let total: f64 = cov.trace();
    let scale = raw.iter().map(|v| v * v).sum::<f64>() / raw.len().max(1) as f64;
    if !(total > 1e-24 * scale.max(1.0)) {
        let mut unit = vec![0.0; n];
        if n > 0 {
            unit[0] = 1.0;
        }
        return ChannelProjection {
            mean,
            components: vec![unit],
            explained: 0.0,
            degenerate: true,
        };
    }

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let largest = values[0];
    let rank = values.iter().filter(|&&v| v > largest * 1e-12).count().max(1);

    let target = retained * total * (1.0 - 1e-12);
    let mut cumulative = 0.0;
    let mut keep = 0;
    while keep < rank {
        cumulative += values[keep];
        keep += 1;
        if cumulative >= target {
            break;
        }
    }

    let components = order[..keep]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // Fix the sign so that the largest-magnitude entry is positive.
            let pivot = v
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(1.0);
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    ChannelProjection {
        mean,
        components,
        explained: cumulative / total,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EpochWindow;
    use ndarray::Array3;

    fn tensor(data: Array3<f64>) -> EpochTensor {
        EpochTensor {
            data,
            window: EpochWindow::default(),
            sample_rate: 100.0,
        }
    }

    #[test]
    fn rank_one_channels_keep_one_component() {
        let x = tensor(Array3::from_shape_fn((8, 2, 20), |(t, c, j)| {
            (1.0 + t as f64) * ((j as f64 * 0.3 + c as f64).sin())
        }));
        let pca = ChannelPca::fit(&x, 0.95).unwrap();
        assert_eq!(pca.channels.iter().map(|p| p.dim()).collect::<Vec<_>>(), vec![1, 1]);
    }

    #[test]
    fn constant_channel_is_flagged() {
        let x = tensor(Array3::from_shape_fn((5, 2, 10), |(t, c, j)| {
            if c == 0 { 3.0 } else { (t * j) as f64 }
        }));
        let pca = ChannelPca::fit(&x, 0.95).unwrap();
        assert_eq!(pca.degenerate_channels(), vec![0]);
        assert_eq!(pca.channels[0].dim(), 1);
    }

    #[test]
    fn rejects_bad_arguments() {
        let x = tensor(Array3::zeros((1, 1, 4)));
        assert!(matches!(ChannelPca::fit(&x, 0.9), Err(ModelError::TooFewTrials { .. })));
        let x = tensor(Array3::zeros((3, 1, 4)));
        assert!(matches!(ChannelPca::fit(&x, 1.5), Err(ModelError::InvalidRetained(_))));
    }
}
