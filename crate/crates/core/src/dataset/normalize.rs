use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Per-channel z-score statistics (population standard deviation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose spread was zero; their std is forced to 1.
    #[serde(default)]
    pub degenerate: Vec<bool>,
}

const DEGENERATE_STD: f64 = 1e-12;

pub fn compute_normalization(train: &[Matrix<f64>]) -> Result<NormalizationStats> {
    let Some(first) = train.first() else {
        return invalid("normalization needs a nonempty train set");
    };
    let channels = first.cols();
    if train.iter().any(|m| m.cols() != channels) {
        return shape("train sequences disagree on channel count");
    }
    let count: usize = train.iter().map(Matrix::rows).sum();
    if count == 0 {
        return invalid("train set has no frames");
    }
    let mut mean = vec![0.0; channels];
    for m in train {
        for (acc, s) in mean.iter_mut().zip(m.column_sums()) {
            *acc += s;
        }
    }
    mean.iter_mut().for_each(|v| *v /= count as f64);
    let mut var = vec![0.0; channels];
    for m in train {
        for i in 0..m.rows() {
            for (j, v) in m.row(i).iter().enumerate() {
                var[j] += (v - mean[j]).powi(2);
            }
        }
    }
    let mut std = Vec::with_capacity(channels);
    let mut degenerate = Vec::with_capacity(channels);
    for (j, v) in var.iter().enumerate() {
        let s = (v / count as f64).sqrt();
        if s < DEGENERATE_STD {
            warn!("normalization: channel {j} is constant; using std = 1");
            std.push(1.0);
            degenerate.push(true);
        } else {
            std.push(s);
            degenerate.push(false);
        }
    }
    Ok(NormalizationStats {
        mean,
        std,
        degenerate,
    })
}

impl NormalizationStats {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
            degenerate: vec![false; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, m: &Matrix<impl Scalar>) -> Result<()> {
        if m.cols() != self.channels() {
            return shape(format!(
                "stats have {} channels, data has {}",
                self.channels(),
                m.cols()
            ));
        }
        Ok(())
    }

    pub fn apply<T: Scalar>(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        self.check(m)?;
        Ok(Matrix::from_fn(m.rows(), m.cols(), |i, j| {
            (m.get(i, j) - T::c(self.mean[j])) / T::c(self.std[j])
        }))
    }

    pub fn invert<T: Scalar>(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        self.check(m)?;
        Ok(Matrix::from_fn(m.rows(), m.cols(), |i, j| {
            m.get(i, j) * T::c(self.std[j]) + T::c(self.mean[j])
        }))
    }
}

/// Affine scaling of joint positions before they enter the denoiser:
/// `(p - offset) / scale` with one offset per axis and a shared scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseScaling {
    pub offset: [f64; 3],
    pub scale: f64,
}

impl Default for PoseScaling {
    fn default() -> Self {
        Self {
            offset: [0.0; 3],
            scale: 1.0,
        }
    }
}

impl PoseScaling {
    pub fn fit(poses: &[&Matrix<f64>]) -> Self {
        let mut sum = [0.0; 3];
        let mut n = 0usize;
        for p in poses {
            for (k, v) in p.as_slice().iter().enumerate() {
                sum[k % 3] += v;
            }
            n += p.as_slice().len() / 3;
        }
        if n == 0 {
            return Self::default();
        }
        let offset = sum.map(|s| s / n as f64);
        let mut sq = 0.0;
        for p in poses {
            for (k, v) in p.as_slice().iter().enumerate() {
                sq += (v - offset[k % 3]).powi(2);
            }
        }
        let scale = (sq / (3 * n) as f64).sqrt();
        Self {
            offset,
            scale: if scale > DEGENERATE_STD { scale } else { 1.0 },
        }
    }

    pub fn apply<T: Scalar>(&self, pose: &Matrix<T>) -> Matrix<T> {
        Matrix::from_fn(pose.rows(), pose.cols(), |i, j| {
            (pose.get(i, j) - T::c(self.offset[j % 3])) / T::c(self.scale)
        })
    }
}
