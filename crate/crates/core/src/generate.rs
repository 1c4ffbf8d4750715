//! Full-length camera generation: condition windows every `stride` frames,
//! sample each on its own noise stream, denormalize and stitch.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{NormalizationStats, PoseScaling, PoseSequence};
use crate::diffusion::{sample, window_rng, Conditions, DiffusionSchedule, SamplerConfig};
use crate::error::{invalid, shape, Result};
use crate::matrix::Matrix;
use crate::metrics::CAMERA_CHANNELS;
use crate::model::{Checkpoint, Denoiser};
use crate::postprocess::{stitch_windows, WindowSet, WINDOW_STRIDE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationOptions {
    pub sampler: SamplerConfig,
    pub stride: usize,
    pub seed: u64,
    /// Condition on the dance; `false` uses the null pose token.
    pub use_pose: bool,
    /// Condition on the music; `false` uses the null music token.
    pub use_music: bool,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            stride: WINDOW_STRIDE,
            seed: 0,
            use_pose: true,
            use_music: true,
        }
    }
}

/// A trained model with the statistics needed to condition and denormalize.
#[derive(Clone, Debug)]
pub struct Generator {
    pub model: Denoiser<f32>,
    pub stats: NormalizationStats,
    pub pose_scaling: PoseScaling,
    pub schedule: DiffusionSchedule,
}

fn pad_rows(m: &Matrix<f64>, rows: usize) -> Matrix<f64> {
    let last = m.rows() - 1;
    Matrix::from_fn(rows, m.cols(), |i, j| m.get(i.min(last), j))
}

impl Generator {
    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        Ok(Self {
            model: c.model()?,
            stats: c.header.stats.clone(),
            pose_scaling: c.header.pose_scaling.clone(),
            schedule: DiffusionSchedule::from_config(&c.header.schedule)?,
        })
    }

    pub fn window_frames(&self) -> usize {
        self.model.config.window_frames
    }

    /// Sample every window, in physical MMD units. Inputs shorter than the
    /// covered length are padded by repeating their last frame.
    pub fn sample_windows(&self, pose: &PoseSequence, music: &Matrix<f64>, opts: &GenerationOptions) -> Result<WindowSet> {
        let n = pose.n_frames();
        if music.rows() != n {
            return shape(format!("{} music frames for {n} pose frames", music.rows()));
        }
        let w = self.window_frames();
        if opts.stride == 0 || opts.stride > w {
            return invalid(format!("stride {} must be in 1..={w}", opts.stride));
        }
        let n_windows = 1 + n.saturating_sub(w).div_ceil(opts.stride);
        let covered = (n_windows - 1) * opts.stride + w;
        let pose_cond: Matrix<f32> = pad_rows(&self.pose_scaling.apply(pose.frames()), covered).cast();
        let music: Matrix<f32> = pad_rows(music, covered).cast();
        let windows = (0..n_windows)
            .into_par_iter()
            .map(|k| {
                let start = k * opts.stride;
                let p = pose_cond.slice_rows(start, start + w);
                let m = music.slice_rows(start, start + w);
                let cond = Conditions {
                    pose: opts.use_pose.then_some(&p),
                    music: opts.use_music.then_some(&m),
                };
                let mut rng = window_rng(opts.seed, k as u64);
                let x = sample(&self.model, cond, &self.schedule, &opts.sampler, (w, CAMERA_CHANNELS), &mut rng)?;
                Ok((start, self.stats.invert(&x.cast::<f64>())?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WindowSet { stride: opts.stride, windows })
    }

    /// Generated `N x 8` camera for the whole sequence.
    pub fn generate(&self, pose: &PoseSequence, music: &Matrix<f64>, opts: &GenerationOptions) -> Result<Matrix<f64>> {
        let ws = self.sample_windows(pose, music, opts)?;
        Ok(stitch_windows(&ws)?.slice_rows(0, pose.n_frames()))
    }
}
