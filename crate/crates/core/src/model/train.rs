//! Training: window extraction, condition dropout and momentum updates.
//!
//! Every random draw of step `s` comes from the ChaCha8 stream `2 s` of the
//! training seed, and the visiting order of epoch `e` from stream `2 e + 1`,
//! so a run resumed from a checkpoint replays the uninterrupted run exactly.

use std::io::Write;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::denoiser::{Denoiser, Params};
use crate::dataset::{NormalizationStats, PoseScaling, PoseSequence};
use crate::diffusion::sampler::standard_normal;
use crate::diffusion::{forward_noise, window_rng, DiffusionSchedule, ScheduleConfig};
use crate::error::{invalid, Error, Result};
use crate::geometry::{camera_masks, JointMask};
use crate::matrix::Matrix;
use crate::objectives::{grad_total_loss, LossContext, LossReport, LossWeights};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Global gradient-norm cap; 0 disables clipping.
    pub clip_norm: f64,
    pub weights: LossWeights,
    pub schedule: ScheduleConfig,
    pub seed: u64,
    /// Frames between consecutive training windows.
    pub window_stride: usize,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 1,
            learning_rate: 0.05,
            momentum: 0.9,
            clip_norm: 1.0,
            weights: LossWeights::default(),
            schedule: ScheduleConfig::default(),
            seed: 0,
            window_stride: 15,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 || self.window_stride == 0 {
            return bad("batch_size and window_stride must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate {} must be finite and >= 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} must be in [0, 1)", self.momentum));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm >= 0.0) {
            return bad(format!("clip_norm {} must be finite and >= 0", self.clip_norm));
        }
        if self.schedule.steps == 0 {
            return bad("schedule needs T >= 1".into());
        }
        self.weights.validate()
    }
}

/// One aligned sequence in physical units.
#[derive(Clone, Debug)]
pub struct SequenceData {
    pub pose: PoseSequence,
    /// `N x 8` MMD camera channels.
    pub camera: Matrix<f64>,
    /// `N x F` music features.
    pub music: Matrix<f64>,
}

/// A training window: normalized camera target, pose in physical units for
/// the body-attention loss, the scaled pose condition, music and the ground
/// truth joint mask.
#[derive(Clone, Debug)]
pub struct TrainingWindow<T> {
    pub camera: Matrix<T>,
    pub pose: Matrix<T>,
    pub pose_cond: Matrix<T>,
    pub music: Matrix<T>,
    pub mask: JointMask,
}

impl<T: Scalar> TrainingWindow<T> {
    pub fn cast<U: Scalar>(&self) -> TrainingWindow<U> {
        TrainingWindow {
            camera: self.camera.cast(),
            pose: self.pose.cast(),
            pose_cond: self.pose_cond.cast(),
            music: self.music.cast(),
            mask: self.mask.clone(),
        }
    }
}

/// Cut sequences into `frames`-long windows every `stride` frames.
pub fn extract_windows(
    sequences: &[SequenceData],
    frames: usize,
    stride: usize,
    stats: &NormalizationStats,
    scaling: &PoseScaling,
) -> Result<Vec<TrainingWindow<f64>>> {
    if stride == 0 || frames == 0 {
        return invalid("window length and stride must be positive");
    }
    let mut out = Vec::new();
    for (si, seq) in sequences.iter().enumerate() {
        let n = seq.pose.n_frames();
        if seq.camera.rows() != n || seq.music.rows() != n {
            return Err(Error::Shape(format!("sequence {si}: streams disagree on length")));
        }
        if n < frames {
            warn!("sequence {si} has {n} frames, shorter than a {frames}-frame window; skipped");
            continue;
        }
        let mask = camera_masks(&seq.pose, &seq.camera)?;
        let camera = stats.apply(&seq.camera)?;
        let pose_cond = scaling.apply(seq.pose.frames());
        let mut start = 0;
        while start + frames <= n {
            let end = start + frames;
            out.push(TrainingWindow {
                camera: camera.slice_rows(start, end),
                pose: seq.pose.frames().slice_rows(start, end),
                pose_cond: pose_cond.slice_rows(start, end),
                music: seq.music.slice_rows(start, end),
                mask: mask.slice_frames(start, end),
            });
            start += stride;
        }
    }
    Ok(out)
}

/// A noised training example drawn for one step.
#[derive(Clone, Debug)]
pub struct Example<T> {
    pub window: usize,
    pub t: usize,
    pub x_t: Matrix<T>,
    pub use_pose: bool,
    pub use_music: bool,
}

#[derive(Clone, Debug)]
pub struct Trainer<T> {
    pub model: Denoiser<T>,
    pub velocity: Params<T>,
    pub config: TrainConfig,
    pub stats: NormalizationStats,
    pub pose_scaling: PoseScaling,
    pub step: usize,
    schedule: DiffusionSchedule,
    order: Option<(usize, Vec<usize>)>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Denoiser<T>, config: TrainConfig, stats: NormalizationStats, pose_scaling: PoseScaling) -> Result<Self> {
        config.validate()?;
        let schedule = DiffusionSchedule::from_config(&config.schedule)?;
        let velocity = Params::zeros(&model.config);
        Ok(Self {
            model,
            velocity,
            config,
            stats,
            pose_scaling,
            step: 0,
            schedule,
            order: None,
        })
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    fn step_rng(&self, step: usize) -> ChaCha8Rng {
        window_rng(self.config.seed, 2 * step as u64)
    }

    /// Window visited at batch slot `slot` (`step * batch_size + element`).
    fn window_for_slot(&mut self, slot: usize, n_windows: usize) -> usize {
        let epoch = slot / n_windows;
        if self.order.as_ref().is_none_or(|(e, _)| *e != epoch) {
            let mut order: Vec<usize> = (0..n_windows).collect();
            order.shuffle(&mut window_rng(self.config.seed, 2 * epoch as u64 + 1));
            self.order = Some((epoch, order));
        }
        self.order.as_ref().expect("set above").1[slot % n_windows]
    }

    /// Draw the examples of the current step.
    pub fn draw_examples(&mut self, windows: &[TrainingWindow<T>]) -> Vec<Example<T>> {
        let mut rng = self.step_rng(self.step);
        let d = self.model.config.dropout;
        let mut out = Vec::with_capacity(self.config.batch_size);
        for b in 0..self.config.batch_size {
            let slot = self.step * self.config.batch_size + b;
            let window = self.window_for_slot(slot, windows.len());
            let t = rng.random_range(1..=self.schedule.steps());
            let u: f64 = rng.random();
            let (use_pose, use_music) = if u < d.pose_only {
                (false, true)
            } else if u < d.pose_only + d.music_only {
                (true, false)
            } else if u < d.pose_only + d.music_only + d.both {
                (false, false)
            } else {
                (true, true)
            };
            let x0 = &windows[window].camera;
            let noise = standard_normal(&mut rng, x0.rows(), x0.cols());
            let x_t = forward_noise(&self.schedule, x0, t, &noise).expect("t drawn within range");
            out.push(Example {
                window,
                t,
                x_t,
                use_pose,
                use_music,
            });
        }
        out
    }

    /// Loss of one example and the gradient of its total with respect to
    /// every parameter.
    pub fn loss_and_grad(&self, window: &TrainingWindow<T>, ex: &Example<T>) -> Result<(LossReport, Params<T>)> {
        let pose = ex.use_pose.then_some(&window.pose_cond);
        let music = ex.use_music.then_some(&window.music);
        let (x_hat, cache) = self.model.forward(&ex.x_t, ex.t, pose, music)?;
        let ctx = LossContext {
            pose: &window.pose,
            mask: &window.mask,
            stats: &self.stats,
        };
        let (report, d_out) = grad_total_loss(&window.camera, &x_hat, ctx, &self.config.weights)?;
        let mut grad = Params::zeros(&self.model.config);
        self.model.backward(&cache, &d_out, &mut grad);
        Ok((report, grad))
    }

    /// One optimizer update on the current step's batch.
    pub fn train_step(&mut self, windows: &[TrainingWindow<T>]) -> Result<LossReport> {
        if windows.is_empty() {
            return invalid("training needs at least one window");
        }
        let examples = self.draw_examples(windows);
        let mut total = Params::zeros(&self.model.config);
        let mut sum = LossReport::default();
        for (b, ex) in examples.iter().enumerate() {
            let (r, g) = self.loss_and_grad(&windows[ex.window], ex)?;
            if !r.is_finite() || !g.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at step {}, batch element {b} (window {})",
                    self.step, ex.window
                )));
            }
            total.add_scaled(T::one(), &g);
            sum.rec += r.rec;
            sum.vel += r.vel;
            sum.acc += r.acc;
            sum.ba += r.ba;
            sum.total += r.total;
        }
        let inv = 1.0 / examples.len() as f64;
        total.scale(T::c(inv));
        let report = LossReport {
            rec: sum.rec * inv,
            vel: sum.vel * inv,
            acc: sum.acc * inv,
            ba: sum.ba * inv,
            total: sum.total * inv,
        };
        if self.config.clip_norm > 0.0 {
            let norm = total.squared_norm().sqrt();
            let clip = T::c(self.config.clip_norm);
            if norm > clip {
                total.scale(clip / norm);
            }
        }
        self.velocity.scale(T::c(self.config.momentum));
        self.velocity.add_scaled(T::one(), &total);
        self.model.params.add_scaled(T::c(-self.config.learning_rate), &self.velocity);
        self.step += 1;
        Ok(report)
    }

    /// Run until `config.steps`, calling `on_step` after every update.
    pub fn train(
        &mut self,
        windows: &[TrainingWindow<T>],
        mut on_step: impl FnMut(&Self, &LossReport) -> Result<()>,
    ) -> Result<Vec<(usize, LossReport)>> {
        if windows.is_empty() {
            return invalid("empty training set");
        }
        let mut curve = Vec::with_capacity(self.config.steps.saturating_sub(self.step));
        while self.step < self.config.steps {
            let r = self.train_step(windows)?;
            curve.push((self.step, r));
            if self.step % 100 == 0 || self.step == self.config.steps {
                info!("step {} total {:.5} rec {:.5}", self.step, r.total, r.rec);
            }
            on_step(self, &r)?;
        }
        Ok(curve)
    }

    /// Worst per-tensor relative error of the analytic parameter gradient
    /// against float64 central differences (step `h`) of the same loss on
    /// the exactly cast parameters and inputs. Tensors whose gradient
    /// vanishes identically (relative to the whole gradient) are measured
    /// against the whole gradient's norm.
    pub fn gradient_check(&self, window: &TrainingWindow<T>, ex: &Example<T>, h: f64) -> Result<f64> {
        let (_, g) = self.loss_and_grad(window, ex)?;
        let mut oracle = Trainer::<f64>::new(self.model.cast(), self.config.clone(), self.stats.clone(), self.pose_scaling.clone())?;
        let w64 = window.cast::<f64>();
        let ex64 = Example { window: ex.window, t: ex.t, x_t: ex.x_t.cast(), use_pose: ex.use_pose, use_music: ex.use_music };
        let grads: Vec<(String, Vec<f64>)> = g
            .tensors()
            .into_iter()
            .map(|(n, m)| (n, m.as_slice().iter().map(|v| v.f()).collect()))
            .collect();
        let global: f64 = grads.iter().flat_map(|(_, v)| v).map(|v| v * v).sum::<f64>().sqrt();
        let mut worst = 0.0f64;
        for (ti, (name, analytic)) in grads.iter().enumerate() {
            let (mut err, mut scale, mut norm) = (0.0, 0.0, 0.0);
            for (e, &a) in analytic.iter().enumerate() {
                let orig = oracle.model.params.tensors_mut()[ti].as_slice()[e];
                let mut eval = |v: f64| -> Result<f64> {
                    oracle.model.params.tensors_mut()[ti].as_mut_slice()[e] = v;
                    Ok(oracle.loss_and_grad(&w64, &ex64)?.0.total)
                };
                let num = (eval(orig + h)? - eval(orig - h)?) / (2.0 * h);
                oracle.model.params.tensors_mut()[ti].as_mut_slice()[e] = orig;
                err += (a - num).powi(2);
                scale += num * num;
                norm += a * a;
            }
            let rel = if norm.sqrt() <= 1e-6 * global {
                err.sqrt() / global
            } else {
                err.sqrt() / scale.sqrt()
            };
            debug!("{name}: relative gradient error {rel:e}");
            worst = worst.max(rel);
        }
        Ok(worst)
    }

    /// Mean reconstruction loss with full conditioning over a grid of
    /// timesteps, with noise fixed by `seed`.
    pub fn reconstruction_loss(&self, window: &TrainingWindow<T>, t_grid: &[usize], seed: u64) -> Result<f64> {
        let mut sum = 0.0;
        for (k, &t) in t_grid.iter().enumerate() {
            let mut rng = window_rng(seed, k as u64);
            let noise = standard_normal(&mut rng, window.camera.rows(), window.camera.cols());
            let x_t = forward_noise(&self.schedule, &window.camera, t, &noise)?;
            let x_hat = self
                .model
                .forward(&x_t, t, Some(&window.pose_cond), Some(&window.music))?
                .0;
            sum += crate::objectives::loss_rec(&window.camera, &x_hat)?.f();
        }
        Ok(sum / t_grid.len().max(1) as f64)
    }
}

/// Loss curve CSV: `step,rec,vel,acc,ba,total`.
pub fn write_loss_csv(curve: &[(usize, LossReport)], mut w: impl Write) -> Result<()> {
    writeln!(w, "step,rec,vel,acc,ba,total")?;
    for (s, r) in curve {
        writeln!(w, "{s},{},{},{},{},{}", r.rec, r.vel, r.acc, r.ba, r.total)?;
    }
    Ok(())
}
