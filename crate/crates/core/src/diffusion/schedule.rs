//! Noise schedules and the forward process.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Cosine,
    Linear,
}

/// Schedule descriptor as stored in configs and checkpoints:
/// `{"T": 1000, "kind": "cosine"}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    #[serde(rename = "T")]
    pub steps: usize,
    pub kind: ScheduleKind,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            kind: ScheduleKind::Cosine,
        }
    }
}

const COSINE_S: f64 = 0.008;
const MAX_BETA: f64 = 0.999;
const LINEAR_BETA: (f64, f64) = (1e-4, 0.02);

/// Cumulative signal levels `alpha_bar[0..=T]` with `alpha_bar[0] = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    config: ScheduleConfig,
    alpha_bar: Vec<f64>,
}

pub fn make_schedule(steps: usize, kind: ScheduleKind) -> Result<DiffusionSchedule> {
    if steps < 1 {
        return Err(Error::Config("schedule needs T >= 1".into()));
    }
    let betas: Vec<f64> = match kind {
        ScheduleKind::Cosine => {
            let f = |t: usize| {
                let s = (t as f64 / steps as f64 + COSINE_S) / (1.0 + COSINE_S);
                (s * std::f64::consts::FRAC_PI_2).cos().powi(2)
            };
            // per-step betas from the cosine curve, capped so every step
            // keeps some signal and the sequence stays strictly decreasing
            (1..=steps)
                .map(|t| (1.0 - f(t) / f(t - 1)).clamp(0.0, MAX_BETA))
                .collect()
        }
        ScheduleKind::Linear => {
            let (lo, hi) = LINEAR_BETA;
            (0..steps)
                .map(|i| {
                    if steps == 1 {
                        lo
                    } else {
                        lo + (hi - lo) * i as f64 / (steps - 1) as f64
                    }
                })
                .collect()
        }
    };
    let mut alpha_bar = Vec::with_capacity(steps + 1);
    alpha_bar.push(1.0);
    for b in betas {
        let prev = *alpha_bar.last().expect("nonempty");
        alpha_bar.push(prev * (1.0 - b));
    }
    Ok(DiffusionSchedule {
        config: ScheduleConfig { steps, kind },
        alpha_bar,
    })
}

impl DiffusionSchedule {
    pub fn from_config(c: &ScheduleConfig) -> Result<Self> {
        make_schedule(c.steps, c.kind)
    }

    pub fn config(&self) -> ScheduleConfig {
        self.config
    }

    pub fn steps(&self) -> usize {
        self.config.steps
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn alpha_bar_at(&self, t: usize) -> Result<f64> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("t = {t} outside [0, {}]", self.steps())))
    }

    /// Per-step `beta_t = 1 - alpha_bar[t] / alpha_bar[t-1]`, for `t >= 1`.
    pub fn beta(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return invalid("beta is defined for t >= 1");
        }
        Ok(1.0 - self.alpha_bar_at(t)? / self.alpha_bar[t - 1])
    }
}

/// `x_t = sqrt(alpha_bar_t) x + sqrt(1 - alpha_bar_t) noise`.
pub fn forward_noise<T: Scalar>(
    schedule: &DiffusionSchedule,
    x: &Matrix<T>,
    t: usize,
    noise: &Matrix<T>,
) -> Result<Matrix<T>> {
    x.same_shape(noise, "forward_noise")?;
    let ab = schedule.alpha_bar_at(t)?;
    let (a, b) = (T::c(ab.sqrt()), T::c((1.0 - ab).sqrt()));
    Ok(x.zip_map(noise, |xv, nv| a * xv + b * nv))
}
