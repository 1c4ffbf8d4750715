//! DDPM machinery: schedules, forward noising, strong-weak classifier-free
//! guidance and the x-hat-prediction sampling loop.

pub mod guidance;
pub mod sampler;
pub mod schedule;

pub use guidance::{guided_predict, Conditions, GuidanceOrder, GuidanceWeights};
pub use sampler::{sample, standard_normal, window_rng, Resample, SamplerConfig};
pub use schedule::{forward_noise, make_schedule, DiffusionSchedule, ScheduleConfig, ScheduleKind};

use crate::error::Result;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// A denoiser that predicts the clean window from `x_t`. `None` conditions
/// stand for the null token.
pub trait DenoiseModel<T: Scalar> {
    fn predict(
        &self,
        x_t: &Matrix<T>,
        t: usize,
        pose: Option<&Matrix<T>>,
        music: Option<&Matrix<T>>,
    ) -> Result<Matrix<T>>;
}
