//! The x-hat-prediction sampling loop.
//!
//! Noise is drawn from a ChaCha8 stream per window: the window index selects
//! the stream, the seed the key. Draw order is the initial `x_T` (row-major)
//! followed by one fresh `N x C` block per step `t = T..2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::guidance::{guided_predict, Conditions, GuidanceOrder, GuidanceWeights};
use super::schedule::{forward_noise, DiffusionSchedule};
use super::DenoiseModel;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resample {
    /// `x_{t-1} ~ q(x_{t-1} | x_hat)`.
    #[default]
    DiffuseBack,
    /// `x_{t-1} ~ q(x_{t-1} | x_t, x_hat)`.
    Posterior,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub weights: GuidanceWeights,
    #[serde(default)]
    pub order: GuidanceOrder,
    #[serde(default)]
    pub resample: Resample,
}

/// Independent noise stream for window `index` under `seed`.
pub fn window_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn standard_normal<T: Scalar>(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| T::c(rng.sample::<f64, _>(StandardNormal)))
}

/// Denoise one window of `n_frames x channels` from pure noise.
pub fn sample<T: Scalar, M: DenoiseModel<T> + ?Sized>(
    model: &M,
    cond: Conditions<'_, T>,
    schedule: &DiffusionSchedule,
    cfg: &SamplerConfig,
    shape: (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Result<Matrix<T>> {
    cfg.weights.validate()?;
    let (rows, cols) = shape;
    let mut x_t: Matrix<T> = standard_normal(rng, rows, cols);
    let mut t = schedule.steps();
    loop {
        let x_hat = guided_predict(model, &x_t, t, cond, cfg.weights, cfg.order)?;
        if x_hat.shape() != shape {
            return Err(Error::Shape(format!(
                "model returned {:?} for a {:?} window",
                x_hat.shape(),
                shape
            )));
        }
        if !x_hat.is_finite() {
            return Err(Error::Numerical(format!("non-finite model output at t = {t}")));
        }
        if t == 1 {
            return Ok(x_hat);
        }
        let noise = standard_normal(rng, rows, cols);
        x_t = match cfg.resample {
            Resample::DiffuseBack => forward_noise(schedule, &x_hat, t - 1, &noise)?,
            Resample::Posterior => posterior_step(schedule, &x_t, &x_hat, t, &noise)?,
        };
        t -= 1;
    }
}

fn posterior_step<T: Scalar>(
    schedule: &DiffusionSchedule,
    x_t: &Matrix<T>,
    x_hat: &Matrix<T>,
    t: usize,
    noise: &Matrix<T>,
) -> Result<Matrix<T>> {
    let ab_t = schedule.alpha_bar_at(t)?;
    let ab_prev = schedule.alpha_bar_at(t - 1)?;
    let beta = schedule.beta(t)?;
    let c_hat = T::c(ab_prev.sqrt() * beta / (1.0 - ab_t));
    let c_t = T::c((1.0 - beta).sqrt() * (1.0 - ab_prev) / (1.0 - ab_t));
    let sigma = T::c(((1.0 - ab_prev) / (1.0 - ab_t) * beta).sqrt());
    Ok(Matrix::from_fn(x_t.rows(), x_t.cols(), |i, j| {
        c_hat * x_hat.get(i, j) + c_t * x_t.get(i, j) + sigma * noise.get(i, j)
    }))
}
