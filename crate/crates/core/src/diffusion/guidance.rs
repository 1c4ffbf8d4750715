//! Strong-weak classifier-free guidance.
//!
//! Dance-first composition with e0 = model(null, null), ep = model(pose,
//! null), epm = model(pose, music):
//!
//! `e0 + (1 + w1)(ep - e0) + (1 + w2)(epm - ep)`
//!
//! evaluated as `epm + w1 (ep - e0) + w2 (epm - ep)`, which is the same sum
//! and reduces to `epm` exactly when both weights are zero.

use log::warn;
use serde::{Deserialize, Serialize};

use super::DenoiseModel;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GuidanceWeights {
    /// Dance (strong) condition.
    pub omega1: f64,
    /// Music (weak) condition.
    pub omega2: f64,
}

impl GuidanceWeights {
    pub fn new(omega1: f64, omega2: f64) -> Result<Self> {
        let w = Self { omega1, omega2 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.omega1.is_finite() || !self.omega2.is_finite() {
            return Err(Error::Config(format!("guidance weights must be finite: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuidanceOrder {
    /// null -> +dance -> +music.
    #[default]
    DanceFirst,
    /// null -> +music -> +dance.
    MusicFirst,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Conditions<'a, T> {
    pub pose: Option<&'a Matrix<T>>,
    pub music: Option<&'a Matrix<T>>,
}

/// `base + wa (mid - low) + wb (base - mid)`.
fn compose<T: Scalar>(base: &Matrix<T>, mid: &Matrix<T>, low: &Matrix<T>, wa: f64, wb: f64) -> Matrix<T> {
    let (wa, wb) = (T::c(wa), T::c(wb));
    Matrix::from_fn(base.rows(), base.cols(), |i, j| {
        let (e, m, l) = (base.get(i, j), mid.get(i, j), low.get(i, j));
        e + wa * (m - l) + wb * (e - m)
    })
}

pub fn guided_predict<T: Scalar, M: DenoiseModel<T> + ?Sized>(
    model: &M,
    x_t: &Matrix<T>,
    t: usize,
    cond: Conditions<'_, T>,
    w: GuidanceWeights,
    order: GuidanceOrder,
) -> Result<Matrix<T>> {
    let Conditions { pose, music } = cond;
    match (pose, music) {
        (None, None) => model.predict(x_t, t, None, None),
        (Some(_), None) => {
            let ep = model.predict(x_t, t, pose, None)?;
            if w.omega1 == 0.0 {
                return Ok(ep);
            }
            let e0 = model.predict(x_t, t, None, None)?;
            Ok(compose(&ep, &ep, &e0, w.omega1, 0.0))
        }
        (None, Some(_)) => {
            warn!("guided_predict: null pose with music present (ablation composition)");
            let em = model.predict(x_t, t, None, music)?;
            if w.omega2 == 0.0 {
                return Ok(em);
            }
            let e0 = model.predict(x_t, t, None, None)?;
            Ok(compose(&em, &em, &e0, w.omega2, 0.0))
        }
        (Some(_), Some(_)) => {
            let epm = model.predict(x_t, t, pose, music)?;
            if w.omega1 == 0.0 && w.omega2 == 0.0 {
                return Ok(epm);
            }
            let e0 = model.predict(x_t, t, None, None)?;
            Ok(match order {
                GuidanceOrder::DanceFirst => {
                    let ep = model.predict(x_t, t, pose, None)?;
                    compose(&epm, &ep, &e0, w.omega1, w.omega2)
                }
                GuidanceOrder::MusicFirst => {
                    let em = model.predict(x_t, t, None, music)?;
                    compose(&epm, &em, &e0, w.omega2, w.omega1)
                }
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    /// Returns a constant chosen by which conditions are present.
    struct Scripted {
        values: [f64; 4], // (null, null), (pose, null), (null, music), (pose, music)
        calls: Cell<usize>,
    }

    impl DenoiseModel<f64> for Scripted {
        fn predict(
            &self,
            x_t: &Matrix<f64>,
            _t: usize,
            pose: Option<&Matrix<f64>>,
            music: Option<&Matrix<f64>>,
        ) -> Result<Matrix<f64>> {
            self.calls.set(self.calls.get() + 1);
            let k = pose.is_some() as usize + 2 * music.is_some() as usize;
            Ok(Matrix::filled(x_t.rows(), x_t.cols(), self.values[k]))
        }
    }

    fn run(values: [f64; 4], w1: f64, w2: f64, order: GuidanceOrder, pose: bool, music: bool) -> f64 {
        let m = Scripted { values, calls: Cell::new(0) };
        let x = Matrix::zeros(3, 8);
        let c = Matrix::zeros(3, 1);
        let cond = Conditions {
            pose: pose.then_some(&c),
            music: music.then_some(&c),
        };
        guided_predict(&m, &x, 5, cond, GuidanceWeights { omega1: w1, omega2: w2 }, order)
            .unwrap()
            .get(0, 0)
    }

    #[test]
    fn scripted_example() {
        let v = run([0.0, 1.0, 7.0, 3.0], 0.25, 0.5, GuidanceOrder::DanceFirst, true, true);
        assert_eq!(v, 4.25);
    }

    #[test]
    fn telescoping_is_exact() {
        let vals = [0.123456789, -9.87654321, 4.4, 1.0 / 3.0];
        for order in [GuidanceOrder::DanceFirst, GuidanceOrder::MusicFirst] {
            assert_eq!(run(vals, 0.0, 0.0, order, true, true), vals[3]);
        }
    }

    #[test]
    fn constant_model_is_fixed_point() {
        for (w1, w2) in [(0.0, 0.0), (1.5, -0.3), (4.0, 2.0)] {
            assert_eq!(run([2.5; 4], w1, w2, GuidanceOrder::DanceFirst, true, true), 2.5);
        }
    }

    #[test]
    fn music_first_and_ablations() {
        let vals = [0.0, 1.0, 2.0, 3.0];
        // e0 + (1 + w2)(em - e0) + (1 + w1)(epm - em)
        assert_eq!(run(vals, 0.5, 0.25, GuidanceOrder::MusicFirst, true, true), 1.25 * 2.0 + 1.5 * 1.0);
        // null pose: e0 + (1 + w2)(em - e0)
        assert_eq!(run(vals, 9.0, 0.5, GuidanceOrder::DanceFirst, false, true), 3.0);
        // null music: e0 + (1 + w1)(ep - e0)
        assert_eq!(run(vals, 0.5, 9.0, GuidanceOrder::DanceFirst, true, false), 1.5);
        assert_eq!(run(vals, 0.5, 9.0, GuidanceOrder::DanceFirst, false, false), 0.0);
    }

    #[test]
    fn three_calls_when_guided() {
        let m = Scripted { values: [0.0; 4], calls: Cell::new(0) };
        let x = Matrix::zeros(2, 8);
        let c = Matrix::zeros(2, 1);
        let cond = Conditions { pose: Some(&c), music: Some(&c) };
        guided_predict(&m, &x, 1, cond, GuidanceWeights { omega1: 1.0, omega2: 1.0 }, GuidanceOrder::DanceFirst).unwrap();
        assert_eq!(m.calls.get(), 3);
    }
}
