//! Training losses and their analytic gradients.
//!
//! All losses use mean reduction. The camera arguments are `N x 8` MMD
//! channel matrices; the body-attention loss works on physical
//! (denormalized) channels, the others on whatever space they are given.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::{NormalizationStats, N_JOINTS, POSE_CHANNELS};
use crate::error::{invalid, shape, Error, Result};
use crate::geometry::camera::{column, euler_matrix_jacobian, euler_to_matrix, mat_vec, Vec3, MMD_CHANNELS};
use crate::geometry::JointMask;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_vel: f64,
    pub lambda_acc: f64,
    pub lambda_ba: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_vel: 1.0,
            lambda_acc: 1.0,
            lambda_ba: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_vel", self.lambda_vel),
            ("lambda_acc", self.lambda_acc),
            ("lambda_ba", self.lambda_ba),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rec: f64,
    pub vel: f64,
    pub acc: f64,
    pub ba: f64,
    pub total: f64,
}

impl LossReport {
    pub fn combine(rec: f64, vel: f64, acc: f64, ba: f64, w: &LossWeights) -> Self {
        Self {
            rec,
            vel,
            acc,
            ba,
            total: rec + w.lambda_vel * vel + w.lambda_acc * acc + w.lambda_ba * ba,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.rec, self.vel, self.acc, self.ba, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn check_pair<T: Scalar>(x: &Matrix<T>, x_hat: &Matrix<T>) -> Result<()> {
    x.same_shape(x_hat, "camera sequences")
}

/// Forward difference along time.
fn diff<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    Matrix::from_fn(m.rows().saturating_sub(1), m.cols(), |i, j| m.get(i + 1, j) - m.get(i, j))
}

/// Adjoint of [`diff`]: maps an `(N-1) x C` gradient back to `N x C`.
fn diff_adjoint<T: Scalar>(g: &Matrix<T>) -> Matrix<T> {
    let n = g.rows() + 1;
    Matrix::from_fn(n, g.cols(), |i, j| {
        let mut v = T::zero();
        if i < g.rows() {
            v -= g.get(i, j);
        }
        if i > 0 {
            v += g.get(i - 1, j);
        }
        v
    })
}

fn mse<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> T {
    let n = a.as_slice().len();
    if n == 0 {
        return T::zero();
    }
    let s: T = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&p, &q)| (p - q) * (p - q))
        .sum();
    s / T::c(n as f64)
}

fn mse_grad<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let scale = T::c(2.0 / a.as_slice().len().max(1) as f64);
    a.zip_map(b, |p, q| scale * (p - q))
}

pub fn loss_rec<T: Scalar>(x: &Matrix<T>, x_hat: &Matrix<T>) -> Result<T> {
    check_pair(x, x_hat)?;
    Ok(mse(x_hat, x))
}

pub fn loss_vel<T: Scalar>(x: &Matrix<T>, x_hat: &Matrix<T>) -> Result<T> {
    check_pair(x, x_hat)?;
    if x.rows() < 2 {
        return invalid("velocity loss needs at least 2 frames");
    }
    Ok(mse(&diff(x_hat), &diff(x)))
}

pub fn loss_acc<T: Scalar>(x: &Matrix<T>, x_hat: &Matrix<T>) -> Result<T> {
    check_pair(x, x_hat)?;
    if x.rows() < 3 {
        return invalid("acceleration loss needs at least 3 frames");
    }
    Ok(mse(&diff(&diff(x_hat)), &diff(&diff(x))))
}

/// Value, gradient with respect to the (physical) camera channels, and the
/// number of joint terms skipped because the joint sat on the eye.
#[derive(Clone, Debug)]
pub struct BodyAttention<T> {
    pub value: T,
    pub grad: Matrix<T>,
    pub skipped: usize,
}

/// `c / sqrt(a^2 + c^2)` with its partials in `a` and `c`. The ratio is
/// taken as 0 when both vanish.
#[inline]
fn cos_ratio<T: Scalar>(a: T, c: T) -> (T, T, T) {
    let r2 = a * a + c * c;
    if r2 == T::zero() {
        return (T::zero(), T::zero(), T::zero());
    }
    let r = r2.sqrt();
    let r3 = r2 * r;
    (c / r, -a * c / r3, a * a / r3)
}

fn check_ba_inputs<T: Scalar>(pose: &Matrix<T>, cam: &Matrix<T>, mask: &JointMask) -> Result<()> {
    if cam.cols() != MMD_CHANNELS {
        return shape(format!("camera needs {MMD_CHANNELS} channels, got {}", cam.cols()));
    }
    if pose.cols() != POSE_CHANNELS {
        return shape(format!("pose needs {POSE_CHANNELS} channels, got {}", pose.cols()));
    }
    if pose.rows() != cam.rows() || mask.n_frames() != cam.rows() || mask.n_joints() != N_JOINTS {
        return shape(format!(
            "pose {} frames, camera {} frames, mask {}x{}",
            pose.rows(),
            cam.rows(),
            mask.n_frames(),
            mask.n_joints()
        ));
    }
    Ok(())
}

/// Body-attention loss with its gradient. `cam` holds physical MMD channels.
///
/// Per frame and joint with local components `(a, b, c)` relative to the
/// predicted camera, the term is
/// `Jm * [relu(k - c/sqrt(a^2+c^2)) + relu(k - c/sqrt(b^2+c^2))]` with
/// `k = cos(fov/2)`, averaged over `N * 60`. Behind the camera the signed
/// ratio is already negative, so the penalty saturates at `k + 1` and the
/// gradient pushes `c` positive.
pub fn body_attention<T: Scalar>(pose: &Matrix<T>, cam: &Matrix<T>, mask: &JointMask) -> Result<BodyAttention<T>> {
    check_ba_inputs(pose, cam, mask)?;
    let n = cam.rows();
    let denom = T::c((n * N_JOINTS).max(1) as f64);
    let half = T::c(0.5);
    let mut value = T::zero();
    let mut grad = Matrix::zeros(n, MMD_CHANNELS);
    let mut skipped = 0usize;
    for i in 0..n {
        let ch = cam.row(i);
        let rp: Vec3<T> = [ch[0], ch[1], ch[2]];
        let rot: Vec3<T> = [ch[3], ch[4], ch[5]];
        let (dist, fov) = (ch[6], ch[7]);
        let r = euler_to_matrix(rot);
        let jac = euler_matrix_jacobian(rot);
        let axes = [column(&r, 0), column(&r, 1), column(&r, 2)];
        let k = (half * fov).cos();
        let dk = -half * (half * fov).sin();
        let joints = pose.row(i);
        let mut g = [T::zero(); MMD_CHANNELS];
        for j in 0..N_JOINTS {
            if !mask.get(i, j) {
                continue;
            }
            // v = J - eye = J - rp + d * z0
            let v: Vec3<T> = std::array::from_fn(|q| joints[3 * j + q] - rp[q] + dist * axes[2][q]);
            let [a, b, c] = mat_vec(&transpose(&r), v);
            if a == T::zero() && b == T::zero() && c == T::zero() {
                skipped += 1;
                continue;
            }
            // d(local)/d(inputs): rp, rot, dist
            let mut d_local = [[T::zero(); 7]; 3];
            for q in 0..3 {
                for (row, axis) in axes.iter().enumerate() {
                    d_local[row][q] = -axis[q];
                }
            }
            for (kk, dr) in jac.iter().enumerate() {
                let dz = column(dr, 2);
                for row in 0..3 {
                    let dax = column(dr, row);
                    let mut s = T::zero();
                    for q in 0..3 {
                        s += dax[q] * v[q] + axes[row][q] * dist * dz[q];
                    }
                    d_local[row][3 + kk] = s;
                }
            }
            for (row, axis) in axes.iter().enumerate() {
                d_local[row][6] = (0..3).map(|q| axis[q] * axes[2][q]).sum();
            }
            for (lateral, row) in [(a, 0usize), (b, 1usize)] {
                let (ratio, d_lat, d_c) = cos_ratio(lateral, c);
                let m = k - ratio;
                if m > T::zero() {
                    value += m;
                    for p in 0..7 {
                        g[p] -= d_lat * d_local[row][p] + d_c * d_local[2][p];
                    }
                    g[7] += dk;
                }
            }
        }
        for (p, gp) in g.iter().enumerate() {
            grad.set(i, p, *gp / denom);
        }
    }
    if skipped > 0 {
        warn!("body attention: {skipped} joint term(s) coincide with the predicted eye; skipped");
    }
    Ok(BodyAttention {
        value: value / denom,
        grad,
        skipped,
    })
}

fn transpose<T: Scalar>(m: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[j][i]))
}

pub fn loss_body_attention<T: Scalar>(pose: &Matrix<T>, cam: &Matrix<T>, mask: &JointMask) -> Result<T> {
    Ok(body_attention(pose, cam, mask)?.value)
}

/// Inputs shared by the composite loss: the dancer, the ground-truth joint
/// mask, and the stats that map normalized camera channels to physical ones.
#[derive(Clone, Copy, Debug)]
pub struct LossContext<'a, T> {
    pub pose: &'a Matrix<T>,
    pub mask: &'a JointMask,
    pub stats: &'a NormalizationStats,
}

/// Composite loss on normalized camera windows. The body-attention term is
/// evaluated on the denormalized prediction.
pub fn total_loss<T: Scalar>(
    x: &Matrix<T>,
    x_hat: &Matrix<T>,
    ctx: LossContext<'_, T>,
    w: &LossWeights,
) -> Result<LossReport> {
    let rec = loss_rec(x, x_hat)?;
    let vel = loss_vel(x, x_hat)?;
    let acc = loss_acc(x, x_hat)?;
    let ba = if w.lambda_ba > 0.0 {
        loss_body_attention(ctx.pose, &ctx.stats.invert(x_hat)?, ctx.mask)?
    } else {
        T::zero()
    };
    Ok(LossReport::combine(rec.f(), vel.f(), acc.f(), ba.f(), w))
}

/// Composite loss and its gradient with respect to the normalized
/// prediction `x_hat`.
pub fn grad_total_loss<T: Scalar>(
    x: &Matrix<T>,
    x_hat: &Matrix<T>,
    ctx: LossContext<'_, T>,
    w: &LossWeights,
) -> Result<(LossReport, Matrix<T>)> {
    let rec = loss_rec(x, x_hat)?;
    let vel = loss_vel(x, x_hat)?;
    let acc = loss_acc(x, x_hat)?;
    let mut grad = mse_grad(x_hat, x);

    let (dxh, dx) = (diff(x_hat), diff(x));
    grad.axpy(T::c(w.lambda_vel), &diff_adjoint(&mse_grad(&dxh, &dx)));
    let (ddxh, ddx) = (diff(&dxh), diff(&dx));
    grad.axpy(
        T::c(w.lambda_acc),
        &diff_adjoint(&diff_adjoint(&mse_grad(&ddxh, &ddx))),
    );

    let mut ba = T::zero();
    if w.lambda_ba > 0.0 {
        let phys = ctx.stats.invert(x_hat)?;
        let out = body_attention(ctx.pose, &phys, ctx.mask)?;
        ba = out.value;
        let lam = T::c(w.lambda_ba);
        for i in 0..grad.rows() {
            for j in 0..grad.cols() {
                let v = grad.get(i, j) + lam * out.grad.get(i, j) * T::c(ctx.stats.std[j]);
                grad.set(i, j, v);
            }
        }
    }
    Ok((LossReport::combine(rec.f(), vel.f(), acc.f(), ba.f(), w), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{joint_masks, CameraPoseMMD, Frustum};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_camera(rng: &mut ChaCha8Rng, n: usize) -> Matrix<f64> {
        Matrix::from_fn(n, 8, |_, j| match j {
            0..=2 => rng.random_range(-1.0..1.0),
            3 => rng.random_range(-1.2..1.2),
            4 | 5 => rng.random_range(-3.0..3.0),
            6 => rng.random_range(1.0..6.0),
            _ => rng.random_range(0.3..2.5),
        })
    }

    fn random_pose(rng: &mut ChaCha8Rng, n: usize) -> Matrix<f64> {
        Matrix::from_fn(n, POSE_CHANNELS, |_, _| rng.random_range(-2.0..2.0))
    }

    fn random_mask(rng: &mut ChaCha8Rng, n: usize) -> JointMask {
        JointMask::new(n, N_JOINTS, (0..n * N_JOINTS).map(|_| rng.random_range(0..2u8)).collect()).unwrap()
    }

    #[test]
    fn rec_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 7, 8);
        assert_eq!(loss_rec(&x, &x).unwrap(), 0.0);
        let shifted = x.map(|v| v + 1.0);
        assert!((loss_rec(&x, &shifted).unwrap() - 1.0).abs() < 1e-12);
        let y = random(&mut rng, 7, 8);
        let mut s = 0.0;
        for i in 0..7 {
            for j in 0..8 {
                s += (y.get(i, j) - x.get(i, j)).powi(2);
            }
        }
        assert!((loss_rec(&x, &y).unwrap() - s / 56.0).abs() < 1e-9);
        assert!(loss_rec(&x, &random(&mut rng, 6, 8)).is_err());
    }

    #[test]
    fn vel_acc_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10;
        let x = random(&mut rng, n, 8);
        let shifted = x.map(|v| v + 3.5);
        assert!(loss_vel(&x, &shifted).unwrap().abs() < 1e-24);
        assert!(loss_acc(&x, &shifted).unwrap().abs() < 1e-24);

        let delta = 0.3;
        let mut bumped = x.clone();
        bumped.set(4, 2, x.get(4, 2) + delta);
        let expected = 2.0 * delta * delta / ((n - 1) as f64 * 8.0);
        assert!((loss_vel(&x, &bumped).unwrap() - expected).abs() < 1e-12);

        let (a, b) = (0.2, -0.7);
        let la = Matrix::from_fn(n, 8, |i, _| a * i as f64);
        let lb = Matrix::from_fn(n, 8, |i, _| b * i as f64 + 1.0);
        assert!(loss_acc(&la, &lb).unwrap().abs() < 1e-24);
        assert!((loss_vel(&la, &lb).unwrap() - (a - b) * (a - b)).abs() < 1e-12);

        assert!(loss_vel(&random(&mut rng, 1, 8), &random(&mut rng, 1, 8)).is_err());
        assert!(loss_acc(&random(&mut rng, 2, 8), &random(&mut rng, 2, 8)).is_err());
    }

    fn single_joint_pose(p: Vec3) -> Matrix<f64> {
        Matrix::from_fn(1, POSE_CHANNELS, |_, k| if k < 3 { p[k] } else { 0.0 })
    }

    fn only_first_joint() -> JointMask {
        let mut m = JointMask::filled(1, N_JOINTS, false);
        m.set(0, 0, true);
        m
    }

    #[test]
    fn single_joint_contribution() {
        // identity rotation, distance 0: eye at rp, looking down +z
        let cam = Matrix::from_rows(&[vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2]]).unwrap();
        let pose = single_joint_pose([6.0, 0.0, 5.0]);
        let v = loss_body_attention(&pose, &cam, &only_first_joint()).unwrap();
        let k = (FRAC_PI_2 / 2.0).cos();
        let term = (k - 5.0 / 61f64.sqrt()).max(0.0) + (k - 1.0f64).max(0.0);
        assert!((term - 0.06693).abs() < 1e-5);
        assert!((v * N_JOINTS as f64 - term).abs() < 1e-12);
        let centric = CameraPoseMMD::from_channels(cam.row(0)).unwrap().to_centric();
        assert!(!joint_masks(&[[6.0, 0.0, 5.0]], &centric, Frustum::default())[0]);
    }

    #[test]
    fn mask_gates_and_ground_truth_is_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cam = random_camera(&mut rng, 5);
        let pose = random_pose(&mut rng, 5);
        let none = JointMask::filled(5, N_JOINTS, false);
        assert_eq!(loss_body_attention(&pose, &cam, &none).unwrap(), 0.0);

        let cams: Vec<_> = (0..5)
            .map(|i| CameraPoseMMD::from_channels(cam.row(i)).unwrap().to_centric())
            .collect();
        let mut bits = Vec::new();
        for (i, c) in cams.iter().enumerate() {
            let joints: Vec<Vec3> = (0..N_JOINTS)
                .map(|j| [pose.get(i, 3 * j), pose.get(i, 3 * j + 1), pose.get(i, 3 * j + 2)])
                .collect();
            bits.extend(joint_masks(&joints, c, Frustum::default()).into_iter().map(u8::from));
        }
        let gt = JointMask::new(5, N_JOINTS, bits).unwrap();
        assert!(loss_body_attention(&pose, &cam, &gt).unwrap().abs() < 1e-15);
    }

    #[test]
    fn eye_coincident_joint_is_skipped() {
        let cam = Matrix::from_rows(&[vec![1.0, 2.0, 3.0, 0.1, 0.2, 0.3, 0.0, 1.0]]).unwrap();
        let pose = single_joint_pose([1.0, 2.0, 3.0]);
        let out = body_attention(&pose, &cam, &only_first_joint()).unwrap();
        assert_eq!(out.skipped, 1);
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn behind_camera_saturates() {
        let cam = Matrix::from_rows(&[vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2]]).unwrap();
        let pose = single_joint_pose([0.0, 0.0, -4.0]);
        let v = loss_body_attention(&pose, &cam, &only_first_joint()).unwrap();
        let k = (FRAC_PI_2 / 2.0).cos();
        assert!((v * N_JOINTS as f64 - 2.0 * (k + 1.0)).abs() < 1e-12);
    }

    fn random_stats(rng: &mut ChaCha8Rng) -> NormalizationStats {
        NormalizationStats {
            mean: (0..8).map(|_| rng.random_range(-0.5..0.5)).collect(),
            std: (0..8).map(|_| rng.random_range(0.5..1.5)).collect(),
            degenerate: vec![false; 8],
        }
    }

    #[test]
    fn total_is_recombination() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let stats = random_stats(&mut rng);
        let phys = random_camera(&mut rng, 6);
        let x_hat = stats.apply(&phys).unwrap();
        let x = random(&mut rng, 6, 8);
        let pose = random_pose(&mut rng, 6);
        let mask = random_mask(&mut rng, 6);
        let ctx = LossContext { pose: &pose, mask: &mask, stats: &stats };
        let w = LossWeights { lambda_vel: 0.3, lambda_acc: 2.0, lambda_ba: 0.7 };
        let r = total_loss(&x, &x_hat, ctx, &w).unwrap();
        let rec = loss_rec(&x, &x_hat).unwrap();
        let vel = loss_vel(&x, &x_hat).unwrap();
        let acc = loss_acc(&x, &x_hat).unwrap();
        let ba = loss_body_attention(&pose, &phys, &mask).unwrap();
        assert!((r.total - (rec + 0.3 * vel + 2.0 * acc + 0.7 * ba)).abs() < 1e-9);
        let zero = LossWeights { lambda_vel: 0.0, lambda_acc: 0.0, lambda_ba: 0.0 };
        assert_eq!(total_loss(&x, &x_hat, ctx, &zero).unwrap().total, rec);
        let same = total_loss(&x, &x, ctx, &LossWeights { lambda_ba: 0.0, ..w }).unwrap();
        assert_eq!((same.rec, same.vel, same.acc), (0.0, 0.0, 0.0));
    }

    #[test]
    fn three_frame_closed_form_gradient() {
        // single channel, hand-expanded:
        // rec = sum e_i^2 / 3, vel = ((e1-e0)^2 + (e2-e1)^2) / 2, acc = (e2 - 2e1 + e0)^2
        let x = Matrix::from_fn(3, 8, |i, j| (i * 8 + j) as f64 * 0.1);
        let e = [0.3, -0.2, 0.5];
        let x_hat = Matrix::from_fn(3, 8, |i, j| x.get(i, j) + if j == 0 { e[i] } else { 0.0 });
        let stats = NormalizationStats::identity(8);
        let pose = Matrix::zeros(3, POSE_CHANNELS);
        let mask = JointMask::filled(3, N_JOINTS, false);
        let ctx = LossContext { pose: &pose, mask: &mask, stats: &stats };
        let w = LossWeights { lambda_ba: 0.0, ..LossWeights::default() };
        let (_, g) = grad_total_loss(&x, &x_hat, ctx, &w).unwrap();
        let acc = e[2] - 2.0 * e[1] + e[0];
        let expected = [
            2.0 * e[0] / 24.0 - (e[1] - e[0]) / 8.0 + 2.0 * acc / 8.0,
            2.0 * e[1] / 24.0 + ((e[1] - e[0]) - (e[2] - e[1])) / 8.0 - 4.0 * acc / 8.0,
            2.0 * e[2] / 24.0 + (e[2] - e[1]) / 8.0 + 2.0 * acc / 8.0,
        ];
        for i in 0..3 {
            assert!((g.get(i, 0) - expected[i]).abs() < 1e-14, "{i}");
            for j in 1..8 {
                assert_eq!(g.get(i, j), 0.0);
            }
        }
        let (_, g0) = grad_total_loss(&x, &x, ctx, &w).unwrap();
        assert!(g0.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let stats = random_stats(&mut rng);
            let x_hat = stats.apply(&random_camera(&mut rng, 6)).unwrap();
            let x = random(&mut rng, 6, 8);
            let pose = random_pose(&mut rng, 6);
            let mask = random_mask(&mut rng, 6);
            let ctx = LossContext { pose: &pose, mask: &mask, stats: &stats };
            let w = LossWeights { lambda_vel: 0.5, lambda_acc: 0.25, lambda_ba: 2.0 };
            let (_, g) = grad_total_loss(&x, &x_hat, ctx, &w).unwrap();
            let h = 1e-5;
            let mut num = Matrix::zeros(6, 8);
            for i in 0..6 {
                for j in 0..8 {
                    let mut p = x_hat.clone();
                    p.set(i, j, x_hat.get(i, j) + h);
                    let mut m = x_hat.clone();
                    m.set(i, j, x_hat.get(i, j) - h);
                    let fp = total_loss(&x, &p, ctx, &w).unwrap().total;
                    let fm = total_loss(&x, &m, ctx, &w).unwrap().total;
                    num.set(i, j, (fp - fm) / (2.0 * h));
                }
            }
            let diff = g.zip_map(&num, |a, b| a - b);
            let rel = diff.dot(&diff).sqrt() / num.dot(&num).sqrt().max(1e-12);
            assert!(rel < 1e-4, "relative error {rel}");
        }
    }

    #[test]
    fn weights_validate() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights { lambda_vel: -1.0, ..Default::default() }.validate().is_err());
        assert!(LossWeights { lambda_ba: f64::NAN, ..Default::default() }.validate().is_err());
    }
}
