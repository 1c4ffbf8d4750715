//! The two camera parameterizations and the maps between them.
//!
//! Conventions (fixed crate-wide):
//! - right-handed world frame;
//! - rotation `R = Ry(ry) * Rx(rx) * Rz(rz)` acting on column vectors;
//! - camera axes are the columns of `R`: right `x0 = R e_x`, up `y0 = R e_y`,
//!   view direction `z0 = R e_z`;
//! - the eye sits `distance` behind the reference point: `eye = rp - distance * z0`;
//! - angles, including the field of view, are radians.
//!
//! MMD files are left-handed with degrees and usually a negative distance;
//! [`CameraPoseMMD::from_native`] converts them at the boundary.

use log::warn;

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

pub type Vec3<T = f64> = [T; 3];
/// Row-major 3x3.
pub type Mat3<T = f64> = [[T; 3]; 3];

pub const MMD_CHANNELS: usize = 8;
pub const CENTRIC_CHANNELS: usize = 13;
/// Smallest fov distance from 0 and pi accepted when clamping.
pub const FOV_MARGIN: f64 = 1e-3;

#[inline]
pub fn dot<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn sub<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add_scaled<T: Scalar>(a: Vec3<T>, s: T, b: Vec3<T>) -> Vec3<T> {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

#[inline]
pub fn cross<T: Scalar>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm<T: Scalar>(a: Vec3<T>) -> T {
    dot(a, a).sqrt()
}

pub fn mat_mul<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat_vec<T: Scalar>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

pub fn column<T: Scalar>(m: &Mat3<T>, j: usize) -> Vec3<T> {
    [m[0][j], m[1][j], m[2][j]]
}

fn rot_x<T: Scalar>(a: T) -> Mat3<T> {
    let (s, c) = a.sin_cos();
    let (o, l) = (T::zero(), T::one());
    [[l, o, o], [o, c, -s], [o, s, c]]
}

fn rot_y<T: Scalar>(a: T) -> Mat3<T> {
    let (s, c) = a.sin_cos();
    let (o, l) = (T::zero(), T::one());
    [[c, o, s], [o, l, o], [-s, o, c]]
}

fn rot_z<T: Scalar>(a: T) -> Mat3<T> {
    let (s, c) = a.sin_cos();
    let (o, l) = (T::zero(), T::one());
    [[c, -s, o], [s, c, o], [o, o, l]]
}

fn d_rot_x<T: Scalar>(a: T) -> Mat3<T> {
    let (s, c) = a.sin_cos();
    let o = T::zero();
    [[o, o, o], [o, -s, -c], [o, c, -s]]
}

fn d_rot_y<T: Scalar>(a: T) -> Mat3<T> {
    let (s, c) = a.sin_cos();
    let o = T::zero();
    [[-s, o, c], [o, o, o], [-c, o, -s]]
}

fn d_rot_z<T: Scalar>(a: T) -> Mat3<T> {
    let (s, c) = a.sin_cos();
    let o = T::zero();
    [[-s, -c, o], [c, -s, o], [o, o, o]]
}

/// `R = Ry(ry) Rx(rx) Rz(rz)` for Euler angles given as `(rx, ry, rz)`.
pub fn euler_to_matrix<T: Scalar>(rot: Vec3<T>) -> Mat3<T> {
    mat_mul(&mat_mul(&rot_y(rot[1]), &rot_x(rot[0])), &rot_z(rot[2]))
}

/// Partial derivatives `[dR/drx, dR/dry, dR/drz]`.
pub fn euler_matrix_jacobian<T: Scalar>(rot: Vec3<T>) -> [Mat3<T>; 3] {
    let (rx, ry, rz) = (rot_x(rot[0]), rot_y(rot[1]), rot_z(rot[2]));
    let (dx, dy, dz) = (d_rot_x(rot[0]), d_rot_y(rot[1]), d_rot_z(rot[2]));
    [
        mat_mul(&mat_mul(&ry, &dx), &rz),
        mat_mul(&mat_mul(&dy, &rx), &rz),
        mat_mul(&mat_mul(&ry, &rx), &dz),
    ]
}

const GIMBAL_TOL: f64 = 1e-9;

/// Inverse of [`euler_to_matrix`] on the principal branch
/// (`rx` in [-pi/2, pi/2]). Returns `true` as second value at gimbal lock,
/// where `rz` is set to 0.
pub fn matrix_to_euler(r: &Mat3) -> (Vec3, bool) {
    let sx = (-r[1][2]).clamp(-1.0, 1.0);
    let rx = sx.asin();
    let cx = rx.cos();
    if cx.abs() < GIMBAL_TOL {
        let ry = (-r[2][0]).atan2(r[0][0]);
        return ([rx, ry, 0.0], true);
    }
    let ry = r[0][2].atan2(r[2][2]);
    let rz = r[1][0].atan2(r[1][1]);
    ([rx, ry, rz], false)
}

/// The MMD-style camera: reference point, Euler rotation, distance, fov.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPoseMMD {
    pub rp_position: Vec3,
    pub rotation: Vec3,
    pub distance: f64,
    pub fov: f64,
}

/// Eye position, orthonormal right/up/view axes and fov.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPoseCentric {
    pub eye: Vec3,
    pub x0: Vec3,
    pub y0: Vec3,
    pub z0: Vec3,
    pub fov: f64,
}

fn check_fov(fov: f64) -> Result<()> {
    if !(fov > 0.0 && fov < std::f64::consts::PI) {
        return invalid(format!("fov {fov} outside (0, pi)"));
    }
    Ok(())
}

impl CameraPoseMMD {
    pub fn new(rp_position: Vec3, rotation: Vec3, distance: f64, fov: f64) -> Result<Self> {
        let pose = Self {
            rp_position,
            rotation,
            distance,
            fov,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        check_fov(self.fov)?;
        if !(self.distance.is_finite() && self.distance >= 0.0) {
            return invalid(format!("distance {} must be finite and >= 0", self.distance));
        }
        if !self.rp_position.iter().chain(&self.rotation).all(|v| v.is_finite()) {
            return invalid("non-finite camera parameters");
        }
        Ok(())
    }

    /// Channel order: rp_x, rp_y, rp_z, rot_x, rot_y, rot_z, distance, fov.
    pub fn from_channels(c: &[f64]) -> Result<Self> {
        if c.len() != MMD_CHANNELS {
            return invalid(format!("MMD camera needs 8 channels, got {}", c.len()));
        }
        Self::new([c[0], c[1], c[2]], [c[3], c[4], c[5]], c[6], c[7])
    }

    pub fn to_channels(&self) -> [f64; MMD_CHANNELS] {
        let (p, r) = (self.rp_position, self.rotation);
        [p[0], p[1], p[2], r[0], r[1], r[2], self.distance, self.fov]
    }

    /// Like [`CameraPoseMMD::from_channels`] but clamps the fov into
    /// `[FOV_MARGIN, pi - FOV_MARGIN]` and the distance to `>= 0`, for
    /// generated cameras. Second value reports whether anything was clamped.
    pub fn from_channels_clamped(c: &[f64]) -> Result<(Self, bool)> {
        if c.len() != MMD_CHANNELS {
            return invalid(format!("MMD camera needs 8 channels, got {}", c.len()));
        }
        let fov = c[7].clamp(FOV_MARGIN, std::f64::consts::PI - FOV_MARGIN);
        let distance = c[6].max(0.0);
        let clamped = fov != c[7] || distance != c[6];
        Ok((Self::new([c[0], c[1], c[2]], [c[3], c[4], c[5]], distance, fov)?, clamped))
    }

    /// Ingest a camera in MMD's native convention: fov in degrees,
    /// optionally left-handed (z negated). Negative distances are clamped
    /// to 0; the second value reports the clamp.
    pub fn from_native(
        rp_position: Vec3,
        rotation: Vec3,
        distance: f64,
        fov_degrees: f64,
        left_handed: bool,
    ) -> Result<(Self, bool)> {
        let (mut rp, mut rot) = (rp_position, rotation);
        if left_handed {
            // mirroring across the xy-plane flips z and the x/y rotation senses
            rp[2] = -rp[2];
            rot[0] = -rot[0];
            rot[1] = -rot[1];
        }
        let clamped = distance < 0.0;
        if clamped {
            warn!("camera distance {distance} is negative; clamping to 0");
        }
        let pose = Self::new(rp, rot, distance.max(0.0), fov_degrees.to_radians())?;
        Ok((pose, clamped))
    }

    pub fn to_centric(&self) -> CameraPoseCentric {
        mmd_to_centric(self)
    }
}

pub fn mmd_to_centric(x: &CameraPoseMMD) -> CameraPoseCentric {
    let r = euler_to_matrix(x.rotation);
    let (x0, y0, z0) = (column(&r, 0), column(&r, 1), column(&r, 2));
    CameraPoseCentric {
        eye: add_scaled(x.rp_position, -x.distance, z0),
        x0,
        y0,
        z0,
        fov: x.fov,
    }
}

/// Recover the MMD parameters of a centric camera, given the distance to
/// place the reference point at. Second value reports gimbal lock.
pub fn centric_to_mmd(xc: &CameraPoseCentric, distance: f64) -> Result<(CameraPoseMMD, bool)> {
    xc.validate()?;
    if !(distance.is_finite() && distance >= 0.0) {
        return invalid(format!("distance {distance} must be finite and >= 0"));
    }
    let r = [
        [xc.x0[0], xc.y0[0], xc.z0[0]],
        [xc.x0[1], xc.y0[1], xc.z0[1]],
        [xc.x0[2], xc.y0[2], xc.z0[2]],
    ];
    let (rotation, gimbal) = matrix_to_euler(&r);
    if gimbal {
        warn!("centric_to_mmd: gimbal lock; third angle set to 0");
    }
    Ok((
        CameraPoseMMD {
            rp_position: add_scaled(xc.eye, distance, xc.z0),
            rotation,
            distance,
            fov: xc.fov,
        },
        gimbal,
    ))
}

const AXIS_TOL: f64 = 1e-6;

impl CameraPoseCentric {
    /// Axes must be orthonormal and right-handed. The tolerance here is
    /// loose enough to accept `f32` round trips through DCMB files.
    pub fn validate(&self) -> Result<()> {
        check_fov(self.fov)?;
        let (x, y, z) = (self.x0, self.y0, self.z0);
        for (name, a) in [("x0", x), ("y0", y), ("z0", z)] {
            if (norm(a) - 1.0).abs() > AXIS_TOL {
                return invalid(format!("axis {name} is not unit length"));
            }
        }
        if dot(x, y).abs() > AXIS_TOL || dot(y, z).abs() > AXIS_TOL || dot(x, z).abs() > AXIS_TOL
        {
            return invalid("camera axes are not orthogonal");
        }
        if dot(cross(x, y), z) < 0.0 {
            return invalid("camera axes are left-handed");
        }
        Ok(())
    }

    /// Channel order: eye, x0, y0, z0 (xyz each), fov.
    pub fn from_channels(c: &[f64]) -> Result<Self> {
        if c.len() != CENTRIC_CHANNELS {
            return invalid(format!("centric camera needs 13 channels, got {}", c.len()));
        }
        let v = |k: usize| [c[k], c[k + 1], c[k + 2]];
        let pose = Self {
            eye: v(0),
            x0: v(3),
            y0: v(6),
            z0: v(9),
            fov: c[12],
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn to_channels(&self) -> [f64; CENTRIC_CHANNELS] {
        let mut out = [0.0; CENTRIC_CHANNELS];
        for (k, a) in [self.eye, self.x0, self.y0, self.z0].iter().enumerate() {
            out[k * 3..k * 3 + 3].copy_from_slice(a);
        }
        out[12] = self.fov;
        out
    }

    /// Camera-local components `(a, b, c)` of `p - eye`.
    pub fn local(&self, p: Vec3) -> Vec3 {
        let d = sub(p, self.eye);
        [dot(d, self.x0), dot(d, self.y0), dot(d, self.z0)]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.to_channels()
            .iter()
            .zip(other.to_channels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn identity_rotation() {
        let c = CameraPoseMMD::new([0.0; 3], [0.0; 3], 1.0, 1.0).unwrap().to_centric();
        assert_eq!(c.eye, [0.0, 0.0, -1.0]);
        assert_eq!((c.x0, c.y0, c.z0), ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]));
    }

    #[test]
    fn zero_distance_puts_eye_on_rp() {
        let c = CameraPoseMMD::new([1.0, -2.0, 3.0], [0.3, -1.1, 2.0], 0.0, 0.8)
            .unwrap()
            .to_centric();
        assert_eq!(c.eye, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn quarter_turn_about_y() {
        let c = CameraPoseMMD::new([0.0; 3], [0.0, FRAC_PI_2, 0.0], 2.0, 1.0)
            .unwrap()
            .to_centric();
        // independent product: Ry(pi/2) * e_z = (sin, 0, cos) = (1, 0, 0)
        let (s, co) = FRAC_PI_2.sin_cos();
        let z0 = [s, 0.0, co];
        assert!(close(c.eye, [-2.0 * z0[0], 0.0, -2.0 * z0[2]], 1e-15));
    }

    #[test]
    fn identity_axes_recover_zero_rotation() {
        let xc = CameraPoseCentric {
            eye: [0.0, 0.0, -1.0],
            x0: [1.0, 0.0, 0.0],
            y0: [0.0, 1.0, 0.0],
            z0: [0.0, 0.0, 1.0],
            fov: 0.7,
        };
        let (m, gimbal) = centric_to_mmd(&xc, 1.0).unwrap();
        assert!(!gimbal);
        assert_eq!(m.rp_position, [0.0; 3]);
        assert_eq!(m.rotation, [0.0; 3]);
    }

    #[test]
    fn gimbal_lock_is_flagged() {
        let c = CameraPoseMMD::new([0.0; 3], [FRAC_PI_2, 0.4, 0.3], 1.0, 1.0).unwrap().to_centric();
        let (m, gimbal) = centric_to_mmd(&c, 1.0).unwrap();
        assert!(gimbal);
        assert_eq!(m.rotation[2], 0.0);
        // same axes regardless of the lost angle
        assert!(m.to_centric().max_abs_diff(&c) < 1e-7);
    }

    #[test]
    fn native_ingest() {
        let (m, clamped) =
            CameraPoseMMD::from_native([1.0, 2.0, 3.0], [0.1, 0.2, 0.3], -45.0, 30.0, true).unwrap();
        assert!(clamped);
        assert_eq!(m.distance, 0.0);
        assert_eq!(m.rp_position, [1.0, 2.0, -3.0]);
        assert_eq!(m.rotation, [-0.1, -0.2, 0.3]);
        assert!((m.fov - 30f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn invalid_fov_rejected() {
        assert!(CameraPoseMMD::new([0.0; 3], [0.0; 3], 1.0, 0.0).is_err());
        assert!(CameraPoseMMD::new([0.0; 3], [0.0; 3], 1.0, 3.2).is_err());
        assert!(CameraPoseMMD::new([0.0; 3], [0.0; 3], -1.0, 1.0).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let rot = [0.3, -1.2, 0.7];
        let jac = euler_matrix_jacobian(rot);
        let h = 1e-6;
        for k in 0..3 {
            let (mut p, mut m) = (rot, rot);
            p[k] += h;
            m[k] -= h;
            let (rp, rm) = (euler_to_matrix(p), euler_to_matrix(m));
            for i in 0..3 {
                for j in 0..3 {
                    let fd: f64 = (rp[i][j] - rm[i][j]) / (2.0 * h);
                    assert!((fd - jac[k][i][j]).abs() < 1e-8);
                }
            }
        }
    }

    fn non_gimbal_pose() -> impl Strategy<Value = CameraPoseMMD> {
        (
            prop::array::uniform3(-10.0..10.0f64),
            -1.5..1.5f64,
            -3.1..3.1f64,
            -3.1..3.1f64,
            0.0..20.0f64,
            0.1..3.0f64,
        )
            .prop_map(|(rp, rx, ry, rz, d, fov)| {
                CameraPoseMMD::new(rp, [rx, ry, rz], d, fov).unwrap()
            })
    }

    proptest! {
        #[test]
        fn axes_are_orthonormal_right_handed(pose in non_gimbal_pose()) {
            let c = pose.to_centric();
            for a in [c.x0, c.y0, c.z0] {
                prop_assert!((norm(a) - 1.0).abs() < 1e-9);
            }
            prop_assert!(dot(c.x0, c.y0).abs() < 1e-9);
            prop_assert!(dot(c.y0, c.z0).abs() < 1e-9);
            prop_assert!(dot(c.x0, c.z0).abs() < 1e-9);
            prop_assert!((dot(cross(c.x0, c.y0), c.z0) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn recovered_rotation_rebuilds_axes(pose in non_gimbal_pose()) {
            let c = pose.to_centric();
            let (m, gimbal) = centric_to_mmd(&c, pose.distance).unwrap();
            prop_assert!(!gimbal);
            let r = euler_to_matrix(m.rotation);
            prop_assert!(close(column(&r, 0), c.x0, 1e-9));
            prop_assert!(close(column(&r, 1), c.y0, 1e-9));
            prop_assert!(close(column(&r, 2), c.z0, 1e-9));
            prop_assert!(m.to_centric().max_abs_diff(&c) < 1e-9);
        }
    }
}
