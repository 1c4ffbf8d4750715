//! Frustum visibility: per-joint masks and screen projection.
//!
//! A joint with camera-local components `(a, b, c)` is visible when it is in
//! front of the eye and both of its projections, onto the camera xz- and
//! yz-planes, lie within half the field of view of the view axis:
//! `c / sqrt(a^2 + c^2) >= cos(h_x)` and `c / sqrt(b^2 + c^2) >= cos(h_y)`.

use log::warn;

use super::camera::{CameraPoseCentric, Vec3};
use crate::dataset::{PoseSequence, N_JOINTS};
use crate::error::{shape, Result};

/// Joints with local depth at or below this are "behind" for projection.
pub const EPS_FRONT: f64 = 1e-6;

/// Screen shape. `aspect` is width / height; the fov is the vertical angle.
/// The default, aspect 1, gives the square frustum used throughout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frustum {
    pub aspect: f64,
}

impl Default for Frustum {
    fn default() -> Self {
        Self { aspect: 1.0 }
    }
}

impl Frustum {
    /// Half-angles `(horizontal, vertical)` for a vertical fov.
    pub fn half_angles(&self, fov: f64) -> (f64, f64) {
        let hv = 0.5 * fov;
        if self.aspect == 1.0 {
            (hv, hv)
        } else {
            ((self.aspect * hv.tan()).atan(), hv)
        }
    }
}

/// Visibility bits, `n_frames x n_joints`, stored as 0/1 bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointMask {
    n_frames: usize,
    n_joints: usize,
    bits: Vec<u8>,
}

impl JointMask {
    pub fn new(n_frames: usize, n_joints: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != n_frames * n_joints {
            return shape(format!(
                "mask needs {} bits, got {}",
                n_frames * n_joints,
                bits.len()
            ));
        }
        Ok(Self {
            n_frames,
            n_joints,
            bits: bits.into_iter().map(|b| (b != 0) as u8).collect(),
        })
    }

    pub fn filled(n_frames: usize, n_joints: usize, value: bool) -> Self {
        Self {
            n_frames,
            n_joints,
            bits: vec![value as u8; n_frames * n_joints],
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_joints(&self) -> usize {
        self.n_joints
    }

    #[inline]
    pub fn get(&self, frame: usize, joint: usize) -> bool {
        self.bits[frame * self.n_joints + joint] != 0
    }

    pub fn set(&mut self, frame: usize, joint: usize, v: bool) {
        self.bits[frame * self.n_joints + joint] = v as u8;
    }

    pub fn frame(&self, frame: usize) -> &[u8] {
        &self.bits[frame * self.n_joints..(frame + 1) * self.n_joints]
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn visible_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.bits.iter().map(|&b| b as usize).sum::<usize>() as f64 / self.bits.len() as f64
    }

    pub fn slice_frames(&self, start: usize, end: usize) -> Self {
        Self {
            n_frames: end - start,
            n_joints: self.n_joints,
            bits: self.bits[start * self.n_joints..end * self.n_joints].to_vec(),
        }
    }

    /// Concatenate frames of several masks with the same joint count.
    pub fn concat(parts: &[JointMask]) -> Result<Self> {
        let n_joints = parts.first().map_or(N_JOINTS, |m| m.n_joints);
        if parts.iter().any(|m| m.n_joints != n_joints) {
            return shape("masks disagree on joint count");
        }
        Ok(Self {
            n_frames: parts.iter().map(|m| m.n_frames).sum(),
            n_joints,
            bits: parts.iter().flat_map(|m| m.bits.iter().copied()).collect(),
        })
    }
}

/// Outcome of a single joint test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointVisibility {
    Inside,
    Outside,
    /// The joint coincides with the eye; reported as not visible.
    AtEye,
}

pub fn joint_visibility(joint: Vec3, cam: &CameraPoseCentric, frustum: Frustum) -> JointVisibility {
    let [a, b, c] = cam.local(joint);
    if a == 0.0 && b == 0.0 && c == 0.0 {
        return JointVisibility::AtEye;
    }
    if c <= 0.0 {
        return JointVisibility::Outside;
    }
    let (hx, hy) = frustum.half_angles(cam.fov);
    let cos_xz = c / (a * a + c * c).sqrt();
    let cos_yz = c / (b * b + c * c).sqrt();
    if cos_xz >= hx.cos() && cos_yz >= hy.cos() {
        JointVisibility::Inside
    } else {
        JointVisibility::Outside
    }
}

/// Visibility bits for one frame of joints.
pub fn joint_masks(joints: &[Vec3], cam: &CameraPoseCentric, frustum: Frustum) -> Vec<bool> {
    let mut at_eye = 0;
    let bits = joints
        .iter()
        .map(|&j| match joint_visibility(j, cam, frustum) {
            JointVisibility::Inside => true,
            JointVisibility::Outside => false,
            JointVisibility::AtEye => {
                at_eye += 1;
                false
            }
        })
        .collect();
    if at_eye > 0 {
        warn!("joint_masks: {at_eye} joint(s) coincide with the camera eye");
    }
    bits
}

/// Masks for a whole sequence, one camera per frame.
pub fn sequence_masks(
    pose: &PoseSequence,
    cameras: &[CameraPoseCentric],
    frustum: Frustum,
) -> Result<JointMask> {
    if cameras.len() != pose.n_frames() {
        return shape(format!(
            "{} cameras for {} pose frames",
            cameras.len(),
            pose.n_frames()
        ));
    }
    let mut bits = Vec::with_capacity(pose.n_frames() * N_JOINTS);
    for (i, cam) in cameras.iter().enumerate() {
        bits.extend(
            joint_masks(&pose.frame_joints(i), cam, frustum)
                .into_iter()
                .map(u8::from),
        );
    }
    JointMask::new(pose.n_frames(), N_JOINTS, bits)
}

/// Screen coordinates of a joint, `None` when it is behind the camera. The
/// visible screen is `[-1, 1]^2`.
pub fn project_to_screen(joint: Vec3, cam: &CameraPoseCentric, frustum: Frustum) -> Option<[f64; 2]> {
    let [a, b, c] = cam.local(joint);
    if c <= EPS_FRONT {
        return None;
    }
    let (hx, hy) = frustum.half_angles(cam.fov);
    Some([a / (c * hx.tan()), b / (c * hy.tan())])
}
