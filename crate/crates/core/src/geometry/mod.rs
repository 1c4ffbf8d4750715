//! Camera parameterizations and view-dependent geometry.

pub mod camera;
pub mod polygon;
pub mod shot;
pub mod visibility;

pub use camera::{centric_to_mmd, mmd_to_centric, CameraPoseCentric, CameraPoseMMD, Vec3};
pub use polygon::{clip_convex, convex_hull, polygon_area, Point2, Rect};
pub use shot::{shot_features, ShotFeature};
pub use visibility::{
    joint_masks, joint_visibility, project_to_screen, sequence_masks, Frustum, JointMask,
    JointVisibility,
};

use log::warn;

use crate::dataset::PoseSequence;
use crate::error::Result;
use crate::matrix::Matrix;

/// Per-frame MMD cameras (8 channels) from a dense matrix.
pub fn mmd_frames(seq: &Matrix<f64>) -> Result<Vec<CameraPoseMMD>> {
    (0..seq.rows()).map(|i| CameraPoseMMD::from_channels(seq.row(i))).collect()
}

/// Per-frame centric cameras from an 8-channel MMD matrix.
pub fn centric_frames(seq: &Matrix<f64>) -> Result<Vec<CameraPoseCentric>> {
    Ok(mmd_frames(seq)?.iter().map(mmd_to_centric).collect())
}

/// Per-frame centric cameras from generated channels, clamping fov and
/// distance into range. Returns the cameras and the number of clamped frames.
pub fn clamped_centric_frames(seq: &Matrix<f64>) -> Result<(Vec<CameraPoseCentric>, usize)> {
    let mut clamped = 0;
    let mut out = Vec::with_capacity(seq.rows());
    for i in 0..seq.rows() {
        let (cam, c) = CameraPoseMMD::from_channels_clamped(seq.row(i))?;
        clamped += c as usize;
        out.push(cam.to_centric());
    }
    if clamped > 0 {
        warn!("{clamped} camera frame(s) had fov or distance out of range; clamped");
    }
    Ok((out, clamped))
}

/// Joint masks for a pose under an 8-channel MMD camera sequence (square
/// frustum). Out-of-range fov or distance values are clamped.
pub fn camera_masks(pose: &PoseSequence, camera: &Matrix<f64>) -> Result<JointMask> {
    let (cams, _) = clamped_centric_frames(camera)?;
    sequence_masks(pose, &cams, Frustum::default())
}
