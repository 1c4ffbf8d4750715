//! Dataset preparation: keyframe densification, stream alignment, splitting
//! and camera normalization.

mod bezier;
mod normalize;
mod split;

pub use bezier::{bezier_interpolate, BezierEasing, Keyframe, KeyframeDocument, KeyframeTrack};
pub use normalize::{compute_normalization, NormalizationStats, PoseScaling};
pub use split::{
    split_dataset, Assignment, SegmentEntry, SequenceInfo, SplitManifest, MAX_SEGMENT_FRAMES,
    MIN_SEGMENT_FRAMES,
};

use std::ops::Range;

use crate::dcmb::DenseSequence;
use crate::error::{invalid, shape, Result};
use crate::matrix::Matrix;

pub const N_JOINTS: usize = 60;
pub const POSE_CHANNELS: usize = N_JOINTS * 3;
pub const FPS: usize = 30;

/// Named joint ranges of the 60-joint skeleton.
pub const LIMB_GROUPS: [(&str, Range<usize>); 4] = [
    ("head", 0..8),
    ("torso", 8..20),
    ("arms", 20..40),
    ("legs", 40..60),
];

/// Per-frame global joint positions, one row of `60 * 3` values per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence {
    frames: Matrix<f64>,
}

impl PoseSequence {
    pub fn new(frames: Matrix<f64>) -> Result<Self> {
        if frames.cols() != POSE_CHANNELS {
            return shape(format!(
                "pose needs {POSE_CHANNELS} channels, got {}",
                frames.cols()
            ));
        }
        if frames.rows() == 0 {
            return invalid("pose sequence is empty");
        }
        if !frames.is_finite() {
            return invalid("pose sequence contains non-finite values");
        }
        Ok(Self { frames })
    }

    pub fn from_dense(seq: &DenseSequence) -> Result<Self> {
        if seq.fps as usize != FPS {
            return invalid(format!("pose fps must be {FPS}, got {}", seq.fps));
        }
        Self::new(seq.frames.clone())
    }

    pub fn to_dense(&self) -> DenseSequence {
        DenseSequence::new(self.frames.clone())
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn frames(&self) -> &Matrix<f64> {
        &self.frames
    }

    pub fn joint(&self, frame: usize, joint: usize) -> [f64; 3] {
        let r = &self.frames.row(frame)[joint * 3..joint * 3 + 3];
        [r[0], r[1], r[2]]
    }

    pub fn frame_joints(&self, frame: usize) -> Vec<[f64; 3]> {
        (0..N_JOINTS).map(|j| self.joint(frame, j)).collect()
    }

    pub fn truncated(&self, n: usize) -> Self {
        Self {
            frames: self.frames.slice_rows(0, n),
        }
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            frames: self.frames.slice_rows(start, end),
        }
    }
}

/// Per-frame music features (`F` configurable).
#[derive(Clone, Debug, PartialEq)]
pub struct MusicFeatureSequence {
    frames: Matrix<f64>,
}

impl MusicFeatureSequence {
    pub fn new(frames: Matrix<f64>) -> Result<Self> {
        if frames.rows() == 0 {
            return invalid("music sequence is empty");
        }
        if !frames.is_finite() {
            return invalid("music features contain non-finite values");
        }
        Ok(Self { frames })
    }

    pub fn from_dense(seq: &DenseSequence) -> Result<Self> {
        if seq.fps as usize != FPS {
            return invalid(format!("music fps must be {FPS}, got {}", seq.fps));
        }
        Self::new(seq.frames.clone())
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn frames(&self) -> &Matrix<f64> {
        &self.frames
    }

    pub fn truncated(&self, n: usize) -> Self {
        Self {
            frames: self.frames.slice_rows(0, n),
        }
    }
}

/// Pose, dense camera and music trimmed to one common length.
#[derive(Clone, Debug)]
pub struct AlignedStreams {
    pub pose: PoseSequence,
    /// One column per input track, in track order.
    pub camera: Matrix<f64>,
    pub music: MusicFeatureSequence,
}

impl AlignedStreams {
    pub fn n_frames(&self) -> usize {
        self.pose.n_frames()
    }
}

/// Densify the camera tracks and truncate all streams to the shortest.
///
/// Camera tracks are densified to at least the pose length so the camera
/// holds its last keyframe when it ends before the dance.
pub fn align_streams(
    pose: &PoseSequence,
    camera_tracks: &[KeyframeTrack],
    music: &MusicFeatureSequence,
) -> Result<AlignedStreams> {
    if camera_tracks.is_empty() {
        return invalid("no camera tracks");
    }
    let natural = camera_tracks
        .iter()
        .map(|t| t.last_frame() as usize + 1)
        .max()
        .unwrap();
    let dense_len = natural.max(pose.n_frames());
    let mut camera = Matrix::zeros(dense_len, camera_tracks.len());
    for (j, track) in camera_tracks.iter().enumerate() {
        camera.set_column(j, &bezier_interpolate(track, dense_len)?);
    }
    let n = pose.n_frames().min(music.n_frames()).min(dense_len);
    if n == 0 {
        return invalid("streams have no common frames");
    }
    Ok(AlignedStreams {
        pose: pose.truncated(n),
        camera: camera.slice_rows(0, n),
        music: music.truncated(n),
    })
}
