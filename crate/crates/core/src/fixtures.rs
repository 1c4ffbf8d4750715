//! Procedural fixtures: a 60-joint dancer, a tracking camera, spectral-band
//! music features and the 10-sequence evaluation set.
//!
//! Joint layout: head 0..8, torso 8..20, left arm 20..30, right arm 30..40,
//! left leg 40..50, right leg 50..60.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{BezierEasing, Keyframe, KeyframeTrack, PoseSequence, FPS, N_JOINTS, POSE_CHANNELS};
use crate::matrix::Matrix;

pub const MUSIC_BANDS: usize = 32;

/// Per-sequence randomness of the dancer.
#[derive(Clone, Copy, Debug)]
struct Style {
    sway: f64,
    sway_hz: f64,
    drift_hz: f64,
    turn_hz: f64,
    arm_hz: f64,
    phase: f64,
}

impl Style {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Self {
            sway: rng.random_range(0.3..0.8),
            sway_hz: rng.random_range(0.15..0.4),
            drift_hz: rng.random_range(0.05..0.15),
            turn_hz: rng.random_range(0.02..0.08),
            arm_hz: rng.random_range(0.8..2.0),
            phase: rng.random_range(0.0..TAU),
        }
    }
}

/// Joint position in the dancer's body frame (x right, y up, z forward).
fn body_joint(j: usize, time: f64, s: &Style) -> [f64; 3] {
    let arm = (TAU * s.arm_hz * time + s.phase).sin();
    let step = (TAU * s.arm_hz * 0.5 * time + s.phase).sin();
    match j {
        0..=7 => {
            let a = TAU * j as f64 / 8.0;
            [0.1 * a.cos(), 1.62 + 0.1 * a.sin(), 0.05 * arm]
        }
        8..=19 => {
            let k = (j - 8) as f64;
            let side = if j % 2 == 0 { -1.0 } else { 1.0 };
            [side * (0.12 + 0.01 * k), 0.9 + 0.05 * k, 0.02 * step]
        }
        20..=39 => {
            let side = if j < 30 { -1.0 } else { 1.0 };
            let k = ((j - 20) % 10) as f64 + 1.0;
            let lift = 0.6 * arm * side + 0.3;
            let reach = 0.065 * k;
            [side * (0.2 + reach * lift.cos()), 1.45 - reach * lift.sin().abs() + 0.3 * lift.sin() * (k / 10.0), 0.1 * arm]
        }
        _ => {
            let side = if j < 50 { -1.0 } else { 1.0 };
            let k = ((j - 40) % 10) as f64 + 1.0;
            let swing = 0.35 * step * side;
            let len = 0.088 * k;
            [side * 0.12 + 0.05 * swing, 0.9 - len * swing.cos(), len * swing.sin()]
        }
    }
}

fn root(time: f64, s: &Style) -> ([f64; 3], f64) {
    let x = s.sway * (TAU * s.sway_hz * time + s.phase).sin();
    let z = 0.5 * s.sway * (TAU * s.drift_hz * time).sin();
    let y = 0.05 * (TAU * 2.0 * time).sin().abs();
    let heading = 0.8 * (TAU * s.turn_hz * time + s.phase).sin();
    ([x, y, z], heading)
}

/// A dancer swaying, turning and swinging limbs, `n_frames` at 30 fps.
pub fn synthetic_dancer(n_frames: usize, seed: u64) -> PoseSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let style = Style::draw(&mut rng);
    let mut m = Matrix::zeros(n_frames, POSE_CHANNELS);
    for i in 0..n_frames {
        let time = i as f64 / FPS as f64;
        let (r, heading) = root(time, &style);
        let (c, s) = (heading.cos(), heading.sin());
        let row = m.row_mut(i);
        for j in 0..N_JOINTS {
            let b = body_joint(j, time, &style);
            row[3 * j] = r[0] + c * b[0] + s * b[2];
            row[3 * j + 1] = r[1] + b[1];
            row[3 * j + 2] = r[2] - s * b[0] + c * b[2];
        }
    }
    PoseSequence::new(m).expect("fixture pose is finite and 180 wide")
}

/// A camera following the dancer's centroid: slow orbit, gentle tilt,
/// breathing distance and fov. `N x 8` MMD channels.
pub fn tracking_camera(pose: &PoseSequence, seed: u64) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let orbit_hz = rng.random_range(0.02..0.06);
    let base_yaw = rng.random_range(-0.6..0.6);
    let breathe_hz = rng.random_range(0.05..0.2);
    let n = pose.n_frames();
    let mut centroid = vec![[0.0; 3]; n];
    for (i, c) in centroid.iter_mut().enumerate() {
        for j in 0..N_JOINTS {
            let p = pose.joint(i, j);
            for k in 0..3 {
                c[k] += p[k] / N_JOINTS as f64;
            }
        }
    }
    // light exponential smoothing so the camera lags the dancer
    let mut smooth = centroid[0];
    Matrix::from_fn(n, 8, |i, ch| {
        if ch == 0 {
            for k in 0..3 {
                smooth[k] += 0.2 * (centroid[i][k] - smooth[k]);
            }
        }
        let time = i as f64 / FPS as f64;
        match ch {
            0 => smooth[0],
            1 => smooth[1] + 0.2,
            2 => smooth[2],
            3 => 0.12 + 0.05 * (TAU * breathe_hz * time).sin(),
            4 => base_yaw + 0.5 * (TAU * orbit_hz * time).sin(),
            5 => 0.03 * (TAU * 0.1 * time).sin(),
            6 => 5.0 + 0.8 * (TAU * breathe_hz * time).cos(),
            _ => 0.75 + 0.08 * (TAU * breathe_hz * 0.5 * time).sin(),
        }
    })
}

/// Spectral-band features with a beat pulse, `n_frames x bands`.
pub fn synthetic_music(n_frames: usize, bands: usize, seed: u64) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    let bpm = rng.random_range(90.0..140.0);
    let phases: Vec<f64> = (0..bands).map(|_| rng.random_range(0.0..TAU)).collect();
    Matrix::from_fn(n_frames, bands, |i, b| {
        let time = i as f64 / FPS as f64;
        let beat = (TAU * bpm / 60.0 * time).cos().max(0.0).powi(4);
        let tone = (TAU * (0.1 + 0.05 * b as f64) * time + phases[b]).sin();
        0.5 * beat * (1.0 - b as f64 / bands as f64) + 0.3 * tone
    })
}

/// One synthetic sequence: dancer, camera and music.
#[derive(Clone, Debug)]
pub struct FixtureSequence {
    pub id: String,
    pub pose: PoseSequence,
    pub camera: Matrix<f64>,
    pub music: Matrix<f64>,
}

pub fn fixture_sequence(id: impl Into<String>, n_frames: usize, seed: u64) -> FixtureSequence {
    let pose = synthetic_dancer(n_frames, seed);
    let camera = tracking_camera(&pose, seed);
    FixtureSequence {
        id: id.into(),
        music: synthetic_music(n_frames, MUSIC_BANDS, seed),
        pose,
        camera,
    }
}

/// The 10-sequence, 10-second evaluation fixture.
pub fn evaluation_fixture() -> Vec<FixtureSequence> {
    (0..10)
        .map(|i| fixture_sequence(format!("seq{i:02}"), 300, 1000 + i as u64))
        .collect()
}

/// The single 5-second window used by the overfit harness.
pub fn overfit_window() -> FixtureSequence {
    fixture_sequence("overfit", 150, 7)
}

/// MMD channel names in storage order.
pub const MMD_CHANNEL_NAMES: [&str; 8] = ["rp_x", "rp_y", "rp_z", "rot_x", "rot_y", "rot_z", "distance", "fov"];

/// Keyframe tracks sampling each column of `camera` every `every` frames
/// and at the last frame, with linear easing.
pub fn camera_keyframes(camera: &Matrix<f64>, every: usize) -> Vec<KeyframeTrack> {
    let n = camera.rows();
    let mut frames: Vec<usize> = (0..n).step_by(every.max(1)).collect();
    if frames.last() != Some(&(n - 1)) {
        frames.push(n - 1);
    }
    let linear = BezierEasing::new(0.25, 0.25, 0.75, 0.75).expect("linear easing");
    (0..camera.cols())
        .map(|j| {
            let keys = frames
                .iter()
                .map(|&f| Keyframe { frame: f as u32, value: camera.get(f, j), easing: linear })
                .collect();
            let name = MMD_CHANNEL_NAMES.get(j).map_or_else(|| format!("c{j}"), |s| s.to_string());
            KeyframeTrack::new(name, keys).expect("increasing frames")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LIMB_GROUPS;
    use crate::geometry::camera_masks;

    #[test]
    fn keyframes_reproduce_the_camera_at_keys() {
        let fx = fixture_sequence("k", 31, 2);
        let tracks = camera_keyframes(&fx.camera, 5);
        assert_eq!(tracks.len(), 8);
        for (j, t) in tracks.iter().enumerate() {
            let dense = crate::dataset::bezier_interpolate(t, 31).unwrap();
            for f in [0, 5, 25, 30] {
                assert_eq!(dense[f], fx.camera.get(f, j));
            }
            let expected = 0.6 * fx.camera.get(10, j) + 0.4 * fx.camera.get(15, j);
            assert!((dense[12] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_and_finite() {
        let a = fixture_sequence("a", 90, 3);
        let b = fixture_sequence("a", 90, 3);
        assert_eq!(a.pose, b.pose);
        assert_eq!(a.camera, b.camera);
        assert_eq!(a.music, b.music);
        assert!(a.camera.is_finite() && a.music.is_finite());
        assert_ne!(fixture_sequence("a", 90, 4).pose, a.pose);
    }

    #[test]
    fn dancer_is_mostly_in_view() {
        for s in evaluation_fixture() {
            let m = camera_masks(&s.pose, &s.camera).unwrap();
            assert!(m.visible_fraction() > 0.7, "{}: {}", s.id, m.visible_fraction());
        }
    }

    #[test]
    fn limb_groups_cover_all_joints() {
        let mut seen = [false; N_JOINTS];
        for (_, r) in LIMB_GROUPS {
            for j in r {
                assert!(!seen[j]);
                seen[j] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
