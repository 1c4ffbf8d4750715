//! Keyframe tracks with cubic Bezier easing, and their densification.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Inner control points of a unit cubic Bezier from (0,0) to (1,1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BezierEasing {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

const INVERT_TOL: f64 = 1e-10;

impl BezierEasing {
    pub const LINEAR: BezierEasing = BezierEasing {
        x1: 0.25,
        y1: 0.25,
        x2: 0.75,
        y2: 0.75,
    };

    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let e = Self { x1, y1, x2, y2 };
        e.validate()?;
        Ok(e)
    }

    /// MMD stores each control coordinate as a byte in 0..=127.
    pub fn from_mmd_bytes(bytes: [u8; 4]) -> Result<Self> {
        let [a, b, c, d] = bytes.map(|v| v as f64 / 127.0);
        Self::new(a, b, c, d)
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.x1, self.y1, self.x2, self.y2] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("easing control coordinate {v} outside [0,1]"));
            }
        }
        Ok(())
    }

    fn cubic(p1: f64, p2: f64, u: f64) -> f64 {
        let v = 1.0 - u;
        3.0 * v * v * u * p1 + 3.0 * v * u * u * p2 + u * u * u
    }

    pub fn x_at(&self, u: f64) -> f64 {
        Self::cubic(self.x1, self.x2, u)
    }

    pub fn y_at(&self, u: f64) -> f64 {
        Self::cubic(self.y1, self.y2, u)
    }

    /// Parameter `u` with `x(u) = s`, by bisection. `x` is monotone on [0,1]
    /// because both x control coordinates lie in [0,1].
    pub fn solve_parameter(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut u = s;
        for _ in 0..200 {
            u = 0.5 * (lo + hi);
            let x = self.x_at(u);
            if (x - s).abs() < INVERT_TOL {
                break;
            }
            if x < s {
                lo = u;
            } else {
                hi = u;
            }
        }
        u
    }

    /// Eased progress for linear progress `s` in [0,1].
    pub fn ease(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s >= 1.0 {
            return 1.0;
        }
        self.y_at(self.solve_parameter(s))
    }
}

impl Serialize for BezierEasing {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x1, self.y1, self.x2, self.y2].serialize(s)
    }
}

impl<'de> Deserialize<'de> for BezierEasing {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [x1, y1, x2, y2] = <[f64; 4]>::deserialize(d)?;
        BezierEasing::new(x1, y1, x2, y2).map_err(serde::de::Error::custom)
    }
}

/// A keyframe carries its value plus the easing toward the next keyframe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: u32,
    pub value: f64,
    pub easing: BezierEasing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyframeTrack {
    pub channel_id: String,
    #[serde(rename = "keys")]
    pub keyframes: Vec<Keyframe>,
}

impl KeyframeTrack {
    pub fn new(channel_id: impl Into<String>, keyframes: Vec<Keyframe>) -> Result<Self> {
        let t = Self {
            channel_id: channel_id.into(),
            keyframes,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.keyframes.is_empty() {
            return invalid(format!("track {:?} has no keyframes", self.channel_id));
        }
        if self.keyframes.windows(2).any(|w| w[1].frame <= w[0].frame) {
            return invalid(format!(
                "track {:?}: keyframe indices must be strictly increasing",
                self.channel_id
            ));
        }
        for k in &self.keyframes {
            k.easing.validate()?;
            if !k.value.is_finite() {
                return invalid(format!("track {:?}: non-finite value", self.channel_id));
            }
        }
        Ok(())
    }

    pub fn last_frame(&self) -> u32 {
        self.keyframes.last().map_or(0, |k| k.frame)
    }

    pub fn frames(&self) -> Vec<u32> {
        self.keyframes.iter().map(|k| k.frame).collect()
    }
}

/// Densify a track to `n_frames` values.
///
/// Frames before the first keyframe and after the last hold the nearest
/// keyframe value; keyframe frames reproduce their values exactly.
pub fn bezier_interpolate(track: &KeyframeTrack, n_frames: usize) -> Result<Vec<f64>> {
    track.validate()?;
    if n_frames < track.last_frame() as usize + 1 {
        return invalid(format!(
            "n_frames {n_frames} does not reach last keyframe {}",
            track.last_frame()
        ));
    }
    let keys = &track.keyframes;
    let mut out = vec![keys[0].value; n_frames];
    for pair in keys.windows(2) {
        let (k0, k1) = (&pair[0], &pair[1]);
        let span = (k1.frame - k0.frame) as f64;
        out[k0.frame as usize] = k0.value;
        for f in k0.frame + 1..k1.frame {
            let s = (f - k0.frame) as f64 / span;
            out[f as usize] = k0.value + k0.easing.ease(s) * (k1.value - k0.value);
        }
    }
    let last = keys.last().unwrap();
    for v in &mut out[last.frame as usize..] {
        *v = last.value;
    }
    Ok(out)
}

/// Keyframe documents may hold one track or a list of tracks.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum KeyframeDocument {
    One(KeyframeTrack),
    Many(Vec<KeyframeTrack>),
}

impl KeyframeDocument {
    pub fn into_tracks(self) -> Vec<KeyframeTrack> {
        match self {
            Self::One(t) => vec![t],
            Self::Many(ts) => ts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_key(easing: BezierEasing) -> KeyframeTrack {
        KeyframeTrack::new(
            "c",
            vec![
                Keyframe { frame: 0, value: 0.0, easing },
                Keyframe { frame: 10, value: 1.0, easing },
            ],
        )
        .unwrap()
    }

    #[test]
    fn diagonal_control_points_are_linear() {
        let dense = bezier_interpolate(&two_key(BezierEasing::LINEAR), 11).unwrap();
        assert!((dense[5] - 0.5).abs() < 1e-9);
    }

    /// Oracle: dense parametric sampling of (x(u), y(u)) and nearest-x lookup.
    fn sampled_oracle(e: &BezierEasing, s: f64) -> f64 {
        let n = 1_000_000;
        let bez = |p1: f64, p2: f64, u: f64| {
            let (b1, b2, b3) = (3.0 * u * (1.0 - u).powi(2), 3.0 * u * u * (1.0 - u), u.powi(3));
            b1 * p1 + b2 * p2 + b3
        };
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=n {
            let u = i as f64 / n as f64;
            let d = (bez(e.x1, e.x2, u) - s).abs();
            if d < best.0 {
                best = (d, bez(e.y1, e.y2, u));
            }
        }
        best.1
    }

    #[test]
    fn extreme_easing_matches_sampled_oracle() {
        let e = BezierEasing::new(1.0, 0.0, 1.0, 0.0).unwrap();
        // frozen from sampled_oracle(&e, 0.5)
        let expected = 0.008_779_936;
        assert!((sampled_oracle(&e, 0.5) - expected).abs() < 1e-6);
        let dense = bezier_interpolate(&two_key(e), 11).unwrap();
        assert!((dense[5] - expected).abs() < 1e-6, "{}", dense[5]);
    }

    #[test]
    fn errors() {
        assert!(KeyframeTrack::new("c", vec![]).is_err());
        let k = |f| Keyframe { frame: f, value: 0.0, easing: BezierEasing::LINEAR };
        assert!(KeyframeTrack::new("c", vec![k(3), k(3)]).is_err());
        assert!(KeyframeTrack::new("c", vec![k(3), k(1)]).is_err());
        let t = KeyframeTrack::new("c", vec![k(0), k(5)]).unwrap();
        assert!(bezier_interpolate(&t, 5).is_err());
        assert!(BezierEasing::new(1.2, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn mmd_bytes_scale_by_127() {
        let e = BezierEasing::from_mmd_bytes([20, 20, 107, 107]).unwrap();
        assert!((e.x1 - 20.0 / 127.0).abs() < 1e-15);
        assert!((e.y2 - 107.0 / 127.0).abs() < 1e-15);
    }

    #[test]
    fn json_shape() {
        let doc = r#"{"channel_id":"rot_y","keys":[{"frame":0,"value":1.5,"easing":[0.1,0.2,0.3,0.4]}]}"#;
        let t: KeyframeTrack = serde_json::from_str(doc).unwrap();
        assert_eq!(t.keyframes[0].easing.y2, 0.4);
        assert_eq!(serde_json::to_string(&t).unwrap(), doc);
    }

    fn easing_strategy() -> impl Strategy<Value = BezierEasing> {
        (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64)
            .prop_map(|(a, b, c, d)| BezierEasing::new(a, b, c, d).unwrap())
    }

    proptest! {
        #[test]
        fn keyframes_reproduced_and_values_bounded(
            easing in easing_strategy(),
            v0 in -10.0..10.0f64,
            v1 in -10.0..10.0f64,
            gap in 1u32..40,
        ) {
            let track = KeyframeTrack::new("c", vec![
                Keyframe { frame: 2, value: v0, easing },
                Keyframe { frame: 2 + gap, value: v1, easing },
            ]).unwrap();
            let n = (2 + gap + 5) as usize;
            let dense = bezier_interpolate(&track, n).unwrap();
            prop_assert_eq!(dense[2], v0);
            prop_assert_eq!(dense[(2 + gap) as usize], v1);
            prop_assert_eq!(dense[n - 1], v1);
            prop_assert_eq!(dense[0], v0);
            let (lo, hi) = (v0.min(v1), v0.max(v1));
            for v in dense {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }

        #[test]
        fn monotone_for_sorted_y_controls(
            x1 in 0.0..=1.0f64, x2 in 0.0..=1.0f64,
            ya in 0.0..=1.0f64, yb in 0.0..=1.0f64,
            v0 in -5.0..5.0f64, rise in 0.0..5.0f64,
        ) {
            let easing = BezierEasing::new(x1, ya.min(yb), x2, ya.max(yb)).unwrap();
            let track = KeyframeTrack::new("c", vec![
                Keyframe { frame: 0, value: v0, easing },
                Keyframe { frame: 30, value: v0 + rise, easing },
            ]).unwrap();
            let dense = bezier_interpolate(&track, 31).unwrap();
            for w in dense.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9);
            }
        }
    }
}
