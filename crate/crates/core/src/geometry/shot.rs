//! Shot features: how much of the dancer is on screen and how much of the
//! screen the dancer fills.
//!
//! The dancer's projected area is approximated by the convex hull of the
//! projected joints.

use log::warn;

use super::camera::{CameraPoseCentric, Vec3};
use super::polygon::{clip_convex, convex_hull, polygon_area, Rect};
use super::visibility::{project_to_screen, Frustum};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ShotFeature {
    /// Fraction of the projected body inside the screen (S3 / S1).
    pub s3_over_s1: f64,
    /// Fraction of the screen covered by the body (S3 / S2).
    pub s3_over_s2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShotAreas {
    pub body: f64,
    pub screen: f64,
    pub body_on_screen: f64,
}

pub fn shot_areas(joints: &[Vec3], cam: &CameraPoseCentric, frustum: Frustum) -> ShotAreas {
    let projected: Vec<[f64; 2]> = joints
        .iter()
        .filter_map(|&j| project_to_screen(j, cam, frustum))
        .collect();
    let hull = convex_hull(&projected);
    let screen = Rect::SCREEN.area();
    if hull.is_empty() {
        if projected.len() >= 3 {
            warn!("shot_features: projected joints are collinear");
        }
        return ShotAreas {
            body: 0.0,
            screen,
            body_on_screen: 0.0,
        };
    }
    ShotAreas {
        body: polygon_area(&hull),
        screen,
        body_on_screen: polygon_area(&clip_convex(&hull, &Rect::SCREEN)),
    }
}

pub fn shot_features(joints: &[Vec3], cam: &CameraPoseCentric, frustum: Frustum) -> ShotFeature {
    let a = shot_areas(joints, cam, frustum);
    if a.body <= 0.0 {
        return ShotFeature::default();
    }
    ShotFeature {
        s3_over_s1: (a.body_on_screen / a.body).clamp(0.0, 1.0),
        s3_over_s2: a.body_on_screen / a.screen,
    }
}
