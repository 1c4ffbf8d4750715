//! Shot features of a tracking camera: the fraction of the dancer's
//! projected body on screen and the screen fraction the body covers.

use cinecam::fixtures::fixture_sequence;
use cinecam::geometry::{clamped_centric_frames, shot_features, Frustum};
use cinecam::metrics::shot_feature_stats;

fn main() -> cinecam::Result<()> {
    let fx = fixture_sequence("shots", 90, 2);
    let (cams, _) = clamped_centric_frames(&fx.camera)?;
    for f in (0..90).step_by(15) {
        let s = shot_features(&fx.pose.frame_joints(f), &cams[f], Frustum::default());
        println!("frame {f:2}  S3/S1 {:.4}  S3/S2 {:.4}", s.s3_over_s1, s.s3_over_s2);
    }
    // the evaluation feature adds one-step velocities of both ratios
    let stats = shot_feature_stats(&fx.pose, &fx.camera)?;
    println!("frame 0 feature {:?}", stats[0]);
    Ok(())
}
