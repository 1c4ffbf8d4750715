//! Convert an MMD camera to the camera-centric form and back, then compute
//! joint visibility masks and screen projections for a dancer.

use cinecam::geometry::{centric_to_mmd, joint_masks, mmd_to_centric, project_to_screen, CameraPoseMMD, Frustum};
use cinecam::fixtures::synthetic_dancer;

fn main() -> cinecam::Result<()> {
    let mmd = CameraPoseMMD::new([0.0, 1.0, 0.0], [0.1, 0.4, 0.0], 4.0, 0.8)?;
    let centric = mmd_to_centric(&mmd);
    println!("eye {:?}", centric.eye);
    println!("view axis {:?}", centric.z0);
    let (back, gimbal) = centric_to_mmd(&centric, mmd.distance)?;
    let err = mmd.to_channels().iter().zip(back.to_channels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("round trip error {err:.1e}, gimbal lock {gimbal}");

    let pose = synthetic_dancer(1, 3);
    let joints = pose.frame_joints(0);
    let visible = joint_masks(&joints, &centric, Frustum::default());
    println!("{} of {} joints visible", visible.iter().filter(|&&v| v).count(), joints.len());
    for (j, joint) in joints.iter().enumerate().take(5) {
        match project_to_screen(*joint, &centric, Frustum::default()) {
            Some([u, v]) => println!("joint {j}: screen ({u:+.3}, {v:+.3})"),
            None => println!("joint {j}: behind the camera"),
        }
    }
    Ok(())
}
