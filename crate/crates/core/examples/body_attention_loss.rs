//! The composite training loss on normalized cameras: reconstruction,
//! velocity, acceleration and body attention, with its gradient.

use cinecam::dataset::compute_normalization;
use cinecam::fixtures::{fixture_sequence, tracking_camera};
use cinecam::geometry::{camera_masks, centric_frames, centric_to_mmd, CameraPoseCentric};
use cinecam::objectives::{body_attention, grad_total_loss, LossContext, LossWeights};

fn main() -> cinecam::Result<()> {
    let fx = fixture_sequence("loss", 60, 4);
    let stats = compute_normalization(std::slice::from_ref(&fx.camera))?;
    let mask = camera_masks(&fx.pose, &fx.camera)?;

    // same eye, view axis reversed: the dancer is behind the camera
    let mut away = fx.camera.clone();
    for (i, cam) in centric_frames(&fx.camera)?.into_iter().enumerate() {
        let neg = |v: [f64; 3]| v.map(|x| -x);
        let turned = CameraPoseCentric { x0: neg(cam.x0), z0: neg(cam.z0), ..cam };
        let (mmd, _) = centric_to_mmd(&turned, fx.camera.get(i, 6))?;
        away.row_mut(i).copy_from_slice(&mmd.to_channels());
    }
    for (name, cam) in [("ground truth", &fx.camera), ("other camera", &tracking_camera(&fx.pose, 9)), ("turned away", &away)] {
        let ba = body_attention(fx.pose.frames(), cam, &mask)?;
        println!("{name:13} L_ba {:.5}", ba.value);
    }

    let x = stats.apply(&fx.camera)?;
    let x_hat = stats.apply(&away)?;
    let ctx = LossContext { pose: fx.pose.frames(), mask: &mask, stats: &stats };
    let (report, grad) = grad_total_loss(&x, &x_hat, ctx, &LossWeights::default())?;
    println!("{report:?}");
    println!("gradient norm {:.5}", grad.dot(&grad).sqrt());
    Ok(())
}
