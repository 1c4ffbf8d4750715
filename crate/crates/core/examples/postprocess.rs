//! Post-processing of a noisy keyframed camera: TV keyframe detection
//! recovers the authored keys, then Savitzky-Golay smooths between them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use cinecam::dataset::bezier_interpolate;
use cinecam::fixtures::{camera_keyframes, fixture_sequence};
use cinecam::postprocess::{detect_keyframes, savgol_coefficients, savitzky_golay, DEFAULT_PENALTY, DEFAULT_SG_ORDER, DEFAULT_SG_WINDOW};
use cinecam::Matrix;

fn rms(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    let d = a.zip_map(b, |x, y| x - y);
    (d.dot(&d) / d.as_slice().len() as f64).sqrt()
}

fn main() -> cinecam::Result<()> {
    println!("window-5 quadratic kernel x35: {:?}", savgol_coefficients(5, 2, 2)?.iter().map(|c| (c * 35.0).round()).collect::<Vec<_>>());

    // linear easing between keys every 40 frames: piecewise-constant velocity
    let n = 241;
    let fx = fixture_sequence("post", n, 12);
    let tracks = camera_keyframes(&fx.camera, 40);
    let mut clean = Matrix::zeros(n, 8);
    for (j, t) in tracks.iter().enumerate() {
        clean.set_column(j, &bezier_interpolate(t, n)?);
    }
    let authored = tracks[0].frames();
    println!("authored keys {authored:?}");
    let keys = detect_keyframes(&clean, DEFAULT_PENALTY)?;
    println!("detected on the clean camera {:?}", keys.keyframes);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noisy = Matrix::from_fn(n, 8, |i, j| clean.get(i, j) + 2e-4 * rng.sample::<f64, _>(StandardNormal));
    for penalty in [DEFAULT_PENALTY, 1.0, 5.0] {
        let keys = detect_keyframes(&noisy, penalty)?;
        println!("noisy, penalty {penalty}: {} keyframes", keys.keyframes.len());
    }
    let smooth = savitzky_golay(&noisy, DEFAULT_SG_WINDOW, DEFAULT_SG_ORDER, &keys)?;
    println!("smoothed between the detected keys, rms error vs clean: noisy {:.2e}, smoothed {:.2e}", rms(&noisy, &clean), rms(&smooth, &clean));
    Ok(())
}
