//! Overfit the desk denoiser on one synthetic 5-second window, then sample it
//! back with full conditioning.

use std::time::Instant;

use cinecam::dataset::{compute_normalization, PoseScaling};
use cinecam::diffusion::{sample, window_rng, Conditions, SamplerConfig};
use cinecam::fixtures::overfit_window;
use cinecam::model::{extract_windows, Denoiser, DenoiserConfig, SequenceData, TrainConfig, Trainer};
use cinecam::objectives::loss_rec;

fn main() -> cinecam::Result<()> {
    env_logger::init();
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let fx = overfit_window();
    let stats = compute_normalization(std::slice::from_ref(&fx.camera))?;
    let scaling = PoseScaling::fit(&[fx.pose.frames()]);
    let seq = SequenceData { pose: fx.pose.clone(), camera: fx.camera.clone(), music: fx.music.clone() };
    let windows = extract_windows(&[seq], 150, 15, &stats, &scaling)?;
    let windows: Vec<_> = windows.iter().map(|w| w.cast::<f32>()).collect();

    let mut train = TrainConfig::default();
    if let Some(&lr) = args.first() {
        train.learning_rate = lr;
    }
    if let Some(&steps) = args.get(1) {
        train.steps = steps as usize;
    }
    if let Some(&clip) = args.get(2) {
        train.clip_norm = clip;
    }
    let model = Denoiser::<f32>::new(DenoiserConfig::default())?;
    let mut trainer = Trainer::new(model, train, stats, scaling)?;
    let start = Instant::now();
    let curve = trainer.train(&windows, |_, _| Ok(()))?;
    for (s, r) in curve.iter().filter(|(s, _)| s % 200 == 0) {
        println!("step {s:5}  rec {:.5}  total {:.5}", r.rec, r.total);
    }
    let grid: Vec<usize> = (0..=10).map(|k| (k * 100).max(1)).collect();
    let rec = trainer.reconstruction_loss(&windows[0], &grid, 99)?;
    println!("train {:.1?}; grid rec loss {rec:.5}", start.elapsed());

    let start = Instant::now();
    let w = &windows[0];
    let cond = Conditions { pose: Some(&w.pose_cond), music: Some(&w.music) };
    let out = sample(&trainer.model, cond, trainer.schedule(), &SamplerConfig::default(), (150, 8), &mut window_rng(1, 0))?;
    println!("sample {:.1?}; mse vs target {:.5}", start.elapsed(), loss_rec(&w.camera, &out)?);
    Ok(())
}
