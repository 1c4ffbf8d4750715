//! Train a small denoiser on a few synthetic dances, save a checkpoint,
//! then generate a full-length camera window by window and stitch it.

use cinecam::dataset::{compute_normalization, PoseScaling};
use cinecam::fixtures::fixture_sequence;
use cinecam::generate::{GenerationOptions, Generator};
use cinecam::metrics::{dancer_missing_rate, kinetic_features};
use cinecam::geometry::camera_masks;
use cinecam::model::{extract_windows, Checkpoint, Denoiser, DenoiserConfig, SequenceData, TrainConfig, Trainer};
use cinecam::postprocess::stitch_windows;
use cinecam::diffusion::ScheduleConfig;

fn main() -> cinecam::Result<()> {
    env_logger::init();
    let data: Vec<SequenceData> = (0..3)
        .map(|s| {
            let fx = fixture_sequence(format!("train{s}"), 150, 30 + s);
            SequenceData { pose: fx.pose, camera: fx.camera, music: fx.music }
        })
        .collect();
    let cameras: Vec<_> = data.iter().map(|d| d.camera.clone()).collect();
    let stats = compute_normalization(&cameras)?;
    let scaling = PoseScaling::fit(&data.iter().map(|d| d.pose.frames()).collect::<Vec<_>>());
    let windows: Vec<_> = extract_windows(&data, 60, 15, &stats, &scaling)?.iter().map(|w| w.cast::<f32>()).collect();

    let cfg = DenoiserConfig { hidden_dim: 32, n_blocks: 1, window_frames: 60, ..Default::default() };
    let train = TrainConfig { steps: 300, batch_size: 2, schedule: ScheduleConfig { steps: 100, ..Default::default() }, ..Default::default() };
    let mut trainer = Trainer::new(Denoiser::<f32>::new(cfg)?, train, stats, scaling)?;
    let curve = trainer.train(&windows, |_, _| Ok(()))?;
    println!("loss {:.4} -> {:.4}", curve[0].1.total, curve.last().unwrap().1.total);

    let dir = tempfile_dir();
    let path = dir.join("model.dcmk");
    Checkpoint::from_trainer(&trainer).write(&path)?;
    let generator = Generator::from_checkpoint(&Checkpoint::read(&path)?)?;

    let test = fixture_sequence("test", 200, 99);
    let opts = GenerationOptions { seed: 7, stride: 30, ..Default::default() };
    let ws = generator.sample_windows(&test.pose, &test.music, &opts)?;
    println!("{} windows of {} frames every {} frames", ws.windows.len(), generator.window_frames(), ws.stride);
    let camera = stitch_windows(&ws)?.slice_rows(0, test.pose.n_frames());
    assert_eq!(camera, generator.generate(&test.pose, &test.music, &opts)?);
    println!("dancer missing rate {:.4}", dancer_missing_rate(&camera_masks(&test.pose, &camera)?)?);
    println!("per-clip kinetic features: {}", kinetic_features(&camera, 75, 30.0)?.len());
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("cinecam-sample-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    dir
}
