//! Write a synthetic dataset directory (pose/, camera/, music/) and a
//! keyframe JSON for `cinecam interp`, for trying the command line.
//!
//! `cargo run --example make_fixture -- <dir> [n_sequences] [n_frames]`

use cinecam::cli::save_sequence;
use cinecam::fixtures::{camera_keyframes, fixture_sequence};
use cinecam::model::SequenceData;

fn main() -> cinecam::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = std::path::PathBuf::from(args.first().map(String::as_str).unwrap_or("fixture"));
    let count: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(4);
    let frames: usize = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(300);
    for i in 0..count {
        let fx = fixture_sequence(format!("seq{i:02}"), frames, 100 + i as u64);
        if i == 0 {
            let keys = camera_keyframes(&fx.camera, 15);
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("seq00.keyframes.json"), serde_json::to_string_pretty(&keys)?)?;
        }
        save_sequence(&dir, &fx.id, &SequenceData { pose: fx.pose, camera: fx.camera, music: fx.music })?;
    }
    println!("wrote {count} sequences of {frames} frames to {}", dir.display());
    Ok(())
}
