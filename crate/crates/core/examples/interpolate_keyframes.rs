//! Densify Bezier-eased keyframe tracks and align them with a dance and
//! its music.

use cinecam::dataset::{align_streams, bezier_interpolate, BezierEasing, Keyframe, KeyframeTrack, MusicFeatureSequence};
use cinecam::fixtures::{synthetic_dancer, synthetic_music, MUSIC_BANDS};

fn main() -> cinecam::Result<()> {
    let ease_in_out = BezierEasing::new(0.42, 0.0, 0.58, 1.0)?;
    let linear = BezierEasing::new(0.25, 0.25, 0.75, 0.75)?;
    let distance = KeyframeTrack::new(
        "distance",
        vec![
            Keyframe { frame: 0, value: 6.0, easing: ease_in_out },
            Keyframe { frame: 30, value: 3.0, easing: linear },
            Keyframe { frame: 45, value: 4.5, easing: linear },
        ],
    )?;
    let dense = bezier_interpolate(&distance, 60)?;
    for f in (0..60).step_by(5) {
        println!("frame {f:2}  distance {:.4}", dense[f]);
    }

    // the camera is held at its last key for the rest of the 80-frame dance;
    // the 70-frame music clip sets the common length
    let pose = synthetic_dancer(80, 1);
    let music = MusicFeatureSequence::new(synthetic_music(70, MUSIC_BANDS, 1))?;
    let aligned = align_streams(&pose, &[distance], &music)?;
    println!("aligned to {} frames; last distance {:.4}", aligned.n_frames(), aligned.camera.get(aligned.n_frames() - 1, 0));
    Ok(())
}
