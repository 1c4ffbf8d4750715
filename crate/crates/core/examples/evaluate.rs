//! Evaluate generated cameras against ground truth on the 10-sequence
//! synthetic fixture: FID and diversity in kinetic and shot feature spaces,
//! dancer missing rate and limbs capture difference.

use cinecam::fixtures::{evaluation_fixture, tracking_camera};
use cinecam::metrics::{evaluate, write_sequence_csv, EvalOptions, EvalSequence, LcdMode};

fn main() -> cinecam::Result<()> {
    let fx = evaluation_fixture();
    let generated: Vec<_> = fx
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut cam = tracking_camera(&s.pose, 700 + i as u64);
            // narrower lens so some limbs leave the frame
            for f in 0..cam.rows() {
                cam.set(f, 7, 0.5 * cam.get(f, 7));
            }
            cam
        })
        .collect();
    let seqs: Vec<EvalSequence> = fx
        .iter()
        .zip(&generated)
        .map(|(s, g)| EvalSequence { id: &s.id, generated: g, ground_truth: &s.camera, pose: &s.pose })
        .collect();
    for lcd in [LcdMode::Joint, LcdMode::Limb] {
        let e = evaluate(&seqs, &EvalOptions { lcd, ..Default::default() })?;
        println!("{}", serde_json::to_string(&e.report).unwrap());
        if lcd == LcdMode::Joint {
            write_sequence_csv(&e.sequences, std::io::stdout())?;
        }
    }
    Ok(())
}
