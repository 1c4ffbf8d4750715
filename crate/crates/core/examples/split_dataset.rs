//! Cut sequences at camera keyframes into 17-35 s segments and assign them
//! to train, test and validation per genre.

use cinecam::dataset::{split_dataset, Assignment, SequenceInfo};

fn main() -> cinecam::Result<()> {
    let sequences: Vec<SequenceInfo> = (0..12)
        .map(|i| SequenceInfo {
            sequence_id: format!("dance{i:02}"),
            genre: ["pop", "jazz", "folk"][i % 3].to_string(),
            n_frames: 3000 + 300 * i as u32,
            keyframes: (0..).map(|k| k * 240).take_while(|&k| k < 3000 + 300 * i as u32).collect(),
        })
        .collect();
    let manifest = split_dataset(&sequences, 7)?;
    for (genre, segments) in &manifest.genres {
        println!("{genre}: {} segments", segments.len());
    }
    for a in [Assignment::Train, Assignment::Test, Assignment::Validation] {
        println!("{a:?}: {}", manifest.count(a));
    }
    println!("{}", serde_json::to_string_pretty(&manifest.genres["jazz"][..2]).unwrap());
    Ok(())
}
