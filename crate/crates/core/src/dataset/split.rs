//! Cutting sequences into 17-35 s pieces at keyframes, and the seeded
//! per-genre train/test/validation assignment.

use std::collections::BTreeMap;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FPS;
use crate::error::{invalid, Result};

pub const MIN_SEGMENT_FRAMES: u32 = 17 * FPS as u32;
pub const MAX_SEGMENT_FRAMES: u32 = 35 * FPS as u32;

const TRAIN_P: f64 = 0.8;
const TEST_P: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceInfo {
    pub sequence_id: String,
    pub genre: String,
    pub n_frames: u32,
    /// Camera keyframe indices.
    pub keyframes: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assignment {
    Train,
    Test,
    Validation,
}

/// One piece of a sequence, frames `[start_frame, end_frame)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub sequence_id: String,
    pub start_frame: u32,
    pub end_frame: u32,
    pub assignment: Assignment,
    /// Length outside [17 s, 35 s] because no admissible keyframe existed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

impl SegmentEntry {
    pub fn len(&self) -> u32 {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub rng_seed: u64,
    pub genres: BTreeMap<String, Vec<SegmentEntry>>,
}

impl SplitManifest {
    pub fn segments(&self) -> impl Iterator<Item = &SegmentEntry> {
        self.genres.values().flatten()
    }

    pub fn count(&self, a: Assignment) -> usize {
        self.segments().filter(|s| s.assignment == a).count()
    }
}

struct Cut {
    start: u32,
    end: u32,
    flagged: bool,
}

/// Sequence boundaries (0 and `n_frames`) count as cut points alongside the
/// keyframes.
fn cut_sequence(info: &SequenceInfo, rng: &mut ChaCha8Rng) -> Vec<Cut> {
    let n = info.n_frames;
    let mut points: Vec<u32> = info
        .keyframes
        .iter()
        .copied()
        .filter(|&k| k > 0 && k < n)
        .collect();
    points.sort_unstable();
    points.dedup();
    points.push(n);

    let mut cuts: Vec<Cut> = Vec::new();
    let mut start = 0u32;
    while start < n {
        let remaining = n - start;
        if remaining < MIN_SEGMENT_FRAMES {
            // tail remainder: merge into the previous piece
            let prev = cuts.last_mut().expect("first piece is at least 17 s");
            prev.end = n;
            prev.flagged = prev.end - prev.start > MAX_SEGMENT_FRAMES;
            break;
        }
        if remaining <= MAX_SEGMENT_FRAMES {
            cuts.push(Cut { start, end: n, flagged: false });
            break;
        }
        let in_range: Vec<u32> = points
            .iter()
            .copied()
            .filter(|&p| p >= start + MIN_SEGMENT_FRAMES && p <= start + MAX_SEGMENT_FRAMES)
            .collect();
        // prefer cuts that leave either nothing or a full-length remainder
        let clean: Vec<u32> = in_range
            .iter()
            .copied()
            .filter(|&p| p == n || n - p >= MIN_SEGMENT_FRAMES)
            .collect();
        let pool = if clean.is_empty() { &in_range } else { &clean };
        let (end, flagged) = if pool.is_empty() {
            let next = points
                .iter()
                .copied()
                .find(|&p| p > start + MAX_SEGMENT_FRAMES)
                .unwrap_or(n);
            warn!(
                "split: {} has no admissible cut after frame {start}; extending to {next}",
                info.sequence_id
            );
            (next, true)
        } else {
            (pool[rng.random_range(0..pool.len())], false)
        };
        cuts.push(Cut { start, end, flagged });
        start = end;
    }
    cuts
}

/// Cut every sequence at keyframes into 17-35 s pieces, then assign pieces
/// within each genre to train/test/validation with probabilities
/// 0.8/0.1/0.1. Deterministic given the seed.
pub fn split_dataset(sequences: &[SequenceInfo], rng_seed: u64) -> Result<SplitManifest> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut pending: BTreeMap<String, Vec<(String, Cut)>> = BTreeMap::new();
    for info in sequences {
        if info.n_frames < MIN_SEGMENT_FRAMES {
            return invalid(format!(
                "{} is shorter than 17 s ({} frames)",
                info.sequence_id, info.n_frames
            ));
        }
        if info.keyframes.is_empty() {
            return invalid(format!("{} has no keyframes", info.sequence_id));
        }
        for cut in cut_sequence(info, &mut rng) {
            pending
                .entry(info.genre.clone())
                .or_default()
                .push((info.sequence_id.clone(), cut));
        }
    }
    let mut genres = BTreeMap::new();
    for (genre, cuts) in pending {
        let entries = cuts
            .into_iter()
            .map(|(sequence_id, cut)| {
                let u: f64 = rng.random();
                let assignment = if u < TRAIN_P {
                    Assignment::Train
                } else if u < TRAIN_P + TEST_P {
                    Assignment::Test
                } else {
                    Assignment::Validation
                };
                SegmentEntry {
                    sequence_id,
                    start_frame: cut.start,
                    end_frame: cut.end,
                    assignment,
                    flagged: cut.flagged,
                }
            })
            .collect();
        genres.insert(genre, entries);
    }
    Ok(SplitManifest { rng_seed, genres })
}
