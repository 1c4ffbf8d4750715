//! The trainable conditional denoiser, its training loop and checkpoints.

pub mod checkpoint;
pub mod denoiser;
pub mod layers;

pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use denoiser::{ConditionDropout, Denoiser, DenoiserConfig, ForwardCache, Params};
pub mod train;

pub use train::{extract_windows, write_loss_csv, Example, SequenceData, TrainConfig, Trainer, TrainingWindow};
