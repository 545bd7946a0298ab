//! Run orchestration: corpus generation, pretraining, training with
//! checkpoint selection, decoding and evaluation.

mod commands;
mod config;
pub mod model;
pub mod pretrain;
pub mod train;

pub use commands::{
    cmd_compare, cmd_decode, cmd_evaluate, cmd_generate, new_run_dir, read_decode_header, DecodeHeader,
    GenerateSummary,
};
pub use config::{
    PathsConfig, PretrainConfig, RunConfig, ScheduleConfig, TrainingConfig, VocabConfig, DESK_LR_ENCODER, DESK_WARMUP_SCALE,
    FULL_LR_DECODER, FULL_LR_ENCODER, FULL_WARMUP_DECODER, FULL_WARMUP_ENCODER,
};
pub use model::{Codec, Model};
pub use pretrain::{cmd_pretrain, PretrainReport};
pub use train::{cmd_train, validation_loss, CheckpointRecord, RunLedger};

/// Seeds derived from the run seed, one stream per purpose.
pub mod seeds {
    use crate::corpus::generator::mix_seed;

    pub fn mix(seed: u64, index: u64) -> u64 {
        mix_seed(seed, index)
    }

    pub fn init(seed: u64) -> u64 {
        mix(seed, 1)
    }

    pub fn data(seed: u64, phase: u8) -> u64 {
        mix(seed, 10 + u64::from(phase))
    }

    pub fn dropout(seed: u64, phase: u8, step: u64) -> u64 {
        mix(mix(seed, 20 + u64::from(phase)), step)
    }

    pub fn mask(seed: u64, step: u64) -> u64 {
        mix(mix(seed, 30), step)
    }
}
