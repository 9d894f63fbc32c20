mod adam;
mod hf;
mod partition;

pub use adam::{adam_step, polyak_update, AdamConfig, AdamState};
pub use hf::{
    block_hf_step, block_hf_step_feeds, make_block_operator, BlockOperator, BlockReport, HfConfig, StepReport,
    TrainerState,
};
pub use partition::{Block, BlockPartition, PARTITION_PRESETS};
