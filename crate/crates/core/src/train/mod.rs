//! Two-stage training, run bookkeeping and the ablation suite.

mod ablation;
mod config;
mod metrics;
mod trainer;

pub use ablation::{ablation_variants, run_ablation_suite};
pub use config::{Mode, TrainConfig};
pub use metrics::{
    read_masks, write_masks, AgentSelection, AgentStep, MaskRecord, RunMetrics, RunSummary, StepRecord,
    MASK_HEADER,
};
pub use trainer::{agent_ids, run_to_dir, supervised_upper_bound, RunOutput, Trainer};
