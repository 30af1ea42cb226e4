//! Instance refinement: per-domain, per-modality DQN agents that remove
//! candidates from each half-batch before the adversarial update.

mod agent;
mod replay;
mod reward;
mod state;

pub use agent::{
    select_action, td_target, total_dqn_loss, Agent, AgentConfig, AgentId, QNetwork, Refinement,
    Selection, Transition,
};
pub use replay::ReplayBuffer;
pub use reward::{relevance, reward};
pub use state::{partition_batch, AgentState, CandidateSet};
