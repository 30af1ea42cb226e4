//! Multi-modal instance refinement (MMIR) for domain-adversarial classification.
//!
//! Per-modality feature extractors feed late-fused action classifiers and
//! per-modality domain discriminators behind gradient reversal. Before each
//! adversarial update, one source agent and one target agent per modality
//! (deep Q-networks) remove instances judged harmful to alignment.
//!
//! Everything runs on a small reverse-mode differentiation tape ([`diff`]),
//! generic over the [`Scalar`] type. The crate root re-exports the `f64`
//! instantiation used by the trainer and the CLI.

pub mod data;
pub mod diff;
pub mod error;
pub mod model;
pub mod refine;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double precision is the default working precision.
pub type Real = f64;

pub type Tensor = diff::Tensor2D<Real>;
pub type Tape = diff::Tape<Real>;
pub type ParamStore = diff::ParamStore<Real>;
pub type Adam = diff::Adam<Real>;
pub type Model = model::TwoStreamModel<Real>;
pub type Agent = refine::Agent<Real>;
pub type QNetwork = refine::QNetwork<Real>;
pub type Transition = refine::Transition<Real>;
pub type ReplayBuffer = refine::ReplayBuffer<Real>;
pub type Trainer = train::Trainer<Real>;

pub use data::{Dataset, DomainSpec, Segment};
pub use train::{Mode, RunMetrics, TrainConfig};
