//! Synthetic shifted domains, batching, and the dataset file format.

mod batch;
pub mod io;
pub mod scenario;
mod synth;

pub use batch::{batch_iterator, MixedBatch, MixedBatches, Shuffler};
pub use synth::{generate, geometry, Dataset, Domain, DomainSpec, ModalityGeometry, ModalitySpec, Segment};
