use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

use super::synth::Dataset;

/// Endless epoch-wise shuffled draws over `0..len`.
#[derive(Clone, Debug)]
pub struct Shuffler {
    order: Vec<usize>,
    pos: usize,
    rng: Rng,
}

impl Shuffler {
    pub fn new(len: usize, rng: Rng) -> Self {
        let mut s = Self {
            order: (0..len).collect(),
            pos: len,
            rng,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    /// Next `n` indices; a new epoch starts when the current one cannot supply all `n`.
    pub fn take(&mut self, n: usize) -> Vec<usize> {
        if self.pos + n > self.order.len() {
            self.reshuffle();
        }
        let out = self.order[self.pos..self.pos + n].to_vec();
        self.pos += n;
        out
    }
}

/// Indices into `dataset.source` and `dataset.target` for one step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedBatch {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

/// Half source, half target batches, reshuffled every epoch from the run seed.
#[derive(Clone, Debug)]
pub struct MixedBatches {
    half: usize,
    source: Shuffler,
    target: Shuffler,
}

impl MixedBatches {
    pub fn new(dataset: &Dataset, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || !batch_size.is_multiple_of(2) {
            return Err(Error::Config(format!("batch size {batch_size} must be even and positive")));
        }
        let half = batch_size / 2;
        if half > dataset.source.len() || half > dataset.target.len() {
            return Err(Error::Config(format!(
                "half batch {half} exceeds domain sizes ({} source, {} target)",
                dataset.source.len(),
                dataset.target.len()
            )));
        }
        Ok(Self {
            half,
            source: Shuffler::new(dataset.source.len(), rng::derive(seed, 0x51)),
            target: Shuffler::new(dataset.target.len(), rng::derive(seed, 0x52)),
        })
    }
}

impl Iterator for MixedBatches {
    type Item = MixedBatch;

    fn next(&mut self) -> Option<MixedBatch> {
        Some(MixedBatch {
            source: self.source.take(self.half),
            target: self.target.take(self.half),
        })
    }
}

/// Convenience constructor matching the mixed-batch stream contract.
pub fn batch_iterator(dataset: &Dataset, batch_size: usize, seed: u64) -> Result<MixedBatches> {
    MixedBatches::new(dataset, batch_size, seed)
}
