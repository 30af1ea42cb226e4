use rand::seq::SliceRandom;
use rand::Rng;

use crate::diff::Tensor2D;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `candidate_size` positions of one half-batch an episode runs over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    /// Positions in the half-batch.
    pub members: Vec<usize>,
    pub removed: Vec<bool>,
}

impl CandidateSet {
    pub fn new(members: Vec<usize>) -> Self {
        let n = members.len();
        Self {
            members,
            removed: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn removed_count(&self) -> usize {
        self.removed.iter().filter(|&&r| r).count()
    }
}

/// Splits `0..len` into shuffled, disjoint candidate sets of `candidate_size`.
pub fn partition_batch(len: usize, candidate_size: usize, rng: &mut impl Rng) -> Result<Vec<CandidateSet>> {
    if candidate_size == 0 || !len.is_multiple_of(candidate_size) {
        return Err(Error::Config(format!(
            "half-batch of {len} is not divisible into candidate sets of {candidate_size}"
        )));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    Ok(order
        .chunks(candidate_size)
        .map(|c| CandidateSet::new(c.to_vec()))
        .collect())
}

/// `d_f x N_c` state: column `n` is member `n`'s embedding, zeroed once removed.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState<S> {
    matrix: Tensor2D<S>,
    removed: Vec<bool>,
}

impl<S: Scalar> AgentState<S> {
    /// State of a fresh candidate set whose embeddings are rows of `embeddings`.
    pub fn from_members(embeddings: &Tensor2D<S>, members: &[usize]) -> Result<Self> {
        let dim = embeddings.cols();
        let n = members.len();
        let mut matrix = Tensor2D::zeros(dim, n);
        for (col, &m) in members.iter().enumerate() {
            if m >= embeddings.rows() {
                return Err(Error::Index {
                    op: "agent_state",
                    index: m,
                    bound: embeddings.rows(),
                });
            }
            for (r, &v) in embeddings.row(m).iter().enumerate() {
                matrix.set(r, col, v);
            }
        }
        Ok(Self {
            matrix,
            removed: vec![false; n],
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn size(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Tensor2D<S> {
        &self.matrix
    }

    pub fn removed(&self) -> &[bool] {
        &self.removed
    }

    pub fn column(&self, n: usize) -> Vec<S> {
        (0..self.dim()).map(|r| self.matrix.get(r, n)).collect()
    }

    pub fn has_valid_action(&self) -> bool {
        self.removed.iter().any(|r| !r)
    }

    /// Marks member `n` removed and zeroes its column.
    pub fn remove(&mut self, n: usize) -> Result<()> {
        if n >= self.size() {
            return Err(Error::Index {
                op: "remove",
                index: n,
                bound: self.size(),
            });
        }
        if self.removed[n] {
            return Err(Error::State(format!("member {n} already removed")));
        }
        self.removed[n] = true;
        for r in 0..self.dim() {
            self.matrix.set(r, n, S::zero());
        }
        Ok(())
    }

    /// Row-major flattening used as Q-network input.
    pub fn flattened(&self) -> &[S] {
        self.matrix.data()
    }
}
