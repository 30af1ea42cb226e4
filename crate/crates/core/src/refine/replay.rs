use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use super::Transition;

/// Bounded FIFO experience pool with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<S> {
    items: VecDeque<Transition<S>>,
    capacity: usize,
}

impl<S: Clone> ReplayBuffer<S> {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: VecDeque::with_capacity(capacity.min(4096)),
            capacity: capacity.max(1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition<S>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<S>> {
        self.items.iter()
    }

    /// The `n` most recent transitions, oldest first.
    pub fn recent_mut(&mut self, n: usize) -> impl Iterator<Item = &mut Transition<S>> {
        let skip = self.items.len().saturating_sub(n);
        self.items.iter_mut().skip(skip)
    }

    /// Up to `n` distinct transitions, uniformly at random.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<&Transition<S>> {
        let amount = n.min(self.items.len());
        index::sample(rng, self.items.len(), amount)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}
