use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor2D;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor<S> {
    pub name: String,
    pub value: Tensor2D<S>,
}

/// Flat, named parameter storage for one or more networks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore<S> {
    params: Vec<NamedTensor<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor2D<S>) -> ParamId {
        self.params.push(NamedTensor {
            name: name.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    /// Uniform Glorot initialisation.
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new(-bound, bound).expect("finite bound");
        let data = (0..fan_in * fan_out)
            .map(|_| S::lit(dist.sample(rng)))
            .collect();
        self.add(
            name,
            Tensor2D::new(fan_in, fan_out, data).expect("sized"),
        )
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor2D<S> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2D<S> {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedTensor<S>> {
        self.params.iter()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor2D<S>> {
        self.params.iter_mut().map(|p| &mut p.value)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Puts every parameter on the tape as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape<S>) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| tape.leaf(p.value.clone())).collect(),
        }
    }

    /// Replaces values by name-and-shape matching `other`.
    pub fn load_from(&mut self, other: &ParamStore<S>) -> Result<()> {
        if other.params.len() != self.params.len() {
            return Err(Error::Format(format!(
                "expected {} parameter tensors, found {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (mine, theirs) in self.params.iter_mut().zip(&other.params) {
            if mine.name != theirs.name || mine.value.shape() != theirs.value.shape() {
                return Err(Error::Format(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    mine.name,
                    mine.value.shape(),
                    theirs.name,
                    theirs.value.shape()
                )));
            }
            mine.value = theirs.value.clone();
        }
        Ok(())
    }
}

/// Tape handles for a bound [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Per-parameter gradients in store order; parameters the loss never touched get zeros.
    pub fn grads<S: Scalar>(&self, store: &ParamStore<S>, g: &Gradients<S>) -> Vec<Tensor2D<S>> {
        self.vars
            .iter()
            .zip(store.iter())
            .map(|(&v, p)| g.wrt_or_zeros(v, p.value.shape()))
            .collect()
    }
}
