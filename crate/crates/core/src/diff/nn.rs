use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::params::{Bound, ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::{gemm_nn, Tensor2D};

/// Fully connected layer `x W + b` with `W: in x out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add_glorot(format!("{name}.weight"), inputs, outputs, rng);
        let bias = store.add(format!("{name}.bias"), Tensor2D::zeros(1, outputs));
        Self {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, p: &Bound, x: Var) -> Result<Var> {
        let h = tape.matmul(x, p.var(self.weight))?;
        tape.add_row(h, p.var(self.bias))
    }

    /// Tape-free forward for inference.
    pub fn apply<S: Scalar>(&self, store: &ParamStore<S>, x: &Tensor2D<S>) -> Result<Tensor2D<S>> {
        let w = store.get(self.weight);
        let b = store.get(self.bias);
        if x.cols() != w.rows() {
            return Err(Error::dim(
                "linear",
                format!("input width {} for a {}-input layer", x.cols(), w.rows()),
            ));
        }
        let mut out = Tensor2D::zeros(x.rows(), w.cols());
        gemm_nn(x.data(), w.data(), out.data_mut(), x.rows(), x.cols(), w.cols());
        for row in out.data_mut().chunks_mut(w.cols().max(1)) {
            for (o, &bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        Ok(out)
    }
}

/// Stack of linear layers with LeakyReLU between them.
///
/// With `activate_output` the last layer is followed by a LeakyReLU as well.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub slope: f64,
    pub activate_output: bool,
}

impl Mlp {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        widths: &[usize],
        slope: f64,
        activate_output: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self {
            layers,
            slope,
            activate_output,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    fn activated(&self, layer: usize) -> bool {
        layer + 1 < self.layers.len() || self.activate_output
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, p: &Bound, x: Var) -> Result<Var> {
        let slope = S::lit(self.slope);
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, p, h)?;
            if self.activated(i) {
                h = tape.leaky_relu(h, slope);
            }
        }
        Ok(h)
    }

    pub fn apply<S: Scalar>(&self, store: &ParamStore<S>, x: &Tensor2D<S>) -> Result<Tensor2D<S>> {
        let slope = S::lit(self.slope);
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(store, &h)?;
            if self.activated(i) {
                h = h.map(|v| if v > S::zero() { v } else { v * slope });
            }
        }
        Ok(h)
    }
}
