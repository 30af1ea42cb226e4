//! Dense matrices, a differentiation tape, parameter stores, layers and Adam.

mod nn;
mod optim;
mod params;
mod tape;
mod tensor;

pub use nn::{Linear, Mlp};
pub use optim::{Adam, AdamConfig};
pub use params::{Bound, NamedTensor, ParamId, ParamStore};
pub use tape::{bce_logit, sigmoid, Elementwise, Gradients, Tape, Var};
pub use tensor::Tensor2D;
