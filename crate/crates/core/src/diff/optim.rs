use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::params::ParamStore;
use super::tensor::Tensor2D;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam<S> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Tensor2D<S>>,
    pub v: Vec<Tensor2D<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(store: &ParamStore<S>, config: AdamConfig) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|p| Tensor2D::zeros(p.value.rows(), p.value.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One Adam update. A non-finite gradient aborts before any parameter changes.
    pub fn step(&mut self, store: &mut ParamStore<S>, grads: &[Tensor2D<S>], lr: S) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::dim(
                "adam",
                format!(
                    "{} gradients, {} parameters, {} moment slots",
                    grads.len(),
                    store.len(),
                    self.m.len()
                ),
            ));
        }
        for (p, g) in store.iter().zip(grads) {
            if p.value.shape() != g.shape() {
                return Err(Error::dim(
                    "adam",
                    format!("{}: {:?} vs {:?}", p.name, p.value.shape(), g.shape()),
                ));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", p.name)));
            }
        }

        self.t += 1;
        let b1 = S::lit(self.config.beta1);
        let b2 = S::lit(self.config.beta2);
        let eps = S::lit(self.config.eps);
        let wd = S::lit(self.config.weight_decay);
        let bc1 = S::one() - b1.powi(self.t as i32);
        let bc2 = S::one() - b2.powi(self.t as i32);
        let one = S::one();

        for (((param, g), m), v) in store
            .tensors_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let pd = param.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i] + wd * pd[i];
                let mi = b1 * m.data()[i] + (one - b1) * gi;
                let vi = b2 * v.data()[i] + (one - b2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::<f64>::new();
        store.add("w", Tensor2D::row_vector(vec![1.0, -1.0]));
        let mut adam = Adam::new(
            &store,
            AdamConfig {
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
        );
        let g = Tensor2D::row_vector(vec![0.3, -7.0]);
        adam.step(&mut store, &[g], 0.1).unwrap();
        let w = store.iter().next().unwrap().value.data().to_vec();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_quadratic() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("x", Tensor2D::scalar(5.0));
        let mut adam = Adam::new(&store, AdamConfig::default());
        for _ in 0..2000 {
            let x = store.get(id).item().unwrap();
            adam.step(&mut store, &[Tensor2D::scalar(2.0 * (x - 2.0))], 0.05)
                .unwrap();
        }
        assert!((store.get(id).item().unwrap() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("x", Tensor2D::scalar(1.0));
        let mut adam = Adam::new(&store, AdamConfig::default());
        let err = adam.step(&mut store, &[Tensor2D::scalar(f64::NAN)], 0.1);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(store.get(id).item().unwrap(), 1.0);
        assert_eq!(adam.t, 0);
    }
}
