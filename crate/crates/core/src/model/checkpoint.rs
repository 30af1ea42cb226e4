//! Versioned JSON checkpoints: named flat parameter arrays plus optimizer moments.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diff::{Adam, AdamConfig, ParamStore, Tensor2D};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{ModelConfig, TwoStreamModel};

pub const CHECKPOINT_FORMAT: &str = "mmir-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub name: String,
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub stage: String,
    pub step: usize,
    pub model: ModelConfig,
    pub networks: Vec<NamedArray>,
    pub optimizers: Vec<OptimizerState>,
}

fn arrays<S: Scalar>(store: &ParamStore<S>) -> Vec<NamedArray> {
    store
        .iter()
        .map(|p| NamedArray {
            name: p.name.clone(),
            rows: p.value.rows(),
            cols: p.value.cols(),
            data: p.value.to_f64_vec(),
        })
        .collect()
}

fn store_from<S: Scalar>(arrays: &[NamedArray]) -> Result<ParamStore<S>> {
    let mut store = ParamStore::new();
    for a in arrays {
        store.add(a.name.clone(), Tensor2D::from_f64(a.rows, a.cols, &a.data)?);
    }
    Ok(store)
}

impl Checkpoint {
    pub fn capture<S: Scalar>(
        model: &TwoStreamModel<S>,
        optimizers: &[(&str, &Adam<S>)],
        config_hash: &str,
        stage: &str,
        step: usize,
    ) -> Self {
        let mut networks = arrays(&model.params);
        networks.extend(arrays(&model.disc_params));
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.into(),
            stage: stage.into(),
            step,
            model: model.config.clone(),
            networks,
            optimizers: optimizers
                .iter()
                .map(|(name, adam)| OptimizerState {
                    name: (*name).into(),
                    config: adam.config,
                    t: adam.t,
                    m: adam.m.iter().map(|t| t.to_f64_vec()).collect(),
                    v: adam.v.iter().map(|t| t.to_f64_vec()).collect(),
                })
                .collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        serde_json::to_writer(BufWriter::new(File::create(path)?), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        Ok(c)
    }

    /// Copies stored parameters into a model with the same architecture.
    pub fn restore_into<S: Scalar>(&self, model: &mut TwoStreamModel<S>) -> Result<()> {
        if self.model != model.config {
            return Err(Error::Format("checkpoint architecture differs from model".into()));
        }
        let n = model.params.len();
        if self.networks.len() != n + model.disc_params.len() {
            return Err(Error::Format("checkpoint holds a different number of tensors".into()));
        }
        model.params.load_from(&store_from(&self.networks[..n])?)?;
        model.disc_params.load_from(&store_from(&self.networks[n..])?)?;
        Ok(())
    }

    /// Rebuilds a named optimizer's state.
    pub fn optimizer<S: Scalar>(&self, name: &str, store: &ParamStore<S>) -> Result<Adam<S>> {
        let st = self
            .optimizers
            .iter()
            .find(|o| o.name == name)
            .ok_or_else(|| Error::Format(format!("no optimizer named {name}")))?;
        let mut adam = Adam::new(store, st.config);
        adam.t = st.t;
        for (i, p) in store.iter().enumerate() {
            let (r, c) = p.value.shape();
            let m = st.m.get(i).ok_or_else(|| Error::Format("missing moment".into()))?;
            let v = st.v.get(i).ok_or_else(|| Error::Format("missing moment".into()))?;
            adam.m[i] = Tensor2D::from_f64(r, c, m)?;
            adam.v[i] = Tensor2D::from_f64(r, c, v)?;
        }
        Ok(adam)
    }
}
