//! Per-modality extractor, classifier and discriminator with late fusion.
//!
//! Extractors and classifiers share one parameter store; discriminators live
//! in a second store so classification-only training never touches them.

pub mod checkpoint;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Domain, Segment};
use crate::diff::{bce_logit, Bound, Linear, Mlp, ParamStore, Tape, Tensor2D, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub modalities: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub num_classes: usize,
    pub disc_hidden: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
}

impl ModelConfig {
    pub fn new(modalities: usize, input_dim: usize, num_classes: usize) -> Self {
        Self {
            modalities,
            input_dim,
            hidden_dim: 128,
            embed_dim: 64,
            num_classes,
            disc_hidden: 128,
            dropout: 0.5,
            leaky_slope: 0.01,
        }
    }
}

/// Networks of one modality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityStack {
    /// `d -> hidden -> d_f`, LeakyReLU after both layers.
    pub extractor: Mlp,
    /// `d_f -> C`.
    pub classifier: Linear,
    /// `d_f -> 128 -> 1` behind the gradient reversal layer.
    pub discriminator: Mlp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoStreamModel<S> {
    pub config: ModelConfig,
    /// Extractor and classifier parameters.
    pub params: ParamStore<S>,
    /// Discriminator parameters.
    pub disc_params: ParamStore<S>,
    pub stacks: Vec<ModalityStack>,
}

/// Tape handles for both parameter stores.
pub struct BoundModel {
    pub features: Bound,
    pub discriminators: Bound,
}

/// Target-side inputs of the adversarial term. `weights[k]` holds optional
/// per-row keep weights for the source and target halves of modality `k`.
pub struct AdversarialTerms<'a, S> {
    pub target_embs: &'a [Var],
    pub weights: &'a [[Option<Vec<S>>; 2]],
    pub grl_scale: S,
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
pub fn dropout_mask<S: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Tensor2D<S> {
    let keep = S::lit(1.0 / (1.0 - rate));
    let data = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < rate { S::zero() } else { keep })
        .collect();
    Tensor2D::new(rows, cols, data).expect("sized")
}

/// Modality-`k` features of `segments` as an `n x d` matrix.
pub fn features_tensor<S: Scalar>(segments: &[&Segment], k: usize) -> Result<Tensor2D<S>> {
    let d = segments
        .first()
        .and_then(|s| s.features.get(k))
        .map_or(0, |f| f.len());
    let mut data = Vec::with_capacity(segments.len() * d);
    for s in segments {
        let f = s
            .features
            .get(k)
            .ok_or_else(|| Error::Input(format!("segment {} lacks modality {k}", s.id)))?;
        if f.len() != d {
            return Err(Error::dim("features", format!("segment {} has width {}", s.id, f.len())));
        }
        data.extend(f.iter().map(|&v| S::lit(v)));
    }
    Tensor2D::new(segments.len(), d, data)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl<S: Scalar> TwoStreamModel<S> {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Self {
        let mut params = ParamStore::new();
        let mut disc_params = ParamStore::new();
        let slope = config.leaky_slope;
        let stacks = (0..config.modalities)
            .map(|k| {
                let extractor = Mlp::new(
                    &mut params,
                    &format!("extractor{k}"),
                    &[config.input_dim, config.hidden_dim, config.embed_dim],
                    slope,
                    true,
                    rng,
                );
                let classifier = Linear::new(
                    &mut params,
                    &format!("classifier{k}"),
                    config.embed_dim,
                    config.num_classes,
                    rng,
                );
                let discriminator = Mlp::new(
                    &mut disc_params,
                    &format!("discriminator{k}"),
                    &[config.embed_dim, config.disc_hidden, 1],
                    slope,
                    false,
                    rng,
                );
                ModalityStack {
                    extractor,
                    classifier,
                    discriminator,
                }
            })
            .collect();
        Self {
            config,
            params,
            disc_params,
            stacks,
        }
    }

    pub fn modalities(&self) -> usize {
        self.stacks.len()
    }

    fn stack(&self, k: usize) -> Result<&ModalityStack> {
        self.stacks.get(k).ok_or(Error::Index {
            op: "modality",
            index: k,
            bound: self.stacks.len(),
        })
    }

    pub fn bind(&self, tape: &mut Tape<S>) -> BoundModel {
        BoundModel {
            features: self.params.bind(tape),
            discriminators: self.disc_params.bind(tape),
        }
    }

    // ---- tape-recorded pieces -------------------------------------------

    /// `F^k(x)`, with inverted dropout on the output when a mask rng is given.
    pub fn embed(
        &self,
        tape: &mut Tape<S>,
        p: &BoundModel,
        k: usize,
        x: Var,
        dropout: Option<&mut dyn rand::RngCore>,
    ) -> Result<Var> {
        let h = self.stack(k)?.extractor.forward(tape, &p.features, x)?;
        match dropout {
            Some(rng) if self.config.dropout > 0.0 => {
                let (r, c) = tape.value(h).shape();
                let mask = tape.constant(dropout_mask(r, c, self.config.dropout, rng));
                tape.mul(h, mask)
            }
            _ => Ok(h),
        }
    }

    pub fn class_logits(&self, tape: &mut Tape<S>, p: &BoundModel, k: usize, emb: Var) -> Result<Var> {
        self.stack(k)?.classifier.forward(tape, &p.features, emb)
    }

    /// `sum_k C^k(emb_k)`.
    pub fn fused_logits(&self, tape: &mut Tape<S>, p: &BoundModel, embeddings: &[Var]) -> Result<Var> {
        if embeddings.len() != self.modalities() {
            return Err(Error::Input(format!(
                "{} modality embeddings for a {}-modality model",
                embeddings.len(),
                self.modalities()
            )));
        }
        let mut fused = self.class_logits(tape, p, 0, embeddings[0])?;
        for (k, &e) in embeddings.iter().enumerate().skip(1) {
            let l = self.class_logits(tape, p, k, e)?;
            fused = tape.add(fused, l)?;
        }
        Ok(fused)
    }

    /// `D^k(GRL(emb))`; the forward value does not depend on `grl_scale`.
    pub fn domain_logit(
        &self,
        tape: &mut Tape<S>,
        p: &BoundModel,
        k: usize,
        emb: Var,
        grl_scale: S,
    ) -> Result<Var> {
        let reversed = tape.grl(emb, grl_scale)?;
        self.stack(k)?
            .discriminator
            .forward(tape, &p.discriminators, reversed)
    }

    /// Summed softmax cross-entropy of fused logits; `weights` masks rows.
    pub fn loss_cls(
        &self,
        tape: &mut Tape<S>,
        fused: Var,
        labels: &[usize],
        weights: Option<&[S]>,
    ) -> Result<Var> {
        let per_row = tape.softmax_cross_entropy(fused, labels)?;
        weighted_sum(tape, per_row, weights)
    }

    /// Summed BCE of `sigmoid(logit)` against domain labels for one modality.
    pub fn loss_adv_modality(
        &self,
        tape: &mut Tape<S>,
        logits: Var,
        domains: &[Domain],
        weights: Option<&[S]>,
    ) -> Result<Var> {
        let targets: Vec<S> = domains.iter().map(|d| S::lit(d.label())).collect();
        let per_row = tape.bce_with_logits(logits, &targets)?;
        weighted_sum(tape, per_row, weights)
    }

    /// `L_cls + sum_k (L_adv^k(source) + L_adv^k(target))`. Without `adv` only the
    /// classification term is built. Returns `(total, l_cls, l_adv)`.
    #[allow(clippy::too_many_arguments)]
    pub fn stage2_loss(
        &self,
        tape: &mut Tape<S>,
        p: &BoundModel,
        cls_embs: &[Var],
        labels: &[usize],
        cls_weights: Option<&[S]>,
        adv: Option<AdversarialTerms<'_, S>>,
    ) -> Result<(Var, Var, Option<Var>)> {
        let fused = self.fused_logits(tape, p, cls_embs)?;
        let l_cls = self.loss_cls(tape, fused, labels, cls_weights)?;
        let Some(adv) = adv else {
            return Ok((l_cls, l_cls, None));
        };
        let mut total_adv: Option<Var> = None;
        for k in 0..self.modalities() {
            for (di, domain) in Domain::BOTH.into_iter().enumerate() {
                let embs = if domain == Domain::Source { cls_embs } else { adv.target_embs };
                let n = tape.value(embs[k]).rows();
                let z = self.domain_logit(tape, p, k, embs[k], adv.grl_scale)?;
                let w = adv.weights.get(k).and_then(|w| w[di].as_deref());
                let l = self.loss_adv_modality(tape, z, &vec![domain; n], w)?;
                total_adv = Some(match total_adv {
                    Some(a) => tape.add(a, l)?,
                    None => l,
                });
            }
        }
        let l_adv = total_adv.ok_or_else(|| Error::Input("no modalities".into()))?;
        let total = tape.add(l_cls, l_adv)?;
        Ok((total, l_cls, Some(l_adv)))
    }

    // ---- inference without a tape --------------------------------------

    pub fn embed_eval(&self, k: usize, x: &Tensor2D<S>) -> Result<Tensor2D<S>> {
        self.stack(k)?.extractor.apply(&self.params, x)
    }

    pub fn domain_logits_eval(&self, k: usize, emb: &Tensor2D<S>) -> Result<Vec<S>> {
        Ok(self
            .stack(k)?
            .discriminator
            .apply(&self.disc_params, emb)?
            .into_data())
    }

    /// Fused logits for a batch given per-modality feature matrices.
    pub fn fused_logits_eval(&self, inputs: &[Tensor2D<S>]) -> Result<Tensor2D<S>> {
        if inputs.len() != self.modalities() {
            return Err(Error::Input(format!(
                "{} modalities supplied, model has {}",
                inputs.len(),
                self.modalities()
            )));
        }
        let mut fused: Option<Tensor2D<S>> = None;
        for (k, x) in inputs.iter().enumerate() {
            let stack = self.stack(k)?;
            let emb = stack.extractor.apply(&self.params, x)?;
            let logits = stack.classifier.apply(&self.params, &emb)?;
            match &mut fused {
                Some(f) => f.add_assign(&logits),
                None => fused = Some(logits),
            }
        }
        fused.ok_or_else(|| Error::Input("no modalities".into()))
    }

    /// `sum_k C^k(F^k(x^k))` for one segment.
    pub fn classify_fused(&self, features: &[Vec<f64>]) -> Result<Vec<S>> {
        if features.len() != self.modalities() {
            return Err(Error::Input(format!(
                "segment has {} modalities, model expects {}",
                features.len(),
                self.modalities()
            )));
        }
        let inputs = features
            .iter()
            .map(|f| Tensor2D::from_f64(1, f.len(), f))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.fused_logits_eval(&inputs)?.into_data())
    }

    /// Argmax predictions for a set of segments, dropout off.
    pub fn predict(&self, segments: &[&Segment]) -> Result<Vec<usize>> {
        let inputs = (0..self.modalities())
            .map(|k| features_tensor(segments, k))
            .collect::<Result<Vec<_>>>()?;
        let logits = self.fused_logits_eval(&inputs)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }

    /// Fraction of target segments whose fused argmax equals their evaluation label.
    pub fn top1_accuracy(&self, segments: &[Segment]) -> Result<f64> {
        if segments.is_empty() {
            return Err(Error::Metric("top-1 accuracy of an empty set".into()));
        }
        let refs: Vec<&Segment> = segments.iter().collect();
        let preds = self.predict(&refs)?;
        let correct = preds
            .iter()
            .zip(segments)
            .filter(|(p, s)| **p == s.evaluation_label())
            .count();
        Ok(correct as f64 / segments.len() as f64)
    }

    /// Value of the classification loss on labelled source segments (dropout off).
    pub fn loss_cls_value(&self, segments: &[&Segment]) -> Result<S> {
        let labels = segments
            .iter()
            .map(|s| {
                s.label().ok_or_else(|| {
                    Error::Contract(format!("segment {} is not a labelled source segment", s.id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let mut embs = Vec::with_capacity(self.modalities());
        for k in 0..self.modalities() {
            let x = tape.constant(features_tensor(segments, k)?);
            embs.push(self.embed(&mut tape, &p, k, x, None)?);
        }
        let fused = self.fused_logits(&mut tape, &p, &embs)?;
        let loss = self.loss_cls(&mut tape, fused, &labels, None)?;
        tape.value(loss).item()
    }

    /// Value of the adversarial loss over all modalities for a (refined) batch.
    pub fn loss_adv_value(&self, segments: &[&Segment]) -> Result<S> {
        let has_source = segments.iter().any(|s| s.domain == Domain::Source);
        let has_target = segments.iter().any(|s| s.domain == Domain::Target);
        if !(has_source && has_target) {
            log::warn!("adversarial loss on a single-domain batch");
        }
        let mut total = S::zero();
        for k in 0..self.modalities() {
            let emb = self.embed_eval(k, &features_tensor(segments, k)?)?;
            let logits = self.domain_logits_eval(k, &emb)?;
            for (z, s) in logits.iter().zip(segments) {
                total += bce_logit(*z, S::lit(s.domain.label()));
            }
        }
        Ok(total)
    }
}

fn weighted_sum<S: Scalar>(tape: &mut Tape<S>, per_row: Var, weights: Option<&[S]>) -> Result<Var> {
    match weights {
        None => Ok(tape.sum(per_row)),
        Some(w) => {
            let rows = tape.value(per_row).rows();
            if w.len() != rows {
                return Err(Error::dim("weights", format!("{} weights for {rows} rows", w.len())));
            }
            let wv = tape.constant(Tensor2D::column_vector(w.to_vec()));
            let masked = tape.mul(per_row, wv)?;
            Ok(tape.sum(masked))
        }
    }
}
