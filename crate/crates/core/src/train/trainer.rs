use std::path::Path;

use crate::data::{Dataset, Domain, MixedBatch, MixedBatches, Segment, Shuffler};
use crate::diff::{Adam, Tape, Var};
use crate::error::{Error, Result};
use crate::model::checkpoint::Checkpoint;
use crate::model::{features_tensor, AdversarialTerms, TwoStreamModel};
use crate::refine::{relevance, Agent, AgentId, Refinement};
use crate::rng::{self, streams, Rng};
use crate::scalar::Scalar;

use super::config::{Mode, TrainConfig};
use super::metrics::{AgentStep, MaskRecord, RunMetrics, RunSummary, StepRecord};

/// Losses of one optimiser step.
struct StepLosses {
    cls: f64,
    adv: Option<f64>,
}

/// One agent's refinement of one half-batch, kept until the step is logged.
struct Pending<S> {
    agent: usize,
    refinement: Refinement<S>,
    logits: Vec<S>,
}

/// Two-stage training of a [`TwoStreamModel`] with optional refinement agents.
pub struct Trainer<S: Scalar> {
    pub config: TrainConfig,
    pub model: TwoStreamModel<S>,
    pub feature_opt: Adam<S>,
    pub disc_opt: Adam<S>,
    /// Ordered `S0, T0, S1, T1, ...`.
    pub agents: Vec<Agent<S>>,
    pub metrics: RunMetrics,
    /// Filled only when mask recording is on.
    pub masks: Vec<MaskRecord>,
    record_masks: bool,
    step: usize,
    stage1_done: bool,
    hash: String,
    dropout_rng: Rng,
    agent_rngs: Vec<Rng>,
    replay_rngs: Vec<Rng>,
}

pub fn agent_ids(modalities: usize) -> Vec<AgentId> {
    (0..modalities)
        .flat_map(|modality| Domain::BOTH.map(|domain| AgentId { domain, modality }))
        .collect()
}

fn agent_index(domain: Domain, modality: usize) -> usize {
    2 * modality + usize::from(domain == Domain::Target)
}

impl<S: Scalar> Trainer<S> {
    pub fn new(config: TrainConfig, dataset: &Dataset) -> Result<Self> {
        let k = dataset.num_modalities();
        config.validate(k)?;
        if dataset.target_test.is_empty() {
            return Err(Error::Input("dataset has no held-out target segments".into()));
        }
        let seed = config.seed;
        let mc = config.model_config(k, dataset.feature_dim(), dataset.num_classes());
        let model = TwoStreamModel::new(mc, &mut rng::derive(seed, streams::INIT));
        let adam = config.adam();
        let feature_opt = Adam::new(&model.params, adam);
        let disc_opt = Adam::new(&model.disc_params, adam);
        let ids = agent_ids(k);
        let agents = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let mut r = rng::derive(seed, streams::INIT * 1000 + i as u64 + 1);
                Agent::new(*id, config.embed_dim, config.agent_config(id.domain), &mut r)
            })
            .collect();
        let per_agent = |base: u64| -> Vec<Rng> {
            (0..ids.len())
                .map(|i| rng::derive(seed, base * 1000 + i as u64))
                .collect()
        };
        Ok(Self {
            hash: config.hash(),
            agent_rngs: per_agent(streams::AGENT),
            replay_rngs: per_agent(streams::REPLAY),
            dropout_rng: rng::derive(seed, streams::DROPOUT),
            metrics: RunMetrics::new(ids),
            masks: Vec::new(),
            record_masks: false,
            step: 0,
            stage1_done: false,
            config,
            model,
            feature_opt,
            disc_opt,
            agents,
        })
    }

    /// Keep every agent decision in [`Trainer::masks`].
    pub fn record_masks(&mut self, on: bool) {
        self.record_masks = on;
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn checkpoint(&self, stage: &str) -> Checkpoint {
        Checkpoint::capture(
            &self.model,
            &[("features", &self.feature_opt), ("discriminators", &self.disc_opt)],
            &self.hash,
            stage,
            self.step,
        )
    }

    /// Domain whose labels drive the classification loss.
    fn label_domain(&self) -> Domain {
        if self.config.mode == Mode::SupervisedTarget {
            Domain::Target
        } else {
            Domain::Source
        }
    }

    fn labels(&self, segments: &[&Segment]) -> Result<Vec<usize>> {
        if self.config.mode == Mode::SupervisedTarget {
            return Ok(segments.iter().map(|s| s.evaluation_label()).collect());
        }
        segments
            .iter()
            .map(|s| {
                s.label()
                    .ok_or_else(|| Error::Contract(format!("segment {} has no training label", s.id)))
            })
            .collect()
    }

    fn embed_all(&mut self, tape: &mut Tape<S>, p: &crate::model::BoundModel, segs: &[&Segment]) -> Result<Vec<Var>> {
        (0..self.model.modalities())
            .map(|k| {
                let x = tape.constant(features_tensor(segs, k)?);
                self.model.embed(tape, p, k, x, Some(&mut self.dropout_rng))
            })
            .collect()
    }

    /// Stage 1: classification loss on labelled batches only.
    pub fn train_stage1(&mut self, dataset: &Dataset) -> Result<()> {
        if self.stage1_done {
            return Err(Error::State("stage 1 already ran".into()));
        }
        let split = dataset.split(self.label_domain());
        let batch = self.config.stage1_batch.min(split.len());
        let mut shuffler = Shuffler::new(split.len(), rng::derive(self.config.seed, streams::BATCH));
        let lr = self.config.stage1_lr;
        for _ in 0..self.config.stage1_len() {
            let segs: Vec<&Segment> = shuffler.take(batch).into_iter().map(|i| &split[i]).collect();
            let labels = self.labels(&segs)?;
            let mut tape = Tape::new();
            let p = self.model.bind(&mut tape);
            let embs = self.embed_all(&mut tape, &p, &segs)?;
            let fused = self.model.fused_logits(&mut tape, &p, &embs)?;
            let loss = self.model.loss_cls(&mut tape, fused, &labels, None)?;
            let value = finite_loss(&tape, loss, self.step + 1)?;
            let grads = tape.backward(loss)?;
            let g = p.features.grads(&self.model.params, &grads);
            self.feature_opt.step(&mut self.model.params, &g, S::lit(lr))?;
            self.finish_step(
                dataset,
                1,
                lr,
                StepLosses { cls: value, adv: None },
                None,
                vec![None; self.agents.len()],
            )?;
        }
        self.stage1_done = true;
        Ok(())
    }

    /// Stage 2: mixed batches, refinement, adversarial alignment and agent updates.
    pub fn train_stage2(&mut self, dataset: &Dataset) -> Result<()> {
        if !self.stage1_done {
            return Err(Error::State("stage 2 requires a completed stage 1".into()));
        }
        let n = self.config.stage2_len();
        let mut batches = MixedBatches::new(dataset, self.config.stage2_batch, self.config.seed)?;
        for i in 0..n {
            let batch = batches.next().expect("endless");
            let eps = self.config.epsilon_at(i, n);
            self.stage2_step(dataset, &batch, eps)?;
        }
        Ok(())
    }

    fn stage2_step(&mut self, dataset: &Dataset, batch: &MixedBatch, epsilon: f64) -> Result<()> {
        let step = self.step + 1;
        let k_mod = self.model.modalities();
        let src: Vec<&Segment> = batch.source.iter().map(|&i| &dataset.source[i]).collect();
        let tgt: Vec<&Segment> = batch.target.iter().map(|&i| &dataset.target[i]).collect();
        let halves = [(Domain::Source, &src), (Domain::Target, &tgt)];

        // Refinement runs on dropout-free embeddings and the discriminator as
        // it stands before this step's update.
        let mut pending: Vec<Pending<S>> = Vec::new();
        for k in 0..k_mod {
            for (domain, segs) in halves {
                if !self.config.agent_enabled(domain, k) {
                    continue;
                }
                let ai = agent_index(domain, k);
                let emb = self.model.embed_eval(k, &features_tensor(segs, k)?)?;
                let logits = self.model.domain_logits_eval(k, &emb)?;
                let refinement = self.agents[ai].refine_halfbatch(&emb, &logits, epsilon, &mut self.agent_rngs[ai])?;
                pending.push(Pending {
                    agent: ai,
                    refinement,
                    logits,
                });
            }
        }
        let keep_of = |domain: Domain, k: usize| -> Option<&[bool]> {
            pending
                .iter()
                .find(|p| p.agent == agent_index(domain, k))
                .map(|p| p.refinement.keep.as_slice())
        };
        let as_weights = |keep: &[bool]| -> Vec<S> {
            keep.iter().map(|&kp| if kp { S::one() } else { S::zero() }).collect()
        };

        let mode = self.config.mode;
        let cls_segs = if mode == Mode::SupervisedTarget { &tgt } else { &src };
        let labels = self.labels(cls_segs)?;
        let cls_weights: Option<Vec<S>> = if self.config.refine_affects_cls && mode == Mode::AdversarialIr {
            let masks: Vec<&[bool]> = (0..k_mod).filter_map(|k| keep_of(Domain::Source, k)).collect();
            (!masks.is_empty()).then(|| {
                (0..src.len())
                    .map(|i| if masks.iter().all(|m| m[i]) { S::one() } else { S::zero() })
                    .collect()
            })
        } else {
            None
        };
        let adv_weights: Vec<[Option<Vec<S>>; 2]> = (0..k_mod)
            .map(|k| Domain::BOTH.map(|d| keep_of(d, k).map(as_weights)))
            .collect();

        let mut tape = Tape::new();
        let p = self.model.bind(&mut tape);
        let cls_embs = self.embed_all(&mut tape, &p, cls_segs)?;
        let tgt_embs = if mode.is_adversarial() {
            self.embed_all(&mut tape, &p, &tgt)?
        } else {
            Vec::new()
        };
        let adv = mode.is_adversarial().then(|| AdversarialTerms {
            target_embs: &tgt_embs,
            weights: &adv_weights,
            grl_scale: S::lit(self.config.grl_scale),
        });
        let (total, l_cls, l_adv) =
            self.model
                .stage2_loss(&mut tape, &p, &cls_embs, &labels, cls_weights.as_deref(), adv)?;
        let l_adv_value = l_adv.map(|a| finite_loss(&tape, a, step)).transpose()?;
        let cls_value = finite_loss(&tape, l_cls, step)?;
        finite_loss(&tape, total, step)?;

        let grads = tape.backward(total)?;
        let gf = p.features.grads(&self.model.params, &grads);
        let gd = mode
            .is_adversarial()
            .then(|| p.discriminators.grads(&self.model.disc_params, &grads));
        if gf.iter().chain(gd.iter().flatten()).any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient at step {step}")));
        }
        let lr = S::lit(self.config.stage2_lr);
        self.feature_opt.step(&mut self.model.params, &gf, lr)?;
        if let Some(gd) = gd {
            self.disc_opt.step(&mut self.model.disc_params, &gd, lr)?;
        }

        if self.config.reward_after_update {
            for pe in &mut pending {
                let id = self.agents[pe.agent].id;
                let segs = if id.domain == Domain::Source { &src } else { &tgt };
                let emb = self.model.embed_eval(id.modality, &features_tensor(segs, id.modality)?)?;
                pe.logits = self.model.domain_logits_eval(id.modality, &emb)?;
                self.agents[pe.agent].rescore_recent(&mut pe.refinement.selections, &pe.logits)?;
            }
        }

        let mut dqn: Option<f64> = None;
        for pe in &pending {
            let ai = pe.agent;
            for _ in 0..self.config.dqn_updates_per_step {
                if let Some(l) = self.agents[ai].dqn_update(self.config.dqn_lr(), &mut self.replay_rngs[ai])? {
                    *dqn.get_or_insert(0.0) += l.as_f64() / self.config.dqn_updates_per_step as f64;
                }
            }
        }

        let mut agent_steps = vec![None; self.agents.len()];
        for pe in &pending {
            let id = self.agents[pe.agent].id;
            let segs = if id.domain == Domain::Source { &src } else { &tgt };
            let mut counts = AgentStep::default();
            for (pos, s) in segs.iter().enumerate() {
                let removed = !pe.refinement.keep[pos];
                let neg = s.ground_truth_negative();
                counts.presented += 1;
                counts.presented_negative += usize::from(neg);
                if removed {
                    counts.removed += 1;
                    counts.removed_negative += usize::from(neg);
                }
            }
            counts.reward_sum = pe.refinement.selections.iter().map(|s| s.reward.as_f64()).sum();
            agent_steps[pe.agent] = Some(counts);
            if self.record_masks {
                for (pos, s) in segs.iter().enumerate() {
                    let sel = pe.refinement.selections.iter().find(|x| x.position == pos);
                    self.masks.push(MaskRecord {
                        step,
                        modality: id.modality,
                        domain: id.domain,
                        segment_id: s.id,
                        removed: !pe.refinement.keep[pos],
                        relevance: relevance(pe.logits[pos], id.domain).as_f64(),
                        reward: sel.map(|x| x.reward.as_f64()),
                    });
                }
            }
        }

        self.finish_step(
            dataset,
            2,
            self.config.stage2_lr,
            StepLosses {
                cls: cls_value,
                adv: l_adv_value,
            },
            dqn,
            agent_steps,
        )
    }

    fn finish_step(
        &mut self,
        dataset: &Dataset,
        stage: u8,
        lr: f64,
        losses: StepLosses,
        loss_dqn: Option<f64>,
        agents: Vec<Option<AgentStep>>,
    ) -> Result<()> {
        self.step += 1;
        let accuracy = if self.step.is_multiple_of(self.config.eval_every) || self.step == self.config.total_steps() {
            Some(self.model.top1_accuracy(&dataset.target_test)?)
        } else {
            None
        };
        if self.step.is_multiple_of(100) {
            log::debug!(
                "step {} stage {stage}: L_cls {:.4} L_adv {:?} L_dqn {:?} acc {:?}",
                self.step,
                losses.cls,
                losses.adv,
                loss_dqn,
                accuracy
            );
        }
        self.metrics.push(StepRecord {
            step: self.step,
            stage,
            lr,
            loss_cls: losses.cls,
            loss_adv: losses.adv,
            loss_dqn,
            agents,
            accuracy,
        })
    }

    /// Both stages back to back.
    pub fn run(&mut self, dataset: &Dataset) -> Result<RunSummary> {
        self.train_stage1(dataset)?;
        self.train_stage2(dataset)?;
        RunSummary::from_metrics(&self.config, &self.metrics)
    }
}

fn finite_loss<S: Scalar>(tape: &Tape<S>, loss: Var, step: usize) -> Result<f64> {
    let v = tape.value(loss).item()?.as_f64();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("loss at step {step}")))
    }
}

/// Options for [`run_to_dir`].
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOutput<'a> {
    pub dir: Option<&'a Path>,
    pub dump_masks: bool,
}

/// Trains one configuration and, when a directory is given, writes
/// `config.json`, `metrics.csv`, `summary.json`, checkpoints and the optional
/// mask dump there. A failed run leaves `last_good.ckpt.json` behind.
pub fn run_to_dir(config: &TrainConfig, dataset: &Dataset, out: RunOutput<'_>) -> Result<(RunSummary, Trainer<f64>)> {
    let mut trainer = Trainer::<f64>::new(config.clone(), dataset)?;
    trainer.record_masks(out.dump_masks);
    if let Some(dir) = out.dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(config)?)?;
    }
    let result = (|| -> Result<RunSummary> {
        trainer.train_stage1(dataset)?;
        if let Some(dir) = out.dir {
            trainer.checkpoint("stage1").save(dir.join("stage1.ckpt.json"))?;
        }
        trainer.train_stage2(dataset)?;
        RunSummary::from_metrics(config, &trainer.metrics)
    })();
    let summary = match result {
        Ok(s) => s,
        Err(e) => {
            if let Some(dir) = out.dir {
                // Optimiser steps refuse non-finite updates, so the live parameters are the last good ones.
                trainer.checkpoint("last_good").save(dir.join("last_good.ckpt.json"))?;
                trainer.metrics.write_csv(dir.join("metrics.csv"))?;
            }
            return Err(e);
        }
    };
    if let Some(dir) = out.dir {
        trainer.checkpoint("final").save(dir.join("final.ckpt.json"))?;
        trainer.metrics.write_csv(dir.join("metrics.csv"))?;
        summary.save(dir.join("summary.json"))?;
        if out.dump_masks {
            super::metrics::write_masks(dir.join("masks.csv"), &trainer.masks)?;
        }
    }
    Ok((summary, trainer))
}

/// Target accuracy of a classifier trained on target labels.
pub fn supervised_upper_bound(config: &TrainConfig, dataset: &Dataset) -> Result<f64> {
    if config.mode != Mode::SupervisedTarget {
        return Err(Error::Config(format!(
            "supervised bound needs mode supervised_target, got {}",
            config.mode
        )));
    }
    let mut t = Trainer::<f64>::new(config.clone(), dataset)?;
    Ok(t.run(dataset)?.final_accuracy)
}

