use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diff::AdamConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::refine::AgentConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Classification loss only, source labels only.
    SourceOnly,
    /// Classification plus adversarial alignment on full batches.
    AdversarialOnly,
    /// Adversarial alignment on agent-refined batches.
    AdversarialIr,
    /// Classification on target labels; the upper bound.
    SupervisedTarget,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::SourceOnly,
        Mode::AdversarialOnly,
        Mode::AdversarialIr,
        Mode::SupervisedTarget,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SourceOnly => "source_only",
            Mode::AdversarialOnly => "adversarial_only",
            Mode::AdversarialIr => "adversarial_ir",
            Mode::SupervisedTarget => "supervised_target",
        }
    }

    pub fn is_adversarial(self) -> bool {
        matches!(self, Mode::AdversarialOnly | Mode::AdversarialIr)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Flat run configuration; every key has a default and unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub seed: u64,
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    /// Multiplies both stage lengths (10 recovers 4000 + 8000 steps).
    pub step_scale: f64,
    pub stage1_lr: f64,
    pub stage2_lr: f64,
    pub stage1_batch: usize,
    pub stage2_batch: usize,
    pub gamma: f64,
    pub epsilon: f64,
    /// When set, epsilon decays linearly to this value over stage 2.
    pub epsilon_final: Option<f64>,
    pub tau_s: f64,
    pub tau_t: f64,
    pub terminal_e: usize,
    pub candidate_size: usize,
    pub grl_scale: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub disc_hidden: usize,
    pub q_hidden: usize,
    pub replay_capacity: usize,
    pub dqn_minibatch: usize,
    /// Defaults to `stage2_lr`.
    pub dqn_lr: Option<f64>,
    /// Replay minibatch updates per agent after every stage-2 step.
    pub dqn_updates_per_step: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Per-modality S-agent switches; missing entries count as on.
    pub agents_source: Vec<bool>,
    /// Per-modality T-agent switches; missing entries count as on.
    pub agents_target: Vec<bool>,
    /// Drop refined-out source segments from the classification loss as well.
    pub refine_affects_cls: bool,
    /// Score removals with the discriminator after this step's update instead of before.
    pub reward_after_update: bool,
    pub eval_every: usize,
    pub eval_last: usize,
    pub scenario: String,
    /// Row name in reports; derived from mode and agent switches when absent.
    pub label: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::AdversarialIr,
            seed: 0,
            stage1_steps: 400,
            stage2_steps: 800,
            step_scale: 1.0,
            stage1_lr: 0.01,
            stage2_lr: 0.001,
            stage1_batch: 96,
            stage2_batch: 80,
            gamma: 0.9,
            epsilon: 0.5,
            epsilon_final: None,
            tau_s: 0.5,
            tau_t: 0.5,
            terminal_e: 1,
            candidate_size: 5,
            grl_scale: 1.0,
            weight_decay: 1e-7,
            dropout: 0.5,
            leaky_slope: 0.01,
            hidden_dim: 128,
            embed_dim: 64,
            disc_hidden: 128,
            q_hidden: 128,
            replay_capacity: 2000,
            dqn_minibatch: 32,
            dqn_lr: None,
            dqn_updates_per_step: 4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            agents_source: Vec::new(),
            agents_target: Vec::new(),
            refine_affects_cls: false,
            reward_after_update: false,
            eval_every: 50,
            eval_last: 9,
            scenario: "default".into(),
            label: None,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn stage1_len(&self) -> usize {
        (self.stage1_steps as f64 * self.step_scale).round() as usize
    }

    pub fn stage2_len(&self) -> usize {
        (self.stage2_steps as f64 * self.step_scale).round() as usize
    }

    pub fn total_steps(&self) -> usize {
        self.stage1_len() + self.stage2_len()
    }

    pub fn validate(&self, modalities: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !self.stage2_batch.is_multiple_of(2) {
            return fail(format!("stage2_batch {} must be even", self.stage2_batch));
        }
        if self.candidate_size == 0 || !(self.stage2_batch / 2).is_multiple_of(self.candidate_size) {
            return fail(format!(
                "half of stage2_batch ({}) must be divisible by candidate_size {}",
                self.stage2_batch / 2,
                self.candidate_size
            ));
        }
        if self.terminal_e >= self.candidate_size {
            return fail(format!(
                "terminal_e {} must be below candidate_size {}",
                self.terminal_e, self.candidate_size
            ));
        }
        if self.stage1_batch == 0 {
            return fail("stage1_batch must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return fail(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if !(self.grl_scale >= 0.0) {
            return fail(format!("grl_scale {} must be non-negative", self.grl_scale));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.step_scale > 0.0) {
            return fail("step_scale must be positive".into());
        }
        if self.eval_every == 0 || self.eval_last == 0 {
            return fail("eval_every and eval_last must be positive".into());
        }
        for (name, flags) in [("agents_source", &self.agents_source), ("agents_target", &self.agents_target)] {
            if flags.len() > modalities {
                return fail(format!("{name} lists {} modalities, data has {modalities}", flags.len()));
            }
        }
        Ok(())
    }

    pub fn agent_enabled(&self, domain: crate::data::Domain, modality: usize) -> bool {
        let flags = match domain {
            crate::data::Domain::Source => &self.agents_source,
            crate::data::Domain::Target => &self.agents_target,
        };
        self.mode == Mode::AdversarialIr && flags.get(modality).copied().unwrap_or(true)
    }

    /// Report row name.
    pub fn variant(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        if self.mode != Mode::AdversarialIr {
            return self.mode.as_str().into();
        }
        let off = |flags: &Vec<bool>| -> Vec<usize> {
            flags
                .iter()
                .enumerate()
                .filter(|(_, on)| !**on)
                .map(|(k, _)| k)
                .collect()
        };
        let (s, t) = (off(&self.agents_source), off(&self.agents_target));
        if s.is_empty() && t.is_empty() {
            "adversarial_ir".into()
        } else {
            let fmt = |v: &[usize]| v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join("+");
            let mut parts = Vec::new();
            if !s.is_empty() {
                parts.push(format!("S{}", fmt(&s)));
            }
            if !t.is_empty() {
                parts.push(format!("T{}", fmt(&t)));
            }
            format!("adversarial_ir_without_{}", parts.join("_"))
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn model_config(&self, modalities: usize, input_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            modalities,
            input_dim,
            hidden_dim: self.hidden_dim,
            embed_dim: self.embed_dim,
            num_classes,
            disc_hidden: self.disc_hidden,
            dropout: self.dropout,
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn agent_config(&self, domain: crate::data::Domain) -> AgentConfig {
        AgentConfig {
            candidate_size: self.candidate_size,
            terminal_steps: self.terminal_e,
            gamma: self.gamma,
            tau: match domain {
                crate::data::Domain::Source => self.tau_s,
                crate::data::Domain::Target => self.tau_t,
            },
            replay_capacity: self.replay_capacity,
            minibatch: self.dqn_minibatch,
            hidden: self.q_hidden,
            leaky_slope: self.leaky_slope,
            adam: self.adam(),
        }
    }

    pub fn dqn_lr(&self) -> f64 {
        self.dqn_lr.unwrap_or(self.stage2_lr)
    }

    /// Epsilon at stage-2 step `i` of `n`.
    pub fn epsilon_at(&self, i: usize, n: usize) -> f64 {
        match self.epsilon_final {
            None => self.epsilon,
            Some(end) => {
                let frac = if n <= 1 { 1.0 } else { i as f64 / (n - 1) as f64 };
                self.epsilon + (end - self.epsilon) * frac
            }
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Domain;

    #[test]
    fn unknown_keys_rejected() {
        assert!(TrainConfig::from_json(r#"{"gama": 0.9}"#).is_err());
        let c = TrainConfig::from_json(r#"{"gamma": 0.5, "mode": "source_only"}"#).unwrap();
        assert_eq!(c.gamma, 0.5);
        assert_eq!(c.mode, Mode::SourceOnly);
        assert_eq!(c.stage2_batch, 80);
    }

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate(2).unwrap();
    }

    #[test]
    fn divisibility_and_episode_length_checked() {
        let bad = TrainConfig {
            stage2_batch: 82,
            ..TrainConfig::default()
        };
        assert!(bad.validate(2).is_err());
        let bad = TrainConfig {
            terminal_e: 5,
            ..TrainConfig::default()
        };
        assert!(bad.validate(2).is_err());
    }

    #[test]
    fn agent_switches() {
        let c = TrainConfig {
            agents_source: vec![true, false],
            ..TrainConfig::default()
        };
        assert!(c.agent_enabled(Domain::Source, 0));
        assert!(!c.agent_enabled(Domain::Source, 1));
        assert!(c.agent_enabled(Domain::Target, 1));
        assert_eq!(c.variant(), "adversarial_ir_without_S1");
        let adv = TrainConfig {
            mode: Mode::AdversarialOnly,
            ..c
        };
        assert!(!adv.agent_enabled(Domain::Source, 0));
    }

    #[test]
    fn step_scale_recovers_full_schedule() {
        let c = TrainConfig {
            step_scale: 10.0,
            ..TrainConfig::default()
        };
        assert_eq!((c.stage1_len(), c.stage2_len()), (4000, 8000));
    }

    #[test]
    fn epsilon_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.epsilon_at(0, 10), 0.5);
        assert_eq!(c.epsilon_at(9, 10), 0.5);
        let d = TrainConfig {
            epsilon_final: Some(0.1),
            ..c
        };
        assert!((d.epsilon_at(9, 10) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = TrainConfig::default();
        assert_eq!(a.hash(), a.clone().hash());
        let b = TrainConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
