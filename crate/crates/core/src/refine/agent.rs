use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Domain;
use crate::diff::{Adam, AdamConfig, Mlp, ParamStore, Tape, Tensor2D};
use crate::error::{Error, Result};
use crate::model::argmax;
use crate::scalar::Scalar;

use super::replay::ReplayBuffer;
use super::reward::{relevance, reward};
use super::state::{partition_batch, AgentState, CandidateSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentId {
    pub domain: Domain,
    pub modality: usize,
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d = match self.domain {
            Domain::Source => 'S',
            Domain::Target => 'T',
        };
        write!(f, "{d}{}", self.modality)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub candidate_size: usize,
    /// Removals per episode.
    pub terminal_steps: usize,
    pub gamma: f64,
    pub tau: f64,
    pub replay_capacity: usize,
    pub minibatch: usize,
    pub hidden: usize,
    pub leaky_slope: f64,
    pub adam: AdamConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            candidate_size: 5,
            terminal_steps: 1,
            gamma: 0.9,
            tau: 0.5,
            replay_capacity: 2000,
            minibatch: 32,
            hidden: 128,
            leaky_slope: 0.01,
            adam: AdamConfig::default(),
        }
    }
}

/// One step of a refinement episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<S> {
    pub state: AgentState<S>,
    pub action: usize,
    pub reward: S,
    pub next_state: AgentState<S>,
    pub terminal: bool,
    /// Discriminator logit of the removed member when the reward was given.
    pub logit: S,
}

/// `flattened state (d_f * N_c) -> hidden -> N_c` q-values.
#[derive(Clone, Debug)]
pub struct QNetwork<S> {
    pub params: ParamStore<S>,
    pub mlp: Mlp,
    pub adam: Adam<S>,
    pub embed_dim: usize,
    pub candidate_size: usize,
}

impl<S: Scalar> QNetwork<S> {
    pub fn new(embed_dim: usize, config: &AgentConfig, name: &str, rng: &mut impl Rng) -> Self {
        let mut params = ParamStore::new();
        let mlp = Mlp::new(
            &mut params,
            name,
            &[embed_dim * config.candidate_size, config.hidden, config.candidate_size],
            config.leaky_slope,
            false,
            rng,
        );
        let adam = Adam::new(&params, config.adam);
        Self {
            params,
            mlp,
            adam,
            embed_dim,
            candidate_size: config.candidate_size,
        }
    }

    fn check(&self, state: &AgentState<S>) -> Result<()> {
        if state.dim() != self.embed_dim || state.size() != self.candidate_size {
            return Err(Error::dim(
                "q_network",
                format!(
                    "state {}x{} for a {}x{} network",
                    state.dim(),
                    state.size(),
                    self.embed_dim,
                    self.candidate_size
                ),
            ));
        }
        Ok(())
    }

    pub fn q_values(&self, state: &AgentState<S>) -> Result<Vec<S>> {
        self.check(state)?;
        let x = Tensor2D::new(1, state.flattened().len(), state.flattened().to_vec())?;
        Ok(self.mlp.apply(&self.params, &x)?.into_data())
    }

    /// Largest q-value among members not yet removed.
    pub fn max_valid(&self, state: &AgentState<S>) -> Result<Option<S>> {
        let q = self.q_values(state)?;
        Ok(q.iter()
            .zip(state.removed())
            .filter(|(_, r)| !**r)
            .map(|(v, _)| *v)
            .reduce(S::max))
    }
}

/// ε-greedy choice among valid actions; argmax ties go to the lowest index.
pub fn select_action<S: Scalar>(
    q: &[S],
    removed: &[bool],
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<usize> {
    let valid: Vec<usize> = (0..q.len()).filter(|&i| !removed.get(i).copied().unwrap_or(false)).collect();
    if valid.is_empty() {
        return Err(Error::State("every candidate is already removed".into()));
    }
    let lambda: f64 = rng.random();
    if lambda >= epsilon {
        let masked: Vec<S> = valid.iter().map(|&i| q[i]).collect();
        Ok(valid[argmax(&masked)])
    } else {
        Ok(valid[rng.random_range(0..valid.len())])
    }
}

/// Regression target `r` (terminal) or `r + γ max_valid Q(next)`.
pub fn td_target<S: Scalar>(t: &Transition<S>, gamma: f64, qnet: &QNetwork<S>) -> Result<S> {
    if t.terminal {
        return Ok(t.reward);
    }
    Ok(match qnet.max_valid(&t.next_state)? {
        Some(m) => t.reward + S::lit(gamma) * m,
        None => t.reward,
    })
}

pub fn total_dqn_loss<S: Scalar>(losses: &[Option<S>]) -> S {
    losses.iter().flatten().copied().sum()
}

/// Removal decided for one half-batch position.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection<S> {
    pub position: usize,
    pub logit: S,
    pub relevance: S,
    pub reward: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refinement<S> {
    /// `false` for removed half-batch positions.
    pub keep: Vec<bool>,
    pub selections: Vec<Selection<S>>,
}

/// S-agent or T-agent of one modality.
#[derive(Clone, Debug)]
pub struct Agent<S> {
    pub id: AgentId,
    pub config: AgentConfig,
    pub qnet: QNetwork<S>,
    pub replay: ReplayBuffer<S>,
}

impl<S: Scalar> Agent<S> {
    pub fn new(id: AgentId, embed_dim: usize, config: AgentConfig, rng: &mut impl Rng) -> Self {
        let qnet = QNetwork::new(embed_dim, &config, &format!("q{id}"), rng);
        let replay = ReplayBuffer::new(config.replay_capacity);
        Self {
            id,
            config,
            qnet,
            replay,
        }
    }

    pub fn select_action(&self, state: &AgentState<S>, epsilon: f64, rng: &mut impl Rng) -> Result<usize> {
        if !state.has_valid_action() {
            return Err(Error::State("every candidate is already removed".into()));
        }
        let q = self.qnet.q_values(state)?;
        select_action(&q, state.removed(), epsilon, rng)
    }

    /// Removes `steps` members of `cset`, rewarding each removal from the
    /// member's discriminator logit. Transitions also go to the replay pool.
    pub fn run_episode(
        &mut self,
        cset: &mut CandidateSet,
        embeddings: &Tensor2D<S>,
        logits: &[S],
        steps: usize,
        epsilon: f64,
        rng: &mut impl Rng,
    ) -> Result<Vec<Transition<S>>> {
        if steps >= cset.len() {
            return Err(Error::Config(format!(
                "episode length {steps} must be below candidate size {}",
                cset.len()
            )));
        }
        let tau = S::lit(self.config.tau);
        let mut state = AgentState::from_members(embeddings, &cset.members)?;
        for (n, &r) in cset.removed.iter().enumerate() {
            if r {
                state.remove(n)?;
            }
        }
        let mut out = Vec::with_capacity(steps);
        for e in 1..=steps {
            let action = self.select_action(&state, epsilon, rng)?;
            let mut next = state.clone();
            next.remove(action)?;
            cset.removed[action] = true;
            let member = cset.members[action];
            let logit = *logits.get(member).ok_or(Error::Index {
                op: "episode_logits",
                index: member,
                bound: logits.len(),
            })?;
            let r = reward(relevance(logit, self.id.domain), tau);
            let t = Transition {
                state,
                action,
                reward: r,
                next_state: next.clone(),
                terminal: e == steps,
                logit,
            };
            self.replay.push(t.clone());
            out.push(t);
            state = next;
        }
        Ok(out)
    }

    /// One Adam step on `mean((y - Q(s, a))^2)` over a uniform replay minibatch.
    /// Returns `None` (and skips) when the pool is empty.
    pub fn dqn_update(&mut self, lr: f64, rng: &mut impl Rng) -> Result<Option<S>> {
        if self.replay.is_empty() {
            log::debug!("agent {}: empty replay pool, update skipped", self.id);
            return Ok(None);
        }
        let batch: Vec<Transition<S>> = self
            .replay
            .sample(self.config.minibatch, rng)
            .into_iter()
            .cloned()
            .collect();
        let targets = batch
            .iter()
            .map(|t| td_target(t, self.config.gamma, &self.qnet))
            .collect::<Result<Vec<S>>>()?;
        let width = self.qnet.embed_dim * self.qnet.candidate_size;
        let mut states = Vec::with_capacity(batch.len() * width);
        for t in &batch {
            self.qnet.check(&t.state)?;
            states.extend_from_slice(t.state.flattened());
        }
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();

        let mut tape = Tape::new();
        let bound = self.qnet.params.bind(&mut tape);
        let x = tape.constant(Tensor2D::new(batch.len(), width, states)?);
        let q = self.qnet.mlp.forward(&mut tape, &bound, x)?;
        let q_sa = tape.pick(q, &actions)?;
        let y = tape.constant(Tensor2D::column_vector(targets));
        let diff = tape.sub(y, q_sa)?;
        let sq = tape.mul(diff, diff)?;
        let loss = tape.mean(sq);
        let value = tape.value(loss).item()?;
        let grads = tape.backward(loss)?;
        let g = bound.grads(&self.qnet.params, &grads);
        self.qnet.adam.step(&mut self.qnet.params, &g, S::lit(lr))?;
        Ok(Some(value))
    }

    /// Re-rewards the last `selections.len()` pool entries from fresh logits, in push order.
    pub fn rescore_recent(&mut self, selections: &mut [Selection<S>], logits: &[S]) -> Result<()> {
        let tau = S::lit(self.config.tau);
        let domain = self.id.domain;
        let n = selections.len();
        if self.replay.len() < n {
            return Err(Error::State("replay pool shorter than the selections to rescore".into()));
        }
        for (t, sel) in self.replay.recent_mut(n).zip(selections.iter_mut()) {
            let logit = *logits.get(sel.position).ok_or(Error::Index {
                op: "rescore",
                index: sel.position,
                bound: logits.len(),
            })?;
            let rel = relevance(logit, domain);
            t.logit = logit;
            t.reward = reward(rel, tau);
            sel.logit = logit;
            sel.relevance = rel;
            sel.reward = t.reward;
        }
        Ok(())
    }

    /// Runs one episode per candidate set of a half-batch and returns the keep-mask.
    pub fn refine_halfbatch(
        &mut self,
        embeddings: &Tensor2D<S>,
        logits: &[S],
        epsilon: f64,
        rng: &mut impl Rng,
    ) -> Result<Refinement<S>> {
        let n = embeddings.rows();
        if logits.len() != n {
            return Err(Error::dim("refine", format!("{} logits for {n} rows", logits.len())));
        }
        let sets = partition_batch(n, self.config.candidate_size, rng)?;
        let mut keep = vec![true; n];
        let mut selections = Vec::new();
        for mut set in sets {
            let transitions =
                self.run_episode(&mut set, embeddings, logits, self.config.terminal_steps, epsilon, rng)?;
            for t in transitions {
                let position = set.members[t.action];
                keep[position] = false;
                selections.push(Selection {
                    position,
                    logit: t.logit,
                    relevance: relevance(t.logit, self.id.domain),
                    reward: t.reward,
                });
            }
        }
        Ok(Refinement { keep, selections })
    }
}
