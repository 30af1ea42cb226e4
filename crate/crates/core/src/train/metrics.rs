use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Domain;
use crate::error::{Error, Result};
use crate::refine::AgentId;

use super::config::{Mode, TrainConfig};

/// Selection counts of one agent over one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub presented: usize,
    pub presented_negative: usize,
    pub removed: usize,
    pub removed_negative: usize,
    pub reward_sum: f64,
}

impl AgentStep {
    pub fn mean_reward(&self) -> Option<f64> {
        (self.removed > 0).then(|| self.reward_sum / self.removed as f64)
    }

    pub fn merge(&mut self, other: &AgentStep) {
        self.presented += other.presented;
        self.presented_negative += other.presented_negative;
        self.removed += other.removed;
        self.removed_negative += other.removed_negative;
        self.reward_sum += other.reward_sum;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based global step.
    pub step: usize,
    pub stage: u8,
    pub lr: f64,
    pub loss_cls: f64,
    pub loss_adv: Option<f64>,
    pub loss_dqn: Option<f64>,
    /// Indexed like `RunMetrics::agents`; `None` for inactive agents.
    pub agents: Vec<Option<AgentStep>>,
    pub accuracy: Option<f64>,
}

/// One row of the mask dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub step: usize,
    pub modality: usize,
    pub domain: Domain,
    pub segment_id: usize,
    pub removed: bool,
    pub relevance: f64,
    pub reward: Option<f64>,
}

pub const MASK_HEADER: &str = "step,modality,domain,segment_id,removed_flag,relevance,reward";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_masks(path: impl AsRef<Path>, records: &[MaskRecord]) -> Result<()> {
    let mut out = String::with_capacity(records.len() * 40);
    out.push_str(MASK_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step,
            r.modality,
            r.domain.as_str(),
            r.segment_id,
            u8::from(r.removed),
            r.relevance,
            opt(r.reward)
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_masks(path: impl AsRef<Path>) -> Result<Vec<MaskRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Input(format!(
            "mask dump {} unavailable ({e}); rerun training with mask dumping enabled",
            path.display()
        ))
    })?;
    let mut lines = text.lines();
    if lines.next() != Some(MASK_HEADER) {
        return Err(Error::Format(format!("{} is not a mask dump", path.display())));
    }
    let bad = |n: usize| Error::Format(format!("{}: malformed line {}", path.display(), n + 2));
    lines
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(n));
            }
            let domain = match f[2] {
                "source" => Domain::Source,
                "target" => Domain::Target,
                _ => return Err(bad(n)),
            };
            Ok(MaskRecord {
                step: f[0].parse().map_err(|_| bad(n))?,
                modality: f[1].parse().map_err(|_| bad(n))?,
                domain,
                segment_id: f[3].parse().map_err(|_| bad(n))?,
                removed: match f[4] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad(n)),
                },
                relevance: f[5].parse().map_err(|_| bad(n))?,
                reward: if f[6].is_empty() {
                    None
                } else {
                    Some(f[6].parse().map_err(|_| bad(n))?)
                },
            })
        })
        .collect()
}

/// Per-agent selection quality over a range of steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSelection {
    pub agent: String,
    pub domain: Domain,
    pub modality: usize,
    pub removed: usize,
    pub removed_negative: usize,
    pub presented: usize,
    pub presented_negative: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Precision of uniformly random removal: the negative share of presented segments.
    pub baseline: Option<f64>,
}

impl AgentSelection {
    pub fn from_counts(id: AgentId, c: &AgentStep) -> Self {
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        Self {
            agent: id.to_string(),
            domain: id.domain,
            modality: id.modality,
            removed: c.removed,
            removed_negative: c.removed_negative,
            presented: c.presented,
            presented_negative: c.presented_negative,
            precision: ratio(c.removed_negative, c.removed),
            recall: ratio(c.removed_negative, c.presented_negative),
            baseline: ratio(c.presented_negative, c.presented),
        }
    }
}

/// Everything logged by one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub agents: Vec<AgentId>,
    pub steps: Vec<StepRecord>,
}

impl RunMetrics {
    pub fn new(agents: Vec<AgentId>) -> Self {
        Self {
            agents,
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, record: StepRecord) -> Result<()> {
        if let Some(last) = self.steps.last() {
            if record.step <= last.step {
                return Err(Error::State(format!(
                    "step {} logged after step {}",
                    record.step, last.step
                )));
            }
        }
        let finite = |v: Option<f64>| v.is_none_or(f64::is_finite);
        let all = record.lr.is_finite()
            && record.loss_cls.is_finite()
            && finite(record.loss_adv)
            && finite(record.loss_dqn)
            && finite(record.accuracy)
            && record.agents.iter().flatten().all(|a| a.reward_sum.is_finite());
        if !all {
            return Err(Error::NonFinite(format!("metrics at step {}", record.step)));
        }
        self.steps.push(record);
        Ok(())
    }

    pub fn evaluations(&self) -> Vec<(usize, f64)> {
        self.steps
            .iter()
            .filter_map(|s| s.accuracy.map(|a| (s.step, a)))
            .collect()
    }

    /// Mean of the last `m` evaluations.
    pub fn final_accuracy(&self, m: usize) -> Result<f64> {
        let evals = self.evaluations();
        if evals.is_empty() {
            return Err(Error::Metric("run has no evaluations".into()));
        }
        let tail = &evals[evals.len().saturating_sub(m)..];
        Ok(tail.iter().map(|(_, a)| a).sum::<f64>() / tail.len() as f64)
    }

    /// Selection counts summed over steps `from..=to`.
    pub fn selection(&self, from: usize, to: usize) -> Vec<AgentSelection> {
        self.agents
            .iter()
            .enumerate()
            .filter_map(|(i, id)| {
                let mut total: Option<AgentStep> = None;
                for s in self.steps.iter().filter(|s| s.step >= from && s.step <= to) {
                    if let Some(Some(a)) = s.agents.get(i) {
                        total.get_or_insert_with(AgentStep::default).merge(a);
                    }
                }
                total.map(|t| AgentSelection::from_counts(*id, &t))
            })
            .collect()
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from("step,stage,lr,loss_cls,loss_adv,loss_dqn");
        for a in &self.agents {
            let _ = write!(h, ",reward_{a},removed_{a}");
        }
        h.push_str(",accuracy");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for s in &self.steps {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                s.step,
                s.stage,
                s.lr,
                s.loss_cls,
                opt(s.loss_adv),
                opt(s.loss_dqn)
            );
            for i in 0..self.agents.len() {
                match s.agents.get(i).copied().flatten() {
                    Some(a) => {
                        let _ = write!(out, ",{},{}", opt(a.mean_reward()), a.removed);
                    }
                    None => out.push_str(",,"),
                }
            }
            let _ = writeln!(out, ",{}", opt(s.accuracy));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Final numbers of one run, written as `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub variant: String,
    pub scenario: String,
    pub seed: u64,
    pub config_hash: String,
    pub final_accuracy: f64,
    pub evaluations: Vec<(usize, f64)>,
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    /// Selection quality over the final third of stage 2.
    pub selection: Vec<AgentSelection>,
    pub config: TrainConfig,
}

impl RunSummary {
    pub fn from_metrics(config: &TrainConfig, metrics: &RunMetrics) -> Result<Self> {
        let (s1, s2) = (config.stage1_len(), config.stage2_len());
        let total = s1 + s2;
        Ok(Self {
            mode: config.mode,
            variant: config.variant(),
            scenario: config.scenario.clone(),
            seed: config.seed,
            config_hash: config.hash(),
            final_accuracy: metrics.final_accuracy(config.eval_last)?,
            evaluations: metrics.evaluations(),
            stage1_steps: s1,
            stage2_steps: s2,
            selection: metrics.selection(total - s2 / 3 + 1, total),
            config: config.clone(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
