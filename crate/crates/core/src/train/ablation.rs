use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};

use super::config::{Mode, TrainConfig};
use super::metrics::RunSummary;
use super::trainer::{run_to_dir, RunOutput};

/// The eight comparison rows: baselines, full refinement, agent ablations and the upper bound.
pub fn ablation_variants(base: &TrainConfig, modalities: usize) -> Vec<TrainConfig> {
    let with = |mode: Mode, s: Vec<bool>, t: Vec<bool>, label: Option<&str>| TrainConfig {
        mode,
        agents_source: s,
        agents_target: t,
        label: label.map(String::from),
        ..base.clone()
    };
    let all = vec![true; modalities];
    let none = vec![false; modalities];
    let without = |k: usize| (0..modalities).map(|j| j != k).collect::<Vec<_>>();
    vec![
        with(Mode::SourceOnly, vec![], vec![], None),
        with(Mode::AdversarialOnly, vec![], vec![], None),
        with(Mode::AdversarialIr, all.clone(), all.clone(), None),
        with(Mode::AdversarialIr, without(0), without(0), Some("without_modality0_agents")),
        with(Mode::AdversarialIr, without(1), without(1), Some("without_modality1_agents")),
        with(Mode::AdversarialIr, none.clone(), all.clone(), Some("without_s_agents")),
        with(Mode::AdversarialIr, all, none, Some("without_t_agents")),
        with(Mode::SupervisedTarget, vec![], vec![], None),
    ]
}

/// Runs every variant for every seed. With `out`, each run lands in
/// `out/<variant>/seed<n>/`.
pub fn run_ablation_suite(
    base: &TrainConfig,
    dataset: &Dataset,
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<Vec<RunSummary>> {
    if seeds.len() < 3 {
        return Err(Error::Config(format!("ablation needs at least 3 seeds, got {}", seeds.len())));
    }
    let mut summaries = Vec::new();
    for variant in ablation_variants(base, dataset.num_modalities()) {
        for &seed in seeds {
            let cfg = TrainConfig {
                seed,
                ..variant.clone()
            };
            let dir = out.map(|o| o.join(cfg.variant()).join(format!("seed{seed}")));
            log::info!("ablation: {} seed {seed}", cfg.variant());
            let (summary, _) = run_to_dir(
                &cfg,
                dataset,
                RunOutput {
                    dir: dir.as_deref(),
                    dump_masks: false,
                },
            )?;
            summaries.push(summary);
        }
    }
    Ok(summaries)
}
