use std::collections::{BTreeMap, BTreeSet, HashMap};

use mmir::data::{generate, Domain, DomainSpec};
use mmir::refine::reward;
use mmir::report::summarize;
use mmir::train::{run_to_dir, MaskRecord, Mode, RunOutput, TrainConfig, Trainer};

fn short(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        step_scale: 0.1,
        eval_every: 10,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn train(cfg: &TrainConfig, masks: bool) -> Trainer<f64> {
    let ds = generate(&DomainSpec::default()).unwrap();
    run_to_dir(cfg, &ds, RunOutput { dir: None, dump_masks: masks }).unwrap().1
}

#[test]
fn refinement_with_every_agent_off_is_adversarial_only() {
    let off = TrainConfig {
        agents_source: vec![false, false],
        agents_target: vec![false, false],
        ..short(Mode::AdversarialIr)
    };
    let a = train(&off, false);
    let b = train(&short(Mode::AdversarialOnly), false);
    assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
}

#[test]
fn adversarial_only_never_removes() {
    let t = train(&short(Mode::AdversarialOnly), true);
    assert!(t.masks.is_empty());
    assert!(t.metrics.steps.iter().all(|s| s.agents.iter().all(Option::is_none)));
    assert!(t.metrics.steps.iter().all(|s| s.loss_dqn.is_none()));
}

#[test]
fn learning_rate_drops_at_stage_boundary() {
    let cfg = short(Mode::SourceOnly);
    let t = train(&cfg, false);
    let s1 = cfg.stage1_len();
    assert_eq!(t.metrics.steps.len(), cfg.total_steps());
    for r in &t.metrics.steps {
        let (stage, lr) = if r.step <= s1 { (1, cfg.stage1_lr) } else { (2, cfg.stage2_lr) };
        assert_eq!((r.stage, r.lr), (stage, lr), "step {}", r.step);
    }
}

fn removed_by_agent(masks: &[MaskRecord]) -> BTreeMap<(usize, usize, Domain), BTreeSet<usize>> {
    let mut out: BTreeMap<_, BTreeSet<_>> = BTreeMap::new();
    for m in masks.iter().filter(|m| m.removed) {
        out.entry((m.step, m.modality, m.domain)).or_default().insert(m.segment_id);
    }
    out
}

#[test]
fn mask_dump_is_consistent_with_rewards() {
    let cfg = short(Mode::AdversarialIr);
    let t = train(&cfg, true);
    let per_set = cfg.stage2_batch / 2 / cfg.candidate_size;
    for m in &t.masks {
        match m.reward {
            Some(r) => {
                assert!(m.removed);
                let tau = if m.domain == Domain::Source { cfg.tau_s } else { cfg.tau_t };
                assert_eq!(r, reward(m.relevance, tau));
            }
            None => assert!(!m.removed),
        }
    }
    let removed = removed_by_agent(&t.masks);
    assert_eq!(removed.len(), cfg.stage2_len() * 4);
    assert!(removed.values().all(|s| s.len() == per_set * cfg.terminal_e));
    // each modality's agent decides on its own
    let differing = (cfg.stage1_len() + 1..=cfg.total_steps())
        .filter(|&step| removed[&(step, 0, Domain::Source)] != removed[&(step, 1, Domain::Source)])
        .count();
    assert!(differing > cfg.stage2_len() / 2, "{differing}");
}

#[test]
fn random_agents_hit_negatives_at_the_base_rate() {
    let cfg = TrainConfig {
        epsilon: 1.0,
        step_scale: 0.2,
        ..short(Mode::AdversarialIr)
    };
    let ds = generate(&DomainSpec::default()).unwrap();
    let negative: HashMap<(Domain, usize), bool> = ds
        .source
        .iter()
        .chain(&ds.target)
        .map(|s| ((s.domain, s.id), s.ground_truth_negative()))
        .collect();
    let t = run_to_dir(&cfg, &ds, RunOutput { dir: None, dump_masks: true }).unwrap().1;
    let removed: Vec<bool> = t
        .masks
        .iter()
        .filter(|m| m.removed)
        .map(|m| negative[&(m.domain, m.segment_id)])
        .collect();
    assert!(removed.len() >= 2000);
    let precision = removed.iter().filter(|n| **n).count() as f64 / removed.len() as f64;
    assert!((precision - 0.2).abs() <= 0.05, "{precision}");
}

#[test]
fn single_run_summary_is_its_own_mean() {
    let ds = generate(&DomainSpec::default()).unwrap();
    let (s, _) = run_to_dir(&short(Mode::SourceOnly), &ds, RunOutput::default()).unwrap();
    let table = summarize(std::slice::from_ref(&s)).unwrap();
    let cell = table.get("source_only", "default").unwrap();
    assert_eq!(cell.mean, s.final_accuracy);
    assert_eq!((cell.std, cell.n), (0.0, 1));
}
