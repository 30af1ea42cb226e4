//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the lines print on every `cargo test`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use mmir::data::{generate, Domain, DomainSpec};
use mmir::diff::{Tape, Tensor2D, Var};
use mmir::model::{AdversarialTerms, ModelConfig, TwoStreamModel};
use mmir::refine::{
    partition_batch, relevance, reward, Agent, AgentConfig, AgentId, CandidateSet,
};
use mmir::report::selection_report;
use mmir::rng;
use mmir::train::{ablation_variants, read_masks, run_to_dir, RunOutput, RunSummary, TrainConfig};
use mmir::Result;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn normal(rng: &mut rng::Rng, rows: usize, cols: usize) -> Tensor2D<f64> {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor2D::new(rows, cols, data).unwrap()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

// ---- 1. gradients -------------------------------------------------------

type Build = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

/// `sum(op(x) * r)` for a fixed random `r`, so every output entry matters.
fn projected(build: &Build, inputs: &[Tensor2D<f64>], r: &Tensor2D<f64>) -> (f64, Vec<Tensor2D<f64>>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = build(&mut tape, &vars).unwrap();
    let rv = tape.constant(r.clone());
    let prod = tape.mul(out, rv).unwrap();
    let loss = tape.sum(prod);
    let value = tape.value(loss).item().unwrap();
    let g = tape.backward(loss).unwrap();
    let grads = vars
        .iter()
        .zip(inputs)
        .map(|(v, x)| g.wrt_or_zeros(*v, x.shape()))
        .collect();
    (value, grads)
}

fn op_max_error(build: &Build, inputs: Vec<Tensor2D<f64>>, rng: &mut rng::Rng) -> f64 {
    let h = 1e-5;
    let shape = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = build(&mut tape, &vars).unwrap();
        tape.value(out).shape()
    };
    let r = normal(rng, shape.0, shape.1);
    let (_, analytic) = projected(build, &inputs, &r);
    let mut worst: f64 = 0.0;
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= h;
            let numeric = (projected(build, &plus, &r).0 - projected(build, &minus, &r).0) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i].data()[j], numeric));
        }
    }
    worst
}

/// Values kept away from the LeakyReLU kink so central differences stay on one side.
fn off_kink(mut x: Tensor2D<f64>) -> Tensor2D<f64> {
    for v in x.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1f64.copysign(*v);
        }
    }
    x
}

fn tiny_model(seed: u64) -> TwoStreamModel<f64> {
    let config = ModelConfig {
        hidden_dim: 8,
        embed_dim: 8,
        disc_hidden: 8,
        ..ModelConfig::new(2, 8, 3)
    };
    TwoStreamModel::new(config, &mut rng::seeded(seed))
}

struct Stage2Case {
    xs: Vec<Tensor2D<f64>>,
    xt: Vec<Tensor2D<f64>>,
    labels: Vec<usize>,
    cls_weights: Vec<f64>,
    adv_weights: Vec<[Option<Vec<f64>>; 2]>,
    grl: f64,
    dropout_seed: u64,
}

/// Keep weights from one removal per candidate set of three.
fn keep_weights(n: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let mut w = vec![1.0; n];
    for set in partition_batch(n, 3, rng).unwrap() {
        w[set.members[rng.random_range(0..3)]] = 0.0;
    }
    w
}

/// Returns `(l_cls, l_adv, gradients of the tape total)` for both stores.
fn stage2_eval(m: &TwoStreamModel<f64>, c: &Stage2Case) -> (f64, f64, Vec<Tensor2D<f64>>, Vec<Tensor2D<f64>>) {
    let mut tape = Tape::new();
    let p = m.bind(&mut tape);
    let mut drop = rng::seeded(c.dropout_seed);
    let mut embed = |tape: &mut Tape<f64>, xs: &[Tensor2D<f64>]| -> Vec<Var> {
        xs.iter()
            .enumerate()
            .map(|(k, x)| {
                let v = tape.constant(x.clone());
                m.embed(tape, &p, k, v, Some(&mut drop)).unwrap()
            })
            .collect()
    };
    let se = embed(&mut tape, &c.xs);
    let te = embed(&mut tape, &c.xt);
    let adv = AdversarialTerms {
        target_embs: &te,
        weights: &c.adv_weights,
        grl_scale: c.grl,
    };
    let (total, l_cls, l_adv) = m
        .stage2_loss(&mut tape, &p, &se, &c.labels, Some(&c.cls_weights), Some(adv))
        .unwrap();
    let cls = tape.value(l_cls).item().unwrap();
    let advv = tape.value(l_adv.unwrap()).item().unwrap();
    let g = tape.backward(total).unwrap();
    (
        cls,
        advv,
        p.features.grads(&m.params, &g),
        p.discriminators.grads(&m.disc_params, &g),
    )
}

/// Finite differences of each term separately. Through the reversal layer the
/// extractor receives `d L_cls - grl * d L_adv`; discriminators see `d L_adv`.
fn stage2_max_error(seed: u64, grl: f64, straddled: &mut usize) -> f64 {
    let mut r = rng::seeded(10_000 + seed);
    let n = 6;
    let mut m = tiny_model(seed);
    // Zero-initialised biases put dropped-out rows exactly on the LeakyReLU kink.
    for t in m.params.tensors_mut().chain(m.disc_params.tensors_mut()) {
        for v in t.data_mut() {
            *v += 0.1 * r.sample::<f64, _>(StandardNormal);
        }
    }
    let case = Stage2Case {
        xs: (0..2).map(|_| normal(&mut r, n, 8)).collect(),
        xt: (0..2).map(|_| normal(&mut r, n, 8)).collect(),
        labels: (0..n).map(|_| r.random_range(0..3)).collect(),
        cls_weights: keep_weights(n, &mut r),
        adv_weights: (0..2)
            .map(|_| [Some(keep_weights(n, &mut r)), Some(keep_weights(n, &mut r))])
            .collect(),
        grl,
        dropout_seed: seed,
    };
    let (_, _, gf, gd) = stage2_eval(&m, &case);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for disc in [false, true] {
        let count = if disc { m.disc_params.len() } else { m.params.len() };
        for id in 0..count {
            let len = if disc { gd[id].len() } else { gf[id].len() };
            for j in 0..len {
                let at = |delta: f64| {
                    let mut mm = m.clone();
                    let store = if disc { &mut mm.disc_params } else { &mut mm.params };
                    store.get_mut(mmir::diff::ParamId(id)).data_mut()[j] += delta;
                    let (c, a, _, _) = stage2_eval(&mm, &case);
                    (c, a)
                };
                let fd = |h: f64| {
                    let ((cp, ap), (cm, am)) = (at(h), at(-h));
                    ((cp - cm) / (2.0 * h), (ap - am) / (2.0 * h))
                };
                let (mut dc, mut da) = fd(h);
                // A stencil that straddles a LeakyReLU kink measures a chord; the
                // narrower stencil decides, and the entry is counted.
                let (dc2, da2) = fd(h / 10.0);
                if rel_err(dc, dc2) > 1e-4 || rel_err(da, da2) > 1e-4 {
                    *straddled += 1;
                    (dc, da) = (dc2, da2);
                }
                let (analytic, numeric) = if disc {
                    (gd[id].data()[j], da)
                } else {
                    (gf[id].data()[j], dc - grl * da)
                };
                worst = worst.max(rel_err(analytic, numeric));
            }
        }
    }
    worst
}

fn criterion_gradients() -> Outcome {
    let mut r = rng::seeded(1);
    let ops: Vec<(&str, Box<Build>, Vec<(usize, usize)>)> = vec![
        ("matmul", Box::new(|t, v| t.matmul(v[0], v[1])), vec![(3, 4), (4, 2)]),
        ("add", Box::new(|t, v| t.add(v[0], v[1])), vec![(3, 4), (3, 4)]),
        ("sub", Box::new(|t, v| t.sub(v[0], v[1])), vec![(3, 4), (3, 4)]),
        ("add_row", Box::new(|t, v| t.add_row(v[0], v[1])), vec![(3, 4), (1, 4)]),
        ("mul", Box::new(|t, v| t.mul(v[0], v[1])), vec![(3, 4), (3, 4)]),
        ("neg", Box::new(|t, v| Ok(t.neg(v[0]))), vec![(3, 4)]),
        ("scale", Box::new(|t, v| Ok(t.scale(v[0], -0.7))), vec![(3, 4)]),
        ("leaky_relu", Box::new(|t, v| Ok(t.leaky_relu(v[0], 0.01))), vec![(3, 4)]),
        ("sigmoid", Box::new(|t, v| Ok(t.sigmoid(v[0]))), vec![(3, 4)]),
        (
            "log",
            Box::new(|t, v| {
                let s = t.sigmoid(v[0]);
                t.log(s)
            }),
            vec![(3, 4)],
        ),
        ("sum", Box::new(|t, v| Ok(t.sum(v[0]))), vec![(3, 4)]),
        ("mean", Box::new(|t, v| Ok(t.mean(v[0]))), vec![(3, 4)]),
        (
            "softmax_cross_entropy",
            Box::new(|t, v| t.softmax_cross_entropy(v[0], &[2, 0, 1, 2])),
            vec![(4, 3)],
        ),
        (
            "bce_with_logits",
            Box::new(|t, v| t.bce_with_logits(v[0], &[0.0, 1.0, 1.0, 0.0])),
            vec![(4, 1)],
        ),
        ("pick", Box::new(|t, v| t.pick(v[0], &[1, 0, 2, 1])), vec![(4, 3)]),
    ];
    let trials = 20;
    let mut worst: Vec<(String, f64)> = Vec::new();
    for (name, build, shapes) in &ops {
        let mut w: f64 = 0.0;
        for _ in 0..trials {
            let inputs = shapes
                .iter()
                .map(|&(a, b)| off_kink(normal(&mut r, a, b).scale(2.0)))
                .collect();
            w = w.max(op_max_error(build.as_ref(), inputs, &mut r));
        }
        worst.push((name.to_string(), w));
    }
    let mut composed: f64 = 0.0;
    let mut straddled = 0;
    for seed in 0..trials as u64 {
        let grl = if seed % 2 == 0 { 1.0 } else { 0.5 };
        composed = composed.max(stage2_max_error(seed, grl, &mut straddled));
    }
    worst.push(("stage2_loss".into(), composed));
    let (name, max) = worst
        .iter()
        .cloned()
        .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    Outcome {
        pass: max < 1e-4,
        detail: format!(
            "{} ops + composed loss, {trials} trials each; max rel err {max:.2e} ({name}); \
             {straddled} kink-straddling stencils narrowed",
            ops.len()
        ),
    }
}

// ---- 2. gradient reversal -----------------------------------------------

fn adversarial_grad_at_embedding(m: &TwoStreamModel<f64>, x: &Tensor2D<f64>, grl: Option<f64>) -> Tensor2D<f64> {
    let mut tape = Tape::new();
    let p = m.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let emb = m.embed(&mut tape, &p, 0, xv, None).unwrap();
    let z = match grl {
        Some(s) => m.domain_logit(&mut tape, &p, 0, emb, s).unwrap(),
        None => m.stacks[0].discriminator.forward(&mut tape, &p.discriminators, emb).unwrap(),
    };
    let domains = vec![Domain::Source, Domain::Target, Domain::Source, Domain::Target];
    let loss = m.loss_adv_modality(&mut tape, z, &domains, None).unwrap();
    let g = tape.backward(loss).unwrap();
    g.wrt_or_zeros(emb, tape.value(emb).shape())
}

fn criterion_grl() -> Outcome {
    let mut checked = 0;
    let mut mismatches = 0;
    for seed in 0..10 {
        let m = tiny_model(seed);
        let x = normal(&mut rng::seeded(seed + 100), 4, 8);
        let plain = adversarial_grad_at_embedding(&m, &x, None);
        for lambda in [0.0, 0.5, 1.0] {
            let reversed = adversarial_grad_at_embedding(&m, &x, Some(lambda));
            for (a, b) in reversed.data().iter().zip(plain.data()) {
                checked += 1;
                if *a != -lambda * b {
                    mismatches += 1;
                }
            }
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("{mismatches}/{checked} entries differ from -lambda * unreversed"),
    }
}

// ---- 3. reward ------------------------------------------------------------

fn criterion_reward() -> Outcome {
    let mut r = rng::seeded(3);
    let mut agree = 0;
    let n = 1000;
    for _ in 0..n {
        let z: f64 = r.random_range(-8.0..8.0);
        let domain = if r.random_bool(0.5) { Domain::Source } else { Domain::Target };
        let tau: f64 = r.random_range(0.0..1.0);
        let p = 1.0 / (1.0 + (-z).exp());
        let delta = if domain == Domain::Source { p } else { 1.0 - p };
        let expected = if delta < tau { 1.0 } else { -1.0 };
        let rel = relevance(z, domain);
        if reward(rel, tau) == expected && (rel - delta).abs() <= 1e-15 {
            agree += 1;
        }
    }
    Outcome {
        pass: agree == n,
        detail: format!("{agree}/{n} triples match"),
    }
}

// ---- 4. episodes ----------------------------------------------------------

fn agent(domain: Domain, n_c: usize, steps: usize, dim: usize, seed: u64) -> Agent<f64> {
    let config = AgentConfig {
        candidate_size: n_c,
        terminal_steps: steps,
        ..AgentConfig::default()
    };
    Agent::new(AgentId { domain, modality: 0 }, dim, config, &mut rng::seeded(seed))
}

fn episode_ok(n_c: usize, e: usize, seed: u64) -> bool {
    let dim = 4;
    let mut r = rng::seeded(seed);
    let mut a = agent(Domain::Source, n_c, e, dim, seed);
    let emb = normal(&mut r, n_c, dim);
    let logits: Vec<f64> = (0..n_c).map(|_| r.sample(StandardNormal)).collect();
    let mut set = CandidateSet::new((0..n_c).collect());
    let ts = a.run_episode(&mut set, &emb, &logits, e, 0.5, &mut r).unwrap();
    if ts.len() != e || set.removed_count() != e {
        return false;
    }
    let mut removed = vec![false; n_c];
    for (i, t) in ts.iter().enumerate() {
        if removed[t.action] {
            return false;
        }
        removed[t.action] = true;
        if i > 0 && t.state != ts[i - 1].next_state {
            return false;
        }
        if t.terminal != (i + 1 == e) {
            return false;
        }
        for col in 0..n_c {
            let want: Vec<f64> = if removed[col] { vec![0.0; dim] } else { emb.row(col).to_vec() };
            if t.next_state.column(col) != want || t.next_state.removed()[col] != removed[col] {
                return false;
            }
        }
    }
    removed == set.removed
}

fn criterion_episodes() -> Outcome {
    let mut ok = 0;
    let mut total = 0;
    for (n_c, e) in [(5, 1), (5, 2), (6, 3)] {
        for seed in 0..100 {
            total += 1;
            ok += usize::from(episode_ok(n_c, e, seed));
        }
    }
    Outcome {
        pass: ok == total,
        detail: format!("{ok}/{total} episodes correct"),
    }
}

// ---- 5. bandit ------------------------------------------------------------

/// One agent learns which candidate position the frozen oracle rewards.
fn bandit_learns(domain: Domain, seed: u64) -> bool {
    let (n_c, dim) = (5, 8);
    let mut r = rng::seeded(seed);
    let hidden = r.random_range(0..n_c);
    let mut a = agent(domain, n_c, 1, dim, seed);
    // relevance below tau only at the hidden position
    let low = if domain == Domain::Source { -6.0 } else { 6.0 };
    let logits: Vec<f64> = (0..n_c).map(|i| if i == hidden { low } else { -low }).collect();
    let lr = TrainConfig::default().dqn_lr();
    for _ in 0..500 {
        let emb = normal(&mut r, n_c, dim);
        let mut set = CandidateSet::new((0..n_c).collect());
        a.run_episode(&mut set, &emb, &logits, 1, 1.0, &mut r).unwrap();
        a.dqn_update(lr, &mut r).unwrap();
    }
    (0..20).all(|_| {
        let emb = normal(&mut r, n_c, dim);
        let state = mmir::refine::AgentState::from_members(&emb, &(0..n_c).collect::<Vec<_>>()).unwrap();
        a.select_action(&state, 0.0, &mut r).unwrap() == hidden
    })
}

fn criterion_bandit() -> Outcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for domain in Domain::BOTH {
        let learned = (0..100).filter(|&s| bandit_learns(domain, s)).count();
        pass &= learned >= 95;
        detail.push(format!("{domain} agent {learned}/100"));
    }
    Outcome {
        pass,
        detail: detail.join(", "),
    }
}

// ---- 6-8, 10. ablation suite ----------------------------------------------

struct Suite {
    summaries: Vec<RunSummary>,
    /// Per full-refinement run: `(agent, precision)` over the final third of stage 2.
    precision: Vec<BTreeMap<String, f64>>,
    spec: DomainSpec,
    minutes_core: f64,
}

impl Suite {
    fn mean(&self, variant: &str) -> f64 {
        let v: Vec<f64> = self
            .summaries
            .iter()
            .filter(|s| s.variant == variant)
            .map(|s| s.final_accuracy)
            .collect();
        assert_eq!(v.len(), SEEDS.len(), "{variant}");
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn final_third_precision(dir: &Path, summary: &RunSummary, ds: &mmir::Dataset) -> BTreeMap<String, f64> {
    let from = summary.stage1_steps + summary.stage2_steps * 2 / 3;
    let masks: Vec<_> = read_masks(dir.join("masks.csv"))
        .unwrap()
        .into_iter()
        .filter(|m| m.step >= from)
        .collect();
    selection_report(&masks, ds, 1)
        .unwrap()
        .agents
        .into_iter()
        .filter_map(|a| a.precision.map(|p| (a.agent, p)))
        .collect()
}

fn run_suite() -> Suite {
    let spec = DomainSpec::default();
    let base = TrainConfig::default();
    let tmp = tempfile::tempdir().unwrap();
    let mut summaries = Vec::new();
    let mut precision = Vec::new();
    let mut core = 0.0;
    for &seed in &SEEDS {
        let ds = generate(&DomainSpec { seed, ..spec.clone() }).unwrap();
        for variant in ablation_variants(&base, ds.num_modalities()) {
            let cfg = TrainConfig { seed, ..variant };
            let name = cfg.variant();
            let dir = tmp.path().join(&name).join(seed.to_string());
            let full = name == "adversarial_ir";
            let t = Instant::now();
            let (s, _) = run_to_dir(
                &cfg,
                &ds,
                RunOutput {
                    dir: Some(&dir),
                    dump_masks: full,
                },
            )
            .unwrap();
            if matches!(name.as_str(), "source_only" | "adversarial_only" | "adversarial_ir") {
                core += t.elapsed().as_secs_f64() / 60.0;
            }
            if full {
                precision.push(final_third_precision(&dir, &s, &ds));
            }
            eprintln!("  {name} seed {seed}: {:.4}", s.final_accuracy);
            summaries.push(s);
        }
    }
    Suite {
        summaries,
        precision,
        spec,
        minutes_core: core,
    }
}

fn criterion_ordering(s: &Suite) -> Outcome {
    let (src, adv, ir) = (s.mean("source_only"), s.mean("adversarial_only"), s.mean("adversarial_ir"));
    let pass = ir - adv >= 0.01 && adv - src >= 0.02 && s.minutes_core < 30.0;
    Outcome {
        pass,
        detail: format!(
            "source_only {:.2}, adversarial_only {:.2}, adversarial_ir {:.2} ({:.1} min)",
            100.0 * src,
            100.0 * adv,
            100.0 * ir,
            s.minutes_core
        ),
    }
}

fn criterion_precision(s: &Suite) -> Outcome {
    let mut means: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for run in &s.precision {
        for (agent, p) in run {
            means.entry(agent.clone()).or_default().push(*p);
        }
    }
    let threshold = 1.5 * s.spec.source_negative_fraction;
    let mut pass = !means.is_empty();
    let parts: Vec<String> = means
        .iter()
        .map(|(agent, v)| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            pass &= m >= threshold;
            format!("{agent} {m:.3}")
        })
        .collect();
    Outcome {
        pass,
        detail: format!("{} (need >= {threshold:.2})", parts.join(", ")),
    }
}

fn criterion_modality_ablation(s: &Suite) -> Outcome {
    // the modality whose shift is largest relative to its class separation
    let gap = |k: usize| s.spec.modalities[k].shift / s.spec.modalities[k].separation;
    let (rel, other) = if gap(0) >= gap(1) { (0, 1) } else { (1, 0) };
    let full = s.mean("adversarial_ir");
    let drop = |k: usize| full - s.mean(&format!("without_modality{k}_agents"));
    Outcome {
        pass: drop(rel) >= drop(other),
        detail: format!(
            "drop without modality-{rel} agents {:.2} (more relevant), without modality-{other} agents {:.2}",
            100.0 * drop(rel),
            100.0 * drop(other)
        ),
    }
}

fn criterion_upper_bound(s: &Suite) -> Outcome {
    let (sup, ir) = (s.mean("supervised_target"), s.mean("adversarial_ir"));
    Outcome {
        pass: sup - ir >= 0.05,
        detail: format!("supervised_target {:.2} vs adversarial_ir {:.2}", 100.0 * sup, 100.0 * ir),
    }
}

// ---- 9. determinism -------------------------------------------------------

fn criterion_determinism() -> Outcome {
    let ds = generate(&DomainSpec::default()).unwrap();
    let cfg = TrainConfig {
        step_scale: 0.1,
        seed: 9,
        ..TrainConfig::default()
    };
    let tmp = tempfile::tempdir().unwrap();
    let csv: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|d| {
            let dir = tmp.path().join(d);
            run_to_dir(
                &cfg,
                &ds,
                RunOutput {
                    dir: Some(&dir),
                    dump_masks: false,
                },
            )
            .unwrap();
            std::fs::read(dir.join("metrics.csv")).unwrap()
        })
        .collect();
    Outcome {
        pass: csv[0] == csv[1],
        detail: format!("{} bytes each, identical: {}", csv[0].len(), csv[0] == csv[1]),
    }
}

fn report(n: usize, name: &str, t: Instant, o: &Outcome) -> bool {
    println!(
        "criterion {n:>2} {name:<22} {} [{:.0}s] {}",
        if o.pass { "PASS" } else { "FAIL" },
        t.elapsed().as_secs_f64(),
        o.detail
    );
    o.pass
}

/// Optional arguments are criterion numbers to run; none runs all of them.
/// Failures are reported; `--strict` also makes them fail the process.
fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let only: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| only.is_empty() || only.contains(&n);
    let strict = args.iter().any(|a| a == "--strict");
    let (mut ran, mut failed) = (0, 0);
    let mut tally = |pass: bool| {
        ran += 1;
        failed += usize::from(!pass);
    };
    let quick: [(usize, &str, fn() -> Outcome); 6] = [
        (1, "gradient check", criterion_gradients),
        (2, "gradient reversal", criterion_grl),
        (3, "reward oracle", criterion_reward),
        (4, "episode mechanics", criterion_episodes),
        (5, "bandit learnability", criterion_bandit),
        (9, "determinism", criterion_determinism),
    ];
    for (n, name, f) in quick {
        if wanted(n) {
            let t = Instant::now();
            tally(report(n, name, t, &f()));
        }
    }
    let slow: [(usize, &str, fn(&Suite) -> Outcome); 4] = [
        (6, "ablation ordering", criterion_ordering),
        (7, "selection precision", criterion_precision),
        (8, "modality ablation", criterion_modality_ablation),
        (10, "supervised bound", criterion_upper_bound),
    ];
    if slow.iter().any(|(n, _, _)| wanted(*n)) {
        let t = Instant::now();
        let suite = run_suite();
        for (n, name, f) in slow {
            if wanted(n) {
                tally(report(n, name, t, &f(&suite)));
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
