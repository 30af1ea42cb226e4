use proptest::prelude::*;

use mmir::data::Domain;
use mmir::diff::Tensor2D;
use mmir::refine::{partition_batch, relevance, reward, select_action, AgentState, ReplayBuffer, Transition};
use mmir::rng;

#[test]
fn uniform_exploration_passes_chi_square() {
    let q = [0.3, -1.0, 2.0, 0.0, 0.5];
    let removed = [false; 5];
    let mut r = rng::seeded(42);
    let draws = 10_000;
    let mut counts = [0usize; 5];
    for _ in 0..draws {
        counts[select_action(&q, &removed, 1.0, &mut r).unwrap()] += 1;
    }
    let expected = draws as f64 / 5.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // upper 1% point of chi-square with 4 degrees of freedom
    assert!(chi2 < 13.277, "chi2 {chi2} counts {counts:?}");
}

#[test]
fn exploration_skips_removed_members() {
    let q = [0.0; 4];
    let removed = [false, true, false, true];
    let mut r = rng::seeded(1);
    let mut seen = [0usize; 4];
    for _ in 0..2000 {
        seen[select_action(&q, &removed, 1.0, &mut r).unwrap()] += 1;
    }
    assert_eq!(seen[1] + seen[3], 0);
    assert!(seen[0] > 900 && seen[2] > 900, "{seen:?}");
}

proptest! {
    #[test]
    fn partition_is_a_disjoint_cover(sets in 1usize..20, size in 1usize..8, seed in any::<u64>()) {
        let parts = partition_batch(sets * size, size, &mut rng::seeded(seed)).unwrap();
        prop_assert_eq!(parts.len(), sets);
        let mut all: Vec<usize> = parts.iter().flat_map(|p| p.members.clone()).collect();
        prop_assert!(parts.iter().all(|p| p.len() == size && p.removed_count() == 0));
        all.sort_unstable();
        prop_assert_eq!(all, (0..sets * size).collect::<Vec<_>>());
    }

    #[test]
    fn relevance_is_complementary(z in -30.0f64..30.0) {
        let s = relevance(z, Domain::Source);
        let t = relevance(z, Domain::Target);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s + t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reward_is_signed_threshold(rel in 0.0f64..1.0, tau in 0.0f64..1.0) {
        let r = reward(rel, tau);
        prop_assert_eq!(r, if rel < tau { 1.0 } else { -1.0 });
    }

    #[test]
    fn action_is_always_valid(
        q in prop::collection::vec(-5.0f64..5.0, 2..8),
        mask_bits in any::<u8>(),
        eps in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let n = q.len();
        let mut removed: Vec<bool> = (0..n).map(|i| mask_bits >> i & 1 == 1).collect();
        removed[seed as usize % n] = false;
        let a = select_action(&q, &removed, eps, &mut rng::seeded(seed)).unwrap();
        prop_assert!(!removed[a]);
        if eps == 0.0 {
            let best = (0..n).filter(|&i| !removed[i]).fold(None, |b: Option<usize>, i| match b {
                Some(j) if q[j] >= q[i] => Some(j),
                _ => Some(i),
            });
            prop_assert_eq!(Some(a), best);
        }
    }

    #[test]
    fn removal_zeroes_only_its_column(n in 2usize..7, dim in 1usize..5, pick in any::<usize>(), seed in any::<u64>()) {
        use rand::Rng;
        let mut r = rng::seeded(seed);
        let data: Vec<f64> = (0..n * dim).map(|_| r.random_range(0.5..2.0)).collect();
        let emb = Tensor2D::new(n, dim, data).unwrap();
        let members: Vec<usize> = (0..n).collect();
        let mut s = AgentState::from_members(&emb, &members).unwrap();
        let k = pick % n;
        s.remove(k).unwrap();
        for c in 0..n {
            let col = s.column(c);
            if c == k {
                prop_assert!(col.iter().all(|v| *v == 0.0));
            } else {
                prop_assert_eq!(col, emb.row(c).to_vec());
            }
        }
        prop_assert!(s.remove(k).is_err());
    }

    #[test]
    fn replay_keeps_newest(cap in 1usize..50, pushes in 0usize..120) {
        let emb = Tensor2D::<f64>::zeros(2, 1);
        let st = AgentState::from_members(&emb, &[0, 1]).unwrap();
        let mut buf = ReplayBuffer::new(cap);
        for i in 0..pushes {
            buf.push(Transition {
                state: st.clone(),
                action: 0,
                reward: i as f64,
                next_state: st.clone(),
                terminal: true,
                logit: 0.0,
            });
        }
        prop_assert_eq!(buf.len(), pushes.min(cap));
        let first = pushes.saturating_sub(cap);
        let kept: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        prop_assert_eq!(kept, (first..pushes).map(|i| i as f64).collect::<Vec<_>>());
    }
}
