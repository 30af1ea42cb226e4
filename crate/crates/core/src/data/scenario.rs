//! Three synthetic domain profiles whose six ordered pairs give the
//! scenario columns of the comparison table.

use serde::{Deserialize, Serialize};

use super::synth::DomainSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub name: String,
    /// Multiplies the base shift when this profile takes part in a pair.
    pub shift_scale: f64,
    pub negative_fraction: f64,
}

pub fn profiles() -> Vec<DomainProfile> {
    vec![
        DomainProfile {
            name: "D1".into(),
            shift_scale: 1.0,
            negative_fraction: 0.2,
        },
        DomainProfile {
            name: "D2".into(),
            shift_scale: 0.8,
            negative_fraction: 0.15,
        },
        DomainProfile {
            name: "D3".into(),
            shift_scale: 1.2,
            negative_fraction: 0.25,
        },
    ]
}

/// Spec for adapting from `source` to `target`: the shift averages both
/// profiles' scales, each side keeps its own negative fraction.
pub fn pair_spec(base: &DomainSpec, source: &DomainProfile, target: &DomainProfile, index: u64) -> DomainSpec {
    let scale = 0.5 * (source.shift_scale + target.shift_scale);
    let mut spec = base.clone();
    for m in &mut spec.modalities {
        m.shift *= scale;
    }
    spec.source_negative_fraction = source.negative_fraction;
    spec.target_negative_fraction = target.negative_fraction;
    spec.seed = base.seed.wrapping_add(1000 * (index + 1));
    spec
}

/// All ordered pairs `Di -> Dj` (i != j), named like `D2->D1`.
pub fn domain_pairs(base: &DomainSpec) -> Vec<(String, DomainSpec)> {
    let p = profiles();
    let order = [(1, 0), (2, 0), (0, 1), (2, 1), (0, 2), (1, 2)];
    order
        .iter()
        .enumerate()
        .map(|(i, &(s, t))| {
            (
                format!("{}->{}", p[s].name, p[t].name),
                pair_spec(base, &p[s], &p[t], i as u64),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_distinct_valid_pairs() {
        let pairs = domain_pairs(&DomainSpec::default());
        assert_eq!(pairs.len(), 6);
        assert_eq!(pairs[0].0, "D2->D1");
        for (_, spec) in &pairs {
            spec.validate().unwrap();
        }
        let seeds: std::collections::BTreeSet<u64> = pairs.iter().map(|(_, s)| s.seed).collect();
        assert_eq!(seeds.len(), 6);
    }
}
