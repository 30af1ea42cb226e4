//! Gaussian class clusters per modality, a translated target domain, and two
//! kinds of injected negatives: displaced source clusters ("less relevant")
//! and target points halfway between two classes ("ambiguous").

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    /// Discriminator target: source 0, target 1.
    pub fn label(self) -> f64 {
        match self {
            Domain::Source => 0.0,
            Domain::Target => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }

    pub const BOTH: [Domain; 2] = [Domain::Source, Domain::Target];
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One training instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: usize,
    pub domain: Domain,
    /// `features[k]` is the modality-`k` vector.
    pub features: Vec<Vec<f64>>,
    label: usize,
    is_negative: bool,
}

impl Segment {
    pub fn new(
        id: usize,
        domain: Domain,
        features: Vec<Vec<f64>>,
        label: usize,
        is_negative: bool,
    ) -> Self {
        Self {
            id,
            domain,
            features,
            label,
            is_negative,
        }
    }

    /// Class label visible to training: present only for source segments.
    pub fn label(&self) -> Option<usize> {
        (self.domain == Domain::Source).then_some(self.label)
    }

    /// Ground-truth class for evaluation and the supervised upper bound only.
    pub fn evaluation_label(&self) -> usize {
        self.label
    }

    /// Synthetic bookkeeping for selection diagnostics; never fed to models or agents.
    pub fn ground_truth_negative(&self) -> bool {
        self.is_negative
    }

    pub fn modalities(&self) -> usize {
        self.features.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalitySpec {
    /// Euclidean distance between any two class means.
    pub separation: f64,
    /// Norm of the source-to-target translation.
    pub shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Per class and per domain (training split).
    pub samples_per_class: usize,
    /// Per class, held-out target split used for accuracy.
    pub test_samples_per_class: usize,
    pub noise_std: f64,
    pub modalities: Vec<ModalitySpec>,
    pub source_negative_fraction: f64,
    pub target_negative_fraction: f64,
    /// Displacement of less-relevant source clusters, in class separations beyond the
    /// margin that keeps them away from every target mean (at least 3).
    pub outlier_displacement: f64,
    /// Share of the outlier displacement lying inside the class-mean subspace.
    pub outlier_class_overlap: f64,
    /// Share of the outlier displacement pointing against the domain shift.
    pub outlier_shift_alignment: f64,
    /// Share of the outlier displacement of class `c` pointing at the target mean of
    /// class `c + 1`, so alignment pulls those clusters toward the wrong class.
    pub outlier_confusion: f64,
    /// Share of the domain shift lying inside the class-mean subspace.
    pub shift_class_overlap: f64,
    /// Ambiguous target points mix two class means with weight `0.5 ± jitter`.
    pub ambiguity_jitter: f64,
    /// Optional per-class sampling weights; balanced when absent.
    pub class_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            num_classes: 8,
            feature_dim: 64,
            samples_per_class: 60,
            test_samples_per_class: 60,
            noise_std: 1.0,
            modalities: vec![
                ModalitySpec {
                    separation: 4.0,
                    shift: 3.0,
                },
                ModalitySpec {
                    separation: 2.5,
                    shift: 3.0,
                },
            ],
            source_negative_fraction: 0.2,
            target_negative_fraction: 0.2,
            outlier_displacement: 5.0,
            outlier_class_overlap: 0.9,
            outlier_shift_alignment: 0.0,
            outlier_confusion: 0.8,
            shift_class_overlap: 0.5,
            ambiguity_jitter: 0.1,
            class_weights: None,
            seed: 0,
        }
    }
}

impl DomainSpec {
    pub fn num_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_classes < 2 {
            return fail(format!("num_classes {} < 2", self.num_classes));
        }
        if self.modalities.is_empty() {
            return fail("at least one modality required".into());
        }
        if self.feature_dim < 2 {
            return fail(format!("feature_dim {} < 2", self.feature_dim));
        }
        // class means plus the shift and outlier directions need orthogonal room
        if self.num_classes + 2 > self.feature_dim {
            return fail(format!(
                "{} classes cannot be placed orthogonally in {} dimensions",
                self.num_classes, self.feature_dim
            ));
        }
        for (name, f) in [
            ("source_negative_fraction", self.source_negative_fraction),
            ("target_negative_fraction", self.target_negative_fraction),
        ] {
            if !(0.0..1.0).contains(&f) {
                return fail(format!("{name} {f} outside [0, 1)"));
            }
        }
        for (name, f) in [
            ("outlier_class_overlap", self.outlier_class_overlap),
            ("outlier_shift_alignment", self.outlier_shift_alignment),
            ("outlier_confusion", self.outlier_confusion),
            ("shift_class_overlap", self.shift_class_overlap),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return fail(format!("{name} {f} outside [0, 1]"));
            }
        }
        if self.outlier_class_overlap + self.outlier_shift_alignment > 1.0 {
            return fail("outlier_class_overlap + outlier_shift_alignment exceeds 1".into());
        }
        if self.outlier_displacement < 3.0 {
            return fail(format!(
                "outlier_displacement {} below 3 class separations",
                self.outlier_displacement
            ));
        }
        if !(0.0..0.5).contains(&self.ambiguity_jitter) {
            return fail(format!("ambiguity_jitter {} outside [0, 0.5)", self.ambiguity_jitter));
        }
        if !(self.noise_std > 0.0) {
            return fail("noise_std must be positive".into());
        }
        for (k, m) in self.modalities.iter().enumerate() {
            if !(m.separation > 0.0) || !(m.shift >= 0.0) {
                return fail(format!("modality {k}: separation > 0 and shift >= 0 required"));
            }
        }
        if self.samples_per_class == 0 {
            return fail("samples_per_class must be positive".into());
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.num_classes || w.iter().any(|v| !(*v > 0.0)) {
                return fail("class_weights needs one positive weight per class".into());
            }
        }
        Ok(())
    }

    /// Per-class counts for a split with nominal `per_class` samples per class.
    fn class_counts(&self, per_class: usize) -> Vec<usize> {
        let total = per_class * self.num_classes;
        match &self.class_weights {
            None => vec![per_class; self.num_classes],
            Some(w) => {
                let sum: f64 = w.iter().sum();
                let mut counts: Vec<usize> = w
                    .iter()
                    .map(|v| ((v / sum) * total as f64).floor().max(1.0) as usize)
                    .collect();
                // hand the rounding remainder to the heaviest classes
                let mut order: Vec<usize> = (0..w.len()).collect();
                order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
                let mut i = 0;
                while counts.iter().sum::<usize>() < total {
                    counts[order[i % order.len()]] += 1;
                    i += 1;
                }
                counts
            }
        }
    }
}

/// Geometry of one modality, fixed by the spec seed.
#[derive(Clone, Debug)]
pub struct ModalityGeometry {
    pub class_means: Vec<Vec<f64>>,
    pub shift: Vec<f64>,
    /// Per-class displacement of less-relevant source clusters.
    pub outlier_offsets: Vec<Vec<f64>>,
}

impl ModalityGeometry {
    pub fn target_mean(&self, class: usize) -> Vec<f64> {
        add(&self.class_means[class], &self.shift)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub spec: DomainSpec,
    pub source: Vec<Segment>,
    pub target: Vec<Segment>,
    /// Held-out target segments for accuracy; never used for training.
    pub target_test: Vec<Segment>,
}

impl Dataset {
    pub fn num_modalities(&self) -> usize {
        self.spec.num_modalities()
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.feature_dim
    }

    pub fn split(&self, domain: Domain) -> &[Segment] {
        match domain {
            Domain::Source => &self.source,
            Domain::Target => &self.target,
        }
    }

    pub fn negative_count(&self, domain: Domain) -> usize {
        self.split(domain)
            .iter()
            .filter(|s| s.ground_truth_negative())
            .count()
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn gaussian_vec(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// `count` orthonormal vectors by Gram-Schmidt on Gaussian draws.
fn orthonormal_basis(count: usize, dim: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian_vec(dim, rng);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Unit vector with `overlap` of its squared norm inside span(class_dirs) and the
/// rest along `orthogonal`.
fn mixed_direction(
    class_dirs: &[Vec<f64>],
    orthogonal: &[f64],
    overlap: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let dim = orthogonal.len();
    let mut inside = vec![0.0; dim];
    for d in class_dirs {
        let g: f64 = StandardNormal.sample(rng);
        for (x, y) in inside.iter_mut().zip(d) {
            *x += g * y;
        }
    }
    let n = norm(&inside).max(1e-12);
    let (a, b) = (overlap.sqrt(), (1.0 - overlap).sqrt());
    inside
        .iter()
        .zip(orthogonal)
        .map(|(x, o)| a * x / n + b * o)
        .collect()
}

/// Unit vector with squared-norm shares `overlap` in span(class_dirs), `against`
/// along `-shift_dir`, and the rest along `orthogonal`, before renormalising.
fn outlier_direction(
    class_dirs: &[Vec<f64>],
    orthogonal: &[f64],
    shift_dir: &[f64],
    overlap: f64,
    against: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let inside = mixed_direction(class_dirs, orthogonal, 1.0, rng);
    let rest = (1.0 - overlap - against).max(0.0).sqrt();
    let v: Vec<f64> = (0..orthogonal.len())
        .map(|i| overlap.sqrt() * inside[i] - against.sqrt() * shift_dir[i] + rest * orthogonal[i])
        .collect();
    let n = norm(&v).max(1e-12);
    v.iter().map(|x| x / n).collect()
}

pub fn geometry(spec: &DomainSpec) -> Result<Vec<ModalityGeometry>> {
    spec.validate()?;
    let mut rng = rng::derive(spec.seed, streams::DATA);
    let c = spec.num_classes;
    let d = spec.feature_dim;
    Ok(spec
        .modalities
        .iter()
        .map(|m| {
            let basis = orthonormal_basis(c + 2, d, &mut rng);
            let radius = m.separation / std::f64::consts::SQRT_2;
            let class_means: Vec<Vec<f64>> = basis[..c]
                .iter()
                .map(|e| e.iter().map(|v| v * radius).collect())
                .collect();
            let shift_dir = mixed_direction(&basis[..c], &basis[c], spec.shift_class_overlap, &mut rng);
            let shift: Vec<f64> = shift_dir.iter().map(|v| v * m.shift).collect();
            // |mu_c + R u - (mu_j + t)| >= R - sep - |t| = displacement * sep
            let reach = spec.outlier_displacement * m.separation + m.separation + m.shift;
            let outlier_offsets = (0..c)
                .map(|j| {
                    let base = outlier_direction(
                        &basis[..c],
                        &basis[c + 1],
                        &shift_dir,
                        spec.outlier_class_overlap,
                        spec.outlier_shift_alignment,
                        &mut rng,
                    );
                    let other = (j + 1) % c;
                    let toward: Vec<f64> = (0..d)
                        .map(|i| class_means[other][i] + shift[i] - class_means[j][i])
                        .collect();
                    let tn = norm(&toward).max(1e-12);
                    let (a, b) = (spec.outlier_confusion.sqrt(), (1.0 - spec.outlier_confusion).sqrt());
                    let v: Vec<f64> = toward.iter().zip(&base).map(|(t, u)| a * t / tn + b * u).collect();
                    let n = norm(&v).max(1e-12);
                    v.iter().map(|x| x / n * reach).collect()
                })
                .collect();
            ModalityGeometry {
                class_means,
                shift,
                outlier_offsets,
            }
        })
        .collect())
}

fn noisy(center: &[f64], sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    center
        .iter()
        .map(|&m| {
            let z: f64 = StandardNormal.sample(rng);
            m + sigma * z
        })
        .collect()
}

fn labels_for(counts: &[usize]) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect()
}

/// Draws a labelled source split, an unlabelled target split and a held-out target split.
pub fn generate(spec: &DomainSpec) -> Result<Dataset> {
    let geo = geometry(spec)?;
    let mut rng = rng::derive(spec.seed, streams::DATA + 100);
    let sigma = spec.noise_std;
    let c = spec.num_classes;
    let jitter = spec.ambiguity_jitter;
    let mix = Uniform::new_inclusive(0.5 - jitter, 0.5 + jitter)
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut next_id = 0usize;
    let mut build = |domain: Domain,
                     per_class: usize,
                     neg_fraction: f64,
                     rng: &mut crate::rng::Rng|
     -> Vec<Segment> {
        let labels = labels_for(&spec.class_counts(per_class));
        let n = labels.len();
        let n_neg = (neg_fraction * n as f64).floor() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut negative = vec![false; n];
        for &i in &order[..n_neg] {
            negative[i] = true;
        }
        let mut out = Vec::with_capacity(n);
        for (i, &label) in labels.iter().enumerate() {
            let features = if !negative[i] {
                geo.iter()
                    .map(|g| match domain {
                        Domain::Source => noisy(&g.class_means[label], sigma, rng),
                        Domain::Target => noisy(&g.target_mean(label), sigma, rng),
                    })
                    .collect()
            } else {
                match domain {
                    Domain::Source => geo
                        .iter()
                        .map(|g| noisy(&add(&g.class_means[label], &g.outlier_offsets[label]), sigma, rng))
                        .collect(),
                    Domain::Target => {
                        let other = (label + rng.random_range(1..c)) % c;
                        let w: f64 = mix.sample(rng);
                        geo.iter()
                            .map(|g| {
                                let a = g.target_mean(label);
                                let b = g.target_mean(other);
                                let mid: Vec<f64> =
                                    a.iter().zip(&b).map(|(x, y)| w * x + (1.0 - w) * y).collect();
                                noisy(&mid, sigma, rng)
                            })
                            .collect()
                    }
                }
            };
            out.push(Segment::new(next_id, domain, features, label, negative[i]));
            next_id += 1;
        }
        out
    };

    let source = build(
        Domain::Source,
        spec.samples_per_class,
        spec.source_negative_fraction,
        &mut rng,
    );
    let target = build(
        Domain::Target,
        spec.samples_per_class,
        spec.target_negative_fraction,
        &mut rng,
    );
    let target_test = build(
        Domain::Target,
        spec.test_samples_per_class,
        spec.target_negative_fraction,
        &mut rng,
    );
    Ok(Dataset {
        spec: spec.clone(),
        source,
        target,
        target_test,
    })
}
