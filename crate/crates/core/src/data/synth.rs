use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DatasetSplit, Sample};
use crate::ebra::CiwTable;
use crate::error::{Error, Result};

/// Synthetic multi-label Gaussian-cluster dataset.
///
/// Every class owns a prototype at distance `separation` from the origin in
/// a random direction. A sample sits at the mean of its classes'
/// prototypes plus isotropic noise of scale `noise`; normal samples sit at
/// the origin.
///
/// Each unknown-class prototype sits `unknown_distance` from the origin in a
/// direction that blends a fresh random direction with the centroid of
/// `unknown_anchors` randomly chosen known prototypes; `unknown_overlap`
/// sets the blend (0: an unseen direction, 1: straight between the
/// anchors). Overlap and anchor count control how hard the unknown classes
/// are to tell apart from the known ones.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub known: usize,
    pub unknown: usize,
    pub dim: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub separation: f64,
    pub noise: f64,
    /// Probability of adding each further label to a defective sample.
    pub co_occurrence: f64,
    pub normal_fraction: f64,
    /// Share of validation samples drawn from unknown classes.
    pub unknown_fraction: f64,
    pub unknown_distance: f64,
    pub unknown_overlap: f64,
    pub unknown_anchors: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            known: 6,
            unknown: 2,
            dim: 16,
            train_size: 2000,
            val_size: 600,
            separation: 6.0,
            noise: 1.0,
            co_occurrence: 0.15,
            normal_fraction: 0.3,
            unknown_fraction: 0.25,
            unknown_distance: 6.0,
            unknown_overlap: 0.8,
            unknown_anchors: 2,
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn total_classes(&self) -> usize {
        self.known + self.unknown
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.known == 0 {
            return bad(format!(
                "K_unknown ({}) must be smaller than K_total ({}): no known classes left",
                self.unknown,
                self.total_classes()
            ));
        }
        if self.dim == 0 {
            return bad("feature dimension must be positive".into());
        }
        for (name, v) in [
            ("separation", self.separation),
            ("noise", self.noise),
            ("unknown distance", self.unknown_distance),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        for (name, v) in [
            ("co-occurrence", self.co_occurrence),
            ("normal fraction", self.normal_fraction),
            ("unknown fraction", self.unknown_fraction),
            ("unknown overlap", self.unknown_overlap),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.unknown > 0 && !(1..=self.known).contains(&self.unknown_anchors) {
            return bad(format!(
                "unknown anchors must lie in 1..={}, got {}",
                self.known, self.unknown_anchors
            ));
        }
        if self.unknown == 0 && self.unknown_fraction > 0.0 {
            return bad("unknown fraction is positive but there are no unknown classes".into());
        }
        Ok(())
    }
}

/// A generated split plus the CIW table drawn for its classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub split: DatasetSplit,
    pub ciw: CiwTable,
    pub prototypes: Vec<Vec<f64>>,
}

fn unit_direction(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

struct Generator<'a> {
    cfg: &'a GenConfig,
    prototypes: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn features(&mut self, labels: &[usize]) -> Vec<f64> {
        let dim = self.cfg.dim;
        let mut x = vec![0.0; dim];
        if !labels.is_empty() {
            for &l in labels {
                for (xi, p) in x.iter_mut().zip(&self.prototypes[l]) {
                    *xi += p;
                }
            }
            let n = labels.len() as f64;
            x.iter_mut().for_each(|v| *v /= n);
        }
        if self.cfg.noise > 0.0 {
            for v in &mut x {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *v += self.cfg.noise * z;
            }
        }
        x
    }

    /// First label from `pool`, then each further known label with the
    /// co-occurrence probability.
    fn labels(&mut self, first: usize) -> Vec<usize> {
        let mut labels = vec![first];
        let known = self.cfg.known;
        while labels.len() < known + 1 && self.rng.random_bool(self.cfg.co_occurrence) {
            let candidates: Vec<usize> = (0..known).filter(|k| !labels.contains(k)).collect();
            if candidates.is_empty() {
                break;
            }
            labels.push(candidates[self.rng.random_range(0..candidates.len())]);
        }
        labels.sort_unstable();
        labels
    }

    fn known_sample(&mut self, id: String) -> Sample {
        let labels = if self.rng.random_bool(self.cfg.normal_fraction) {
            Vec::new()
        } else {
            let first = self.rng.random_range(0..self.cfg.known);
            self.labels(first)
        };
        Sample {
            id,
            features: self.features(&labels),
            labels,
            is_unknown: false,
        }
    }

    fn unknown_sample(&mut self, id: String) -> Sample {
        let first = self.cfg.known + self.rng.random_range(0..self.cfg.unknown);
        let labels = self.labels(first);
        Sample {
            id,
            features: self.features(&labels),
            labels,
            is_unknown: true,
        }
    }
}

pub fn generate_synthetic(cfg: &GenConfig) -> Result<SyntheticSet> {
    cfg.validate()?;
    let total = cfg.total_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut prototypes: Vec<Vec<f64>> = (0..cfg.known)
        .map(|_| {
            unit_direction(cfg.dim, &mut rng)
                .into_iter()
                .map(|v| v * cfg.separation)
                .collect()
        })
        .collect();
    for _ in 0..cfg.unknown {
        let fresh = unit_direction(cfg.dim, &mut rng);
        let mut centroid = vec![0.0; cfg.dim];
        for a in sample_indices(&mut rng, cfg.known, cfg.unknown_anchors).into_vec() {
            for (c, p) in centroid.iter_mut().zip(&prototypes[a]) {
                *c += p;
            }
        }
        let centroid_norm = centroid.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        let t = cfg.unknown_overlap;
        let mixed: Vec<f64> = fresh
            .iter()
            .zip(&centroid)
            .map(|(f, c)| (1.0 - t) * f + t * c / centroid_norm)
            .collect();
        let norm = mixed.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        prototypes.push(
            mixed
                .into_iter()
                .map(|v| v / norm * cfg.unknown_distance)
                .collect(),
        );
    }

    // Class-importance weights in [0.1, 1.0]; the unknown classes take the
    // largest ones.
    let mut weights: Vec<f64> = (0..total).map(|_| rng.random_range(0.1..=1.0)).collect();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]));
    let ranked: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
    let mut known_weights = ranked[..cfg.known].to_vec();
    // Shuffle so weight is not tied to class index among known classes.
    for i in (1..known_weights.len()).rev() {
        let j = rng.random_range(0..=i);
        known_weights.swap(i, j);
    }
    weights = known_weights.into_iter().chain(ranked[cfg.known..].iter().copied()).collect();

    let known_classes: Vec<String> = (0..cfg.known).map(|k| format!("k{k}")).collect();
    let unknown_classes: Vec<String> = (0..cfg.unknown).map(|u| format!("u{u}")).collect();
    let ciw = CiwTable::new(
        known_classes
            .iter()
            .chain(&unknown_classes)
            .cloned()
            .zip(weights)
            .collect(),
    )?;

    let mut gen = Generator {
        cfg,
        prototypes,
        rng,
    };
    let train = (0..cfg.train_size)
        .map(|i| gen.known_sample(format!("train-{i:06}")))
        .collect();
    let n_unknown = (cfg.val_size as f64 * cfg.unknown_fraction).round() as usize;
    let mut validation: Vec<Sample> = (0..cfg.val_size)
        .map(|i| {
            let id = format!("val-{i:06}");
            if i < n_unknown {
                gen.unknown_sample(id)
            } else {
                gen.known_sample(id)
            }
        })
        .collect();
    // Interleave unknown and known records.
    for i in (1..validation.len()).rev() {
        let j = gen.rng.random_range(0..=i);
        validation.swap(i, j);
    }

    let split = DatasetSplit {
        dim: cfg.dim,
        known_classes,
        unknown_classes,
        train,
        validation,
    };
    split.validate()?;
    Ok(SyntheticSet {
        split,
        ciw,
        prototypes: gen.prototypes,
    })
}
