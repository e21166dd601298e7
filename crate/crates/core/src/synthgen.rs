//! Seeded synthetic multi-label embedding datasets.
//!
//! Each label gets a unit direction. An item's embedding is the normalized
//! sum of its label directions plus isotropic Gaussian noise. Directions are
//! orthonormalized whenever the dimension allows it, so low-noise datasets
//! are separable by construction.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::label_space::{LabelSet, LabelVocabulary};
use crate::prototypes::{l2_norm, EmbeddedItem};

/// Labels `3g`, `3g+1`, `3g+2` form affinity group `g`.
pub const AFFINITY_GROUP_SIZE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_labels: usize,
    pub dimension: usize,
    /// Items generated with each label as their primary label.
    pub items_per_label: usize,
    /// `cardinality[k]` is the probability that an item has `k + 1` labels.
    pub cardinality: Vec<f64>,
    pub noise_sigma: f64,
    /// Probability that an extra label comes from the primary label's
    /// affinity group rather than uniformly from all labels.
    pub cooccurrence_bias: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_labels: 10,
            dimension: 32,
            items_per_label: 20,
            cardinality: vec![0.6, 0.3, 0.1],
            noise_sigma: 0.05,
            cooccurrence_bias: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_labels == 0 || self.dimension == 0 || self.items_per_label == 0 {
            return bad("n_labels, dimension and items_per_label must be positive");
        }
        if self.cardinality.is_empty() || self.cardinality.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("cardinality probabilities must be finite and non-negative");
        }
        if (self.cardinality.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("cardinality probabilities must sum to 1");
        }
        if self.cardinality.len() > self.n_labels {
            let excess: f64 = self.cardinality[self.n_labels..].iter().sum();
            if excess > 0.0 {
                return bad("cardinality distribution allows more labels than exist");
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.cooccurrence_bias) {
            return bad("cooccurrence_bias must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Unit direction per label.
    pub directions: Vec<Vec<f64>>,
}

pub fn label_names(n_labels: usize) -> Vec<String> {
    let width = n_labels.saturating_sub(1).to_string().len().max(2);
    (0..n_labels).map(|i| format!("tag{i:0width$}")).collect()
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let directions = label_directions(config.n_labels, config.dimension, &mut rng);
    let card = WeightedIndex::new(&config.cardinality).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut items = Vec::with_capacity(config.n_labels * config.items_per_label);
    for primary in 0..config.n_labels {
        for _ in 0..config.items_per_label {
            let k = card.sample(&mut rng) + 1;
            let labels = draw_labels(primary, k, config, &mut rng);

            let mut embedding = vec![0.0; config.dimension];
            for c in labels.iter() {
                for (e, d) in embedding.iter_mut().zip(&directions[c]) {
                    *e += d;
                }
            }
            let norm = l2_norm(&embedding);
            for e in &mut embedding {
                *e = *e / norm + noise.sample(&mut rng);
            }
            let id = format!("syn{:05}", items.len());
            items.push(EmbeddedItem::new(id, labels, embedding));
        }
    }

    let vocabulary = LabelVocabulary::new(label_names(config.n_labels))?;
    Ok(SyntheticData {
        dataset: Dataset::new(vocabulary, config.dimension, items)?,
        directions,
    })
}

fn draw_labels(primary: usize, k: usize, config: &SynthConfig, rng: &mut ChaCha8Rng) -> LabelSet {
    let n = config.n_labels;
    let mut labels = LabelSet::singleton(primary);
    let group = primary / AFFINITY_GROUP_SIZE;
    let partners: Vec<usize> = (group * AFFINITY_GROUP_SIZE..((group + 1) * AFFINITY_GROUP_SIZE).min(n)).collect();
    while labels.len() < k.min(n) {
        let free_partners: Vec<usize> = partners.iter().copied().filter(|&c| !labels.contains(c)).collect();
        if !free_partners.is_empty() && config.cooccurrence_bias > 0.0 && rng.random::<f64>() < config.cooccurrence_bias {
            labels.insert(free_partners[rng.random_range(0..free_partners.len())]);
        } else {
            let free: Vec<usize> = (0..n).filter(|&c| !labels.contains(c)).collect();
            labels.insert(free[rng.random_range(0..free.len())]);
        }
    }
    labels
}

fn label_directions(n_labels: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let orthonormalize = dim >= n_labels;
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(n_labels);
    while dirs.len() < n_labels {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if orthonormalize {
            // modified Gram-Schmidt
            for d in &dirs {
                let proj: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(d) {
                    *x -= proj * y;
                }
            }
        }
        let norm = l2_norm(&v);
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        dirs.push(v);
    }
    dirs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prototypes::dot;

    #[test]
    fn noiseless_single_label_items_coincide() {
        let cfg = SynthConfig {
            cardinality: vec![1.0],
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        let data = generate(&cfg).unwrap();
        let items = data.dataset.items();
        for a in items {
            assert!((l2_norm(&a.embedding) - 1.0).abs() < 1e-12);
            for b in items.iter().filter(|b| b.labels == a.labels) {
                assert_eq!(a.embedding, b.embedding);
            }
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let cfg = SynthConfig { cooccurrence_bias: 0.5, ..SynthConfig::default() };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let c = generate(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn directions_are_orthonormal_when_room() {
        let data = generate(&SynthConfig::default()).unwrap();
        for (i, u) in data.directions.iter().enumerate() {
            for (j, v) in data.directions.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(u, v) - want).abs() < 1e-10);
            }
        }
        // fewer dimensions than labels: unit but not orthogonal
        let cramped = generate(&SynthConfig { n_labels: 8, dimension: 4, ..SynthConfig::default() }).unwrap();
        assert!(cramped.directions.iter().all(|d| (l2_norm(d) - 1.0).abs() < 1e-12));
    }

    #[test]
    fn noiseless_embeddings_are_unit_norm() {
        let cfg = SynthConfig { noise_sigma: 0.0, ..SynthConfig::default() };
        for it in generate(&cfg).unwrap().dataset.items() {
            assert!((l2_norm(&it.embedding) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cardinality_histogram_fits_distribution() {
        let cfg = SynthConfig {
            n_labels: 10,
            items_per_label: 1000,
            cardinality: vec![0.5, 0.3, 0.2],
            ..SynthConfig::default()
        };
        let data = generate(&cfg).unwrap();
        let n = data.dataset.len() as f64;
        let mut hist = [0f64; 3];
        for it in data.dataset.items() {
            hist[it.labels.len() - 1] += 1.0;
        }
        let chi2: f64 = hist
            .iter()
            .zip(&cfg.cardinality)
            .map(|(o, p)| (o - n * p).powi(2) / (n * p))
            .sum();
        // 99.9th percentile of chi-square with 2 degrees of freedom
        assert!(chi2 < 13.816, "chi2 = {chi2}");
    }

    #[test]
    fn affinity_bias_concentrates_pairs() {
        let base = SynthConfig {
            n_labels: 12,
            items_per_label: 200,
            cardinality: vec![0.0, 1.0],
            ..SynthConfig::default()
        };
        let in_group = |cfg: &SynthConfig| {
            let data = generate(cfg).unwrap();
            data.dataset
                .items()
                .iter()
                .filter(|it| {
                    let v = it.labels.to_vec();
                    v[0] / AFFINITY_GROUP_SIZE == v[1] / AFFINITY_GROUP_SIZE
                })
                .count()
        };
        let unbiased = in_group(&base);
        let biased = in_group(&SynthConfig { cooccurrence_bias: 0.8, ..base });
        assert!(biased > 2 * unbiased, "{biased} vs {unbiased}");
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            SynthConfig { cardinality: vec![0.5, 0.4], ..SynthConfig::default() },
            SynthConfig { noise_sigma: -1.0, ..SynthConfig::default() },
            SynthConfig { n_labels: 2, cardinality: vec![0.0, 0.0, 1.0], ..SynthConfig::default() },
            SynthConfig { cooccurrence_bias: 1.5, ..SynthConfig::default() },
            SynthConfig { dimension: 0, ..SynthConfig::default() },
        ];
        for cfg in bad {
            assert!(generate(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn names_are_zero_padded() {
        assert_eq!(label_names(3), vec!["tag00", "tag01", "tag02"]);
        assert_eq!(label_names(120)[7], "tag007");
    }
}
