//! Seeded mini-batch samplers. Both draw with replacement.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Batch, FeatureDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerKind {
    /// Uniform class, then uniform instance within that class.
    ClassBalanced,
    /// Uniform instance over the whole dataset.
    InstanceBalanced,
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" | "class-balanced" => Ok(SamplerKind::ClassBalanced),
            "instance" | "instance-balanced" => Ok(SamplerKind::InstanceBalanced),
            _ => Err(Error::InvalidConfig(format!("unknown sampler {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SamplerKind,
    batch_size: usize,
    rng: ChaCha8Rng,
    by_class: Vec<Vec<usize>>,
    len: usize,
}

impl Sampler {
    pub fn new(cfg: SamplerConfig, ds: &FeatureDataset) -> Result<Self> {
        if cfg.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        let mut by_class = vec![Vec::new(); ds.num_classes()];
        for (i, &y) in ds.labels().iter().enumerate() {
            by_class[y].push(i);
        }
        if cfg.kind == SamplerKind::ClassBalanced {
            if let Some(class) = by_class.iter().position(Vec::is_empty) {
                return Err(Error::EmptyClass { class });
            }
        }
        Ok(Self {
            kind: cfg.kind,
            batch_size: cfg.batch_size,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            by_class,
            len: ds.len(),
        })
    }

    /// Number of batches in one epoch: `ceil(N / batch_size)`.
    pub fn batches_per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }

    pub fn next_indices(&mut self) -> Vec<usize> {
        (0..self.batch_size)
            .map(|_| match self.kind {
                SamplerKind::ClassBalanced => {
                    let class = &self.by_class[self.rng.random_range(0..self.by_class.len())];
                    class[self.rng.random_range(0..class.len())]
                }
                SamplerKind::InstanceBalanced => self.rng.random_range(0..self.len),
            })
            .collect()
    }

    /// Draws the next batch from `ds`, which must be the dataset the sampler
    /// was built from.
    pub fn next_batch(&mut self, ds: &FeatureDataset) -> Batch {
        let idx = self.next_indices();
        ds.gather(&idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn skewed(counts: &[usize]) -> FeatureDataset {
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(y, &n)| std::iter::repeat_n(y, n))
            .collect();
        let x = Matrix::from_vec(
            labels.len(),
            1,
            (0..labels.len()).map(|i| i as f64).collect(),
        )
        .unwrap();
        FeatureDataset::new(x, labels, counts.len()).unwrap()
    }

    fn cfg(kind: SamplerKind, batch_size: usize, seed: u64) -> SamplerConfig {
        SamplerConfig {
            kind,
            batch_size,
            seed,
        }
    }

    #[test]
    fn class_balanced_marginal() {
        let ds = skewed(&[999, 1]);
        let mut s = Sampler::new(cfg(SamplerKind::ClassBalanced, 100, 7), &ds).unwrap();
        let tail: usize = (0..100)
            .map(|_| s.next_batch(&ds).labels.iter().filter(|&&y| y == 1).count())
            .sum();
        let freq = tail as f64 / 10_000.0;
        assert!((freq - 0.5).abs() < 0.02, "tail frequency {freq}");
    }

    #[test]
    fn single_class() {
        let ds = skewed(&[5]);
        let mut s = Sampler::new(cfg(SamplerKind::ClassBalanced, 16, 0), &ds).unwrap();
        assert!(s.next_batch(&ds).labels.iter().all(|&y| y == 0));
    }

    #[test]
    fn seeded_sequences_repeat() {
        let ds = skewed(&[30, 4, 1]);
        for kind in [SamplerKind::ClassBalanced, SamplerKind::InstanceBalanced] {
            let mut a = Sampler::new(cfg(kind, 8, 42), &ds).unwrap();
            let mut b = Sampler::new(cfg(kind, 8, 42), &ds).unwrap();
            for _ in 0..20 {
                assert_eq!(a.next_indices(), b.next_indices());
            }
        }
    }

    #[test]
    fn empty_class_rejected_for_class_balanced() {
        let ds = skewed(&[3, 0, 2]);
        assert!(matches!(
            Sampler::new(cfg(SamplerKind::ClassBalanced, 4, 0), &ds),
            Err(Error::EmptyClass { class: 1 })
        ));
        assert!(Sampler::new(cfg(SamplerKind::InstanceBalanced, 4, 0), &ds).is_ok());
    }

    #[test]
    fn epoch_length() {
        let ds = skewed(&[64, 1]);
        let s = Sampler::new(cfg(SamplerKind::ClassBalanced, 64, 0), &ds).unwrap();
        assert_eq!(s.batches_per_epoch(), 2);
    }
}
