//! Labeled feature datasets: validation, per-class statistics, centroids,
//! Many/Med/Few class splits and a seeded long-tailed Gaussian generator.

mod io;

pub use io::{
    decode_binary, encode_binary, load_features, parse_csv, write_csv, Format, LoadOptions,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `N` feature rows of dimension `d` with labels in `[0, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl FeatureDataset {
    /// Validates shape, finiteness and label range. Empty classes are allowed
    /// here; loaders and training entry points reject them separately.
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                got: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if features.cols() == 0 {
            return Err(Error::InvalidConfig(
                "feature dimension must be at least 1".into(),
            ));
        }
        for (row, x) in features.iter_rows().enumerate() {
            if let Some(col) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteFeature { row, col });
            }
        }
        for (row, &label) in labels.iter().enumerate() {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    row,
                    label: label as i64,
                    num_classes,
                });
            }
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (self.features.row(i), self.labels[i])
    }

    /// Copies the given rows into a [`Batch`].
    pub fn gather(&self, indices: &[usize]) -> Batch {
        let mut data = Vec::with_capacity(indices.len() * self.dim());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        Batch {
            features: Matrix::from_vec(indices.len(), self.dim(), data)
                .expect("gathered rows have dataset dimension"),
            labels,
        }
    }

    /// The whole dataset as a single batch.
    pub fn as_batch(&self) -> Batch {
        Batch {
            features: self.features.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Fails with [`Error::EmptyClass`] naming the first class without samples.
    pub fn require_nonempty_classes(&self) -> Result<()> {
        let stats = compute_class_stats(self);
        match stats.counts.iter().position(|&c| c == 0) {
            Some(class) => Err(Error::EmptyClass { class }),
            None => Ok(()),
        }
    }
}

/// A mini-batch of samples with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                got: labels.len(),
            });
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.features.iter_rows().zip(self.labels.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub counts: Vec<usize>,
    /// `max(N_y) / min(N_y)` over classes with at least one sample.
    pub imbalance_ratio: f64,
}

impl ClassStats {
    pub fn from_counts(counts: Vec<usize>) -> Self {
        let nonzero = counts.iter().copied().filter(|&c| c > 0);
        let max = nonzero.clone().max();
        let min = nonzero.min();
        let imbalance_ratio = match (max, min) {
            (Some(max), Some(min)) => max as f64 / min as f64,
            _ => 1.0,
        };
        Self {
            counts,
            imbalance_ratio,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn compute_class_stats(ds: &FeatureDataset) -> ClassStats {
    let mut counts = vec![0usize; ds.num_classes()];
    for &y in ds.labels() {
        counts[y] += 1;
    }
    ClassStats::from_counts(counts)
}

/// Per-class mean feature vectors, `K×d`.
pub fn compute_centroids(ds: &FeatureDataset) -> Result<Matrix> {
    let k = ds.num_classes();
    let mut sums = Matrix::zeros(k, ds.dim());
    let mut counts = vec![0usize; k];
    for (x, y) in ds.features().iter_rows().zip(ds.labels()) {
        counts[*y] += 1;
        for (s, v) in sums.row_mut(*y).iter_mut().zip(x) {
            *s += v;
        }
    }
    for (class, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(Error::EmptyClass { class });
        }
        let inv = n as f64;
        for s in sums.row_mut(class) {
            *s /= inv;
        }
    }
    Ok(sums)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitThresholds {
    /// Classes with at least this many training samples are Many.
    pub many_min: usize,
    /// Classes with fewer than this many training samples are Few.
    pub few_max: usize,
}

impl Default for SplitThresholds {
    fn default() -> Self {
        Self {
            many_min: 100,
            few_max: 20,
        }
    }
}

impl SplitThresholds {
    pub fn new(many_min: usize, few_max: usize) -> Result<Self> {
        let th = Self { many_min, few_max };
        th.validate()?;
        Ok(th)
    }

    pub fn validate(&self) -> Result<()> {
        if self.many_min > self.few_max && self.few_max > 0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "split thresholds need many_min > few_max > 0, got {},{}",
                self.many_min, self.few_max
            )))
        }
    }

    pub fn classify(&self, count: usize) -> SplitGroup {
        if count >= self.many_min {
            SplitGroup::Many
        } else if count < self.few_max {
            SplitGroup::Few
        } else {
            SplitGroup::Med
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitGroup {
    Many,
    Med,
    Few,
}

pub fn split_classes(stats: &ClassStats, th: &SplitThresholds) -> Vec<SplitGroup> {
    stats.counts.iter().map(|&n| th.classify(n)).collect()
}

/// Parameters of the synthetic long-tailed Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub n_max: usize,
    pub imbalance_ratio: f64,
    pub class_mean_scale: f64,
    pub within_class_std: f64,
    /// Samples per class in the balanced test split.
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            dim: 16,
            n_max: 500,
            imbalance_ratio: 100.0,
            class_mean_scale: 1.0,
            within_class_std: 1.0,
            test_per_class: 100,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Training class sizes `round(n_max * beta^(-y/(K-1)))`.
    pub fn class_sizes(&self) -> Result<Vec<usize>> {
        if self.num_classes == 0 || self.dim == 0 || self.n_max == 0 {
            return Err(Error::InvalidConfig(
                "classes, dim and n_max must all be at least 1".into(),
            ));
        }
        if !(self.imbalance_ratio.is_finite() && self.imbalance_ratio >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "imbalance ratio must be >= 1, got {}",
                self.imbalance_ratio
            )));
        }
        if !(self.class_mean_scale >= 0.0 && self.within_class_std >= 0.0)
            || !self.class_mean_scale.is_finite()
            || !self.within_class_std.is_finite()
        {
            return Err(Error::InvalidConfig(
                "class_mean_scale and within_class_std must be finite and >= 0".into(),
            ));
        }
        let k = self.num_classes;
        let sizes: Vec<usize> = (0..k)
            .map(|y| {
                let exponent = if k == 1 {
                    0.0
                } else {
                    y as f64 / (k - 1) as f64
                };
                (self.n_max as f64 * self.imbalance_ratio.powf(-exponent)).round() as usize
            })
            .collect();
        if let Some(class) = sizes.iter().position(|&n| n < 1) {
            return Err(Error::EmptyClass { class });
        }
        Ok(sizes)
    }
}

/// Draws class means once, then a long-tailed training split and a balanced
/// test split around them. Bit-reproducible for a fixed seed.
pub fn synth_longtailed(spec: &SynthSpec) -> Result<(FeatureDataset, FeatureDataset)> {
    let sizes = spec.class_sizes()?;
    if spec.test_per_class == 0 {
        return Err(Error::InvalidConfig(
            "test_per_class must be at least 1".into(),
        ));
    }
    let (k, d) = (spec.num_classes, spec.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut means = Matrix::zeros(k, d);
    for v in means.as_mut_slice() {
        *v = spec.class_mean_scale * gauss();
    }

    let mut draw = |per_class: &[usize]| -> Result<FeatureDataset> {
        let n: usize = per_class.iter().sum();
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for (y, &count) in per_class.iter().enumerate() {
            for _ in 0..count {
                data.extend(
                    means
                        .row(y)
                        .iter()
                        .map(|m| m + spec.within_class_std * gauss()),
                );
                labels.push(y);
            }
        }
        FeatureDataset::new(Matrix::from_vec(n, d, data)?, labels, k)
    };

    let train = draw(&sizes)?;
    let test = draw(&vec![spec.test_per_class; k])?;
    Ok((train, test))
}
