//! Top-1 accuracy on Many/Med/Few/All splits. Splits come from the
//! training-set class counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_classes, ClassStats, FeatureDataset, SplitGroup, SplitThresholds};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub many: usize,
    pub med: usize,
    pub few: usize,
    pub all: usize,
}

/// Micro-averaged accuracies; `None` (JSON `null`) for an empty split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAccuracy {
    pub many: Option<f64>,
    pub med: Option<f64>,
    pub few: Option<f64>,
    pub all: Option<f64>,
    /// Test samples per split.
    pub counts: SplitCounts,
    /// Correct predictions per split.
    pub correct: SplitCounts,
}

pub fn evaluate<F>(
    predict: F,
    test: &FeatureDataset,
    train_stats: &ClassStats,
    th: &SplitThresholds,
) -> Result<SplitAccuracy>
where
    F: Fn(&[f64]) -> Result<usize> + Sync,
{
    th.validate()?;
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if test.num_classes() > train_stats.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: train_stats.num_classes(),
            got: test.num_classes(),
        });
    }
    let splits = split_classes(train_stats, th);
    let predictions: Vec<usize> = (0..test.len())
        .into_par_iter()
        .map(|i| predict(test.features().row(i)))
        .collect::<Result<_>>()?;

    let mut counts = SplitCounts::default();
    let mut correct = SplitCounts::default();
    for (&y, &pred) in test.labels().iter().zip(&predictions) {
        let hit = usize::from(pred == y);
        let (c, k) = match splits[y] {
            SplitGroup::Many => (&mut counts.many, &mut correct.many),
            SplitGroup::Med => (&mut counts.med, &mut correct.med),
            SplitGroup::Few => (&mut counts.few, &mut correct.few),
        };
        *c += 1;
        *k += hit;
        counts.all += 1;
        correct.all += hit;
    }
    let ratio = |k: usize, n: usize| (n > 0).then(|| k as f64 / n as f64);
    Ok(SplitAccuracy {
        many: ratio(correct.many, counts.many),
        med: ratio(correct.med, counts.med),
        few: ratio(correct.few, counts.few),
        all: ratio(correct.all, counts.all),
        counts,
        correct,
    })
}

/// Mean of per-class accuracies over classes present in `test`.
pub fn macro_accuracy<F>(predict: F, test: &FeatureDataset) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<usize>,
{
    let k = test.num_classes();
    let mut hits = vec![0usize; k];
    let mut seen = vec![0usize; k];
    for (x, &y) in test.features().iter_rows().zip(test.labels()) {
        seen[y] += 1;
        hits[y] += usize::from(predict(x)? == y);
    }
    let present: Vec<f64> = seen
        .iter()
        .zip(&hits)
        .filter(|(n, _)| **n > 0)
        .map(|(n, h)| *h as f64 / *n as f64)
        .collect();
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}
