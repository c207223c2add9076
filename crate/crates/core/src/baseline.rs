//! Linear softmax classifier `softmax(W x + b)` trained with cross-entropy and
//! momentum SGD on the same fixed features. Under instance-balanced sampling
//! its row norms track class size, which is what the prototype classifier is
//! compared against.

use crate::dataset::{Batch, FeatureDataset};
use crate::error::{Error, Result};
use crate::linalg::{argmax, dot, log_sum_exp, softmax, Matrix};
use crate::optim::Momentum;
use crate::sampler::{Sampler, SamplerConfig, SamplerKind};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: Matrix,
    bias: Vec<f64>,
}

impl LinearModel {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.rows(),
                got: bias.len(),
            });
        }
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::InvalidConfig(
                "linear model needs at least one class and dimension".into(),
            ));
        }
        if weights
            .as_slice()
            .iter()
            .chain(&bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig(
                "linear model parameters must be finite".into(),
            ));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(num_classes, dim),
            bias: vec![0.0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.logits_unchecked(x))
    }

    fn logits_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter_rows()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }

    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }
}

/// `argmax(W x + b)`, ties to the lowest index.
pub fn predict_linear(model: &LinearModel, x: &[f64]) -> Result<usize> {
    Ok(argmax(&model.logits(x)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGradients {
    pub d_weights: Matrix,
    pub d_bias: Vec<f64>,
    pub loss: f64,
}

fn check_batch(model: &LinearModel, batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for (row, (x, y)) in batch.iter().enumerate() {
        model.check_input(x)?;
        if y >= model.num_classes() {
            return Err(Error::LabelOutOfRange {
                row,
                label: y as i64,
                num_classes: model.num_classes(),
            });
        }
    }
    Ok(())
}

/// Mean cross-entropy over the batch.
pub fn softmax_batch_loss(model: &LinearModel, batch: &Batch) -> Result<f64> {
    check_batch(model, batch)?;
    let total: f64 = batch
        .iter()
        .map(|(x, y)| {
            let l = model.logits_unchecked(x);
            log_sum_exp(&l) - l[y]
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// `∂/∂W_z = mean (p_z − δ_yz) x`, `∂/∂b_z = mean (p_z − δ_yz)`.
pub fn softmax_batch_gradients(model: &LinearModel, batch: &Batch) -> Result<LinearGradients> {
    check_batch(model, batch)?;
    let inv_n = 1.0 / batch.len() as f64;
    let mut d_weights = Matrix::zeros(model.num_classes(), model.dim());
    let mut d_bias = vec![0.0; model.num_classes()];
    let mut loss = 0.0;
    for (x, y) in batch.iter() {
        let logits = model.logits_unchecked(x);
        loss += log_sum_exp(&logits) - logits[y];
        for (z, p) in softmax(&logits).into_iter().enumerate() {
            let r = (p - if z == y { 1.0 } else { 0.0 }) * inv_n;
            d_bias[z] += r;
            for (g, xi) in d_weights.row_mut(z).iter_mut().zip(x) {
                *g += r * xi;
            }
        }
    }
    Ok(LinearGradients {
        d_weights,
        d_bias,
        loss: loss * inv_n,
    })
}

/// Cross-entropy momentum SGD from zero initialization, with
/// `cfg.lr_prototypes` as learning rate and optional weight decay on `W`.
pub fn train_softmax(
    ds: &FeatureDataset,
    cfg: &TrainConfig,
    sampler_kind: SamplerKind,
) -> Result<LinearModel> {
    cfg.validate()?;
    let mut model = LinearModel::zeros(ds.num_classes(), ds.dim());
    let mut sampler = Sampler::new(
        SamplerConfig {
            kind: sampler_kind,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
        },
        ds,
    )?;
    let mut steps = cfg.epochs.saturating_mul(sampler.batches_per_epoch());
    if let Some(cap) = cfg.max_iterations {
        steps = steps.min(cap);
    }
    let mut w_opt = Momentum::new(
        cfg.lr_prototypes,
        cfg.momentum,
        model.num_classes() * model.dim(),
    );
    let mut b_opt = Momentum::new(cfg.lr_prototypes, cfg.momentum, model.num_classes());
    for iteration in 0..steps {
        let batch = sampler.next_batch(ds);
        let mut g = softmax_batch_gradients(&model, &batch)?;
        if !g.loss.is_finite() {
            return Err(Error::Diverged {
                iteration,
                loss: g.loss,
            });
        }
        if cfg.weight_decay > 0.0 {
            for (gw, w) in g
                .d_weights
                .as_mut_slice()
                .iter_mut()
                .zip(model.weights.as_slice())
            {
                *gw += cfg.weight_decay * w;
            }
        }
        w_opt.step(model.weights.as_mut_slice(), g.d_weights.as_slice());
        b_opt.step(&mut model.bias, &g.d_bias);
        if model
            .weights
            .as_slice()
            .iter()
            .chain(&model.bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Diverged {
                iteration,
                loss: g.loss,
            });
        }
    }
    Ok(model)
}
