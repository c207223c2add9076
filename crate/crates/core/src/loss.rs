//! Logit-adjusted negative log-likelihood over a mini-batch, its exact
//! gradients with respect to prototypes and temperatures, and a central
//! finite-difference check of those gradients.
//!
//! For a sample `(x, y)` with posterior `p`, the per-sample gradient on
//! prototype `c_z` is `-½ (p_z - δ_yz) ∂d(x, c_z)/∂c_z`. With plain Euclidean
//! distance this has norm `½(1 - p_y)` for `z = y` and `½ p_z` otherwise,
//! independent of `‖x - c_z‖`. The ½ comes from the `-½ d` logit.

use rayon::prelude::*;

use crate::dataset::Batch;
use crate::error::{Error, Result};
use crate::geometry::{self, D_EPS};
use crate::linalg::{log_sum_exp, softmax, Matrix};
use crate::model::{LogitAdjust, PrototypeModel};

/// Denominator floor of the relative error used by [`fd_check`]; below it the
/// comparison is effectively absolute.
pub const FD_REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub d_prototypes: Matrix,
    /// Same layout as `TemperatureScheme::params`; empty without temperatures.
    pub d_temps: Vec<f64>,
    pub loss: f64,
    pub batch_size: usize,
}

fn check_batch(model: &PrototypeModel, batch: &Batch, adjust: Option<&LogitAdjust>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    model.check_adjust(adjust)?;
    for (row, (x, y)) in batch.iter().enumerate() {
        if y >= model.num_classes() {
            return Err(Error::LabelOutOfRange {
                row,
                label: y as i64,
                num_classes: model.num_classes(),
            });
        }
        model.check_input(x)?;
    }
    Ok(())
}

fn sample_loss(model: &PrototypeModel, x: &[f64], y: usize, adjust: Option<&LogitAdjust>) -> f64 {
    let dist = model.distances_unchecked(x);
    let logits = PrototypeModel::logits_from_distances(&dist, adjust);
    log_sum_exp(&logits) - logits[y]
}

fn unchecked_loss(model: &PrototypeModel, batch: &Batch, adjust: Option<&LogitAdjust>) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|(x, y)| sample_loss(model, x, y, adjust))
        .sum();
    total / batch.len() as f64
}

/// Mean of `-log p_adjusted(y_i | x_i)` over the batch.
pub fn batch_loss(
    model: &PrototypeModel,
    batch: &Batch,
    adjust: Option<&LogitAdjust>,
) -> Result<f64> {
    check_batch(model, batch, adjust)?;
    Ok(unchecked_loss(model, batch, adjust))
}

pub fn batch_gradients(
    model: &PrototypeModel,
    batch: &Batch,
    adjust: Option<&LogitAdjust>,
) -> Result<GradientBundle> {
    batch_gradients_guarded(model, batch, adjust, D_EPS)
}

/// Exact gradient of [`batch_loss`]. Samples are reduced in batch order so
/// the result is reproducible bit for bit.
pub fn batch_gradients_guarded(
    model: &PrototypeModel,
    batch: &Batch,
    adjust: Option<&LogitAdjust>,
    d_eps: f64,
) -> Result<GradientBundle> {
    check_batch(model, batch, adjust)?;
    let (k, d) = (model.num_classes(), model.dim());
    let kind = model.kind();
    let temps = model.temps();
    let has_temps = !temps.is_none();
    let inv_n = 1.0 / batch.len() as f64;

    let mut d_prototypes = Matrix::zeros(k, d);
    let mut d_temps = vec![0.0; temps.num_params()];
    let mut loss = 0.0;
    for (x, y) in batch.iter() {
        let dist = model.distances_unchecked(x);
        let logits = PrototypeModel::logits_from_distances(&dist, adjust);
        loss += log_sum_exp(&logits) - logits[y];
        let p = softmax(&logits);
        for (z, &pz) in p.iter().enumerate() {
            let residual = pz - if z == y { 1.0 } else { 0.0 };
            if residual == 0.0 {
                continue;
            }
            // ∂L/∂d_z = -½ (p_z - δ_yz)
            let scale = -0.5 * residual * inv_n;
            let c = model.prototypes().row(z);
            geometry::accumulate_grad_prototype(
                x,
                c,
                z,
                kind,
                temps,
                d_eps,
                scale,
                d_prototypes.row_mut(z),
            );
            if has_temps {
                geometry::accumulate_grad_temps(x, c, z, temps, d_eps, scale, &mut d_temps);
            }
        }
    }
    Ok(GradientBundle {
        d_prototypes,
        d_temps,
        loss: loss * inv_n,
        batch_size: batch.len(),
    })
}

/// Gradient of the loss of a single sample.
pub fn sample_gradients(
    model: &PrototypeModel,
    x: &[f64],
    y: usize,
    adjust: Option<&LogitAdjust>,
) -> Result<GradientBundle> {
    let batch = Batch::new(Matrix::from_vec(1, x.len(), x.to_vec())?, vec![y])?;
    batch_gradients(model, &batch, adjust)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupError {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Flat index of the entry with the largest relative error.
    pub worst_index: usize,
    pub num_params: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub prototypes: GroupError,
    /// `None` when the model has no temperatures.
    pub temps: Option<GroupError>,
    pub tol: f64,
}

impl FdReport {
    pub fn max_rel_error(&self) -> f64 {
        self.temps.map_or(self.prototypes.max_rel_error, |t| {
            t.max_rel_error.max(self.prototypes.max_rel_error)
        })
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_REL_FLOOR)
}

/// Compares [`batch_gradients`] against central differences with step `h`.
pub fn fd_check(
    model: &PrototypeModel,
    batch: &Batch,
    adjust: Option<&LogitAdjust>,
    h: f64,
    tol: f64,
) -> Result<FdReport> {
    let analytic = batch_gradients(model, batch, adjust)?;
    fd_compare(model, batch, adjust, &analytic, h, tol)
}

/// Compares a supplied gradient against central differences of [`batch_loss`].
pub fn fd_compare(
    model: &PrototypeModel,
    batch: &Batch,
    adjust: Option<&LogitAdjust>,
    analytic: &GradientBundle,
    h: f64,
    tol: f64,
) -> Result<FdReport> {
    if !(h > 0.0 && h <= 1e-3) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be in (0, 1e-3], got {h}"
        )));
    }
    check_batch(model, batch, adjust)?;
    let (k, d) = (model.num_classes(), model.dim());
    if analytic.d_prototypes.rows() != k
        || analytic.d_prototypes.cols() != d
        || analytic.d_temps.len() != model.temps().num_params()
    {
        return Err(Error::DimensionMismatch {
            expected: k * d + model.temps().num_params(),
            got: analytic.d_prototypes.as_slice().len() + analytic.d_temps.len(),
        });
    }

    let proto_numeric: Vec<f64> = (0..k * d)
        .into_par_iter()
        .map(|i| {
            central_difference(model, batch, adjust, h, |m, delta| {
                m.params_mut().0.as_mut_slice()[i] += delta
            })
        })
        .collect();
    let prototypes = group_error(analytic.d_prototypes.as_slice(), &proto_numeric);

    let temps = if model.temps().is_none() {
        None
    } else {
        let numeric: Vec<f64> = (0..model.temps().num_params())
            .into_par_iter()
            .map(|i| {
                central_difference(model, batch, adjust, h, |m, delta| {
                    m.params_mut().1.params_mut()[i] += delta
                })
            })
            .collect();
        Some(group_error(&analytic.d_temps, &numeric))
    };
    Ok(FdReport {
        prototypes,
        temps,
        tol,
    })
}

fn central_difference<F>(
    model: &PrototypeModel,
    batch: &Batch,
    adjust: Option<&LogitAdjust>,
    h: f64,
    nudge: F,
) -> f64
where
    F: Fn(&mut PrototypeModel, f64),
{
    let mut plus = model.clone();
    nudge(&mut plus, h);
    let mut minus = model.clone();
    nudge(&mut minus, -h);
    (unchecked_loss(&plus, batch, adjust) - unchecked_loss(&minus, batch, adjust)) / (2.0 * h)
}

fn group_error(analytic: &[f64], numeric: &[f64]) -> GroupError {
    let mut out = GroupError {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
        num_params: analytic.len(),
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let rel = relative_error(a, n);
        out.max_abs_error = out.max_abs_error.max((a - n).abs());
        // NaN compares false; force it to register as a failure
        if rel > out.max_rel_error || rel.is_nan() {
            out.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
            out.worst_index = i;
        }
    }
    out
}
