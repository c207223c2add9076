//! Prototype learning: start from the class centroids with unit temperatures,
//! then run momentum SGD on the logit-adjusted loss over class-balanced
//! mini-batches.

use serde::{Deserialize, Serialize};

use crate::analysis::{head_tail_groups, separation_report, ClassGroup, SeparationReport};
use crate::dataset::{compute_class_stats, Batch, FeatureDataset, SplitThresholds};
use crate::error::{Error, Result};
use crate::geometry::{DistanceKind, SchemeKind, D_EPS, T_FLOOR};
use crate::linalg::Matrix;
use crate::loss::batch_gradients_guarded;
use crate::model::{init_ncm, LogitAdjust, PrototypeModel};
use crate::optim::momentum_step;
use crate::sampler::{Sampler, SamplerConfig, SamplerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Prototype learning rate. The softmax baseline uses it as its weight
    /// learning rate.
    pub lr_prototypes: f64,
    pub lr_temps: f64,
    pub momentum: f64,
    /// Logit-adjustment weight.
    pub tau: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub d_eps: f64,
    pub t_floor: f64,
    /// Record a trace entry every this many iterations (the last iteration is
    /// always recorded).
    pub trace_every: usize,
    pub sampler: SamplerKind,
    /// Many/Few thresholds used as Head/Tail for trace statistics.
    pub thresholds: SplitThresholds,
    /// Stop after this many updates even if the epoch budget is larger.
    pub max_iterations: Option<usize>,
    /// L2 penalty on weights, used by the softmax baseline only.
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_prototypes: 4.0,
            lr_temps: 0.005,
            momentum: 0.9,
            tau: 0.25,
            epochs: 1,
            batch_size: 64,
            seed: 0,
            d_eps: D_EPS,
            t_floor: T_FLOOR,
            trace_every: 1,
            sampler: SamplerKind::ClassBalanced,
            thresholds: SplitThresholds::default(),
            max_iterations: None,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lr_prototypes > 0.0 && self.lr_prototypes.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr_prototypes));
        }
        if !(self.lr_temps > 0.0 && self.lr_temps.is_finite()) {
            return bad(format!("lr-temps must be > 0, got {}", self.lr_temps));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be >= 0, got {}", self.tau));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.trace_every == 0 {
            return bad("trace_every must be at least 1".into());
        }
        if !(self.d_eps > 0.0 && self.t_floor > 0.0) {
            return bad("d_eps and t_floor must be > 0".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            ));
        }
        self.thresholds.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// Number of updates applied when the record was taken.
    pub iteration: usize,
    /// Mean loss of the most recent batch, evaluated before its update.
    pub loss: f64,
    pub norms: Vec<f64>,
    pub separation: SeparationReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn first(&self) -> Option<&TraceRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// Momentum buffers for prototypes and temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocities {
    pub prototypes: Vec<f64>,
    pub temps: Vec<f64>,
}

impl Velocities {
    pub fn zeros(model: &PrototypeModel) -> Self {
        Self {
            prototypes: vec![0.0; model.num_classes() * model.dim()],
            temps: vec![0.0; model.temps().num_params()],
        }
    }
}

/// One momentum-SGD iteration; returns the pre-update batch loss.
pub fn train_step(
    model: &mut PrototypeModel,
    velocities: &mut Velocities,
    batch: &Batch,
    adjust: Option<&LogitAdjust>,
    cfg: &TrainConfig,
) -> Result<f64> {
    let grads = batch_gradients_guarded(model, batch, adjust, cfg.d_eps)?;
    if !grads.loss.is_finite() {
        return Err(Error::Diverged {
            iteration: 0,
            loss: grads.loss,
        });
    }
    let (prototypes, temps) = model.params_mut();
    momentum_step(
        prototypes.as_mut_slice(),
        &mut velocities.prototypes,
        grads.d_prototypes.as_slice(),
        cfg.lr_prototypes,
        cfg.momentum,
    );
    if !temps.is_none() {
        momentum_step(
            temps.params_mut(),
            &mut velocities.temps,
            &grads.d_temps,
            cfg.lr_temps,
            cfg.momentum,
        );
        temps.clamp_floor(cfg.t_floor);
    }
    if prototypes.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            iteration: 0,
            loss: grads.loss,
        });
    }
    Ok(grads.loss)
}

fn record(
    iteration: usize,
    loss: f64,
    model: &PrototypeModel,
    groups: &[ClassGroup],
) -> Result<TraceRecord> {
    Ok(TraceRecord {
        iteration,
        loss,
        norms: model.prototypes().row_norms(),
        separation: separation_report(model.prototypes(), groups)?,
    })
}

/// Runs prototype learning from `centroids` for `epochs · ceil(N / batch_size)`
/// iterations (capped by `max_iterations`).
pub fn train(
    ds: &FeatureDataset,
    centroids: &Matrix,
    cfg: &TrainConfig,
    scheme: SchemeKind,
    kind: DistanceKind,
) -> Result<(PrototypeModel, TrainTrace)> {
    cfg.validate()?;
    ds.require_nonempty_classes()?;
    if ds.num_classes() < 2 {
        return Err(Error::InvalidConfig(
            "training needs at least two classes".into(),
        ));
    }
    if centroids.rows() != ds.num_classes() || centroids.cols() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.num_classes() * ds.dim(),
            got: centroids.rows() * centroids.cols(),
        });
    }
    let mut model = init_ncm(centroids, kind, scheme)?;
    let stats = compute_class_stats(ds);
    let adjust = LogitAdjust::new(cfg.tau, &stats)?;
    let groups = head_tail_groups(&stats, &cfg.thresholds);
    let mut sampler = Sampler::new(
        SamplerConfig {
            kind: cfg.sampler,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
        },
        ds,
    )?;
    let mut steps = cfg.epochs.saturating_mul(sampler.batches_per_epoch());
    if let Some(cap) = cfg.max_iterations {
        steps = steps.min(cap);
    }

    let mut velocities = Velocities::zeros(&model);
    let mut trace = TrainTrace::default();
    for j in 0..steps {
        let batch = sampler.next_batch(ds);
        let before = if j == 0 { Some(model.clone()) } else { None };
        let loss = train_step(&mut model, &mut velocities, &batch, Some(&adjust), cfg).map_err(
            |e| match e {
                Error::Diverged { loss, .. } => Error::Diverged { iteration: j, loss },
                other => other,
            },
        )?;
        if let Some(init) = before {
            trace.records.push(record(0, loss, &init, &groups)?);
        }
        let done = j + 1;
        if done % cfg.trace_every == 0 || done == steps {
            trace.records.push(record(done, loss, &model, &groups)?);
        }
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::compute_centroids;
    use crate::geometry::TemperatureScheme;

    fn toy() -> FeatureDataset {
        let rows = [
            [0.0, 0.1],
            [0.2, -0.1],
            [3.0, 3.1],
            [2.9, 3.0],
            [3.2, 2.8],
            [-3.0, 2.0],
        ];
        FeatureDataset::new(Matrix::from_rows(&rows).unwrap(), vec![0, 0, 1, 1, 1, 2], 3).unwrap()
    }

    #[test]
    fn zero_iterations_is_ncm() {
        let ds = toy();
        let c = compute_centroids(&ds).unwrap();
        let cfg = TrainConfig {
            max_iterations: Some(0),
            ..TrainConfig::default()
        };
        let (m, trace) =
            train(&ds, &c, &cfg, SchemeKind::Channel, DistanceKind::Euclidean).unwrap();
        assert_eq!(m.prototypes(), &c);
        assert_eq!(m.temps().params(), &[1.0, 1.0]);
        assert!(trace.records.is_empty());
    }

    #[test]
    fn temperature_clamped_at_floor() {
        let ds = toy();
        let c = compute_centroids(&ds).unwrap();
        let mut m = init_ncm(&c, DistanceKind::Euclidean, SchemeKind::Channel).unwrap();
        let cfg = TrainConfig {
            lr_temps: 1e6,
            momentum: 0.0,
            ..TrainConfig::default()
        };
        let mut v = Velocities::zeros(&m);
        train_step(&mut m, &mut v, &ds.as_batch(), None, &cfg).unwrap();
        assert!(m.temps().params().iter().all(|&t| t >= cfg.t_floor));
        assert!(m.temps().params().contains(&cfg.t_floor));
    }

    #[test]
    fn saturated_step_changes_nothing() {
        let proto = Matrix::from_rows(&[[0.0, 0.0], [1e4, 0.0]]).unwrap();
        let mut m = PrototypeModel::new(
            proto.clone(),
            TemperatureScheme::None,
            DistanceKind::Euclidean,
        )
        .unwrap();
        let batch = Batch::new(Matrix::from_rows(&[[0.0, 0.0]]).unwrap(), vec![0]).unwrap();
        let mut v = Velocities::zeros(&m);
        train_step(&mut m, &mut v, &batch, None, &TrainConfig::default()).unwrap();
        assert_eq!(m.prototypes(), &proto);
    }

    #[test]
    fn trace_records_iterations_in_order() {
        let ds = toy();
        let c = compute_centroids(&ds).unwrap();
        let cfg = TrainConfig {
            batch_size: 2,
            epochs: 2,
            trace_every: 2,
            lr_prototypes: 0.1,
            ..TrainConfig::default()
        };
        let (_, trace) = train(&ds, &c, &cfg, SchemeKind::None, DistanceKind::Euclidean).unwrap();
        let its: Vec<usize> = trace.records.iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![0, 2, 4, 6]);
        assert_eq!(trace.records[0].norms, c.row_norms());
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig {
                momentum: 1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                lr_prototypes: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                tau: -0.1,
                ..TrainConfig::default()
            },
            TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn single_class_rejected() {
        let ds = FeatureDataset::new(Matrix::from_rows(&[[1.0], [2.0]]).unwrap(), vec![0, 0], 1)
            .unwrap();
        let c = compute_centroids(&ds).unwrap();
        assert!(train(
            &ds,
            &c,
            &TrainConfig::default(),
            SchemeKind::None,
            DistanceKind::Euclidean
        )
        .is_err());
    }
}
