//! The prototype classifier.
//!
//! Each class `y` owns a prototype `c_y`. Class scores are
//! `logit_y = -½ · d(x, c_y)` (optionally plus `τ · log N_y` during training),
//! the posterior is their softmax and the decision rule is the nearest
//! prototype.
//!
//! With squared Euclidean distance and no temperatures the classifier is
//! exactly a linear softmax with `W_y = c_y` and `b_y = -½‖c_y‖²`; see
//! [`PrototypeModel::as_linear_equivalent`].

use crate::baseline::LinearModel;
use crate::dataset::ClassStats;
use crate::error::{Error, Result};
use crate::geometry::{self, DistanceKind, SchemeKind, TemperatureScheme};
use crate::linalg::{argmax, argmin, norm, softmax, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeModel {
    prototypes: Matrix,
    temps: TemperatureScheme,
    kind: DistanceKind,
}

/// Additive `τ · log N_y` logit offsets, applied during training only.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitAdjust {
    tau: f64,
    offsets: Vec<f64>,
}

impl LogitAdjust {
    pub fn new(tau: f64, stats: &ClassStats) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tau must be finite and >= 0, got {tau}"
            )));
        }
        if let Some(class) = stats.counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass { class });
        }
        let offsets = stats
            .counts
            .iter()
            .map(|&n| tau * (n as f64).ln())
            .collect();
        Ok(Self { tau, offsets })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior(Vec<f64>);

impl Posterior {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl PrototypeModel {
    pub fn new(prototypes: Matrix, temps: TemperatureScheme, kind: DistanceKind) -> Result<Self> {
        if prototypes.rows() == 0 || prototypes.cols() == 0 {
            return Err(Error::InvalidConfig(
                "model needs at least one class and dimension".into(),
            ));
        }
        if let Some(row) = prototypes
            .iter_rows()
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidConfig(format!(
                "prototype {row} is not finite"
            )));
        }
        if kind != DistanceKind::Euclidean && !temps.is_none() {
            return Err(Error::IncompatibleScheme(kind.name()));
        }
        if kind == DistanceKind::Cosine {
            if let Some(row) = prototypes.iter_rows().position(|r| norm(r) == 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "cosine prototype {row} has zero norm"
                )));
            }
        }
        temps.validate(prototypes.rows(), prototypes.cols())?;
        Ok(Self {
            prototypes,
            temps,
            kind,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.cols()
    }

    pub fn kind(&self) -> DistanceKind {
        self.kind
    }

    pub fn prototypes(&self) -> &Matrix {
        &self.prototypes
    }

    pub fn temps(&self) -> &TemperatureScheme {
        &self.temps
    }

    /// Mutable access for optimizers. Callers keep the parameters finite and
    /// temperatures positive.
    pub fn params_mut(&mut self) -> (&mut Matrix, &mut TemperatureScheme) {
        (&mut self.prototypes, &mut self.temps)
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if self.kind == DistanceKind::Cosine && norm(x) == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(())
    }

    pub(crate) fn check_adjust(&self, adjust: Option<&LogitAdjust>) -> Result<()> {
        match adjust {
            Some(a) if a.offsets.len() != self.num_classes() => Err(Error::DimensionMismatch {
                expected: self.num_classes(),
                got: a.offsets.len(),
            }),
            _ => Ok(()),
        }
    }

    /// Distances from `x` to every prototype.
    pub fn distances(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.distances_unchecked(x))
    }

    pub(crate) fn distances_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.prototypes
            .iter_rows()
            .enumerate()
            .map(|(y, c)| geometry::distance_unchecked(x, c, y, self.kind, &self.temps))
            .collect()
    }

    pub(crate) fn logits_from_distances(
        distances: &[f64],
        adjust: Option<&LogitAdjust>,
    ) -> Vec<f64> {
        match adjust {
            None => distances.iter().map(|d| -0.5 * d).collect(),
            Some(a) => distances
                .iter()
                .zip(&a.offsets)
                .map(|(d, o)| -0.5 * d + o)
                .collect(),
        }
    }

    pub fn logits(&self, x: &[f64], adjust: Option<&LogitAdjust>) -> Result<Vec<f64>> {
        self.check_adjust(adjust)?;
        let dist = self.distances(x)?;
        Ok(Self::logits_from_distances(&dist, adjust))
    }

    pub fn posterior(&self, x: &[f64], adjust: Option<&LogitAdjust>) -> Result<Posterior> {
        Ok(Posterior(softmax(&self.logits(x, adjust)?)))
    }

    /// Nearest prototype; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmin(&self.distances(x)?))
    }

    /// `(W, b)` with `W_y = c_y`, `b_y = -½‖c_y‖²`. Only defined for squared
    /// Euclidean distance without temperatures.
    pub fn as_linear_equivalent(&self) -> Result<LinearModel> {
        if self.kind != DistanceKind::SquaredEuclidean {
            return Err(Error::InvalidConfig(format!(
                "linear equivalence needs sqeuclidean distance, model uses {}",
                self.kind
            )));
        }
        if !self.temps.is_none() {
            return Err(Error::IncompatibleScheme("sqeuclidean"));
        }
        let bias = self
            .prototypes
            .iter_rows()
            .map(|c| -0.5 * c.iter().map(|v| v * v).sum::<f64>())
            .collect();
        LinearModel::new(self.prototypes.clone(), bias)
    }
}

/// Prototypes placed at the class centroids, temperatures at one.
pub fn init_ncm(
    centroids: &Matrix,
    kind: DistanceKind,
    scheme: SchemeKind,
) -> Result<PrototypeModel> {
    let temps = TemperatureScheme::ones(scheme, centroids.rows(), centroids.cols());
    PrototypeModel::new(centroids.clone(), temps, kind)
}
