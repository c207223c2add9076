//! Feature-to-prototype distances and their closed-form partial derivatives.
//!
//! Euclidean distance can be rescaled by learnable temperatures:
//!
//! | scheme  | distance                              |
//! |---------|---------------------------------------|
//! | None    | `sqrt(sum_i (x-c)_i^2)`               |
//! | Channel | `sqrt(sum_i (x-c)_i^2 / T_i)`         |
//! | Class   | `sqrt(sum_i (x-c)_i^2 / T_y)`         |
//! | Dense   | `sqrt(sum_i (x-c)_i^2 / T_{y,i})`     |
//!
//! Channel temperatures are a diagonal Mahalanobis metric shared by all
//! classes. Temperatures are only defined for [`DistanceKind::Euclidean`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};

/// Below this distance the Euclidean gradients divide by `D_EPS` instead.
pub const D_EPS: f64 = 1e-8;
/// Temperatures are clamped to at least this value after every update.
pub const T_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistanceKind {
    Euclidean,
    SquaredEuclidean,
    Cosine,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 3] = [
        DistanceKind::Euclidean,
        DistanceKind::SquaredEuclidean,
        DistanceKind::Cosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Euclidean => "euclidean",
            DistanceKind::SquaredEuclidean => "sqeuclidean",
            DistanceKind::Cosine => "cosine",
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistanceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown distance kind {s:?}")))
    }
}

/// Shape of a temperature parameterization, without values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    None,
    Channel,
    Class,
    Dense,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::None,
        SchemeKind::Channel,
        SchemeKind::Class,
        SchemeKind::Dense,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::None => "none",
            SchemeKind::Channel => "channel",
            SchemeKind::Class => "class",
            SchemeKind::Dense => "dense",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown temperature scheme {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TemperatureScheme {
    None,
    /// One temperature per feature channel (`d` values).
    Channel(Vec<f64>),
    /// One temperature per class (`K` values).
    Class(Vec<f64>),
    /// One temperature per (class, channel) pair (`K×d`).
    Dense(Matrix),
}

impl TemperatureScheme {
    /// All-ones temperatures of the requested shape.
    pub fn ones(kind: SchemeKind, num_classes: usize, dim: usize) -> Self {
        match kind {
            SchemeKind::None => TemperatureScheme::None,
            SchemeKind::Channel => TemperatureScheme::Channel(vec![1.0; dim]),
            SchemeKind::Class => TemperatureScheme::Class(vec![1.0; num_classes]),
            SchemeKind::Dense => TemperatureScheme::Dense(Matrix::filled(num_classes, dim, 1.0)),
        }
    }

    pub fn kind(&self) -> SchemeKind {
        match self {
            TemperatureScheme::None => SchemeKind::None,
            TemperatureScheme::Channel(_) => SchemeKind::Channel,
            TemperatureScheme::Class(_) => SchemeKind::Class,
            TemperatureScheme::Dense(_) => SchemeKind::Dense,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, TemperatureScheme::None)
    }

    /// Flat view of the learnable temperatures (empty for `None`).
    pub fn params(&self) -> &[f64] {
        match self {
            TemperatureScheme::None => &[],
            TemperatureScheme::Channel(t) | TemperatureScheme::Class(t) => t,
            TemperatureScheme::Dense(t) => t.as_slice(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            TemperatureScheme::None => &mut [],
            TemperatureScheme::Channel(t) | TemperatureScheme::Class(t) => t,
            TemperatureScheme::Dense(t) => t.as_mut_slice(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().len()
    }

    /// Rebuilds a scheme of `kind` from flat parameters.
    pub fn from_params(
        kind: SchemeKind,
        num_classes: usize,
        dim: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let scheme = match kind {
            SchemeKind::None if params.is_empty() => TemperatureScheme::None,
            SchemeKind::None => {
                return Err(Error::InvalidTemperatures(
                    "none scheme takes no values".into(),
                ))
            }
            SchemeKind::Channel => TemperatureScheme::Channel(params),
            SchemeKind::Class => TemperatureScheme::Class(params),
            SchemeKind::Dense => {
                TemperatureScheme::Dense(Matrix::from_vec(num_classes, dim, params)?)
            }
        };
        scheme.validate(num_classes, dim)?;
        Ok(scheme)
    }

    /// Shape matches `(K, d)` and every temperature is finite and positive.
    pub fn validate(&self, num_classes: usize, dim: usize) -> Result<()> {
        let expected = match self {
            TemperatureScheme::None => 0,
            TemperatureScheme::Channel(_) => dim,
            TemperatureScheme::Class(_) => num_classes,
            TemperatureScheme::Dense(t) => {
                if t.rows() != num_classes || t.cols() != dim {
                    return Err(Error::InvalidTemperatures(format!(
                        "dense temperatures are {}x{}, model is {num_classes}x{dim}",
                        t.rows(),
                        t.cols()
                    )));
                }
                num_classes * dim
            }
        };
        if self.num_params() != expected {
            return Err(Error::InvalidTemperatures(format!(
                "{} scheme expects {expected} values, got {}",
                self.kind(),
                self.num_params()
            )));
        }
        if let Some(t) = self.params().iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidTemperatures(format!(
                "temperature {t} is not a positive finite value"
            )));
        }
        Ok(())
    }

    /// Raises every temperature to at least `floor`.
    pub fn clamp_floor(&mut self, floor: f64) {
        for t in self.params_mut() {
            if *t < floor || t.is_nan() {
                *t = floor;
            }
        }
    }

    /// Temperature applied to channel `i` of class `y`.
    #[inline]
    fn effective(&self, y: usize, i: usize, dim: usize) -> f64 {
        match self {
            TemperatureScheme::None => 1.0,
            TemperatureScheme::Channel(t) => t[i],
            TemperatureScheme::Class(t) => t[y],
            TemperatureScheme::Dense(t) => t.as_slice()[y * dim + i],
        }
    }
}

fn check_args(
    x: &[f64],
    c: &[f64],
    y: usize,
    kind: DistanceKind,
    temps: &TemperatureScheme,
) -> Result<()> {
    if x.len() != c.len() {
        return Err(Error::DimensionMismatch {
            expected: c.len(),
            got: x.len(),
        });
    }
    if kind != DistanceKind::Euclidean && !temps.is_none() {
        return Err(Error::IncompatibleScheme(kind.name()));
    }
    let d = x.len();
    let ok = match temps {
        TemperatureScheme::None => true,
        TemperatureScheme::Channel(t) => t.len() == d,
        TemperatureScheme::Class(t) => y < t.len(),
        TemperatureScheme::Dense(t) => t.cols() == d && y < t.rows(),
    };
    if !ok {
        return Err(Error::InvalidTemperatures(format!(
            "{} temperatures do not cover class {y} in dimension {d}",
            temps.kind()
        )));
    }
    if kind == DistanceKind::Cosine && (norm(x) == 0.0 || norm(c) == 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(())
}

/// Temperature-weighted squared Euclidean sum. The class scheme divides the
/// whole sum by `T_y`, the others divide term by term.
#[inline]
fn weighted_sq(x: &[f64], c: &[f64], y: usize, temps: &TemperatureScheme) -> f64 {
    match temps {
        TemperatureScheme::None => x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum(),
        TemperatureScheme::Class(t) => {
            x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / t[y]
        }
        _ => {
            let d = x.len();
            x.iter()
                .zip(c)
                .enumerate()
                .map(|(i, (a, b))| (a - b) * (a - b) / temps.effective(y, i, d))
                .sum()
        }
    }
}

/// Distance from feature `x` to the prototype `c` of class `y`.
pub fn distance(
    x: &[f64],
    c: &[f64],
    y: usize,
    kind: DistanceKind,
    temps: &TemperatureScheme,
) -> Result<f64> {
    check_args(x, c, y, kind, temps)?;
    Ok(distance_unchecked(x, c, y, kind, temps))
}

pub(crate) fn distance_unchecked(
    x: &[f64],
    c: &[f64],
    y: usize,
    kind: DistanceKind,
    temps: &TemperatureScheme,
) -> f64 {
    match kind {
        DistanceKind::Euclidean => weighted_sq(x, c, y, temps).sqrt(),
        DistanceKind::SquaredEuclidean => weighted_sq(x, c, y, &TemperatureScheme::None),
        DistanceKind::Cosine => (1.0 - dot(x, c) / (norm(x) * norm(c))).max(0.0),
    }
}

/// `∂ distance / ∂ c`, using the default singularity guard [`D_EPS`].
pub fn distance_grad_prototype(
    x: &[f64],
    c: &[f64],
    y: usize,
    kind: DistanceKind,
    temps: &TemperatureScheme,
) -> Result<Vec<f64>> {
    distance_grad_prototype_guarded(x, c, y, kind, temps, D_EPS)
}

pub fn distance_grad_prototype_guarded(
    x: &[f64],
    c: &[f64],
    y: usize,
    kind: DistanceKind,
    temps: &TemperatureScheme,
    d_eps: f64,
) -> Result<Vec<f64>> {
    check_args(x, c, y, kind, temps)?;
    let mut out = vec![0.0; c.len()];
    accumulate_grad_prototype(x, c, y, kind, temps, d_eps, 1.0, &mut out);
    Ok(out)
}

/// `out += scale * ∂ distance / ∂ c`. Arguments must already be validated.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_grad_prototype(
    x: &[f64],
    c: &[f64],
    y: usize,
    kind: DistanceKind,
    temps: &TemperatureScheme,
    d_eps: f64,
    scale: f64,
    out: &mut [f64],
) {
    let d = x.len();
    match kind {
        DistanceKind::Euclidean => {
            let dist = weighted_sq(x, c, y, temps).sqrt().max(d_eps);
            for (i, o) in out.iter_mut().enumerate() {
                let t = temps.effective(y, i, d);
                *o -= scale * (x[i] - c[i]) / (t * dist);
            }
        }
        DistanceKind::SquaredEuclidean => {
            for (i, o) in out.iter_mut().enumerate() {
                *o -= scale * 2.0 * (x[i] - c[i]);
            }
        }
        DistanceKind::Cosine => {
            let (nx, nc) = (norm(x), norm(c));
            let xc = dot(x, c);
            let a = 1.0 / (nx * nc);
            let b = xc / (nx * nc * nc * nc);
            for (i, o) in out.iter_mut().enumerate() {
                *o += scale * (b * c[i] - a * x[i]);
            }
        }
    }
}

/// `∂ distance / ∂ T`, flattened to the shape of `temps.params()`.
/// Only Euclidean distance with an active scheme carries temperatures.
pub fn distance_grad_temps(
    x: &[f64],
    c: &[f64],
    y: usize,
    temps: &TemperatureScheme,
) -> Result<Vec<f64>> {
    distance_grad_temps_guarded(x, c, y, temps, D_EPS)
}

pub fn distance_grad_temps_guarded(
    x: &[f64],
    c: &[f64],
    y: usize,
    temps: &TemperatureScheme,
    d_eps: f64,
) -> Result<Vec<f64>> {
    check_args(x, c, y, DistanceKind::Euclidean, temps)?;
    if temps.is_none() {
        return Err(Error::InvalidTemperatures(
            "temperature gradient needs an active scheme".into(),
        ));
    }
    let mut out = vec![0.0; temps.num_params()];
    accumulate_grad_temps(x, c, y, temps, d_eps, 1.0, &mut out);
    Ok(out)
}

/// `out += scale * ∂ distance / ∂ T` for Euclidean distance.
pub(crate) fn accumulate_grad_temps(
    x: &[f64],
    c: &[f64],
    y: usize,
    temps: &TemperatureScheme,
    d_eps: f64,
    scale: f64,
    out: &mut [f64],
) {
    let dist = weighted_sq(x, c, y, temps).sqrt().max(d_eps);
    let d = x.len();
    match temps {
        TemperatureScheme::None => {}
        TemperatureScheme::Channel(t) => {
            for i in 0..d {
                let delta = x[i] - c[i];
                out[i] -= scale * delta * delta / (2.0 * t[i] * t[i] * dist);
            }
        }
        TemperatureScheme::Class(t) => {
            let sum: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            out[y] -= scale * sum / (2.0 * t[y] * t[y] * dist);
        }
        TemperatureScheme::Dense(t) => {
            let row = t.row(y);
            for i in 0..d {
                let delta = x[i] - c[i];
                out[y * d + i] -= scale * delta * delta / (2.0 * row[i] * row[i] * dist);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NONE: TemperatureScheme = TemperatureScheme::None;

    #[test]
    fn three_four_five() {
        let d = distance(&[0.0, 0.0], &[3.0, 4.0], 0, DistanceKind::Euclidean, &NONE).unwrap();
        assert_eq!(d, 5.0);
    }

    #[test]
    fn channel_temperatures_rescale() {
        let t = TemperatureScheme::Channel(vec![9.0, 16.0]);
        let d = distance(&[0.0, 0.0], &[3.0, 4.0], 0, DistanceKind::Euclidean, &t).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn class_temperature_divides_whole_sum() {
        let t = TemperatureScheme::Class(vec![1.0, 25.0]);
        let d = distance(&[0.0, 0.0], &[3.0, 4.0], 1, DistanceKind::Euclidean, &t).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_and_orthogonal() {
        let x = [0.3, -1.2, 2.0];
        for kind in DistanceKind::ALL {
            assert_eq!(distance(&x, &x, 0, kind, &NONE).unwrap(), 0.0, "{kind}");
        }
        let cos = distance(&[1.0, 0.0], &[0.0, 1.0], 0, DistanceKind::Cosine, &NONE).unwrap();
        assert_eq!(cos, 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            distance(&[0.0, 0.0], &[1.0, 0.0], 0, DistanceKind::Cosine, &NONE),
            Err(Error::ZeroNorm)
        ));
        assert!(matches!(
            distance(&[0.0], &[1.0, 0.0], 0, DistanceKind::Euclidean, &NONE),
            Err(Error::DimensionMismatch { .. })
        ));
        let t = TemperatureScheme::Channel(vec![1.0, 1.0]);
        assert!(matches!(
            distance(&[1.0, 0.0], &[0.0, 1.0], 0, DistanceKind::Cosine, &t),
            Err(Error::IncompatibleScheme("cosine"))
        ));
    }

    #[test]
    fn prototype_gradient_examples() {
        let g =
            distance_grad_prototype(&[0.0, 0.0], &[1.0, 0.0], 0, DistanceKind::Euclidean, &NONE)
                .unwrap();
        assert_eq!(g, vec![1.0, 0.0]);
        let g = distance_grad_prototype(
            &[0.0, 0.0],
            &[1.0, 0.0],
            0,
            DistanceKind::SquaredEuclidean,
            &NONE,
        )
        .unwrap();
        assert_eq!(g, vec![2.0, 0.0]);
    }

    #[test]
    fn coincident_points_use_guard() {
        let g =
            distance_grad_prototype(&[1.0, 1.0], &[1.0, 1.0], 0, DistanceKind::Euclidean, &NONE)
                .unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let t = TemperatureScheme::Channel(vec![1.0, 1.0]);
        let g = distance_grad_temps(&[1.0, 1.0], &[1.0, 1.0], 0, &t).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn temperature_gradient_examples() {
        let t = TemperatureScheme::Channel(vec![1.0, 1.0]);
        let g = distance_grad_temps(&[0.0, 0.0], &[1.0, 0.0], 0, &t).unwrap();
        assert_eq!(g, vec![-0.5, 0.0]);
        assert!(distance_grad_temps(&[0.0], &[1.0], 0, &NONE).is_err());
    }

    #[test]
    fn clamp_and_validate() {
        let mut t = TemperatureScheme::Channel(vec![-3.0, 0.5, 2e-5]);
        assert!(t.validate(4, 3).is_err());
        t.clamp_floor(T_FLOOR);
        assert_eq!(t.params(), &[T_FLOOR, 0.5, T_FLOOR]);
        assert!(t.validate(4, 3).is_ok());
        assert!(TemperatureScheme::Class(vec![1.0; 3])
            .validate(4, 3)
            .is_err());
    }
}
