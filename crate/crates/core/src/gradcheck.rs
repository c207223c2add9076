//! Randomized finite-difference checks of the analytic gradients over every
//! supported distance / temperature combination.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dataset::{Batch, ClassStats};
use crate::error::Result;
use crate::geometry::{DistanceKind, SchemeKind, TemperatureScheme};
use crate::linalg::Matrix;
use crate::loss::fd_check;
use crate::model::{LogitAdjust, PrototypeModel};

/// Euclidean with each temperature scheme, then squared Euclidean and cosine
/// without temperatures.
pub fn supported_combinations() -> Vec<(DistanceKind, SchemeKind)> {
    let mut out: Vec<_> = SchemeKind::ALL
        .iter()
        .map(|&s| (DistanceKind::Euclidean, s))
        .collect();
    out.push((DistanceKind::SquaredEuclidean, SchemeKind::None));
    out.push((DistanceKind::Cosine, SchemeKind::None));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub model: PrototypeModel,
    pub batch: Batch,
    pub adjust: LogitAdjust,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draws a small random model and batch: Gaussian prototypes and inputs,
/// temperatures in `[0.5, 2)`, class counts in `[1, 500]`, `τ` in `[0, 1)`.
pub fn random_problem(
    rng: &mut ChaCha8Rng,
    kind: DistanceKind,
    scheme: SchemeKind,
) -> Result<Problem> {
    let k = rng.random_range(2..=6);
    let d = rng.random_range(1..=8);
    let n = rng.random_range(1..=8);
    let prototypes = Matrix::from_vec(k, d, gaussian(rng, k * d))?;
    let mut temps = TemperatureScheme::ones(scheme, k, d);
    for t in temps.params_mut() {
        *t = rng.random_range(0.5..2.0);
    }
    let model = PrototypeModel::new(prototypes, temps, kind)?;
    let labels = (0..n).map(|_| rng.random_range(0..k)).collect();
    let batch = Batch::new(Matrix::from_vec(n, d, gaussian(rng, n * d))?, labels)?;
    let counts = (0..k).map(|_| rng.random_range(1..=500)).collect();
    let adjust = LogitAdjust::new(rng.random_range(0.0..1.0), &ClassStats::from_counts(counts))?;
    Ok(Problem {
        model,
        batch,
        adjust,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckResult {
    pub distance: &'static str,
    pub temps: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
    pub failures: usize,
    pub passed: bool,
}

/// Checks `instances` random problems per combination. Each combination gets
/// its own generator derived from `seed`, so filtering does not change the
/// instances drawn.
pub fn run_gradcheck(
    combos: &[(DistanceKind, SchemeKind)],
    instances: usize,
    h: f64,
    tol: f64,
    seed: u64,
) -> Result<Vec<GradcheckResult>> {
    let all = supported_combinations();
    combos
        .iter()
        .map(|&(kind, scheme)| {
            let slot = all
                .iter()
                .position(|&c| c == (kind, scheme))
                .unwrap_or(all.len()) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(slot));
            let mut max_rel_error = 0.0f64;
            let mut failures = 0;
            for _ in 0..instances {
                let p = random_problem(&mut rng, kind, scheme)?;
                let report = fd_check(&p.model, &p.batch, Some(&p.adjust), h, tol)?;
                max_rel_error = max_rel_error.max(report.max_rel_error());
                failures += usize::from(!report.passed());
            }
            Ok(GradcheckResult {
                distance: kind.name(),
                temps: scheme.name(),
                instances,
                max_rel_error,
                failures,
                passed: failures == 0,
            })
        })
        .collect()
}
