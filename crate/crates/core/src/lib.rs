//! Learnable prototype classifiers for long-tailed classification on fixed
//! feature vectors.
//!
//! A prototype classifier scores class `y` by `-½ · d(x, c_y)` for a learnable
//! prototype `c_y`. Prototypes start at the class centroids (which makes the
//! untrained model a nearest-class-mean classifier) and are learned with
//! momentum SGD on a logit-adjusted negative log-likelihood over
//! class-balanced batches, optionally together with per-channel, per-class
//! or dense distance temperatures. Gradients are closed form.
//!
//! Modules:
//!
//! - [`dataset`]: feature files, class statistics, centroids, splits, synthetic data
//! - [`geometry`]: distances, temperatures and their derivatives
//! - [`model`]: the classifier, posterior and prediction
//! - [`loss`]: batch loss, analytic gradients, finite-difference check
//! - [`sampler`], [`trainer`]: mini-batches and the training loop
//! - [`baseline`]: linear softmax classifier for comparison
//! - [`eval`], [`analysis`]: split accuracies, norm and separation diagnostics
//! - [`checkpoint`]: binary model container
//!
//! The `-½` in the logit means the per-sample Euclidean gradient on a
//! prototype has norm `½ (1 - p(y|x))` for the true class and `½ p(z|x)` for
//! the others, not the unscaled misclassification probability.

pub mod analysis;
pub mod baseline;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gradcheck;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod optim;
pub mod sampler;
pub mod trainer;

pub use baseline::{predict_linear, train_softmax, LinearModel};
pub use checkpoint::Checkpoint;
pub use dataset::{
    compute_centroids, compute_class_stats, split_classes, synth_longtailed, Batch, ClassStats,
    FeatureDataset, SplitGroup, SplitThresholds, SynthSpec,
};
pub use error::{Error, Result};
pub use eval::{evaluate, SplitAccuracy};
pub use geometry::{DistanceKind, SchemeKind, TemperatureScheme};
pub use linalg::Matrix;
pub use loss::{batch_gradients, batch_loss, fd_check, GradientBundle};
pub use model::{init_ncm, LogitAdjust, Posterior, PrototypeModel};
pub use sampler::{Sampler, SamplerConfig, SamplerKind};
pub use trainer::{train, train_step, TrainConfig, TrainTrace};
