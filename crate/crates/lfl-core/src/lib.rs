//! Latent feature log-linear (LFL) models for dyadic prediction.
//!
//! A dyadic prediction task assigns a label to a pair of objects — a (row,
//! column) dyad such as (user, movie) or (author, author). This crate models
//! the conditional label distribution with a log-linear form whose per-label
//! log-odds against a pinned base category are a low-rank bilinear product of
//! learned row and column factors, optionally augmented with a linear term
//! over observed side-information:
//!
//! ```text
//! p(y | r, c) ∝ exp( α[y][r,:] · β[y][c,:] + w_s[y] · s + γ[y] )
//! ```
//!
//! Because the model is discriminative it handles nominal and ordinal labels
//! with the same parameterization — only the training objective changes — and
//! it produces calibrated probabilities when trained with the log-likelihood
//! objective.
//!
//! The crate is organized around the lifecycle of an experiment:
//!
//! - [`model`]: the parameterization, its variants (plain dyadic, symmetric
//!   and directed link prediction, multi-relational, stereotype-reduced) and
//!   all forward computations: probabilities and prediction rules.
//! - [`objective`]: negative conditional log-likelihood and expected-label
//!   MAE/MSE objectives, L2 regularization schemes, analytic gradients, and
//!   a central-difference oracle for verifying them.
//! - [`train`]: seeded initialization, stochastic gradient descent, a batch
//!   L-BFGS optimizer with backtracking line search, and the two-stage
//!   cold-start heuristic that trains side-information weights against
//!   frozen latent factors.
//! - [`data`]: triplet-file ingestion, train/test splitting schemes, and
//!   synthetic generators with a Bayes-error oracle.
//! - [`eval`]: 0-1 error, MAE/RMSE, rank-statistic AUC, calibration binning,
//!   and k-means clustering of learned factors.

pub mod data;
pub mod error;
pub mod eval;
pub mod labels;
pub mod mat;
pub mod model;
pub mod objective;
pub mod train;

pub use error::LflError;
pub use labels::{LabelKind, LabelSpace};
pub use mat::Mat;
pub use model::{Dyad, LabelDistribution, LflModel, ModelSpec, PredictRule, Variant};
pub use objective::{GradientSet, Objective, ObjectiveKind};
pub use train::{FitReport, OptimizerKind, TrainConfig};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, LflError>;
