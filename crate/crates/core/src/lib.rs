//! Quantifying training-data heterogeneity through the variance of pairwise
//! influence values, and purifying data by iterative variance descent.
//!
//! The library is organized around a small pipeline:
//!
//! - [`dataset`] / [`data`]: labeled samples, CSV and IDX ingestion,
//!   label-noise injection, splits.
//! - [`synthetic`]: the SD-K synthetic generators over the alphabet
//!   `{R, D, B, N}`.
//! - [`model`]: multinomial logistic regression with exact gradient and
//!   Hessian, trained by seeded mini-batch ADAM plus Newton refinement.
//! - [`influence`]: the pairwise influence matrix `X({z, z'})`, its raw
//!   moments and variance, and the second-order cross-derivatives.
//! - [`purify`]: leave-one-out variance-descent purification.
//! - [`theory`]: brute-force verification of the moment-drop and
//!   variance-drop identities by exhaustive subset enumeration.

pub mod data;
pub mod dataset;
pub mod error;
pub mod influence;
pub mod linalg;
pub mod model;
pub mod purify;
pub mod synthetic;
pub mod theory;

pub use dataset::{DataPoint, Dataset, PointId};
pub use error::{Error, Result};
pub use influence::{InfluenceMatrix, MomentReport};
pub use linalg::HessianFactor;
pub use model::{FitResult, ModelParams, TrainConfig};
pub use purify::{PurificationTrace, PurifyConfig, PurifyMethod};
pub use synthetic::{MixtureSpec, SyntheticDistribution};
pub use theory::{EntropyReport, Normalization, TheoremCheckReport};
