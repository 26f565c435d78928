//! Semi-supervised relation extraction by consistency training.
//!
//! A small transformer encoder classifies the relation between two marked
//! entities. Unlabelled statements are paraphrased by back-translation that
//! keeps the entity phrases verbatim, pseudo-labelled by the model itself,
//! and interpolated in hidden-state space to build extra training points.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision.

pub mod augment;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod remix;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::{DType, Scalar};

pub type RelationModelF32 = encoder::RelationModel<f32>;
pub type RelationModelF64 = encoder::RelationModel<f64>;
pub type LabelDistributionF32 = corpus::LabelDistribution<f32>;
pub type LabelDistributionF64 = corpus::LabelDistribution<f64>;
pub type FitOutcomeF32 = trainer::FitOutcome<f32>;
pub type FitOutcomeF64 = trainer::FitOutcome<f64>;
