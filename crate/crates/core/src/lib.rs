//! Library behind the `killfie` pipeline: tweet-corpus and incident-database
//! handling, geo-data providers with offline fixtures, location/text/caption
//! feature extraction, statistical validation, and imbalanced binary
//! classification.
//!
//! Core numeric code (statistics, classifiers) is generic over the scalar
//! type; the pipeline itself runs on [`Real`].

pub mod corpus;
pub mod error;
pub mod geo;
pub mod geofeat;
pub mod learn;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod textfeat;

pub use error::{Error, Result};

/// Scalar type used end to end by the pipeline.
pub type Real = f64;

/// KS test result at the pipeline scalar.
pub type KsResult = stats::KsResult<Real>;
/// Fleiss' kappa at the pipeline scalar.
pub type Kappa = stats::Kappa<Real>;
/// Feature matrix at the pipeline scalar.
pub type FeatureMatrix = learn::FeatureMatrix<Real>;
/// Fitted classifier at the pipeline scalar.
pub type TrainedModel = learn::TrainedModel<Real>;
