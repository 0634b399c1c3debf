//! Contact-to-contactless fingerprint matching.
//!
//! The crate covers the whole chain from a raw finger photo to evaluation
//! metrics:
//!
//! - [`imaging`]: the `[0,1]` grayscale raster, CLAHE, inversion, canvas padding.
//! - [`segmentation`]: distal-phalange masks, cross-entropy objective, IOU.
//! - [`geometry`]: similarity + thin-plate-spline warping with analytic
//!   gradients, ridge-period estimation and 500 ppi scaling.
//! - [`minutiae`]: orientation field, Gabor enhancement, extraction,
//!   descriptor/consensus matching, correspondence metrics, minutiae maps.
//! - [`representation`]: fixed-length texture embeddings, similarity and the
//!   embedding-network training objectives.
//! - [`matcheval`]: score fusion, protocols, ROC/EER/TAR, ROC comparison,
//!   rank-N and two-stage search.
//! - [`pipeline`]: manifests, configuration, batch preprocessing, extraction,
//!   verification and search runs.
//!
//! Numeric cores are generic over [`Real`] (`f32`/`f64`); the aliases below
//! fix the common choices.

pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod imaging;
pub mod matcheval;
pub mod minutiae;
pub mod pipeline;
pub mod representation;
pub mod scalar;
pub mod segmentation;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision grayscale image used throughout the pipeline.
pub type GrayImage = imaging::Image<f64>;
/// Single-precision grayscale image.
pub type GrayImageF32 = imaging::Image<f32>;
pub type Affine = geometry::AffineParams<f64>;
pub type AffineF32 = geometry::AffineParams<f32>;
pub type Tps = geometry::TpsField<f64>;
pub type TpsF32 = geometry::TpsField<f32>;
pub type Embedding = representation::Embedding<f64>;
pub type EmbeddingF32 = representation::Embedding<f32>;
pub type LossInputs = representation::LossInputs<f64>;
