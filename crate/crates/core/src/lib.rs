//! Multilayer co-action networks for coordinated-behaviour detection in
//! short-video corpora.
//!
//! Numeric outputs are generic over [`Scalar`]; the aliases below fix the
//! scalar to `f64` or `f32`.

pub mod error;
pub mod export;
pub mod filtering;
pub mod ingest;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod similarity;
pub mod synthgen;
pub mod tuning;

pub use error::*;
pub use model::*;
pub use scalar::Scalar;

pub type LayerStats64 = metrics::LayerStats<f64>;
pub type LayerStats32 = metrics::LayerStats<f32>;
pub type FilteredSnapshot64 = filtering::FilteredSnapshot<f64>;
pub type FilteredSnapshot32 = filtering::FilteredSnapshot<f32>;
pub type SweepReport64 = filtering::SweepReport<f64>;
pub type SweepReport32 = filtering::SweepReport<f32>;
pub type PrPoint64 = tuning::PrPoint<f64>;
pub type PrPoint32 = tuning::PrPoint<f32>;
pub type AudioCalibration64 = tuning::AudioCalibration<f64>;
pub type AudioCalibration32 = tuning::AudioCalibration<f32>;
