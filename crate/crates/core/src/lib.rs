pub mod augment;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod field;
pub mod grid;
pub mod io;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
pub use field::Field;
pub use grid::{GridDomain, LatLon, Terrain};
pub use report::{Origin, RainCategory, Report, ReportIndex};
pub use scalar::Scalar;
pub use models::{ModelConfig, TrainedModel, Variant};
pub use scoring::GaussianField;

pub type Field64 = Field<f64>;
pub type Field32 = Field<f32>;
pub type Report64 = Report<f64>;
pub type Report32 = Report<f32>;
pub type GaussianField64 = GaussianField<f64>;
pub type GaussianField32 = GaussianField<f32>;
pub type TrainedModel64 = TrainedModel<f64>;
pub type TrainedModel32 = TrainedModel<f32>;
