//! Reversible traffic obfuscation for IoT packet streams, and the
//! traffic-analysis attack used to measure how much it hides.
//!
//! * [`packet`]: packets, flow keys, classic pcap I/O.
//! * [`engine`]: the six obfuscation techniques and the recovery-header protocol.
//! * [`features`]: per-packet flow features, z-scores, ANOVA F-scores, CSV.
//! * [`models`]: kNN, decision tree, random forest, MLP, cross-validation, metrics.
//! * [`harness`]: replay on a virtual clock, synthetic corpora, scenarios, reports.
//!
//! The feature and model code is generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below fix it to `f64`.

pub mod engine;
pub mod features;
pub mod harness;
pub mod models;
pub mod packet;
mod scalar;

pub use scalar::Scalar;

pub type Dataset64 = features::Dataset<f64>;
pub type ZScoreModel64 = features::ZScoreModel<f64>;
pub type KnnModel64 = models::KnnModel<f64>;
pub type DecisionTreeModel64 = models::DecisionTreeModel<f64>;
pub type RandomForestModel64 = models::RandomForestModel<f64>;
pub type MlpModel64 = models::MlpModel<f64>;
pub type Model64 = models::Model<f64>;
