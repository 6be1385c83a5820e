//! Benchmark engine for brain-like perceptual and neural properties of
//! vision models.
//!
//! The crate generates controlled stimulus sets, reads model responses from
//! a small binary container format, measures fifteen effect strengths from
//! those responses and aggregates them into brain-alignment scores,
//! embeddings and rankings.

pub mod analysis;
pub mod domain;
pub mod exec;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod scoring;
pub mod stats;
pub mod stimulus;
pub mod store;
pub mod synthetic;

pub use domain::{BrainReference, EffectVector, PropertyId, ScoringConfig};
pub use exec::Execution;
pub use matrix::Matrix;
