//! Orchestration: configuration, the train/evaluate CLI surface, metrics
//! emission, learning-curve plots, and checkpoint persistence.

pub mod metrics;

pub use metrics::{EpochRecord, MetricsWriter};
