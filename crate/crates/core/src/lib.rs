//! Exercise-repetition scoring from multi-IMU recordings: data pipeline,
//! CNN-LSTM architecture variants, rater aggregation, leave-one-subject-out
//! evaluation, hyperparameter search and a synthetic data generator.

pub mod arch;
pub mod error;
pub mod exec;
pub mod harness;
pub mod labels;
pub mod metrics;
pub mod pipeline;
pub mod sweep;
pub mod synthgen;

pub use error::{CoreError, Result};
