//! Benchmarking toolkit for photoplethysmography (PPG) machine-learning
//! pipelines: preprocessing, interpretable features, time-frequency
//! representations, desk-scale models and the evaluation protocol for blood
//! pressure regression and atrial fibrillation classification.

pub mod error;
pub mod bench;
pub mod data_io;
pub mod evaluation;
pub mod irregularity;
pub mod models;
pub mod morph;
pub mod pulse;
pub mod signal;
pub mod synth;
pub mod transforms;

pub use error::{Error, Result};
