//! The `erd` pipeline: generate a synthetic corpus, train with the delay
//! schedule, evaluate offline, replay the test split through the
//! mock-server, and emit reports. Every command reads one
//! [`PipelineConfig`] and writes under a run directory that carries a
//! `manifest.json`.

pub mod benchmark;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use benchmark::{run_benchmark, BenchmarkRun};
pub use config::PipelineConfig;
pub use error::CliError;
pub use manifest::Manifest;
pub use pipeline::{EvaluationRecord, Pipeline};
