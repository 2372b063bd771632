//! Early risk detection with time-aware training.
//!
//! The crate is organised around the evaluation loop of an early risk
//! detection (ERD) task: users are read post by post, a classifier sees a
//! window of recent posts together with the number of posts read so far
//! (the *delay*), and decisions are scored by ERDE_θ and F-latency.
//!
//! * [`corpus`]: users, posts, JSONL I/O, synthetic corpora, delay windows.
//! * [`metrics`]: ERDE_θ, latency cost, F-latency, precision/recall/F1.
//! * [`model`]: hashed n-gram logistic classifier with a time channel and AdamW.
//! * [`trainer`]: the delay-scheduled training and validation loop.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which is what the CLI and server use.

pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod trainer;

pub use error::{ErdError, Result};
pub use scalar::Scalar;

pub use corpus::{
    build_window, delay_checkpoints, encode_timed_input, generate_synthetic, load_corpus,
    save_corpus, Corpus, DelaySchedule, Label, Post, Split, SyntheticSpec, TimedWindow,
    UserHistory,
};
pub use metrics::{Decision, Outcome, Verdict};
pub use model::TimeMode;
pub use trainer::LossMode;

/// Metric configuration in double precision.
pub type MetricsConfig = metrics::MetricsConfig<f64>;
/// Metric report in double precision.
pub type MetricsReport = metrics::MetricsReport<f64>;
/// Model parameters in double precision.
pub type ModelParams = model::ModelParams<f64>;
/// AdamW state in double precision.
pub type OptimizerState = model::OptimizerState<f64>;
/// Feature vector in double precision.
pub type FeatureVector = model::FeatureVector<f64>;
/// Training configuration in double precision.
pub type TrainConfig = trainer::TrainConfig<f64>;
/// Per-epoch log in double precision.
pub type EpochLog = trainer::EpochLog<f64>;
/// Single-precision model parameters.
pub type ModelParamsF32 = model::ModelParams<f32>;
