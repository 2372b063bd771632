//! Hashed n-gram logistic classifier with an explicit time channel.
//!
//! Text is lowercased and split on non-alphanumeric characters; unigrams and
//! bigrams are hashed (FNV-1a 64, seeded) into `dim` buckets. The delay `k`
//! enters as a separate dense block, `[k / theta_norm, one_hot(bucket(k))]`,
//! with bucket width `M`. In sliding-window mode that block is all zeros, so
//! predictions cannot depend on `k`.

mod checkpoint;
mod features;
mod optim;
mod params;
mod probe;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use features::{feature_hash, featurize, tokenize, FeatureVector, TimeMode};
pub use optim::{adamw_step, AdamWConfig, OptimizerState};
pub use params::{
    accumulate_gradient, bce_clamped, ce_loss_and_grad, predict_proba, ModelMeta, ModelParams,
    PredictOutput, PROB_CLAMP,
};
pub use probe::{probe_time_sensitivity, ProbePoint};
