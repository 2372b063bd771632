use serde::{Deserialize, Serialize};

use super::LossMode;
use crate::error::{ErdError, Result};
use crate::metrics::MetricsConfig;
use crate::model::{AdamWConfig, ModelMeta, TimeMode};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub theta: usize,
    pub mode: LossMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            theta: 30,
            mode: LossMode::ConstantPaper,
        }
    }
}

/// When a score becomes a positive verdict: `p > threshold` and at least
/// `min_delay` posts read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecisionRule {
    pub threshold: f64,
    pub min_delay: usize,
}

impl Default for DecisionRule {
    fn default() -> Self {
        DecisionRule {
            threshold: 0.5,
            min_delay: 1,
        }
    }
}

impl DecisionRule {
    pub fn is_positive<F: Scalar>(&self, p: F, posts_read: usize) -> bool {
        p > F::c(self.threshold) && posts_read >= self.min_delay
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "F: Scalar")]
pub struct TrainConfig<F> {
    pub epochs: usize,
    pub batch_size: usize,
    /// Window size `M`; also the checkpoint step.
    pub window_size: usize,
    pub mode: TimeMode,
    pub loss: LossConfig,
    pub optimizer: AdamWConfig<F>,
    pub seed: u64,
    pub feature_dim: usize,
    pub hash_seed: u64,
    /// Rule applied while training; Listing-style hard labels at 0.5.
    pub train_rule: DecisionRule,
    /// Rule applied during validation.
    pub validation_rule: DecisionRule,
    /// Fraction of the training corpus held out when no validation corpus is given.
    pub validation_fraction: f64,
    pub w_acc: f64,
    pub w_erde: f64,
    /// Cost constants for validation ERDE; `theta` is taken from `loss`.
    pub metrics: MetricsConfig<F>,
}

impl<F: Scalar> Default for TrainConfig<F> {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            window_size: 10,
            mode: TimeMode::Temporal,
            loss: LossConfig::default(),
            optimizer: AdamWConfig { lazy: true, ..AdamWConfig::default() },
            seed: 7,
            feature_dim: 1 << 15,
            hash_seed: 0x5eed,
            train_rule: DecisionRule::default(),
            validation_rule: DecisionRule::default(),
            validation_fraction: 0.15,
            w_acc: 1.0,
            w_erde: 1.0,
            metrics: MetricsConfig::default(),
        }
    }
}

impl<F: Scalar> TrainConfig<F> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ErdError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 || self.window_size == 0 {
            return bad("batch_size and window_size must be positive");
        }
        if self.loss.theta == 0 {
            return bad("theta must be at least 1");
        }
        if self.w_acc < 0.0 || self.w_erde < 0.0 || self.w_acc + self.w_erde == 0.0 {
            return bad("selection weights must be non-negative and not both zero");
        }
        for rule in [self.train_rule, self.validation_rule] {
            if !(rule.threshold > 0.0 && rule.threshold < 1.0) || rule.min_delay == 0 {
                return bad("decision threshold must be in (0, 1) and min_delay at least 1");
            }
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must be in (0, 1)");
        }
        self.model_meta().validate()?;
        self.metrics_for_validation().validate()
    }

    pub fn model_meta(&self) -> ModelMeta {
        ModelMeta {
            dim: self.feature_dim,
            hash_seed: self.hash_seed,
            ..ModelMeta::new(self.window_size, self.mode, self.seed)
        }
    }

    pub fn metrics_for_validation(&self) -> MetricsConfig<F> {
        MetricsConfig {
            theta: self.loss.theta,
            ..self.metrics.clone()
        }
    }
}
