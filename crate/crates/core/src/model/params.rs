use serde::{Deserialize, Serialize};

use super::{featurize, FeatureVector, TimeMode};
use crate::corpus::{Label, TimedWindow};
use crate::error::{ErdError, Result};
use crate::scalar::{sigmoid, Scalar};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside cross-entropy.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// Hashed text dimension.
    pub dim: usize,
    /// Window size `M`, also the time-bucket width.
    pub window_size: usize,
    pub theta_norm: usize,
    pub time_buckets: usize,
    pub mode: TimeMode,
    pub seed: u64,
    pub hash_seed: u64,
}

impl Default for ModelMeta {
    fn default() -> Self {
        ModelMeta {
            dim: 1 << 15,
            window_size: 10,
            theta_norm: 100,
            time_buckets: 10,
            mode: TimeMode::Temporal,
            seed: 7,
            hash_seed: 0x5eed,
        }
    }
}

impl ModelMeta {
    pub fn new(window_size: usize, mode: TimeMode, seed: u64) -> Self {
        ModelMeta {
            window_size,
            theta_norm: 10 * window_size,
            mode,
            seed,
            ..Default::default()
        }
    }

    pub fn time_len(&self) -> usize {
        1 + self.time_buckets
    }

    /// Text weights, time weights, bias.
    pub fn n_params(&self) -> usize {
        self.dim + self.time_len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > u32::MAX as usize {
            return Err(ErdError::Config(format!("feature dimension {} out of range", self.dim)));
        }
        if self.window_size == 0 || self.time_buckets == 0 || self.theta_norm == 0 {
            return Err(ErdError::Config(
                "window size, time buckets and theta_norm must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Flat parameter vector: `dim` text weights, `time_len` time weights, bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub meta: ModelMeta,
    pub values: Vec<F>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOutput<F> {
    pub probability: F,
    pub logit: F,
}

impl<F: Scalar> ModelParams<F> {
    pub fn zeros(meta: ModelMeta) -> Result<Self> {
        meta.validate()?;
        let values = vec![F::zero(); meta.n_params()];
        Ok(ModelParams { meta, values })
    }

    pub fn mode(&self) -> TimeMode {
        self.meta.mode
    }

    pub fn text_weights(&self) -> &[F] {
        &self.values[..self.meta.dim]
    }

    pub fn time_weights(&self) -> &[F] {
        &self.values[self.meta.dim..self.meta.dim + self.meta.time_len()]
    }

    pub fn time_weights_mut(&mut self) -> &mut [F] {
        let start = self.meta.dim;
        &mut self.values[start..start + self.meta.time_len()]
    }

    pub fn bias(&self) -> F {
        self.values[self.values.len() - 1]
    }

    pub fn bias_mut(&mut self) -> &mut F {
        let last = self.values.len() - 1;
        &mut self.values[last]
    }

    /// Features for a window in this model's own mode.
    pub fn featurize(&self, window: &TimedWindow) -> FeatureVector<F> {
        featurize(window, &self.meta, self.meta.mode)
    }

    pub fn check_shape(&self, x: &FeatureVector<F>) -> Result<()> {
        if x.time.len() != self.meta.time_len() {
            return Err(ErdError::DimensionMismatch {
                expected: self.meta.time_len(),
                found: x.time.len(),
            });
        }
        if let Some(&(i, _)) = x.text.last() {
            if i as usize >= self.meta.dim {
                return Err(ErdError::DimensionMismatch {
                    expected: self.meta.dim,
                    found: i as usize + 1,
                });
            }
        }
        Ok(())
    }

    pub fn logit(&self, x: &FeatureVector<F>) -> F {
        let w = &self.values;
        let mut z = self.bias();
        for &(i, v) in &x.text {
            z += w[i as usize] * v;
        }
        for (t, v) in self.time_weights().iter().zip(&x.time) {
            z += *t * *v;
        }
        z
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(ErdError::Numerical(format!(
                "parameter {i} is {}",
                self.values[i]
            ))),
        }
    }

    /// Order-sensitive hash of the raw parameter bits.
    pub fn fingerprint(&self) -> u64 {
        self.values.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            let bits = v.as_f64().to_bits();
            (h ^ bits).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

/// `p = sigmoid(w·x + b)`.
pub fn predict_proba<F: Scalar>(params: &ModelParams<F>, x: &FeatureVector<F>) -> Result<PredictOutput<F>> {
    params.check_shape(x)?;
    let logit = params.logit(x);
    if !logit.is_finite() {
        return Err(ErdError::Numerical(format!(
            "non-finite logit {logit}; model parameters are corrupt"
        )));
    }
    Ok(PredictOutput {
        probability: sigmoid(logit),
        logit,
    })
}

/// Clamped binary cross-entropy and its derivative with respect to the logit.
///
/// The derivative is zero where the clamp is active.
pub fn bce_clamped<F: Scalar>(p: F, positive: bool) -> (F, F) {
    let lo = F::c(PROB_CLAMP);
    let hi = F::one() - lo;
    let y = if positive { F::one() } else { F::zero() };
    let pc = p.max(lo).min(hi);
    let loss = if positive { -pc.ln() } else { -(F::one() - pc).ln() };
    let dlogit = if p > lo && p < hi { p - y } else { F::zero() };
    (loss, dlogit)
}

/// Adds `coef * x` into a flat gradient laid out like [`ModelParams::values`].
pub fn accumulate_gradient<F: Scalar>(grad: &mut [F], meta: &ModelMeta, x: &FeatureVector<F>, coef: F) {
    for &(i, v) in &x.text {
        grad[i as usize] += coef * v;
    }
    let start = meta.dim;
    for (j, v) in x.time.iter().enumerate() {
        grad[start + j] += coef * *v;
    }
    let last = grad.len() - 1;
    grad[last] += coef;
}

/// Mean clamped cross-entropy over a batch and its gradient.
pub fn ce_loss_and_grad<F: Scalar>(
    params: &ModelParams<F>,
    batch: &[(FeatureVector<F>, Label)],
) -> Result<(F, Vec<F>)> {
    if batch.is_empty() {
        return Err(ErdError::Contract("cross-entropy of an empty batch".into()));
    }
    let n = F::from_count(batch.len());
    let mut grad = vec![F::zero(); params.values.len()];
    let mut total = F::zero();
    for (x, label) in batch {
        let out = predict_proba(params, x)?;
        let (loss, dlogit) = bce_clamped(out.probability, label.is_positive());
        total += loss;
        accumulate_gradient(&mut grad, &params.meta, x, dlogit / n);
    }
    Ok((total / n, grad))
}
