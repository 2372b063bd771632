use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{ErdError, Result};
use crate::metrics::latency_cost;
use crate::model::bce_clamped;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// A delayed true positive contributes the constant 1 (no gradient).
    #[default]
    ConstantPaper,
    /// A delayed true positive contributes `lc_θ(pred_time) * CE`.
    WeightedCe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalLoss<F> {
    pub mean: F,
    pub per_sample: Vec<F>,
    /// Which samples took the delayed-true-positive branch.
    pub delayed: Vec<bool>,
    /// Derivative of each sample's contribution with respect to its logit.
    pub dlogit: Vec<F>,
}

/// Cross-entropy per sample, except delayed true positives.
///
/// A sample is a delayed true positive when `pred == real == 1` and either
/// `real_time < pred_time` or `theta < pred_time`.
pub fn temporal_loss<F: Scalar>(
    pred_probs: &[F],
    pred_labels: &[Label],
    pred_times: &[usize],
    real_labels: &[Label],
    real_times: &[usize],
    theta: usize,
    mode: LossMode,
) -> Result<TemporalLoss<F>> {
    let n = pred_probs.len();
    if n == 0 {
        return Err(ErdError::Contract("temporal loss of an empty batch".into()));
    }
    let lens = [pred_labels.len(), pred_times.len(), real_labels.len(), real_times.len()];
    if lens.iter().any(|&l| l != n) {
        return Err(ErdError::Contract(format!(
            "temporal loss inputs have lengths {n} and {lens:?}"
        )));
    }
    let mut per_sample = Vec::with_capacity(n);
    let mut delayed = Vec::with_capacity(n);
    let mut dlogit = Vec::with_capacity(n);
    for i in 0..n {
        let (ce, dce) = bce_clamped(pred_probs[i], real_labels[i].is_positive());
        let pred = pred_labels[i];
        let late = pred == Label::Positive
            && pred == real_labels[i]
            && (real_times[i] < pred_times[i] || theta < pred_times[i]);
        let (value, d) = match (late, mode) {
            (false, _) => (ce, dce),
            (true, LossMode::ConstantPaper) => (F::one(), F::zero()),
            (true, LossMode::WeightedCe) => {
                let w: F = latency_cost(pred_times[i], theta);
                (w * ce, w * dce)
            }
        };
        per_sample.push(value);
        delayed.push(late);
        dlogit.push(d);
    }
    let mean = per_sample.iter().copied().sum::<F>() / F::from_count(n);
    Ok(TemporalLoss {
        mean,
        per_sample,
        delayed,
        dlogit,
    })
}
