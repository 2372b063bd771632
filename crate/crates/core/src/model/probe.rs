use serde::{Deserialize, Serialize};

use super::{predict_proba, ModelParams};
use crate::corpus::TimedWindow;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ProbePoint<F> {
    pub k: usize,
    pub probability: F,
    pub positive: bool,
}

/// Scores the same text as if it had been read at each delay in `times`.
pub fn probe_time_sensitivity<F: Scalar>(
    params: &ModelParams<F>,
    text: &str,
    times: &[usize],
    threshold: F,
) -> Result<Vec<ProbePoint<F>>> {
    times
        .iter()
        .map(|&k| {
            let x = params.featurize(&TimedWindow::from_text("probe", text, k));
            let p = predict_proba(params, &x)?.probability;
            Ok(ProbePoint {
                k,
                probability: p,
                positive: p > threshold,
            })
        })
        .collect()
}
