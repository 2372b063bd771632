use serde::{Deserialize, Serialize};

use crate::error::{ErdError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "F: Scalar")]
pub struct AdamWConfig<F> {
    pub learning_rate: F,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
    pub weight_decay: F,
    /// Leave coordinates with an exactly zero gradient untouched (no moment
    /// decay, no weight decay, no update), like lazy/sparse Adam.
    pub lazy: bool,
}

impl<F: Scalar> Default for AdamWConfig<F> {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: F::c(1e-2),
            beta1: F::c(0.9),
            beta2: F::c(0.999),
            epsilon: F::c(1e-8),
            weight_decay: F::c(0.01),
            lazy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<F> {
    pub config: AdamWConfig<F>,
    pub step: u64,
    pub m: Vec<F>,
    pub v: Vec<F>,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(n_params: usize, config: AdamWConfig<F>) -> Self {
        OptimizerState {
            config,
            step: 0,
            m: vec![F::zero(); n_params],
            v: vec![F::zero(); n_params],
        }
    }
}

/// One AdamW update with decoupled weight decay.
///
/// `w <- w (1 - lr λ) - lr m̂ / (sqrt(v̂) + ε)`. Nothing is modified when the
/// gradient contains a non-finite entry.
pub fn adamw_step<F: Scalar>(params: &mut [F], state: &mut OptimizerState<F>, grad: &[F]) -> Result<()> {
    if params.len() != grad.len() || state.m.len() != params.len() {
        return Err(ErdError::DimensionMismatch {
            expected: params.len(),
            found: if grad.len() != params.len() { grad.len() } else { state.m.len() },
        });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(ErdError::Numerical(format!(
            "gradient entry {i} is {} at optimizer step {}",
            grad[i],
            state.step + 1
        )));
    }
    let c = &state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = F::one() - c.beta1.powi(t);
    let bc2 = F::one() - c.beta2.powi(t);
    let decay = F::one() - c.learning_rate * c.weight_decay;
    for (((w, m), v), &g) in params.iter_mut().zip(&mut state.m).zip(&mut state.v).zip(grad) {
        if c.lazy && g == F::zero() {
            continue;
        }
        *w *= decay;
        *m = c.beta1 * *m + (F::one() - c.beta1) * g;
        *v = c.beta2 * *v + (F::one() - c.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
    }
    Ok(())
}
