//! Binary checkpoint format, little endian throughout:
//!
//! ```text
//! magic      8 bytes  "ERDCKPT\0"
//! version    u32
//! header_len u32
//! header     JSON (scalar type, model metadata, optimizer config and step)
//! values     n_params f64
//! m, v       n_params f64 each, only when the header says has_optimizer
//! checksum   u64 FNV-1a of every preceding byte
//! ```
//!
//! Values are widened to `f64` on disk; `f32` round-trips exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamWConfig, ModelMeta, ModelParams, OptimizerState, TimeMode};
use crate::error::{ErdError, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ERDCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    scalar: String,
    meta: ModelMeta,
    n_params: usize,
    has_optimizer: bool,
    optimizer: Option<AdamWConfig<f64>>,
    step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub params: ModelParams<F>,
    pub optimizer: Option<OptimizerState<F>>,
}

impl<F: Scalar> Checkpoint<F> {
    /// Refuses a checkpoint whose dimension or mode differs from what the caller expects.
    pub fn ensure_compatible(&self, dim: usize, mode: TimeMode) -> Result<()> {
        if self.params.meta.dim != dim {
            return Err(ErdError::DimensionMismatch {
                expected: dim,
                found: self.params.meta.dim,
            });
        }
        if self.params.meta.mode != mode {
            return Err(ErdError::Checkpoint(format!(
                "checkpoint was trained in {} mode, not {}",
                self.params.meta.mode, mode
            )));
        }
        Ok(())
    }
}

fn fnv(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn encode_checkpoint<F: Scalar>(params: &ModelParams<F>, optimizer: Option<&OptimizerState<F>>) -> Vec<u8> {
    let header = Header {
        scalar: F::NAME.to_string(),
        meta: params.meta.clone(),
        n_params: params.values.len(),
        has_optimizer: optimizer.is_some(),
        optimizer: optimizer.map(|o| AdamWConfig {
            learning_rate: o.config.learning_rate.as_f64(),
            beta1: o.config.beta1.as_f64(),
            beta2: o.config.beta2.as_f64(),
            epsilon: o.config.epsilon.as_f64(),
            weight_decay: o.config.weight_decay.as_f64(),
            lazy: o.config.lazy,
        }),
        step: optimizer.map_or(0, |o| o.step),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let n_arrays = if optimizer.is_some() { 3 } else { 1 };
    let mut out = Vec::with_capacity(24 + header.len() + 8 * n_arrays * params.values.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let mut put = |vals: &[F]| {
        for v in vals {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    };
    put(&params.values);
    if let Some(o) = optimizer {
        put(&o.m);
        put(&o.v);
    }
    let sum = fnv(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

pub fn decode_checkpoint<F: Scalar>(bytes: &[u8]) -> Result<Checkpoint<F>> {
    let corrupt = |m: &str| ErdError::Checkpoint(m.to_string());
    if bytes.len() < 24 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("not a checkpoint file (bad magic)"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return Err(corrupt("checksum mismatch; file is corrupt"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(ErdError::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let header_len = u32::from_le_bytes(body[12..16].try_into().unwrap()) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(&body[16..header_end])
        .map_err(|e| ErdError::Checkpoint(format!("bad header: {e}")))?;
    if header.scalar != F::NAME {
        return Err(ErdError::Checkpoint(format!(
            "checkpoint stores {} parameters, requested {}",
            header.scalar,
            F::NAME
        )));
    }
    header.meta.validate()?;
    if header.n_params != header.meta.n_params() {
        return Err(ErdError::DimensionMismatch {
            expected: header.meta.n_params(),
            found: header.n_params,
        });
    }
    let n_arrays = if header.has_optimizer { 3 } else { 1 };
    let data = &body[header_end..];
    if data.len() != 8 * n_arrays * header.n_params {
        return Err(corrupt("payload length does not match header"));
    }
    let mut chunks = data
        .chunks_exact(8)
        .map(|c| F::c(f64::from_le_bytes(c.try_into().unwrap())));
    let mut take = |n: usize| -> Vec<F> { chunks.by_ref().take(n).collect() };
    let params = ModelParams {
        meta: header.meta,
        values: take(header.n_params),
    };
    let optimizer = match header.optimizer {
        Some(cfg) if header.has_optimizer => Some(OptimizerState {
            config: AdamWConfig {
                learning_rate: F::c(cfg.learning_rate),
                beta1: F::c(cfg.beta1),
                beta2: F::c(cfg.beta2),
                epsilon: F::c(cfg.epsilon),
                weight_decay: F::c(cfg.weight_decay),
                lazy: cfg.lazy,
            },
            step: header.step,
            m: take(header.n_params),
            v: take(header.n_params),
        }),
        None if !header.has_optimizer => None,
        _ => return Err(corrupt("optimizer flag inconsistent with header")),
    };
    Ok(Checkpoint { params, optimizer })
}

pub fn save_checkpoint<F: Scalar>(
    params: &ModelParams<F>,
    optimizer: Option<&OptimizerState<F>>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params, optimizer)).map_err(|e| ErdError::io(path, e))
}

pub fn load_checkpoint<F: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<F>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ErdError::io(path, e))?;
    decode_checkpoint(&bytes)
}
