use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ModelMeta;
use crate::corpus::{sanitize_markers, TimedWindow};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    /// Delay is part of the input.
    Temporal,
    /// Same delay schedule, no time in the input.
    SlidingWindow,
}

impl std::fmt::Display for TimeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TimeMode::Temporal => "temporal",
            TimeMode::SlidingWindow => "sliding_window",
        })
    }
}

impl std::str::FromStr for TimeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "temporal" => Ok(TimeMode::Temporal),
            "sliding_window" | "sliding-window" => Ok(TimeMode::SlidingWindow),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<F> {
    /// `(index, count)` pairs sorted by index, all indices `< dim`.
    pub text: Vec<(u32, F)>,
    pub time: Vec<F>,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// FNV-1a over the little-endian seed followed by the token bytes.
pub fn feature_hash(token: &str, seed: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    seed.to_le_bytes()
        .iter()
        .chain(token.as_bytes())
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

pub fn featurize<F: Scalar>(window: &TimedWindow, meta: &ModelMeta, mode: TimeMode) -> FeatureVector<F> {
    let tokens = tokenize(&sanitize_markers(&window.text));
    let dim = meta.dim as u64;
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut bump = |key: &str| {
        let idx = (feature_hash(key, meta.hash_seed) % dim) as u32;
        *counts.entry(idx).or_default() += 1;
    };
    for (i, tok) in tokens.iter().enumerate() {
        bump(&format!("u:{tok}"));
        if i > 0 {
            bump(&format!("b:{} {}", tokens[i - 1], tok));
        }
    }
    let text = counts.into_iter().map(|(i, c)| (i, F::from_count(c))).collect();

    let mut time = vec![F::zero(); meta.time_len()];
    if mode == TimeMode::Temporal {
        let k = window.delay.max(1);
        time[0] = F::from_count(k) / F::from_count(meta.theta_norm);
        let bucket = ((k - 1) / meta.window_size).min(meta.time_buckets - 1);
        time[1 + bucket] = F::one();
    }
    FeatureVector { text, time }
}
