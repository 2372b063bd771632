//! JSON bodies exchanged with the mock-server. Every body carries
//! `protocol_version`; requests with another version are rejected.

use erd_core::metrics::{Decision, MetricsConfig, MetricsReport};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

fn current() -> u32 {
    PROTOCOL_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateRunRequest {
    pub protocol_version: u32,
    /// Name of a corpus the server has loaded.
    pub corpus: String,
    /// Overrides the server's metric settings for this run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsConfig<f64>>,
}

impl CreateRunRequest {
    pub fn new(corpus: impl Into<String>) -> Self {
        CreateRunRequest { protocol_version: PROTOCOL_VERSION, corpus: corpus.into(), metrics: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCreated {
    #[serde(default = "current")]
    pub protocol_version: u32,
    pub run_id: String,
    pub corpus: String,
    pub users: usize,
    pub round_limit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundItem {
    pub user_id: String,
    pub post: String,
    /// 0-based; always `round - 1`.
    pub post_index: usize,
    /// This is the user's final post.
    pub last: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPayload {
    #[serde(default = "current")]
    pub protocol_version: u32,
    pub round: usize,
    pub items: Vec<RoundItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub user_id: String,
    /// 1 raises an alarm, 0 asks for more posts.
    pub decision: u8,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSubmission {
    pub protocol_version: u32,
    pub round: usize,
    pub answers: Vec<Answer>,
}

impl DecisionSubmission {
    pub fn new(round: usize, answers: Vec<Answer>) -> Self {
        DecisionSubmission { protocol_version: PROTOCOL_VERSION, round, answers }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    #[serde(default = "current")]
    pub protocol_version: u32,
    pub round: usize,
    pub flagged: usize,
    pub exhausted: usize,
    /// Users still active after this round.
    pub remaining: usize,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    #[serde(default = "current")]
    pub protocol_version: u32,
    pub run_id: String,
    pub report: MetricsReport<f64>,
    /// One per user, in corpus order.
    pub decisions: Vec<Decision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    NotFound,
    Conflict,
    Gone,
    Validation,
}

impl ErrorKind {
    pub fn status(self) -> u16 {
        match self {
            ErrorKind::NotFound => 404,
            ErrorKind::Conflict => 409,
            ErrorKind::Gone => 410,
            ErrorKind::Validation => 422,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    #[serde(default = "current")]
    pub protocol_version: u32,
    pub kind: ErrorKind,
    pub message: String,
    /// User ids that made a submission invalid.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offenders: Vec<String>,
    /// Active users left, for results requested too early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remaining: Option<usize>,
}
