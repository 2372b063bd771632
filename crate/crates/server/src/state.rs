use std::collections::HashSet;
use std::sync::Arc;

use erd_core::corpus::Corpus;
use erd_core::metrics::{evaluate, Decision, MetricsConfig, Verdict};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{
    Ack, DecisionSubmission, ErrorBody, ErrorKind, RoundItem, RoundPayload, RunResults, PROTOCOL_VERSION,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServerError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("run {0} is finished")]
    Gone(String),
    #[error("{message}")]
    Validation { message: String, offenders: Vec<String> },
    #[error("run is not finished: {remaining} users still active")]
    Incomplete { remaining: usize },
}

impl ServerError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ServerError::NotFound(_) => ErrorKind::NotFound,
            ServerError::Conflict(_) | ServerError::Incomplete { .. } => ErrorKind::Conflict,
            ServerError::Gone(_) => ErrorKind::Gone,
            ServerError::Validation { .. } => ErrorKind::Validation,
        }
    }

    pub fn body(&self) -> ErrorBody {
        let (offenders, remaining) = match self {
            ServerError::Validation { offenders, .. } => (offenders.clone(), None),
            ServerError::Incomplete { remaining } => (vec![], Some(*remaining)),
            _ => (vec![], None),
        };
        ErrorBody {
            protocol_version: PROTOCOL_VERSION,
            kind: self.kind(),
            message: self.to_string(),
            offenders,
            remaining,
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        ServerError::Validation { message: message.into(), offenders: vec![] }
    }
}

pub(crate) fn check_version(version: u32) -> Result<(), ServerError> {
    if version != PROTOCOL_VERSION {
        return Err(ServerError::invalid(format!(
            "protocol version {version} is not supported (expected {PROTOCOL_VERSION})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run_id: String,
    pub corpus: Arc<Corpus>,
    /// Longest history in the corpus.
    pub round_limit: usize,
    pub metrics: MetricsConfig<f64>,
}

impl RunConfig {
    pub fn new(run_id: impl Into<String>, corpus: Arc<Corpus>, metrics: MetricsConfig<f64>) -> Result<Self, ServerError> {
        let round_limit = corpus.max_posts();
        if round_limit == 0 {
            return Err(ServerError::invalid(format!("corpus {} has no posts", corpus.name)));
        }
        metrics.validate().map_err(|e| ServerError::invalid(e.to_string()))?;
        Ok(RunConfig { run_id: run_id.into(), corpus, round_limit, metrics })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayStatus {
    Active,
    Flagged,
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Round `round` has not been handed out yet.
    Ready,
    /// Round `round` was handed out; waiting for its answers.
    Awaiting,
    Finished,
}

/// One replay of a corpus. Every mutation either succeeds completely or
/// returns an error with the state untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub config: RunConfig,
    round: usize,
    phase: Phase,
    status: Vec<ReplayStatus>,
    decisions: Vec<Option<Decision>>,
}

impl RunState {
    pub fn new(config: RunConfig) -> Self {
        let n = config.corpus.len();
        RunState {
            config,
            round: 1,
            phase: Phase::Ready,
            status: vec![ReplayStatus::Active; n],
            decisions: vec![None; n],
        }
    }

    /// Current round, 1-based.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Finished
    }

    pub fn status(&self) -> &[ReplayStatus] {
        &self.status
    }

    pub fn remaining(&self) -> usize {
        self.status.iter().filter(|s| **s == ReplayStatus::Active).count()
    }

    pub fn decisions(&self) -> impl Iterator<Item = &Decision> {
        self.decisions.iter().flatten()
    }

    fn active_users(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.status.len()).filter(|&i| self.status[i] == ReplayStatus::Active)
    }

    pub fn next_round(&mut self) -> Result<RoundPayload, ServerError> {
        match self.phase {
            Phase::Finished => return Err(ServerError::Gone(self.config.run_id.clone())),
            Phase::Awaiting => {
                return Err(ServerError::Conflict(format!(
                    "decisions for round {} are pending",
                    self.round
                )))
            }
            Phase::Ready => {}
        }
        let r = self.round;
        let users = &self.config.corpus.users;
        // an active user always has at least r posts: shorter ones retired at their last post
        let items = self
            .active_users()
            .map(|i| {
                let u = &users[i];
                RoundItem {
                    user_id: u.user_id.clone(),
                    post: u.posts[r - 1].text.clone(),
                    post_index: r - 1,
                    last: r == u.total_posts(),
                }
            })
            .collect();
        self.phase = Phase::Awaiting;
        Ok(RoundPayload { protocol_version: PROTOCOL_VERSION, round: r, items })
    }

    pub fn submit(&mut self, submission: &DecisionSubmission) -> Result<Ack, ServerError> {
        check_version(submission.protocol_version)?;
        let r = self.round;
        match self.phase {
            Phase::Finished => return Err(ServerError::Gone(self.config.run_id.clone())),
            Phase::Ready if submission.round + 1 == r => {
                return Err(ServerError::Conflict(format!("decisions for round {} were already recorded", submission.round)))
            }
            Phase::Ready => return Err(ServerError::Conflict(format!("round {r} has not been fetched"))),
            Phase::Awaiting => {}
        }
        if submission.round != r {
            return Err(ServerError::Conflict(format!(
                "submission is for round {} but the current round is {r}",
                submission.round
            )));
        }
        let users = &self.config.corpus.users;
        let expected: HashSet<&str> = self.active_users().map(|i| users[i].user_id.as_str()).collect();

        let mut seen = HashSet::new();
        let mut offenders = Vec::new();
        for a in &submission.answers {
            let bad = !expected.contains(a.user_id.as_str())
                || !seen.insert(a.user_id.as_str())
                || a.decision > 1
                || !(0.0..=1.0).contains(&a.score);
            if bad {
                offenders.push(a.user_id.clone());
            }
        }
        let mut missing: Vec<&str> = expected.difference(&seen).copied().collect();
        missing.sort_unstable();
        offenders.extend(missing.into_iter().map(String::from));
        if !offenders.is_empty() {
            offenders.sort_unstable();
            offenders.dedup();
            return Err(ServerError::Validation {
                message: format!("round {r}: {} unknown, duplicate, missing or malformed answers", offenders.len()),
                offenders,
            });
        }

        let index = |id: &str| users.iter().position(|u| u.user_id == id).expect("validated");
        let (mut flagged, mut exhausted) = (0, 0);
        for a in &submission.answers {
            let i = index(&a.user_id);
            let total = users[i].total_posts();
            if a.decision == 1 {
                self.status[i] = ReplayStatus::Flagged;
                self.decisions[i] = Some(Decision::new(a.user_id.clone(), Verdict::Positive, r));
                flagged += 1;
            } else if r == total {
                self.status[i] = ReplayStatus::Exhausted;
                self.decisions[i] = Some(Decision::new(a.user_id.clone(), Verdict::Negative, total));
                exhausted += 1;
            }
        }
        let remaining = self.remaining();
        self.round += 1;
        self.phase = if remaining == 0 { Phase::Finished } else { Phase::Ready };
        Ok(Ack {
            protocol_version: PROTOCOL_VERSION,
            round: r,
            flagged,
            exhausted,
            remaining,
            finished: remaining == 0,
        })
    }

    pub fn results(&self) -> Result<RunResults, ServerError> {
        if !self.is_finished() {
            return Err(ServerError::Incomplete { remaining: self.remaining() });
        }
        let decisions: Vec<Decision> = self.decisions().cloned().collect();
        let report = evaluate(&decisions, &self.config.corpus, &self.config.metrics)
            .map_err(|e| ServerError::invalid(e.to_string()))?;
        Ok(RunResults {
            protocol_version: PROTOCOL_VERSION,
            run_id: self.config.run_id.clone(),
            report,
            decisions,
        })
    }
}
