use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use erd_core::corpus::TimedWindow;
use erd_core::metrics::{Decision, MetricsReport};
use erd_core::model::{predict_proba, ModelParams};
use erd_core::trainer::DecisionRule;
use erd_core::ErdError;
use serde::{Deserialize, Serialize};

use crate::endpoint::{ClientError, Endpoint};
use crate::protocol::{Answer, CreateRunRequest, DecisionSubmission};

/// When the client runs the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Every round, on the last `M` posts, with `k` = round.
    #[default]
    PerRound,
    /// Only at rounds that are multiples of `M` or at a user's last post,
    /// with `k` rounded up to the next multiple of `M`. Mirrors the
    /// offline validation schedule.
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub threshold: f64,
    pub min_delay: usize,
    pub window_size: usize,
    pub scoring: Scoring,
    /// Model file; the CLI loads it, [`client_run`] takes parameters directly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { threshold: 0.7, min_delay: 5, window_size: 10, scoring: Scoring::PerRound, checkpoint: None }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> erd_core::Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ErdError::Config(format!("threshold {} is not in (0, 1)", self.threshold)));
        }
        if self.min_delay == 0 {
            return Err(ErdError::Config("minDelay must be at least 1".into()));
        }
        if self.window_size == 0 {
            return Err(ErdError::Config("window size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn rule(&self) -> DecisionRule {
        DecisionRule { threshold: self.threshold, min_delay: self.min_delay }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Alarm,
    Continue,
}

/// Alarm iff `p > threshold` and at least `min_delay` posts were read.
pub fn policy_decide(p: f64, k: usize, policy: &PolicyConfig) -> Action {
    debug_assert!((0.0..=1.0).contains(&p) && k >= 1);
    if policy.rule().is_positive(p, k) {
        Action::Alarm
    } else {
        Action::Continue
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub round: usize,
    pub user_id: String,
    /// `None` for rounds the checkpoint client does not score.
    pub score: Option<f64>,
    pub action: Action,
}

pub const DECISION_LOG_HEADER: &str = "round,user_id,score,action";

pub fn decision_log_csv(rows: &[LogRow]) -> String {
    let mut out = format!("{DECISION_LOG_HEADER}\n");
    for r in rows {
        let score = r.score.map(|s| s.to_string()).unwrap_or_default();
        let action = match r.action {
            Action::Alarm => "alarm",
            Action::Continue => "continue",
        };
        let _ = writeln!(out, "{},{},{},{}", r.round, r.user_id, score, action);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientRun {
    pub run_id: String,
    pub rounds: usize,
    pub report: MetricsReport<f64>,
    pub decisions: Vec<Decision>,
    pub log: Vec<LogRow>,
}

impl ClientRun {
    /// Round at which each flagged user was alarmed.
    pub fn alarm_rounds(&self) -> BTreeMap<&str, usize> {
        self.log
            .iter()
            .filter(|r| r.action == Action::Alarm)
            .map(|r| (r.user_id.as_str(), r.round))
            .collect()
    }
}

#[derive(Default)]
struct Seen {
    posts: VecDeque<String>,
    read: usize,
}

/// Plays one full run against `endpoint` and fetches the server's scores.
/// When `log_path` is given the decision log is written there as CSV.
pub fn client_run<E: Endpoint + ?Sized>(
    endpoint: &mut E,
    request: &CreateRunRequest,
    params: &ModelParams<f64>,
    policy: &PolicyConfig,
    log_path: Option<&Path>,
) -> Result<ClientRun, ClientError> {
    policy.validate()?;
    let m = policy.window_size;
    let run = endpoint.create_run(request)?;
    log::info!("{}: {} users, up to {} rounds", run.run_id, run.users, run.round_limit);

    let mut seen: BTreeMap<String, Seen> = BTreeMap::new();
    let mut log = Vec::new();
    let rounds = loop {
        let payload = endpoint.next_round(&run.run_id)?;
        let r = payload.round;
        let mut answers = Vec::with_capacity(payload.items.len());
        for item in &payload.items {
            let s = seen.entry(item.user_id.clone()).or_default();
            if item.post_index != s.read || item.post_index + 1 != r {
                return Err(ClientError::Unexpected {
                    status: 200,
                    text: format!("round {r} sent post {} of {} out of order", item.post_index, item.user_id),
                });
            }
            s.read += 1;
            s.posts.push_back(item.post.clone());
            if s.posts.len() > m {
                s.posts.pop_front();
            }

            let k = match policy.scoring {
                Scoring::PerRound => Some(r),
                Scoring::Checkpoint if r % m == 0 || item.last => Some(r.div_ceil(m) * m),
                Scoring::Checkpoint => None,
            };
            let (score, action) = match k {
                Some(k) => {
                    let window = TimedWindow {
                        user_id: item.user_id.clone(),
                        delay: k,
                        text: s.posts.iter().map(String::as_str).collect::<Vec<_>>().join(" "),
                        start: r - s.posts.len(),
                        end: r,
                    };
                    let p = predict_proba(params, &params.featurize(&window))?.probability;
                    (Some(p), policy_decide(p, r, policy))
                }
                None => (None, Action::Continue),
            };
            answers.push(Answer {
                user_id: item.user_id.clone(),
                decision: (action == Action::Alarm) as u8,
                score: score.unwrap_or(0.0),
            });
            log.push(LogRow { round: r, user_id: item.user_id.clone(), score, action });
        }
        let ack = endpoint.submit_decisions(&run.run_id, &DecisionSubmission::new(r, answers))?;
        log::debug!("round {r}: {} flagged, {} exhausted, {} left", ack.flagged, ack.exhausted, ack.remaining);
        if ack.finished {
            break r;
        }
    };
    let results = endpoint.results(&run.run_id)?;
    if let Some(path) = log_path {
        std::fs::write(path, decision_log_csv(&log)).map_err(|source| ClientError::Log { path: path.to_path_buf(), source })?;
    }
    Ok(ClientRun { run_id: run.run_id, rounds, report: results.report, decisions: results.decisions, log })
}
