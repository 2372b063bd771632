//! Round-based mock-server for early risk detection, and its client.
//!
//! A run replays a corpus one post per active user per round. The client
//! must answer for every user in the round before the next one is released;
//! an alarm retires the user as positive at that round, and a user whose
//! last post was answered with "continue" retires as negative. Once every
//! user is retired the server scores the run with ERDE_θ and F-latency.
//!
//! Endpoints (JSON, all bodies carry `protocol_version`):
//!
//! | method | path                    | body                 | reply          |
//! |--------|-------------------------|----------------------|----------------|
//! | POST   | `/runs`                 | [`CreateRunRequest`] | [`RunCreated`] |
//! | GET    | `/runs/{id}/round`      |                      | [`RoundPayload`] |
//! | POST   | `/runs/{id}/decisions`  | [`DecisionSubmission`] | [`Ack`]      |
//! | GET    | `/runs/{id}/results`    |                      | [`RunResults`] |
//!
//! Errors come back as [`ErrorBody`] with 404 (unknown corpus or run), 409
//! (out-of-order or duplicate request, results before the end), 410 (run
//! finished) or 422 (malformed submission).

pub mod client;
pub mod endpoint;
pub mod http;
pub mod protocol;
pub mod registry;
pub mod state;

pub use client::{client_run, decision_log_csv, policy_decide, Action, ClientRun, LogRow, PolicyConfig, Scoring};
pub use endpoint::{ClientError, Endpoint, HttpEndpoint, InProcess, RetryPolicy};
pub use http::{router, serve_blocking, spawn_server, ServerHandle};
pub use protocol::{
    Ack, Answer, CreateRunRequest, DecisionSubmission, ErrorBody, ErrorKind, RoundItem, RoundPayload, RunCreated,
    RunResults, PROTOCOL_VERSION,
};
pub use registry::Registry;
pub use state::{ReplayStatus, RunConfig, RunState, ServerError};
