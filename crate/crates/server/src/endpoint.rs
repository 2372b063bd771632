use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::protocol::{Ack, CreateRunRequest, DecisionSubmission, ErrorBody, RoundPayload, RunCreated, RunResults};
use crate::registry::Registry;
use crate::state::ServerError;

#[derive(Debug, Error)]
pub enum ClientError {
    /// The server answered with an error body; surfaced as received.
    #[error("server rejected the request ({status}): {}", body.message)]
    Protocol { status: u16, body: ErrorBody },

    #[error("unexpected response ({status}): {text}")]
    Unexpected { status: u16, text: String },

    #[error("network failure after {attempts} attempts: {message}")]
    Network { attempts: usize, message: String },

    #[error(transparent)]
    Core(#[from] erd_core::ErdError),

    #[error("cannot write decision log {path}: {source}")]
    Log {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<ServerError> for ClientError {
    fn from(e: ServerError) -> Self {
        ClientError::Protocol { status: e.kind().status(), body: e.body() }
    }
}

/// The four mock-server operations, wherever the server lives.
pub trait Endpoint {
    fn create_run(&mut self, req: &CreateRunRequest) -> Result<RunCreated, ClientError>;
    fn next_round(&mut self, run_id: &str) -> Result<RoundPayload, ClientError>;
    fn submit_decisions(&mut self, run_id: &str, submission: &DecisionSubmission) -> Result<Ack, ClientError>;
    fn results(&mut self, run_id: &str) -> Result<RunResults, ClientError>;
}

/// Calls the registry directly, no sockets involved.
#[derive(Debug, Clone)]
pub struct InProcess(pub Arc<Registry>);

impl Endpoint for InProcess {
    fn create_run(&mut self, req: &CreateRunRequest) -> Result<RunCreated, ClientError> {
        Ok(self.0.create_run(req)?)
    }

    fn next_round(&mut self, run_id: &str) -> Result<RoundPayload, ClientError> {
        Ok(self.0.next_round(run_id)?)
    }

    fn submit_decisions(&mut self, run_id: &str, submission: &DecisionSubmission) -> Result<Ack, ClientError> {
        Ok(self.0.submit_decisions(run_id, submission)?)
    }

    fn results(&mut self, run_id: &str) -> Result<RunResults, ClientError> {
        Ok(self.0.results(run_id)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Attempts in total, including the first.
    pub attempts: usize,
    /// Delay before the second attempt; doubles afterwards.
    pub backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 4, backoff: Duration::from_millis(100), timeout: Duration::from_secs(30) }
    }
}

/// JSON over HTTP. Only transport failures are retried; any HTTP answer,
/// error or not, is final.
pub struct HttpEndpoint {
    base: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl HttpEndpoint {
    pub fn new(base_url: impl Into<String>, retry: RetryPolicy) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(retry.timeout))
            .build()
            .into();
        HttpEndpoint { base: base_url.into().trim_end_matches('/').to_string(), agent, retry }
    }

    fn call<T: DeserializeOwned>(&self, path: &str, body: Option<&impl Serialize>) -> Result<T, ClientError> {
        let url = format!("{}{}", self.base, path);
        let mut delay = self.retry.backoff;
        let attempts = self.retry.attempts.max(1);
        for attempt in 1..=attempts {
            let sent = match body {
                Some(b) => self.agent.post(&url).send_json(b),
                None => self.agent.get(&url).call(),
            };
            match sent {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.body_mut().read_to_string().map_err(|e| ClientError::Network {
                        attempts: attempt,
                        message: e.to_string(),
                    })?;
                    if (200..300).contains(&status) {
                        return serde_json::from_str(&text).map_err(|_| ClientError::Unexpected { status, text });
                    }
                    return Err(match serde_json::from_str::<ErrorBody>(&text) {
                        Ok(body) => ClientError::Protocol { status, body },
                        Err(_) => ClientError::Unexpected { status, text },
                    });
                }
                Err(e) if attempt == attempts => {
                    return Err(ClientError::Network { attempts, message: e.to_string() });
                }
                Err(e) => {
                    log::warn!("{url}: {e}; retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
        unreachable!("loop returns on the last attempt")
    }
}

impl Endpoint for HttpEndpoint {
    fn create_run(&mut self, req: &CreateRunRequest) -> Result<RunCreated, ClientError> {
        self.call("/runs", Some(req))
    }

    fn next_round(&mut self, run_id: &str) -> Result<RoundPayload, ClientError> {
        self.call(&format!("/runs/{run_id}/round"), None::<&()>)
    }

    fn submit_decisions(&mut self, run_id: &str, submission: &DecisionSubmission) -> Result<Ack, ClientError> {
        self.call(&format!("/runs/{run_id}/decisions"), Some(submission))
    }

    fn results(&mut self, run_id: &str) -> Result<RunResults, ClientError> {
        self.call(&format!("/runs/{run_id}/results"), None::<&()>)
    }
}
