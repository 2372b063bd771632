use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use erd_core::corpus::{load_corpus, Corpus};
use erd_core::metrics::MetricsConfig;

use crate::protocol::{Ack, CreateRunRequest, DecisionSubmission, RoundPayload, RunCreated, RunResults, PROTOCOL_VERSION};
use crate::state::{check_version, RunConfig, RunState, ServerError};

/// Corpora the server can replay and the runs over them. Runs are
/// independent; operations on one run are serialized by its own lock.
#[derive(Debug)]
pub struct Registry {
    corpora: RwLock<BTreeMap<String, Arc<Corpus>>>,
    runs: Mutex<BTreeMap<String, Arc<Mutex<RunState>>>>,
    next_id: AtomicUsize,
    metrics: MetricsConfig<f64>,
}

impl Default for Registry {
    fn default() -> Self {
        Registry::new(MetricsConfig::default())
    }
}

impl Registry {
    pub fn new(metrics: MetricsConfig<f64>) -> Self {
        Registry {
            corpora: RwLock::new(BTreeMap::new()),
            runs: Mutex::new(BTreeMap::new()),
            next_id: AtomicUsize::new(1),
            metrics,
        }
    }

    /// Loads every `*.jsonl` file in `dir`.
    pub fn from_dir(dir: &Path, metrics: MetricsConfig<f64>) -> erd_core::Result<Self> {
        let reg = Registry::new(metrics);
        let entries = std::fs::read_dir(dir).map_err(|e| erd_core::ErdError::Config(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for p in paths {
            reg.add_corpus(load_corpus(&p)?);
        }
        Ok(reg)
    }

    /// Registers a corpus under its name, replacing any earlier one.
    pub fn add_corpus(&self, corpus: Corpus) {
        log::info!("serving corpus {} ({} users)", corpus.name, corpus.len());
        self.corpora.write().unwrap().insert(corpus.name.clone(), Arc::new(corpus));
    }

    pub fn corpus_names(&self) -> Vec<String> {
        self.corpora.read().unwrap().keys().cloned().collect()
    }

    pub fn create_run(&self, req: &CreateRunRequest) -> Result<RunCreated, ServerError> {
        check_version(req.protocol_version)?;
        let corpus = self
            .corpora
            .read()
            .unwrap()
            .get(&req.corpus)
            .cloned()
            .ok_or_else(|| ServerError::NotFound(format!("unknown corpus {:?}", req.corpus)))?;
        let metrics = req.metrics.clone().unwrap_or_else(|| self.metrics.clone());
        let id = format!("run-{:04}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let config = RunConfig::new(id.clone(), corpus, metrics)?;
        let created = RunCreated {
            protocol_version: PROTOCOL_VERSION,
            run_id: id.clone(),
            corpus: config.corpus.name.clone(),
            users: config.corpus.len(),
            round_limit: config.round_limit,
        };
        self.runs.lock().unwrap().insert(id, Arc::new(Mutex::new(RunState::new(config))));
        log::debug!("created {}", created.run_id);
        Ok(created)
    }

    fn run(&self, run_id: &str) -> Result<Arc<Mutex<RunState>>, ServerError> {
        self.runs
            .lock()
            .unwrap()
            .get(run_id)
            .cloned()
            .ok_or_else(|| ServerError::NotFound(format!("unknown run {run_id:?}")))
    }

    /// Snapshot of a run, for inspection.
    pub fn state(&self, run_id: &str) -> Result<RunState, ServerError> {
        Ok(self.run(run_id)?.lock().unwrap().clone())
    }

    pub fn next_round(&self, run_id: &str) -> Result<RoundPayload, ServerError> {
        self.run(run_id)?.lock().unwrap().next_round()
    }

    pub fn submit_decisions(&self, run_id: &str, submission: &DecisionSubmission) -> Result<Ack, ServerError> {
        self.run(run_id)?.lock().unwrap().submit(submission)
    }

    pub fn results(&self, run_id: &str) -> Result<RunResults, ServerError> {
        self.run(run_id)?.lock().unwrap().results()
    }
}
