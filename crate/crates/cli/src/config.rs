use std::path::{Path, PathBuf};

use erd_core::corpus::SyntheticSpec;
use erd_core::trainer::DecisionRule;
use erd_core::{MetricsConfig, TrainConfig};
use erd_server::PolicyConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Where each kind of artifact goes, relative to the run directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub corpus: PathBuf,
    pub checkpoints: PathBuf,
    pub logs: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "corpus".into(),
            checkpoints: "checkpoints".into(),
            logs: "logs".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    /// Users held out as the test split by `generate`.
    pub test_users: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig { test_users: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Directory of `*.jsonl` corpora to serve; the run's corpus directory when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_dir: Option<PathBuf>,
    /// TOML file with a metrics section overriding `metrics`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics_file: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { host: "127.0.0.1".into(), port: 8750, corpus_dir: None, metrics_file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Sentence scored at every delay; the synthetic risk vocabulary when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentence: Option<String>,
    pub times: Vec<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { sentence: None, times: (1..=10).map(|i| i * 10).collect() }
    }
}

/// Everything a run needs. Loaded from TOML; missing keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Seeds the generator, the splits and training.
    pub seed: u64,
    pub paths: Paths,
    pub benchmark: BenchmarkConfig,
    pub synthetic: SyntheticSpec,
    pub train: TrainConfig,
    pub policy: PolicyConfig,
    pub metrics: MetricsConfig,
    pub server: ServerConfig,
    pub probe: ProbeConfig,
}

impl Default for PipelineConfig {
    /// The pinned benchmark: 300 users at 45% positives split 200/100,
    /// M = 10, θ = 30, threshold 0.7, minDelay 5, 10 epochs.
    fn default() -> Self {
        let seed = 7;
        let policy = PolicyConfig::default();
        PipelineConfig {
            seed,
            paths: Paths::default(),
            benchmark: BenchmarkConfig::default(),
            synthetic: SyntheticSpec { seed, n_users: 300, positive_ratio: 0.45, ..SyntheticSpec::default() },
            train: TrainConfig {
                seed,
                validation_rule: DecisionRule { threshold: policy.threshold, min_delay: policy.min_delay },
                ..TrainConfig::default()
            },
            policy,
            metrics: MetricsConfig::default(),
            server: ServerConfig::default(),
            probe: ProbeConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, CliError> {
        toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Sets the one seed every random choice derives from.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.synthetic.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.synthetic.validate()?;
        self.train.validate()?;
        self.policy.validate()?;
        self.metrics.validate()?;
        if self.policy.window_size != self.train.window_size {
            return Err(CliError::Config(format!(
                "policy window size {} differs from the training window size {}",
                self.policy.window_size, self.train.window_size
            )));
        }
        if self.benchmark.test_users >= self.synthetic.n_users {
            return Err(CliError::Config(format!(
                "cannot hold out {} of {} users",
                self.benchmark.test_users, self.synthetic.n_users
            )));
        }
        if self.probe.times.contains(&0) {
            return Err(CliError::Config("probe times must be at least 1".into()));
        }
        Ok(())
    }

    pub fn probe_sentence(&self) -> String {
        self.probe.sentence.clone().unwrap_or_else(|| self.synthetic.risk_vocabulary().join(" "))
    }

    /// Offline evaluation settings that agree with the client's policy.
    pub fn evaluation_train_config(&self) -> TrainConfig {
        TrainConfig {
            validation_rule: self.policy.rule(),
            metrics: self.metrics.clone(),
            loss: erd_core::trainer::LossConfig { theta: self.metrics.theta, ..self.train.loss },
            ..self.train.clone()
        }
    }
}
