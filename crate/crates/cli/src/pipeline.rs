use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use erd_core::corpus::{generate_synthetic, load_corpus, save_corpus, Corpus, CorpusStats, Split};
use erd_core::model::{load_checkpoint, probe_time_sensitivity, save_checkpoint, ProbePoint};
use erd_core::trainer::{export_timeline, fit, selection_score, validate_epoch, Stage};
use erd_core::{Decision, EpochLog, MetricsReport, ModelParams, TimeMode};
use erd_server::{
    client_run, spawn_server, ClientRun, CreateRunRequest, Endpoint, HttpEndpoint, PolicyConfig, Registry,
    RetryPolicy, Scoring, ServerHandle,
};
use serde::{Deserialize, Serialize};

use crate::benchmark::{carve_validation, split_benchmark};
use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::manifest::Manifest;

pub const OFFLINE: &str = "offline";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn require(path: &Path, hint: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{} does not exist; {hint}", path.display())))
    }
}

/// Report file contents: one evaluator's scores for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub model: String,
    pub evaluator: String,
    pub corpus: String,
    pub seed: u64,
    pub report: MetricsReport,
}

impl EvaluationRecord {
    pub fn file_name(model: &str, evaluator: &str) -> String {
        format!("{model}.{evaluator}.json")
    }
}

pub fn evaluator_name(scoring: Scoring) -> &'static str {
    match scoring {
        Scoring::PerRound => "server",
        Scoring::Checkpoint => "server_checkpoint",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestMarker {
    pub mode: TimeMode,
    pub best_epoch: usize,
    pub selection_score: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GenerateOutput {
    pub files: Vec<PathBuf>,
    pub stats: Vec<CorpusStats>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub best_epoch: usize,
    pub best_checkpoint: PathBuf,
    pub logs: Vec<EpochLog>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct EvaluateOutput {
    pub record: EvaluationRecord,
    pub decisions: Vec<Decision>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ClientOutput {
    pub record: EvaluationRecord,
    pub run: ClientRun,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub comparison: Vec<EvaluationRecord>,
    pub probes: Vec<(String, Vec<ProbePoint<f64>>)>,
    pub files: Vec<PathBuf>,
}

/// Corpus statistics block: users, positives, negatives, mean/min/max posts.
pub fn stats_table(stats: &[CorpusStats]) -> String {
    let mut out = format!("{:<24} {:>6} {:>5} {:>5} {:>7} {:>5} {:>5}\n", "corpus", "users", "pos", "neg", "mean", "min", "max");
    for s in stats {
        let _ = writeln!(
            out,
            "{:<24} {:>6} {:>5} {:>5} {:>7.2} {:>5} {:>5}",
            s.name, s.users, s.positives, s.negatives, s.mean_posts, s.min_posts, s.max_posts
        );
    }
    out
}

/// One row per model per evaluator.
pub fn comparison_csv(records: &[EvaluationRecord]) -> String {
    let mut out = String::new();
    for (i, r) in records.iter().enumerate() {
        if i == 0 {
            let _ = writeln!(out, "model,evaluator,corpus,{}", r.report.csv_header());
        }
        let _ = writeln!(out, "{},{},{},{}", r.model, r.evaluator, r.corpus, r.report.csv_row());
    }
    out
}

pub fn probe_csv(probes: &[(String, Vec<ProbePoint<f64>>)]) -> String {
    let mut out = String::from("model,t,probability,positive\n");
    for (model, points) in probes {
        for p in points {
            let _ = writeln!(out, "{model},{},{},{}", p.k, p.probability, p.positive as u8);
        }
    }
    out
}

fn decisions_csv(decisions: &[Decision]) -> String {
    let mut out = String::from("user_id,decision,k\n");
    for d in decisions {
        let _ = writeln!(out, "{},{},{}", d.user_id, d.verdict.is_positive() as u8, d.k);
    }
    out
}

/// The run directory and the configuration every command reads.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub root: PathBuf,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, root: impl Into<PathBuf>) -> Result<Self, CliError> {
        cfg.validate()?;
        Ok(Pipeline { cfg, root: root.into() })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.resolve(&self.cfg.paths.corpus)
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.resolve(&self.cfg.paths.checkpoints)
    }

    pub fn logs_dir(&self) -> PathBuf {
        self.resolve(&self.cfg.paths.logs)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.resolve(&self.cfg.paths.reports)
    }

    pub fn corpus_name(&self, split: Split) -> String {
        format!("{}_{split}", self.cfg.synthetic.name)
    }

    pub fn corpus_file(&self, split: Split) -> PathBuf {
        self.corpus_dir().join(format!("{}.jsonl", self.corpus_name(split)))
    }

    pub fn best_checkpoint(&self, mode: TimeMode) -> PathBuf {
        self.checkpoints_dir().join(mode.to_string()).join("best.ckpt")
    }

    fn finish(&self, command: &str, mut files: Vec<PathBuf>) -> Result<Vec<PathBuf>, CliError> {
        files.push(write(&self.root.join("config.toml"), self.cfg.to_toml_string())?);
        Manifest::record(&self.root, command, self.cfg.seed, &files)?;
        Ok(files)
    }

    pub fn generate(&self) -> Result<GenerateOutput, CliError> {
        let all = generate_synthetic(&self.cfg.synthetic)?;
        let (train, test) = split_benchmark(&all, self.cfg.benchmark.test_users, self.cfg.seed)?;
        fs::create_dir_all(self.corpus_dir()).map_err(|e| CliError::io(self.corpus_dir(), e))?;
        let mut files = vec![];
        let mut stats = vec![];
        for (corpus, split) in [(&train, Split::Train), (&test, Split::Test)] {
            let path = self.corpus_file(split);
            save_corpus(corpus, &path)?;
            stats.push(corpus.stats());
            files.push(path);
        }
        let files = self.finish("generate", files)?;
        Ok(GenerateOutput { files, stats })
    }

    /// Trains in `cfg.train.mode`; checkpoints and logs go to per-mode subdirectories.
    pub fn train(&self) -> Result<TrainOutput, CliError> {
        let train_path = self.corpus_file(Split::Train);
        require(&train_path, "run `erd generate` first")?;
        let mode = self.cfg.train.mode;
        let corpus = load_corpus(&train_path)?;
        let (train, val) = carve_validation(&corpus, self.cfg.train.validation_fraction, self.cfg.seed)?;
        let ckpt_dir = self.checkpoints_dir().join(mode.to_string());
        fs::create_dir_all(&ckpt_dir).map_err(|e| CliError::io(&ckpt_dir, e))?;

        let mut files = vec![];
        let fitted = fit(&train, &val, &self.cfg.train, |log, params, opt| {
            let path = ckpt_dir.join(format!("epoch_{:02}.ckpt", log.epoch));
            save_checkpoint(params, Some(opt), &path)?;
            files.push(path);
            Ok(())
        })?;

        let best_checkpoint = self.best_checkpoint(mode);
        save_checkpoint(&fitted.best_params, None, &best_checkpoint)?;
        files.push(best_checkpoint.clone());
        let marker = BestMarker {
            mode,
            best_epoch: fitted.best_epoch,
            selection_score: selection_score(&fitted.logs[fitted.best_epoch], self.cfg.train.w_acc, self.cfg.train.w_erde),
            seed: self.cfg.seed,
        };
        files.push(write(&ckpt_dir.join("best.json"), serde_json::to_string_pretty(&marker).expect("marker") + "\n")?);

        let log_dir = self.logs_dir().join(mode.to_string());
        files.push(write(&log_dir.join("epochs.json"), serde_json::to_string(&fitted.logs).expect("logs"))?);
        let mut summary = String::from("epoch,train_loss,val_loss,val_accuracy,val_erde,selection_score\n");
        for l in &fitted.logs {
            let _ = writeln!(
                summary,
                "{},{},{},{},{},{}",
                l.epoch,
                l.train.loss,
                l.validation.stage.loss,
                l.validation.accuracy,
                l.validation.erde,
                selection_score(l, self.cfg.train.w_acc, self.cfg.train.w_erde)
            );
        }
        files.push(write(&log_dir.join("epochs.csv"), summary)?);
        let files = self.finish(&format!("train_{mode}"), files)?;
        Ok(TrainOutput { best_epoch: fitted.best_epoch, best_checkpoint, logs: fitted.logs, files })
    }

    pub fn load_params(&self, checkpoint: &Path) -> Result<ModelParams, CliError> {
        require(checkpoint, "run `erd train` first or pass --checkpoint")?;
        let ckpt = load_checkpoint::<f64>(checkpoint)?;
        ckpt.ensure_compatible(self.cfg.train.feature_dim, ckpt.params.meta.mode)?;
        if ckpt.params.meta.window_size != self.cfg.policy.window_size {
            return Err(CliError::Config(format!(
                "{} was trained with window size {}, the policy uses {}",
                checkpoint.display(),
                ckpt.params.meta.window_size,
                self.cfg.policy.window_size
            )));
        }
        Ok(ckpt.params)
    }

    /// Frozen checkpoint-schedule evaluation of any corpus file.
    pub fn evaluate(&self, checkpoint: &Path, corpus: &Path, model: &str) -> Result<EvaluateOutput, CliError> {
        let params = self.load_params(checkpoint)?;
        require(corpus, "run `erd generate` first or pass --corpus")?;
        let gold = load_corpus(corpus)?;
        let log = validate_epoch(&params, &gold, &self.cfg.evaluation_train_config())?;
        let record = EvaluationRecord {
            model: model.to_string(),
            evaluator: OFFLINE.into(),
            corpus: gold.name.clone(),
            seed: self.cfg.seed,
            report: log.report,
        };
        let files = vec![
            write(&self.reports_dir().join(EvaluationRecord::file_name(model, OFFLINE)), serde_json::to_string_pretty(&record).expect("record") + "\n")?,
            write(&self.logs_dir().join(format!("decisions_{model}_{OFFLINE}.csv")), decisions_csv(&log.decisions))?,
        ];
        let files = self.finish(&format!("evaluate_{model}"), files)?;
        Ok(EvaluateOutput { record, decisions: log.decisions, files })
    }

    pub fn registry(&self) -> Result<Registry, CliError> {
        let dir = self.cfg.server.corpus_dir.clone().map(|d| self.resolve(&d)).unwrap_or_else(|| self.corpus_dir());
        require(&dir, "run `erd generate` first or set server.corpus_dir")?;
        let metrics = match &self.cfg.server.metrics_file {
            Some(f) => {
                let f = self.resolve(f);
                let text = fs::read_to_string(&f).map_err(|e| CliError::io(&f, e))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", f.display())))?
            }
            None => self.cfg.metrics.clone(),
        };
        Ok(Registry::from_dir(&dir, metrics)?)
    }

    pub fn server_addr(&self) -> Result<SocketAddr, CliError> {
        format!("{}:{}", self.cfg.server.host, self.cfg.server.port)
            .parse()
            .map_err(|e| CliError::Config(format!("server address: {e}")))
    }

    /// Starts the mock-server on a background thread; port 0 picks a free one.
    pub fn spawn_server(&self, addr: SocketAddr) -> Result<ServerHandle, CliError> {
        spawn_server(Arc::new(self.registry()?), addr).map_err(CliError::Server)
    }

    /// Serves until interrupted.
    pub fn serve(&self) -> Result<(), CliError> {
        let registry = self.registry()?;
        log::info!("corpora: {}", registry.corpus_names().join(", "));
        erd_server::serve_blocking(Arc::new(registry), self.server_addr()?).map_err(CliError::Server)
    }

    pub fn client<E: Endpoint + ?Sized>(
        &self,
        endpoint: &mut E,
        checkpoint: &Path,
        model: &str,
        corpus: &str,
        policy: &PolicyConfig,
    ) -> Result<ClientOutput, CliError> {
        let params = self.load_params(checkpoint)?;
        let evaluator = evaluator_name(policy.scoring);
        let log_path = self.logs_dir().join(format!("decisions_{model}_{evaluator}.csv"));
        fs::create_dir_all(self.logs_dir()).map_err(|e| CliError::io(self.logs_dir(), e))?;
        let run = client_run(endpoint, &CreateRunRequest::new(corpus), &params, policy, Some(&log_path))?;
        let record = EvaluationRecord {
            model: model.to_string(),
            evaluator: evaluator.into(),
            corpus: corpus.into(),
            seed: self.cfg.seed,
            report: run.report.clone(),
        };
        let files = vec![
            log_path,
            write(&self.reports_dir().join(EvaluationRecord::file_name(model, evaluator)), serde_json::to_string_pretty(&record).expect("record") + "\n")?,
        ];
        let files = self.finish(&format!("client_{model}_{evaluator}"), files)?;
        Ok(ClientOutput { record, run, files })
    }

    /// Client over HTTP against `base_url`.
    pub fn http_client(&self, base_url: &str, checkpoint: &Path, model: &str, policy: &PolicyConfig) -> Result<ClientOutput, CliError> {
        let mut endpoint = HttpEndpoint::new(base_url, RetryPolicy::default());
        self.client(&mut endpoint, checkpoint, model, &self.corpus_name(Split::Test), policy)
    }

    /// Timelines, the offline-versus-server table and the time-sensitivity probe.
    pub fn report(&self) -> Result<ReportOutput, CliError> {
        let mut files = vec![];
        let out = self.reports_dir();
        let theta = self.cfg.metrics.theta;
        let mut found_logs = false;
        for mode in [TimeMode::Temporal, TimeMode::SlidingWindow] {
            let path = self.logs_dir().join(mode.to_string()).join("epochs.json");
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let logs: Vec<EpochLog> = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if logs.is_empty() {
                continue;
            }
            found_logs = true;
            for stage in [Stage::Train, Stage::Validation] {
                let (csv, svg) = export_timeline(&logs, stage, out.join("timelines").join(mode.to_string()), theta, self.cfg.train.window_size)?;
                files.extend([csv, svg]);
            }
        }

        let mut comparison = vec![];
        if out.exists() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&out)
                .map_err(|e| CliError::io(&out, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for p in paths {
                let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
                if let Ok(r) = serde_json::from_str::<EvaluationRecord>(&text) {
                    comparison.push(r);
                }
            }
        }
        comparison.sort_by(|a, b| (&a.model, &a.evaluator).cmp(&(&b.model, &b.evaluator)));

        let mut probes = vec![];
        for mode in [TimeMode::Temporal, TimeMode::SlidingWindow] {
            let ckpt = self.best_checkpoint(mode);
            if ckpt.exists() {
                let params = self.load_params(&ckpt)?;
                let points = probe_time_sensitivity(&params, &self.cfg.probe_sentence(), &self.cfg.probe.times, self.cfg.policy.threshold)?;
                probes.push((mode.to_string(), points));
            }
        }

        if !found_logs && comparison.is_empty() && probes.is_empty() {
            return Err(CliError::Config(format!("nothing to report under {}", self.root.display())));
        }
        if !comparison.is_empty() {
            files.push(write(&out.join("comparison.csv"), comparison_csv(&comparison))?);
        }
        if !probes.is_empty() {
            files.push(write(&out.join("probe.csv"), probe_csv(&probes))?);
        }
        let files = self.finish("report", files)?;
        Ok(ReportOutput { comparison, probes, files })
    }

    pub fn load_test_corpus(&self) -> Result<Corpus, CliError> {
        let p = self.corpus_file(Split::Test);
        require(&p, "run `erd generate` first")?;
        Ok(load_corpus(&p)?)
    }
}
