//! The pinned synthetic benchmark, in memory: generate, split, train, and
//! score the held-out users offline and through the mock-server.

use std::sync::Arc;
use std::time::{Duration, Instant};

use erd_core::corpus::{generate_synthetic, Corpus, Split};
use erd_core::model::{probe_time_sensitivity, ProbePoint};
use erd_core::trainer::{fit, validate_epoch};
use erd_core::{MetricsReport, ModelParams, TimeMode};
use erd_server::{client_run, ClientRun, CreateRunRequest, InProcess, Registry, Scoring};

use crate::config::PipelineConfig;
use crate::error::CliError;

/// Splits the generated corpus into `<name>_train` and `<name>_test`.
pub fn split_benchmark(all: &Corpus, test_users: usize, seed: u64) -> Result<(Corpus, Corpus), CliError> {
    let (mut train, mut test) = all.split_stratified(test_users, seed, Split::Test)?;
    train.name = format!("{}_train", all.name);
    train.split = Split::Train;
    test.name = format!("{}_test", all.name);
    Ok((train, test))
}

/// Carves the validation users out of the training split.
pub fn carve_validation(train: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus), CliError> {
    let n = ((train.len() as f64 * fraction).round() as usize).max(1);
    Ok(train.split_stratified(n, seed, Split::Trial)?)
}

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub seed: u64,
    pub mode: TimeMode,
    pub best_epoch: usize,
    pub params: ModelParams,
    pub test: Corpus,
    /// Frozen checkpoint-schedule evaluation of the held-out split.
    pub offline: MetricsReport,
    /// Mock-server run with the post-by-post client.
    pub per_round: ClientRun,
    /// Mock-server run with the checkpoint-restricted client.
    pub checkpoint: ClientRun,
    pub probe: Vec<ProbePoint<f64>>,
    pub elapsed: Duration,
}

/// Runs the whole benchmark for one seed and mode.
pub fn run_benchmark(base: &PipelineConfig, seed: u64, mode: TimeMode) -> Result<BenchmarkRun, CliError> {
    let started = Instant::now();
    let mut cfg = base.clone().with_seed(seed);
    cfg.train.mode = mode;
    cfg.validate()?;

    let all = generate_synthetic(&cfg.synthetic)?;
    let (train, test) = split_benchmark(&all, cfg.benchmark.test_users, seed)?;
    let (train, val) = carve_validation(&train, cfg.train.validation_fraction, seed)?;
    let fitted = fit(&train, &val, &cfg.train, |_, _, _| Ok(()))?;
    let params = fitted.best_params;

    let eval_cfg = cfg.evaluation_train_config();
    let offline = validate_epoch(&params, &test, &eval_cfg)?.report;

    let registry = Registry::new(cfg.metrics.clone());
    registry.add_corpus(test.clone());
    let mut endpoint = InProcess(Arc::new(registry));
    let request = CreateRunRequest::new(test.name.clone());
    let per_round = client_run(&mut endpoint, &request, &params, &cfg.policy, None)?;
    let ckpt_policy = erd_server::PolicyConfig { scoring: Scoring::Checkpoint, ..cfg.policy.clone() };
    let checkpoint = client_run(&mut endpoint, &request, &params, &ckpt_policy, None)?;

    let probe = probe_time_sensitivity(&params, &cfg.probe_sentence(), &cfg.probe.times, cfg.policy.threshold)?;
    Ok(BenchmarkRun {
        seed,
        mode,
        best_epoch: fitted.best_epoch,
        params,
        test,
        offline,
        per_round,
        checkpoint,
        probe,
        elapsed: started.elapsed(),
    })
}
