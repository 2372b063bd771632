use serde::{Deserialize, Serialize};

use super::pass::{run_delay_pass, Learner, PassConfig, UserRunState, UserStatus};
use super::{TimelineEntry, TrainConfig};
use crate::corpus::{Corpus, DelaySchedule};
use crate::error::{ErdError, Result};
use crate::metrics::{classify_outcome, evaluate, Decision, MetricsReport};
use crate::model::{ModelParams, OptimizerState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct DelayLoss<F> {
    pub k: usize,
    pub users: usize,
    pub loss: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct StageLog<F> {
    /// Mean temporal loss over every (user, checkpoint) evaluation.
    pub loss: F,
    pub delay_losses: Vec<DelayLoss<F>>,
    pub timeline: Vec<TimelineEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ValidationLog<F> {
    pub stage: StageLog<F>,
    pub accuracy: F,
    /// ERDE at the training deadline.
    pub erde: F,
    pub report: MetricsReport<F>,
    pub decisions: Vec<Decision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct EpochLog<F> {
    pub epoch: usize,
    pub train: StageLog<F>,
    pub validation: ValidationLog<F>,
    /// Hash of the parameters after this epoch.
    pub params_fingerprint: u64,
}

struct ScheduleRun<F> {
    states: Vec<UserRunState>,
    delay_losses: Vec<DelayLoss<F>>,
    total_loss: F,
    evaluations: usize,
}

fn run_schedule<F: Scalar>(
    learner: &mut Learner<'_, F>,
    corpus: &Corpus,
    pass: &PassConfig,
) -> Result<ScheduleRun<F>> {
    let schedule = DelaySchedule::new(pass.window_size)?;
    let mut states = UserRunState::fresh(corpus);
    let mut delay_losses = Vec::new();
    let mut total_loss = F::zero();
    let mut evaluations = 0;
    for k in schedule.checkpoints(corpus.max_posts()) {
        if !states.iter().any(UserRunState::is_active) {
            break;
        }
        let out = run_delay_pass(learner, corpus, &mut states, k, pass)?;
        if let Some(loss) = out.loss {
            delay_losses.push(DelayLoss {
                k,
                users: out.evaluations.len(),
                loss,
            });
        }
        total_loss += out.evaluations.iter().map(|e| e.loss).sum::<F>();
        evaluations += out.evaluations.len();
    }
    if let Some(s) = states.iter().find(|s| s.is_active()) {
        return Err(ErdError::Contract(format!(
            "user {} still active after the last checkpoint",
            corpus.users[s.user_index].user_id
        )));
    }
    Ok(ScheduleRun {
        states,
        delay_losses,
        total_loss,
        evaluations,
    })
}

fn timeline(corpus: &Corpus, states: &[UserRunState], window_size: usize) -> Result<Vec<TimelineEntry>> {
    let schedule = DelaySchedule::new(window_size)?;
    states
        .iter()
        .map(|s| {
            let user = &corpus.users[s.user_index];
            let decision = s.decision(user).expect("retired user has a decision");
            let checkpoint = match s.status {
                UserStatus::FlaggedPositive => s.pred_time.unwrap_or(0),
                _ => schedule.final_checkpoint(user.total_posts()),
            };
            Ok(TimelineEntry {
                user_id: user.user_id.clone(),
                pred_time: decision.k,
                checkpoint,
                total_posts: user.total_posts(),
                outcome: classify_outcome(&decision, user)?,
            })
        })
        .collect()
}

fn stage_log<F: Scalar>(corpus: &Corpus, run: &ScheduleRun<F>, window_size: usize) -> Result<StageLog<F>> {
    Ok(StageLog {
        loss: run.total_loss / F::from_count(run.evaluations.max(1)),
        delay_losses: run.delay_losses.clone(),
        timeline: timeline(corpus, &run.states, window_size)?,
    })
}

/// One training epoch: every checkpoint in order, all users reset to active.
pub fn train_epoch<F: Scalar>(
    params: &mut ModelParams<F>,
    optimizer: &mut OptimizerState<F>,
    corpus: &Corpus,
    config: &TrainConfig<F>,
) -> Result<StageLog<F>> {
    let pass = PassConfig {
        window_size: config.window_size,
        batch_size: config.batch_size,
        rule: config.train_rule,
        loss: config.loss,
    };
    let run = run_schedule(&mut Learner::Training { params, optimizer }, corpus, &pass)?;
    if !run.total_loss.is_finite() {
        return Err(ErdError::Numerical("non-finite training loss".into()));
    }
    stage_log(corpus, &run, config.window_size)
}

/// The training schedule without updates, scored with ERDE_θ.
pub fn validate_epoch<F: Scalar>(
    params: &ModelParams<F>,
    corpus: &Corpus,
    config: &TrainConfig<F>,
) -> Result<ValidationLog<F>> {
    let pass = PassConfig {
        window_size: config.window_size,
        batch_size: config.batch_size,
        rule: config.validation_rule,
        loss: config.loss,
    };
    let run = run_schedule(&mut Learner::Frozen(params), corpus, &pass)?;
    let decisions: Vec<Decision> = run
        .states
        .iter()
        .map(|s| s.decision(&corpus.users[s.user_index]).expect("retired"))
        .collect();
    let report = evaluate(&decisions, corpus, &config.metrics_for_validation())?;
    let erde = report
        .erde_for(config.loss.theta)
        .expect("report covers the training deadline");
    Ok(ValidationLog {
        stage: stage_log(corpus, &run, config.window_size)?,
        accuracy: report.accuracy,
        erde,
        report,
        decisions,
    })
}

pub fn selection_score<F: Scalar>(log: &EpochLog<F>, w_acc: f64, w_erde: f64) -> f64 {
    w_acc * log.validation.accuracy.as_f64() + w_erde * (1.0 - log.validation.erde.as_f64())
}

/// Epoch maximising `w_acc * accuracy + w_erde * (1 - ERDE)`; earliest on ties.
pub fn select_best<F: Scalar>(logs: &[EpochLog<F>], w_acc: f64, w_erde: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, log) in logs.iter().enumerate() {
        let score = selection_score(log, w_acc, w_erde);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| logs[i].epoch)
}

pub struct FitResult<F> {
    pub logs: Vec<EpochLog<F>>,
    pub best_epoch: usize,
    pub best_params: ModelParams<F>,
    pub final_params: ModelParams<F>,
    pub final_optimizer: OptimizerState<F>,
}

/// Trains for `config.epochs`, validating after each epoch.
///
/// `on_epoch` sees the parameters and optimizer right after each epoch.
pub fn fit<F: Scalar>(
    train: &Corpus,
    validation: &Corpus,
    config: &TrainConfig<F>,
    mut on_epoch: impl FnMut(&EpochLog<F>, &ModelParams<F>, &OptimizerState<F>) -> Result<()>,
) -> Result<FitResult<F>> {
    config.validate()?;
    let mut params = ModelParams::zeros(config.model_meta())?;
    let mut optimizer = OptimizerState::new(params.values.len(), config.optimizer.clone());
    let mut logs = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, ModelParams<F>)> = None;
    for epoch in 0..config.epochs {
        let train_log = train_epoch(&mut params, &mut optimizer, train, config).map_err(|e| match e {
            ErdError::Numerical(m) => ErdError::Numerical(format!("epoch {epoch}: {m}")),
            other => other,
        })?;
        let validation_log = validate_epoch(&params, validation, config)?;
        let log = EpochLog {
            epoch,
            train: train_log,
            validation: validation_log,
            params_fingerprint: params.fingerprint(),
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, val loss {:.4}, acc {:.3}, ERDE{} {:.4}",
            log.train.loss.as_f64(),
            log.validation.stage.loss.as_f64(),
            log.validation.accuracy.as_f64(),
            config.loss.theta,
            log.validation.erde.as_f64()
        );
        on_epoch(&log, &params, &optimizer)?;
        let score = selection_score(&log, config.w_acc, config.w_erde);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, params.clone()));
        }
        logs.push(log);
    }
    let best_epoch = select_best(&logs, config.w_acc, config.w_erde).expect("at least one epoch");
    let (_, best_params) = best.expect("at least one epoch");
    Ok(FitResult {
        logs,
        best_epoch,
        best_params,
        final_params: params,
        final_optimizer: optimizer,
    })
}
