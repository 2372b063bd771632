use serde::{Deserialize, Serialize};

use super::{temporal_loss, DecisionRule, LossConfig};
use crate::corpus::{build_window, Corpus, Label, UserHistory};
use crate::error::{ErdError, Result};
use crate::metrics::{Decision, Verdict};
use crate::model::{accumulate_gradient, adamw_step, predict_proba, FeatureVector, ModelParams, OptimizerState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserStatus {
    Active,
    FlaggedPositive,
    Exhausted,
}

/// Per-epoch progress of one user through the delay schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRunState {
    pub user_index: usize,
    pub status: UserStatus,
    /// Checkpoint at which a flagged user retired, or the history length for
    /// an exhausted user. `None` while active.
    pub pred_time: Option<usize>,
    pub pred_label: Option<Label>,
}

impl UserRunState {
    pub fn active(user_index: usize) -> Self {
        UserRunState {
            user_index,
            status: UserStatus::Active,
            pred_time: None,
            pred_label: None,
        }
    }

    pub fn fresh(corpus: &Corpus) -> Vec<UserRunState> {
        (0..corpus.len()).map(UserRunState::active).collect()
    }

    pub fn is_active(&self) -> bool {
        self.status == UserStatus::Active
    }

    fn retire(&mut self, status: UserStatus, pred_time: usize, label: Label) -> Result<()> {
        if !self.is_active() || status == UserStatus::Active {
            return Err(ErdError::Contract(format!(
                "user {} cannot move from {:?} to {:?}",
                self.user_index, self.status, status
            )));
        }
        self.status = status;
        self.pred_time = Some(pred_time);
        self.pred_label = Some(label);
        Ok(())
    }

    /// Final decision; `k` is the number of posts actually read.
    pub fn decision(&self, user: &UserHistory) -> Option<Decision> {
        let verdict = match self.pred_label? {
            Label::Positive => Verdict::Positive,
            Label::Negative => Verdict::Negative,
        };
        let k = self.pred_time?.min(user.total_posts());
        Some(Decision::new(user.user_id.clone(), verdict, k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassConfig {
    pub window_size: usize,
    pub batch_size: usize,
    pub rule: DecisionRule,
    pub loss: LossConfig,
}

/// Model under evaluation: frozen, or trained with one AdamW step per mini-batch.
pub enum Learner<'a, F> {
    Frozen(&'a ModelParams<F>),
    Training {
        params: &'a mut ModelParams<F>,
        optimizer: &'a mut OptimizerState<F>,
    },
}

impl<F: Scalar> Learner<'_, F> {
    pub fn params(&self) -> &ModelParams<F> {
        match self {
            Learner::Frozen(p) => p,
            Learner::Training { params, .. } => params,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<F> {
    pub user_index: usize,
    pub probability: F,
    pub predicted: Label,
    /// Time fed to the loss: retirement time if retired here, else `k`.
    pub pred_time: usize,
    pub retired: bool,
    pub loss: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayPassOutput<F> {
    pub k: usize,
    pub evaluations: Vec<Evaluation<F>>,
    /// Mean loss over the evaluated users; `None` when nobody was active.
    pub loss: Option<F>,
    pub updates: usize,
}

/// Scores every active user at checkpoint `k` and retires them as needed.
pub fn run_delay_pass<F: Scalar>(
    learner: &mut Learner<'_, F>,
    corpus: &Corpus,
    states: &mut [UserRunState],
    k: usize,
    config: &PassConfig,
) -> Result<DelayPassOutput<F>> {
    if k == 0 || k % config.window_size != 0 {
        return Err(ErdError::Contract(format!(
            "{k} is not a checkpoint for window size {}",
            config.window_size
        )));
    }
    let active: Vec<usize> = states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_active())
        .map(|(i, _)| i)
        .collect();
    let mut evaluations = Vec::with_capacity(active.len());
    let mut updates = 0;
    for chunk in active.chunks(config.batch_size.max(1)) {
        let mut feats: Vec<FeatureVector<F>> = Vec::with_capacity(chunk.len());
        let mut batch: Vec<Evaluation<F>> = Vec::with_capacity(chunk.len());
        for &si in chunk {
            let state = &mut states[si];
            let user = &corpus.users[state.user_index];
            let params = learner.params();
            let x = params.featurize(&build_window(user, k, config.window_size)?);
            let p = predict_proba(params, &x)?.probability;
            let total = user.total_posts();
            let (predicted, pred_time, retired) = if config.rule.is_positive(p, k.min(total)) {
                state.retire(UserStatus::FlaggedPositive, k, Label::Positive)?;
                (Label::Positive, k, true)
            } else if k >= total {
                state.retire(UserStatus::Exhausted, total, Label::Negative)?;
                (Label::Negative, total, true)
            } else {
                (Label::Negative, k, false)
            };
            feats.push(x);
            batch.push(Evaluation {
                user_index: state.user_index,
                probability: p,
                predicted,
                pred_time,
                retired,
                loss: F::zero(),
            });
        }

        let users: Vec<&UserHistory> = batch.iter().map(|e| &corpus.users[e.user_index]).collect();
        let loss = temporal_loss(
            &batch.iter().map(|e| e.probability).collect::<Vec<_>>(),
            &batch.iter().map(|e| e.predicted).collect::<Vec<_>>(),
            &batch.iter().map(|e| e.pred_time).collect::<Vec<_>>(),
            &users.iter().map(|u| u.label).collect::<Vec<_>>(),
            &users.iter().map(|u| u.total_posts()).collect::<Vec<_>>(),
            config.loss.theta,
            config.loss.mode,
        )?;
        if !loss.mean.is_finite() {
            return Err(ErdError::Numerical(format!("non-finite loss at delay {k}")));
        }
        for (e, l) in batch.iter_mut().zip(&loss.per_sample) {
            e.loss = *l;
        }

        if let Learner::Training { params, optimizer } = learner {
            let n = F::from_count(batch.len());
            let mut grad = vec![F::zero(); params.values.len()];
            for (x, d) in feats.iter().zip(&loss.dlogit) {
                accumulate_gradient(&mut grad, &params.meta, x, *d / n);
            }
            adamw_step(&mut params.values, optimizer, &grad)
                .map_err(|e| ErdError::Numerical(format!("delay {k}: {e}")))?;
            params
                .check_finite()
                .map_err(|e| ErdError::Numerical(format!("delay {k}: {e}")))?;
            updates += 1;
        }
        evaluations.extend(batch);
    }
    let loss = (!evaluations.is_empty()).then(|| {
        evaluations.iter().map(|e| e.loss).sum::<F>() / F::from_count(evaluations.len())
    });
    Ok(DelayPassOutput {
        k,
        evaluations,
        loss,
        updates,
    })
}
