//! Delay-scheduled training and validation.
//!
//! An epoch replays every user's stream at checkpoints `M, 2M, ...`. At each
//! checkpoint the still-active users are scored on their current window; a
//! positive prediction retires the user as flagged, reaching the end of the
//! history retires the user as exhausted (negative). Training takes one AdamW
//! step per mini-batch using the temporal loss; validation runs the same
//! schedule frozen and scores the final decisions with ERDE_θ.

mod config;
mod fit;
mod loss;
mod pass;
mod timeline;

pub use config::{DecisionRule, LossConfig, TrainConfig};
pub use fit::{
    fit, select_best, selection_score, train_epoch, validate_epoch, EpochLog, FitResult,
    StageLog, ValidationLog,
};
pub use loss::{temporal_loss, LossMode, TemporalLoss};
pub use pass::{
    run_delay_pass, DelayPassOutput, Evaluation, Learner, PassConfig, UserRunState, UserStatus,
};
pub use timeline::{export_timeline, timeline_csv, timeline_svg, Stage, TimelineEntry};
