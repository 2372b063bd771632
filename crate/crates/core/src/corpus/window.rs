use serde::{Deserialize, Serialize};

use super::{Corpus, UserHistory};
use crate::error::{ErdError, Result};

pub const CLS_MARKER: &str = "[CLS]";
pub const TIME_MARKER: &str = "[TIME]";
pub const SEP_MARKER: &str = "[SEP]";

/// Delay checkpoints at multiples of the window size `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelaySchedule {
    pub window_size: usize,
}

impl DelaySchedule {
    pub fn new(window_size: usize) -> Result<Self> {
        if window_size == 0 {
            return Err(ErdError::Config("window size must be at least 1".into()));
        }
        Ok(DelaySchedule { window_size })
    }

    /// `[M, 2M, ...]` up to `max_posts` rounded up to a multiple of `M`.
    pub fn checkpoints(&self, max_posts: usize) -> Vec<usize> {
        let m = self.window_size;
        let last = max_posts.div_ceil(m).max(1) * m;
        (1..=last / m).map(|i| i * m).collect()
    }

    /// First checkpoint at or past the end of a history of `total_posts`.
    pub fn final_checkpoint(&self, total_posts: usize) -> usize {
        total_posts.div_ceil(self.window_size).max(1) * self.window_size
    }

    /// Checkpoint at or after `posts_read`.
    pub fn checkpoint_at_or_after(&self, posts_read: usize) -> usize {
        self.final_checkpoint(posts_read)
    }
}

pub fn delay_checkpoints(schedule: &DelaySchedule, corpus: &Corpus) -> Vec<usize> {
    schedule.checkpoints(corpus.max_posts())
}

/// Up to `M` consecutive posts of one user, read at delay `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedWindow {
    pub user_id: String,
    /// Posts requested so far; may exceed the history length at the last checkpoint.
    pub delay: usize,
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl TimedWindow {
    /// Window over free text, as used when probing a sentence at many delays.
    pub fn from_text(user_id: impl Into<String>, text: impl Into<String>, delay: usize) -> Self {
        TimedWindow {
            user_id: user_id.into(),
            delay,
            text: text.into(),
            start: 0,
            end: 1,
        }
    }
}

/// Covers posts `[max(0, min(k, n) - M), min(k, n))` joined by single spaces.
pub fn build_window(user: &UserHistory, delay: usize, window_size: usize) -> Result<TimedWindow> {
    if delay == 0 {
        return Err(ErdError::Contract("delay must be at least 1".into()));
    }
    if window_size == 0 {
        return Err(ErdError::Contract("window size must be at least 1".into()));
    }
    let end = delay.min(user.total_posts());
    let start = end.saturating_sub(window_size);
    let text = join_posts(user.posts[start..end].iter().map(|p| p.text.as_str()));
    Ok(TimedWindow {
        user_id: user.user_id.clone(),
        delay,
        text,
        start,
        end,
    })
}

pub(crate) fn join_posts<'a>(texts: impl Iterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for (i, t) in texts.enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

/// Removes every literal marker, repeating until none can re-form.
pub fn sanitize_markers(text: &str) -> String {
    let mut current = text.to_string();
    loop {
        let next = current
            .replace(CLS_MARKER, "")
            .replace(TIME_MARKER, "")
            .replace(SEP_MARKER, "");
        if next == current {
            return next;
        }
        current = next;
    }
}

/// `"[CLS] <text> [TIME] <k> [SEP]"`.
pub fn encode_timed_input(window: &TimedWindow) -> String {
    format!(
        "{CLS_MARKER} {} {TIME_MARKER} {} {SEP_MARKER}",
        sanitize_markers(&window.text),
        window.delay
    )
}

/// Recovers the delay from an encoded input.
pub fn decode_delay(encoded: &str) -> Option<usize> {
    let rest = encoded.strip_suffix(&format!(" {SEP_MARKER}"))?;
    let (_, k) = rest.rsplit_once(&format!(" {TIME_MARKER} "))?;
    k.parse().ok()
}
