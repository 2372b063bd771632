//! Users, posts and corpora, plus delay windows and time-annotated inputs.

mod io;
mod synthetic;
mod window;

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ErdError, Result};

pub use io::{load_corpus, read_corpus, save_corpus, write_corpus};
pub use synthetic::{generate_synthetic, generate_synthetic_traced, SyntheticSpec, UserTrace};
pub use window::{
    build_window, decode_delay, delay_checkpoints, encode_timed_input, sanitize_markers,
    DelaySchedule, TimedWindow, CLS_MARKER, SEP_MARKER, TIME_MARKER,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

/// One labelled user: the unit of evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserHistory {
    pub user_id: String,
    pub posts: Vec<Post>,
    pub label: Label,
}

impl UserHistory {
    /// Builds a user from raw post texts, assigning consecutive indices.
    pub fn new(user_id: impl Into<String>, label: Label, texts: Vec<String>) -> Result<Self> {
        let user = UserHistory {
            user_id: user_id.into(),
            posts: texts
                .into_iter()
                .enumerate()
                .map(|(index, text)| Post { index, text })
                .collect(),
            label,
        };
        user.validate()?;
        Ok(user)
    }

    pub fn total_posts(&self) -> usize {
        self.posts.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.user_id.is_empty() {
            return Err(ErdError::Validation("empty user_id".into()));
        }
        if self.posts.is_empty() {
            return Err(ErdError::Validation(format!(
                "user {} has no posts",
                self.user_id
            )));
        }
        for (i, post) in self.posts.iter().enumerate() {
            if post.index != i {
                return Err(ErdError::Validation(format!(
                    "user {}: post index {} at position {}",
                    self.user_id, post.index, i
                )));
            }
            if post.text.trim().is_empty() {
                return Err(ErdError::Validation(format!(
                    "user {}: post {} is blank",
                    self.user_id, i
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Trial,
    Test,
}

impl Split {
    /// Guesses the split from a file stem such as `depression_train`.
    pub fn infer(stem: &str) -> Split {
        let stem = stem.to_ascii_lowercase();
        if stem.contains("train") {
            Split::Train
        } else if stem.contains("trial") || stem.contains("val") {
            Split::Trial
        } else {
            Split::Test
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Trial => "trial",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    pub split: Split,
    pub users: Vec<UserHistory>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, split: Split, users: Vec<UserHistory>) -> Result<Self> {
        let corpus = Corpus {
            name: name.into(),
            split,
            users,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users.is_empty() {
            return Err(ErdError::Validation(format!("corpus {} is empty", self.name)));
        }
        let mut seen = HashSet::with_capacity(self.users.len());
        for user in &self.users {
            user.validate()?;
            if !seen.insert(user.user_id.as_str()) {
                return Err(ErdError::Validation(format!(
                    "duplicate user_id {}",
                    user.user_id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn user(&self, user_id: &str) -> Option<&UserHistory> {
        self.users.iter().find(|u| u.user_id == user_id)
    }

    pub fn max_posts(&self) -> usize {
        self.users.iter().map(UserHistory::total_posts).max().unwrap_or(0)
    }

    pub fn positive_count(&self) -> usize {
        self.users.iter().filter(|u| u.label.is_positive()).count()
    }

    pub fn positive_ratio(&self) -> f64 {
        self.positive_count() as f64 / self.users.len().max(1) as f64
    }

    pub fn stats(&self) -> CorpusStats {
        let counts: Vec<usize> = self.users.iter().map(UserHistory::total_posts).collect();
        let positives = self.positive_count();
        CorpusStats {
            name: self.name.clone(),
            split: self.split,
            users: self.users.len(),
            positives,
            negatives: self.users.len() - positives,
            mean_posts: counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64,
            min_posts: counts.iter().copied().min().unwrap_or(0),
            max_posts: counts.iter().copied().max().unwrap_or(0),
        }
    }

    /// Stratified split: `holdout` users (rounded per class) move to the second corpus.
    ///
    /// Users keep their original relative order in both halves.
    pub fn split_stratified(
        &self,
        holdout: usize,
        seed: u64,
        holdout_split: Split,
    ) -> Result<(Corpus, Corpus)> {
        if holdout == 0 || holdout >= self.users.len() {
            return Err(ErdError::Config(format!(
                "holdout of {} users from a corpus of {}",
                holdout,
                self.users.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fraction = holdout as f64 / self.users.len() as f64;
        let mut pos: Vec<usize> = Vec::new();
        let mut neg: Vec<usize> = Vec::new();
        for (i, u) in self.users.iter().enumerate() {
            if u.label.is_positive() {
                pos.push(i)
            } else {
                neg.push(i)
            }
        }
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        let n_pos = ((pos.len() as f64 * fraction).round() as usize).min(holdout);
        let n_neg = (holdout - n_pos).min(neg.len());
        let n_pos = (holdout - n_neg).min(pos.len());
        let mut held = vec![false; self.users.len()];
        for &i in pos[..n_pos].iter().chain(&neg[..n_neg]) {
            held[i] = true;
        }
        let (mut kept, mut out) = (Vec::new(), Vec::new());
        for (i, u) in self.users.iter().enumerate() {
            if held[i] {
                out.push(u.clone())
            } else {
                kept.push(u.clone())
            }
        }
        Ok((
            Corpus::new(self.name.clone(), self.split, kept)?,
            Corpus::new(format!("{}_{}", self.name, holdout_split), holdout_split, out)?,
        ))
    }
}

/// Per-corpus statistics in the shape of the usual dataset tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub name: String,
    pub split: Split,
    pub users: usize,
    pub positives: usize,
    pub negatives: usize,
    pub mean_posts: f64,
    pub min_posts: usize,
    pub max_posts: usize,
}

impl CorpusStats {
    pub const HEADER: &'static str = "corpus  split  total  pos  neg  mean  min  max";
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}  {}  {}  {}  {}  {:.1}  {}  {}",
            self.name,
            self.split,
            self.users,
            self.positives,
            self.negatives,
            self.mean_posts,
            self.min_posts,
            self.max_posts
        )
    }
}
