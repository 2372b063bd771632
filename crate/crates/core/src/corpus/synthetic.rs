//! Seeded synthetic corpora with a controllable risk signal.
//!
//! Positive users start using words from a risk vocabulary at an onset post;
//! from then on each post carries one risk word with probability
//! `risk_signal_strength`. Negative users, and positive users before onset,
//! carry one with probability `noise_rate`. Everything else is neutral filler.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Label, Split, UserHistory};
use crate::error::{ErdError, Result};

const RISK_WORDS: &[&str] = &[
    "triste", "solo", "vacío", "llorar", "cansado", "insomnio", "ansiedad", "miedo", "culpa",
    "dolor", "desesperanza", "aislado", "inútil", "angustia", "agotado", "nadie", "oscuro",
    "rendirme", "pesadilla", "herida", "vomitar", "ayuno", "atracón", "adelgazar", "odiarme",
];

const NEUTRAL_WORDS: &[&str] = &[
    "hoy", "casa", "trabajo", "amigos", "película", "música", "partido", "ciudad", "clase",
    "tarde", "mañana", "perro", "gato", "viaje", "libro", "serie", "juego", "calle", "playa",
    "fin", "semana", "tiempo", "lluvia", "sol", "café", "tren", "autobús", "examen", "fiesta",
    "canción", "foto", "idea", "mesa", "ventana", "jardín", "mercado", "pueblo", "río", "montaña",
    "noticia", "equipo", "programa", "teléfono", "coche", "parque", "museo", "cena", "desayuno",
];

const SYLLABLES: &[&str] = &[
    "ba", "ce", "di", "fo", "gu", "la", "me", "ni", "po", "ru", "sa", "te", "vi", "zo",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub name: String,
    pub split: Split,
    pub n_users: usize,
    pub positive_ratio: f64,
    /// Inclusive `[min, max]` history length.
    pub posts_per_user_range: [usize; 2],
    /// When set, lengths are `min + Exp(mean - min)` clamped to `max`,
    /// giving the right-skewed shape of real ERD corpora. Uniform otherwise.
    pub mean_posts: Option<f64>,
    /// Inclusive `[min, max]` first risk post of positive users.
    pub onset_range: [usize; 2],
    pub risk_signal_strength: f64,
    pub noise_rate: f64,
    pub risk_vocab_size: usize,
    pub neutral_vocab_size: usize,
    /// Inclusive `[min, max]` words per post.
    pub words_per_post: [usize; 2],
}

impl Default for SyntheticSpec {
    /// Shaped like a depression training split: 175 users, 94 positive,
    /// 11 to 100 posts with a mean near 35.
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            name: "synthetic".into(),
            split: Split::Train,
            n_users: 175,
            positive_ratio: 94.0 / 175.0,
            posts_per_user_range: [11, 100],
            mean_posts: Some(35.0),
            onset_range: [0, 15],
            risk_signal_strength: 0.6,
            noise_rate: 0.05,
            risk_vocab_size: 5,
            neutral_vocab_size: 300,
            words_per_post: [1, 4],
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ErdError::Config(m));
        if self.n_users == 0 {
            return bad("n_users must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.positive_ratio) {
            return bad(format!("positive_ratio {} outside [0, 1]", self.positive_ratio));
        }
        let [pmin, pmax] = self.posts_per_user_range;
        if pmin == 0 || pmin > pmax {
            return bad(format!("posts_per_user_range [{pmin}, {pmax}] is degenerate"));
        }
        let [omin, omax] = self.onset_range;
        if omin > omax {
            return bad(format!("onset_range [{omin}, {omax}] is degenerate"));
        }
        let [wmin, wmax] = self.words_per_post;
        if wmin == 0 || wmin > wmax {
            return bad(format!("words_per_post [{wmin}, {wmax}] is degenerate"));
        }
        if !(self.risk_signal_strength > 0.0 && self.risk_signal_strength <= 1.0) {
            return bad(format!(
                "risk_signal_strength {} outside (0, 1]",
                self.risk_signal_strength
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} outside [0, 1]", self.noise_rate));
        }
        if self.risk_vocab_size == 0 || self.neutral_vocab_size == 0 {
            return bad("vocabulary sizes must be positive".into());
        }
        if let Some(mean) = self.mean_posts {
            if !(mean >= pmin as f64 && mean <= pmax as f64) {
                return bad(format!("mean_posts {mean} outside [{pmin}, {pmax}]"));
            }
        }
        Ok(())
    }

    /// Non-fatal oddities worth telling the user about.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.onset_range[1] >= self.posts_per_user_range[0] {
            out.push(format!(
                "onset may reach post {} but histories can be as short as {} posts; \
                 some positive users will show no risk signal",
                self.onset_range[1], self.posts_per_user_range[0]
            ));
        }
        out
    }

    pub fn positive_users(&self) -> usize {
        (self.n_users as f64 * self.positive_ratio).round() as usize
    }

    pub fn risk_vocabulary(&self) -> Vec<String> {
        vocabulary(RISK_WORDS, self.risk_vocab_size, "x", &HashSet::new())
    }

    pub fn neutral_vocabulary(&self) -> Vec<String> {
        let risk: HashSet<String> = self.risk_vocabulary().into_iter().collect();
        vocabulary(NEUTRAL_WORDS, self.neutral_vocab_size, "", &risk)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| ErdError::Config(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| ErdError::Config(e.to_string()))
    }
}

fn vocabulary(seed_words: &[&str], size: usize, prefix: &str, exclude: &HashSet<String>) -> Vec<String> {
    let mut words: Vec<String> = seed_words.iter().take(size).map(|w| w.to_string()).collect();
    let mut seen: HashSet<String> = words.iter().cloned().collect();
    let n = SYLLABLES.len();
    let mut i = 0usize;
    while words.len() < size {
        let word = format!(
            "{prefix}{}{}{}",
            SYLLABLES[(i / (n * n)) % n],
            SYLLABLES[(i / n) % n],
            SYLLABLES[i % n]
        );
        let word = if i >= n * n * n { format!("{word}{}", i / (n * n * n)) } else { word };
        i += 1;
        if !exclude.contains(&word) && seen.insert(word.clone()) {
            words.push(word);
        }
    }
    words
}

/// Ground truth kept alongside a generated user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserTrace {
    pub user_id: String,
    pub onset: Option<usize>,
    /// Whether each post carries a risk word.
    pub risk_posts: Vec<bool>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    generate_synthetic_traced(spec).map(|(c, _)| c)
}

pub fn generate_synthetic_traced(spec: &SyntheticSpec) -> Result<(Corpus, Vec<UserTrace>)> {
    spec.validate()?;
    for w in spec.warnings() {
        log::warn!("{w}");
    }
    let risk = spec.risk_vocabulary();
    let neutral = spec.neutral_vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n_pos = spec.positive_users();
    let mut labels: Vec<Label> = (0..spec.n_users)
        .map(|i| if i < n_pos { Label::Positive } else { Label::Negative })
        .collect();
    labels.shuffle(&mut rng);

    let width = spec.n_users.to_string().len().max(4);
    let mut users = Vec::with_capacity(spec.n_users);
    let mut traces = Vec::with_capacity(spec.n_users);
    for (i, &label) in labels.iter().enumerate() {
        let user_id = format!("{}_{:0width$}", spec.name, i, width = width);
        let total = sample_length(spec, &mut rng);
        let onset = label
            .is_positive()
            .then(|| rng.random_range(spec.onset_range[0]..=spec.onset_range[1]));
        let mut texts = Vec::with_capacity(total);
        let mut risk_posts = Vec::with_capacity(total);
        for j in 0..total {
            let n_words = rng.random_range(spec.words_per_post[0]..=spec.words_per_post[1]);
            let mut words: Vec<&str> = (0..n_words)
                .map(|_| neutral[rng.random_range(0..neutral.len())].as_str())
                .collect();
            let p = match onset {
                Some(o) if j >= o => spec.risk_signal_strength,
                _ => spec.noise_rate,
            };
            let risky = rng.random_bool(p);
            if risky {
                let slot = rng.random_range(0..words.len());
                words[slot] = risk[rng.random_range(0..risk.len())].as_str();
            }
            texts.push(words.join(" "));
            risk_posts.push(risky);
        }
        users.push(UserHistory::new(user_id.clone(), label, texts)?);
        traces.push(UserTrace {
            user_id,
            onset,
            risk_posts,
        });
    }
    Ok((Corpus::new(spec.name.clone(), spec.split, users)?, traces))
}

fn sample_length(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> usize {
    let [min, max] = spec.posts_per_user_range;
    match spec.mean_posts {
        Some(mean) if mean > min as f64 => {
            let u: f64 = rng.random();
            let extra = -(1.0 - u).ln() * (mean - min as f64);
            (min + extra.floor() as usize).min(max)
        }
        _ => rng.random_range(min..=max),
    }
}
