use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, Label, Split, UserHistory};
use crate::error::{ErdError, Result};

/// One JSONL line: `{"user_id": str, "label": 0|1, "posts": [str, ...]}`.
#[derive(Serialize, Deserialize)]
struct UserRecord {
    user_id: String,
    label: u8,
    posts: Vec<String>,
}

/// Loads a JSONL corpus. The corpus name is the file stem and the split is
/// inferred from it (`*train*`, `*trial*`, anything else is test).
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ErdError::io(path, e))?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("corpus")
        .to_string();
    let split = Split::infer(&stem);
    read_corpus(BufReader::new(file), stem, split)
}

pub fn read_corpus(reader: impl BufRead, name: impl Into<String>, split: Split) -> Result<Corpus> {
    let mut users = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| ErdError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: UserRecord = serde_json::from_str(&line).map_err(|e| ErdError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let label = Label::from_u8(record.label).ok_or_else(|| ErdError::Parse {
            line: line_no,
            message: format!("label must be 0 or 1, got {}", record.label),
        })?;
        let user = UserHistory::new(record.user_id, label, record.posts).map_err(|e| {
            ErdError::Parse {
                line: line_no,
                message: e.to_string(),
            }
        })?;
        users.push(user);
    }
    Corpus::new(name, split, users)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| ErdError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_corpus(corpus, &mut w).map_err(|e| ErdError::io(path, e))?;
    w.flush().map_err(|e| ErdError::io(path, e))
}

pub fn write_corpus(corpus: &Corpus, w: &mut impl Write) -> std::io::Result<()> {
    for user in &corpus.users {
        let record = UserRecord {
            user_id: user.user_id.clone(),
            label: user.label.as_u8(),
            posts: user.posts.iter().map(|p| p.text.clone()).collect(),
        };
        serde_json::to_writer(&mut *w, &record)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
