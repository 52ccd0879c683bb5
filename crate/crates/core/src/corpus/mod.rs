//! Corpus records, JSONL ingestion and the seeded synthetic legal world.

pub mod embed;
pub mod synthetic;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synthetic::{gen_synthetic, SyntheticCorpus};

/// Tolerance on `|‖v‖₂ − 1|` for stored embeddings.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statute {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub question: String,
    pub answer: String,
}

impl Statute {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            embedding: None,
        }
    }
}

impl Case {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            embedding: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("{0}: file contains no records")]
    EmptyFile(PathBuf),
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
}

/// A record kind that can be read from one JSONL line.
pub trait Record: DeserializeOwned + Serialize {
    fn id(&self) -> &str;
    fn validate(&self) -> Result<(), String>;
}

fn check_embedding(embedding: &Option<Vec<f32>>) -> Result<(), String> {
    if let Some(v) = embedding {
        let norm = v
            .iter()
            .map(|&x| (x as f64) * (x as f64))
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(format!("embedding norm {norm} is not 1"));
        }
    }
    Ok(())
}

fn non_empty(field: &str, value: &str) -> Result<(), String> {
    if value.trim().is_empty() {
        Err(format!("field `{field}` is empty"))
    } else {
        Ok(())
    }
}

impl Record for Statute {
    fn id(&self) -> &str {
        &self.id
    }
    fn validate(&self) -> Result<(), String> {
        non_empty("id", &self.id)?;
        non_empty("text", &self.text)?;
        check_embedding(&self.embedding)
    }
}

impl Record for Case {
    fn id(&self) -> &str {
        &self.id
    }
    fn validate(&self) -> Result<(), String> {
        non_empty("id", &self.id)?;
        non_empty("text", &self.text)?;
        check_embedding(&self.embedding)
    }
}

impl Record for QaPair {
    fn id(&self) -> &str {
        &self.id
    }
    fn validate(&self) -> Result<(), String> {
        non_empty("id", &self.id)?;
        non_empty("question", &self.question)?;
        non_empty("answer", &self.answer)
    }
}

/// Parse one JSONL line. `line_no` is 1-based and only used for errors.
pub fn parse_record<R: Record>(line: &str, line_no: usize) -> Result<R, CorpusError> {
    let record: R = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
        line: line_no,
        reason: e.to_string(),
    })?;
    record
        .validate()
        .map_err(|reason| CorpusError::MalformedRecord {
            line: line_no,
            reason,
        })?;
    Ok(record)
}

/// Parse a whole JSONL document. Blank lines are skipped but still counted.
pub fn parse_records<R: Record>(content: &str) -> Result<Vec<R>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: R = parse_record(line, i + 1)?;
        if !seen.insert(record.id().to_owned()) {
            return Err(CorpusError::DuplicateId(record.id().to_owned()));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read_records<R: Record>(path: &Path) -> Result<Vec<R>, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    let records = parse_records(&content)?;
    if records.is_empty() {
        return Err(CorpusError::EmptyFile(path.to_owned()));
    }
    Ok(records)
}

pub fn serialize_records<R: Record>(records: &[R]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_records<R: Record>(path: &Path, records: &[R]) -> Result<(), CorpusError> {
    fs::write(path, serialize_records(records)).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })
}

pub type Corpus = (Vec<Statute>, Vec<Case>, Vec<QaPair>);

pub fn load_corpus(
    statute_path: &Path,
    case_path: &Path,
    qa_path: &Path,
) -> Result<Corpus, CorpusError> {
    Ok((
        read_records(statute_path)?,
        read_records(case_path)?,
        read_records(qa_path)?,
    ))
}
