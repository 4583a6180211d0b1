//! Query datasets and their pre-fetched search results.
//!
//! A dataset is UTF-8 JSONL, one record per line:
//!
//! ```text
//! {"id": "q1", "query": "...", "gold_answer": "...", "domain": "finance",
//!  "dynamism": "real_time", "question_type": "simple",
//!  "search_results": [{"url": "...", "rank": 1, "html": "..."}]}
//! ```
//!
//! `gold_answer`, `domain`, `dynamism` and `question_type` are optional.

use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of pages kept per query.
pub const DEFAULT_K_MAX: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Finance,
    Sports,
    Music,
    Movie,
    Open,
}

/// How quickly the answer to a question changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamism {
    RealTime,
    FastChanging,
    SlowChanging,
    Static,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Finance => "finance",
            Domain::Sports => "sports",
            Domain::Music => "music",
            Domain::Movie => "movie",
            Domain::Open => "open",
        }
    }
}

impl Dynamism {
    pub fn as_str(self) -> &'static str {
        match self {
            Dynamism::RealTime => "real_time",
            Dynamism::FastChanging => "fast_changing",
            Dynamism::SlowChanging => "slow_changing",
            Dynamism::Static => "static",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub gold_answer: Option<String>,
    pub domain: Option<Domain>,
    pub dynamism: Option<Dynamism>,
    pub question_type: Option<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            gold_answer: None,
            domain: None,
            dynamism: None,
            question_type: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub url: String,
    /// Search-result position, starting at 1.
    pub rank: u32,
    pub html: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub query: Query,
    pub documents: Vec<RawDocument>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read dataset {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate query id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: query {id:?} has more than one document at rank {rank}")]
    RankCollision { line: usize, id: String, rank: u32 },
}

/// On-disk shape of one dataset line.
#[derive(Debug, Serialize, Deserialize)]
struct RecordLine {
    id: String,
    query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dynamism: Option<Dynamism>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    question_type: Option<String>,
    #[serde(default)]
    search_results: Vec<RawDocument>,
}

impl From<&DatasetRecord> for RecordLine {
    fn from(record: &DatasetRecord) -> Self {
        let q = &record.query;
        RecordLine {
            id: q.id.clone(),
            query: q.text.clone(),
            gold_answer: q.gold_answer.clone(),
            domain: q.domain,
            dynamism: q.dynamism,
            question_type: q.question_type.clone(),
            search_results: record.documents.clone(),
        }
    }
}

/// Loads a JSONL dataset, keeping at most `k_max` documents per query (the
/// lowest ranks). Blank lines are skipped; records keep file order.
pub fn load_dataset(path: impl AsRef<Path>, k_max: usize) -> Result<Vec<DatasetRecord>, CorpusError> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&contents, k_max)
}

/// Parses dataset JSONL already in memory. See [`load_dataset`].
pub fn parse_dataset(contents: &str, k_max: usize) -> Result<Vec<DatasetRecord>, CorpusError> {
    let mut seen_ids = HashSet::new();
    let mut records = Vec::new();
    for (idx, raw) in contents.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
            line,
            message: e.to_string(),
        })?;
        if parsed.id.is_empty() {
            return Err(CorpusError::Malformed { line, message: "empty id".into() });
        }
        if parsed.query.trim().is_empty() {
            return Err(CorpusError::Malformed { line, message: "empty query text".into() });
        }
        if !seen_ids.insert(parsed.id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: parsed.id });
        }

        let mut documents = parsed.search_results;
        let mut ranks = HashSet::new();
        for doc in &documents {
            if doc.rank == 0 {
                return Err(CorpusError::Malformed {
                    line,
                    message: format!("document {:?} has rank 0; ranks start at 1", doc.url),
                });
            }
            if !ranks.insert(doc.rank) {
                return Err(CorpusError::RankCollision { line, id: parsed.id, rank: doc.rank });
            }
        }
        documents.sort_by_key(|d| d.rank);
        documents.truncate(k_max);

        records.push(DatasetRecord {
            query: Query {
                id: parsed.id,
                text: parsed.query,
                gold_answer: parsed.gold_answer,
                domain: parsed.domain,
                dynamism: parsed.dynamism,
                question_type: parsed.question_type,
            },
            documents,
        });
    }
    Ok(records)
}

/// The retrieval set of a record: its documents by ascending rank.
pub fn retrieval_set(record: &DatasetRecord) -> Vec<RawDocument> {
    let mut docs = record.documents.clone();
    docs.sort_by_key(|d| d.rank);
    docs
}

/// Serializes one record as a single JSONL line (no trailing newline).
pub fn to_jsonl_line(record: &DatasetRecord) -> String {
    serde_json::to_string(&RecordLine::from(record)).expect("dataset records always serialize")
}

pub fn write_dataset<W: Write>(mut out: W, records: &[DatasetRecord]) -> io::Result<()> {
    for record in records {
        writeln!(out, "{}", to_jsonl_line(record))?;
    }
    Ok(())
}
