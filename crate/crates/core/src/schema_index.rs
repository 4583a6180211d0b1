//! API schema catalog with exact cosine top-M retrieval.
//!
//! Each schema is embedded once from the text `"name: description"`. Lookup
//! is a flat scan over every entry, so results are exact and deterministic.
//! Ties in similarity are broken by schema name.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Query;
use crate::text;

/// Default number of candidate schemas handed to the tool caller.
pub const DEFAULT_TOP_M: usize = 3;
/// Dimension of [`HashedBowEmbedder`] vectors.
pub const DEFAULT_EMBEDDING_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Integer,
    Number,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiParameter {
    pub name: String,
    #[serde(rename = "type")]
    pub param_type: ParamType,
    pub required: bool,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSchema {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub parameters: Vec<ApiParameter>,
    pub endpoint: String,
}

impl ApiSchema {
    /// The text a schema is embedded from.
    pub fn embedding_text(&self) -> String {
        format!("{}: {}", self.name, self.description)
    }

    pub fn parameter(&self, name: &str) -> Option<&ApiParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// `None` if empty or any component is non-finite.
    pub fn new(values: Vec<f64>) -> Option<Self> {
        (!values.is_empty() && values.iter().all(|v| v.is_finite())).then_some(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Error)]
pub enum EmbedderError {
    #[error("embedder unreachable: {0}")]
    Unreachable(String),
    #[error("invalid embedding: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate schema name {0:?}")]
    DuplicateName(String),
    #[error("schema {schema:?} has duplicate parameter {parameter:?}")]
    DuplicateParameter { schema: String, parameter: String },
    #[error("embedding schema {schema:?} failed: {source}")]
    EmbedSchema {
        schema: String,
        #[source]
        source: EmbedderError,
    },
    #[error("embedding query failed: {0}")]
    EmbedQuery(#[source] EmbedderError),
    #[error("dimension mismatch: index has {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("top-m must be at least 1")]
    ZeroTopM,
    #[error("failed to read catalog {path}: {message}")]
    Catalog { path: String, message: String },
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedderError>;
}

/// Hashes each lowercased content term into one of `dim` buckets (FNV-1a)
/// and L2-normalizes the counts.
#[derive(Debug, Clone, Copy)]
pub struct HashedBowEmbedder {
    dim: usize,
}

impl HashedBowEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBEDDING_DIM)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

impl Embedder for HashedBowEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedderError> {
        let mut counts = vec![0.0; self.dim];
        for token in text::tokens(text).filter(|t| !text::is_stop_word(t)) {
            counts[(fnv1a(token.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        let norm = counts.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            counts.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(EmbeddingVector(counts))
    }
}

/// Cosine similarity; 0 when either vector is all zeros.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let norms = a.norm() * b.norm();
    if norms == 0.0 {
        0.0
    } else {
        dot / norms
    }
}

#[derive(Debug, Clone)]
struct Entry {
    schema: ApiSchema,
    vector: EmbeddingVector,
    norm: f64,
}

/// Immutable flat index over a schema catalog.
#[derive(Debug, Clone, Default)]
pub struct SchemaIndex {
    entries: Vec<Entry>,
}

impl SchemaIndex {
    /// Embeds every schema with `embedder`.
    pub fn build(schemas: &[ApiSchema], embedder: &dyn Embedder) -> Result<Self, IndexError> {
        let entries = schemas
            .iter()
            .map(|schema| {
                embedder
                    .embed(&schema.embedding_text())
                    .map(|v| (schema.clone(), v))
                    .map_err(|source| IndexError::EmbedSchema { schema: schema.name.clone(), source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_entries(entries)
    }

    /// Builds from precomputed vectors.
    pub fn from_entries(entries: Vec<(ApiSchema, EmbeddingVector)>) -> Result<Self, IndexError> {
        validate_catalog(entries.iter().map(|(s, _)| s))?;
        if let Some(((_, first), rest)) = entries.split_first() {
            let expected = first.dimension();
            if let Some((_, v)) = rest.iter().find(|(_, v)| v.dimension() != expected) {
                return Err(IndexError::DimensionMismatch { expected, actual: v.dimension() });
            }
        }
        Ok(Self {
            entries: entries
                .into_iter()
                .map(|(schema, vector)| Entry { norm: vector.norm(), schema, vector })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.entries.first().map(|e| e.vector.dimension())
    }

    pub fn schemas(&self) -> impl Iterator<Item = &ApiSchema> {
        self.entries.iter().map(|e| &e.schema)
    }

    /// Embeds the query text and returns the `m` most similar schemas.
    pub fn top_m(&self, query: &Query, m: usize, embedder: &dyn Embedder) -> Result<Vec<ApiSchema>, IndexError> {
        if m == 0 {
            return Err(IndexError::ZeroTopM);
        }
        if self.entries.is_empty() {
            return Ok(Vec::new());
        }
        let vector = embedder.embed(&query.text).map_err(IndexError::EmbedQuery)?;
        Ok(self.top_m_by_vector(&vector, m)?.into_iter().map(|(s, _)| s.clone()).collect())
    }

    /// The `m` entries most cosine-similar to `query`, descending, ties by name.
    pub fn top_m_by_vector(&self, query: &EmbeddingVector, m: usize) -> Result<Vec<(&ApiSchema, f64)>, IndexError> {
        if m == 0 {
            return Err(IndexError::ZeroTopM);
        }
        if let Some(expected) = self.dimension() {
            if expected != query.dimension() {
                return Err(IndexError::DimensionMismatch { expected, actual: query.dimension() });
            }
        }
        let query_norm = query.norm();
        let mut scored: Vec<(&ApiSchema, f64)> = self
            .entries
            .iter()
            .map(|e| {
                let dot: f64 = e.vector.0.iter().zip(&query.0).map(|(x, y)| x * y).sum();
                let norms = e.norm * query_norm;
                (&e.schema, if norms == 0.0 { 0.0 } else { dot / norms })
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.name.cmp(&b.0.name)));
        scored.truncate(m);
        Ok(scored)
    }
}

/// Checks name uniqueness across the catalog and parameter-name uniqueness
/// within each schema.
pub fn validate_catalog<'a>(schemas: impl IntoIterator<Item = &'a ApiSchema>) -> Result<(), IndexError> {
    let mut names = HashSet::new();
    for schema in schemas {
        if !names.insert(schema.name.as_str()) {
            return Err(IndexError::DuplicateName(schema.name.clone()));
        }
        let mut params = HashSet::new();
        for p in &schema.parameters {
            if !params.insert(p.name.as_str()) {
                return Err(IndexError::DuplicateParameter { schema: schema.name.clone(), parameter: p.name.clone() });
            }
        }
    }
    Ok(())
}

/// Reads a catalog file: a JSON array of schemas.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Vec<ApiSchema>, IndexError> {
    let path = path.as_ref();
    let err = |message: String| IndexError::Catalog { path: path.display().to_string(), message };
    let contents = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let schemas: Vec<ApiSchema> = serde_json::from_str(&contents).map_err(|e| err(e.to_string()))?;
    validate_catalog(&schemas)?;
    Ok(schemas)
}
