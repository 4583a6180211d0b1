//! Sufficiency-gated retrieval-augmented generation.
//!
//! A query's pre-fetched web pages are cleaned, reranked against the query,
//! and the best relevance score is compared against a threshold. When the
//! static context is judged sufficient the top passages go straight to the
//! answer generator; otherwise (in `task2` mode) a small set of candidate API
//! schemas is retrieved, a tool call is proposed, validated against the
//! catalog and executed, and its response is prepended to the context.
//!
//! Every model-backed stage sits behind a binding trait with a deterministic
//! reference implementation, so the whole pipeline runs offline:
//!
//! | stage      | trait                          | reference                      |
//! |------------|--------------------------------|--------------------------------|
//! | reranker   | [`rerank::Scorer`]             | [`rerank::LexicalScorer`]      |
//! | schemas    | [`schema_index::Embedder`]     | [`schema_index::HashedBowEmbedder`] |
//! | tool call  | [`router::ToolCaller`]         | [`router::KeywordToolCaller`]  |
//! | generation | [`generator::Generator`]       | [`generator::ExtractiveGenerator`] |
//!
//! Remote HTTP implementations of each live in [`remote`].

pub mod clean;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod generator;
mod http;
pub mod mock_server;
pub mod pipeline;
pub mod remote;
pub mod rerank;
pub mod router;
pub mod schema_index;
pub mod sufficiency;
pub mod synthetic;
pub mod text;

pub use clean::{clean, clean_all, CleanedSnippet};
pub use corpus::{load_dataset, retrieval_set, DatasetRecord, Domain, Dynamism, Query, RawDocument};
pub use eval::{EvalMetrics, Judgment, Outcome};
pub use generator::{AnswerRecord, GenerationContext};
pub use pipeline::{Bindings, Mode, Pipeline, PipelineConfig, QueryTrace};
pub use rerank::{RankedPassage, RelevanceScore};
pub use router::{ApiCall, ApiResponse, ValidatedCall};
pub use schema_index::{ApiSchema, EmbeddingVector, SchemaIndex};
pub use sufficiency::{SufficiencyDecision, Verdict};
