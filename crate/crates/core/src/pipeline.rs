//! End-to-end orchestration: retrieve → clean → rerank → gate → (API
//! fallback) → generate.
//!
//! Tool-path failures never abort a query. When the fallback cannot produce
//! a usable response the answer is generated from the static passages alone
//! and the trace records what went wrong.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clean;
use crate::corpus::{self, DatasetRecord, DEFAULT_K_MAX};
use crate::generator::{self, AnswerRecord, ExtractiveGenerator, GenerationContext, Generator, DEFAULT_TOKEN_BUDGET};
use crate::rerank::{self, LexicalScorer, RankedPassage, Scorer, DEFAULT_TOP_N};
use crate::router::{self, ApiCall, ApiResponse, KeywordToolCaller, ToolCaller};
use crate::schema_index::{ApiSchema, Embedder, HashedBowEmbedder, IndexError, SchemaIndex, DEFAULT_TOP_M};
use crate::sufficiency::{self, SufficiencyDecision, Verdict};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_TIMEOUT_MS: u64 = 5000;

/// `task1`: static web context only. `task2`: API fallback allowed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Task1,
    Task2,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "task1" => Ok(Mode::Task1),
            "task2" => Ok(Mode::Task2),
            other => Err(format!("unknown mode {other:?} (expected task1 or task2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k_max: usize,
    pub top_n: usize,
    pub top_m: usize,
    pub threshold: f64,
    pub mode: Mode,
    pub token_budget: usize,
    pub timeout_ms: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            top_n: DEFAULT_TOP_N,
            top_m: DEFAULT_TOP_M,
            threshold: DEFAULT_THRESHOLD,
            mode: Mode::Task1,
            token_budget: DEFAULT_TOKEN_BUDGET,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1]");
        }
        if self.k_max == 0 || self.top_n == 0 || self.top_m == 0 {
            return bad("k_max, top_n and top_m must be positive");
        }
        if self.token_budget == 0 || self.timeout_ms == 0 {
            return bad("token_budget and timeout_ms must be positive");
        }
        Ok(())
    }
}

/// The model-backed stages. All implementations must tolerate concurrent use.
#[derive(Clone)]
pub struct Bindings {
    pub scorer: Arc<dyn Scorer>,
    pub embedder: Arc<dyn Embedder>,
    pub caller: Arc<dyn ToolCaller>,
    pub generator: Arc<dyn Generator>,
}

impl Bindings {
    /// Deterministic offline bindings.
    pub fn reference() -> Self {
        Self {
            scorer: Arc::new(LexicalScorer),
            embedder: Arc::new(HashedBowEmbedder::default()),
            caller: Arc::new(KeywordToolCaller),
            generator: Arc::new(ExtractiveGenerator),
        }
    }
}

/// What happened on the API path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Fallback {
    /// Static context was sufficient.
    NotNeeded,
    /// Insufficient, but the mode forbids API calls.
    NotPermitted,
    Succeeded,
    CallerFailed { message: String },
    ValidationFailed { message: String },
    ApiFailed { message: String },
}

impl Fallback {
    pub fn attempted(&self) -> bool {
        !matches!(self, Fallback::NotNeeded | Fallback::NotPermitted)
    }
}

/// Per-query audit record. Field names are stable; this is the evaluation
/// input and the JSONL trace format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub query_id: String,
    pub mode: Mode,
    pub snippets_count: usize,
    pub ranked: Vec<RankedPassage>,
    pub decision: Option<SufficiencyDecision>,
    pub fallback: Option<Fallback>,
    pub api_candidates: Vec<String>,
    pub api_call: Option<ApiCall>,
    pub api_response: Option<ApiResponse>,
    /// Answered from static passages although they were judged insufficient.
    pub degraded: bool,
    pub answer: Option<AnswerRecord>,
    /// Set when the query failed outright; `answer` is then absent.
    pub error: Option<String>,
    /// Stage name → wall time in microseconds.
    pub stage_timings: BTreeMap<String, u64>,
}

impl QueryTrace {
    fn new(query_id: &str, mode: Mode) -> Self {
        Self {
            query_id: query_id.to_string(),
            mode,
            snippets_count: 0,
            ranked: Vec::new(),
            decision: None,
            fallback: None,
            api_candidates: Vec::new(),
            api_call: None,
            api_response: None,
            degraded: false,
            answer: None,
            error: None,
            stage_timings: BTreeMap::new(),
        }
    }

    /// Copy with every wall-clock measurement zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let mut trace = self.clone();
        trace.stage_timings.values_mut().for_each(|v| *v = 0);
        if let Some(r) = trace.api_response.as_mut() {
            r.latency_ms = 0;
        }
        trace
    }

    pub fn top_score(&self) -> Option<f64> {
        self.decision.map(|d| d.top_score.value())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("schema index: {0}")]
    Index(#[from] IndexError),
    #[error("query {query_id}: {stage} failed: {message}")]
    Query { query_id: String, stage: &'static str, message: String },
}

pub struct Pipeline {
    config: PipelineConfig,
    bindings: Bindings,
    catalog: Vec<ApiSchema>,
    index: SchemaIndex,
    api_token: Option<String>,
}

impl Pipeline {
    /// Validates the configuration and embeds the catalog. `task2` needs a
    /// non-empty catalog.
    pub fn new(config: PipelineConfig, bindings: Bindings, catalog: Vec<ApiSchema>) -> Result<Self, PipelineError> {
        config.validate()?;
        if config.mode == Mode::Task2 && catalog.is_empty() {
            return Err(PipelineError::Config("task2 mode requires a non-empty API catalog".into()));
        }
        let index = SchemaIndex::build(&catalog, bindings.embedder.as_ref())?;
        Ok(Self { config, bindings, catalog, index, api_token: None })
    }

    /// Bearer token forwarded on API executions.
    pub fn with_api_token(mut self, token: Option<String>) -> Self {
        self.api_token = token;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn index(&self) -> &SchemaIndex {
        &self.index
    }

    pub fn run_query(&self, record: &DatasetRecord) -> Result<QueryTrace, PipelineError> {
        let cfg = &self.config;
        let query = &record.query;
        let mut trace = QueryTrace::new(&query.id, cfg.mode);
        let fail = |stage: &'static str, message: String| PipelineError::Query { query_id: query.id.clone(), stage, message };

        let mut clock = Instant::now();
        let mut lap = |trace: &mut QueryTrace, stage: &str| {
            let now = Instant::now();
            trace.stage_timings.insert(stage.to_string(), (now - clock).as_micros() as u64);
            clock = now;
        };

        let mut docs = corpus::retrieval_set(record);
        docs.truncate(cfg.k_max);
        lap(&mut trace, "retrieve");

        let snippets = clean::clean_all(&docs);
        trace.snippets_count = snippets.len();
        lap(&mut trace, "clean");

        let ranked = rerank::rerank(query, &snippets, self.bindings.scorer.as_ref(), cfg.top_n)
            .map_err(|e| fail("rerank", e.to_string()))?;
        lap(&mut trace, "rerank");

        let decision = sufficiency::decide(&ranked, cfg.threshold).map_err(|e| fail("gate", e.to_string()))?;
        trace.decision = Some(decision);
        lap(&mut trace, "gate");

        let fallback = match (decision.verdict, cfg.mode) {
            (Verdict::Sufficient, _) => Fallback::NotNeeded,
            (Verdict::Insufficient, Mode::Task1) => Fallback::NotPermitted,
            (Verdict::Insufficient, Mode::Task2) => {
                let outcome = self.api_fallback(record, &mut trace);
                lap(&mut trace, "fallback");
                outcome
            }
        };
        trace.degraded = decision.verdict == Verdict::Insufficient && fallback != Fallback::Succeeded;
        trace.fallback = Some(fallback);

        let ctx = GenerationContext {
            query: query.clone(),
            passages: ranked.clone(),
            api_response: trace.api_response.clone().filter(|r| r.is_ok()),
            token_budget: cfg.token_budget,
        };
        trace.ranked = ranked;
        let answer = generator::generate_answer(&ctx, self.bindings.generator.as_ref())
            .map_err(|e| fail("generate", e.to_string()))?;
        trace.answer = Some(answer);
        lap(&mut trace, "generate");
        Ok(trace)
    }

    fn api_fallback(&self, record: &DatasetRecord, trace: &mut QueryTrace) -> Fallback {
        let candidates = match self.index.top_m(&record.query, self.config.top_m, self.bindings.embedder.as_ref()) {
            Ok(c) => c,
            Err(e) => return Fallback::CallerFailed { message: format!("schema search: {e}") },
        };
        trace.api_candidates = candidates.iter().map(|s| s.name.clone()).collect();

        let call = match router::propose_call(&record.query.text, &candidates, self.bindings.caller.as_ref()) {
            Ok(call) => call,
            Err(e) => return Fallback::CallerFailed { message: e.to_string() },
        };
        trace.api_call = Some(call.clone());

        let validated = match router::validate(&call, &self.catalog) {
            Ok(v) => v,
            Err(e) => return Fallback::ValidationFailed { message: e.to_string() },
        };
        let response = router::execute(&validated, &self.catalog, self.config.timeout_ms, self.api_token.as_deref());
        let outcome = if response.is_ok() {
            Fallback::Succeeded
        } else {
            Fallback::ApiFailed { message: response.body.clone() }
        };
        trace.api_response = Some(response);
        outcome
    }

    /// Runs every record with up to `parallelism` queries in flight. Output
    /// order matches input order; failed queries yield traces with `error`
    /// set.
    pub fn run_batch(&self, records: &[DatasetRecord], parallelism: usize) -> Vec<QueryTrace> {
        let workers = parallelism.max(1).min(records.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<QueryTrace>>> = Mutex::new(vec![None; records.len()]);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(record) = records.get(i) else { break };
                    let trace = self.run_query(record).unwrap_or_else(|e| {
                        let mut t = QueryTrace::new(&record.query.id, self.config.mode);
                        t.error = Some(e.to_string());
                        t
                    });
                    slots.lock().expect("no worker panics while holding the lock")[i] = Some(trace);
                });
            }
        });
        slots
            .into_inner()
            .expect("workers joined")
            .into_iter()
            .map(|t| t.expect("every slot filled"))
            .collect()
    }
}
