//! Operator commands behind the `ragroute` binary.
//!
//! Every command takes a resolved [`RunConfig`]; [`CommonArgs`] holds the
//! flags shared by the subcommands and [`resolve_config`] layers them over
//! the environment and the optional config file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use ragroute_core::config::{BindingKind, ConfigError, ConfigLayer, RunConfig};
use ragroute_core::corpus::{self, CorpusError, DatasetRecord, Query};
use ragroute_core::eval::{self, BreakdownKey, EvalError, EvalMetrics};
use ragroute_core::generator::AnswerRecord;
use ragroute_core::mock_server::{self, MockApiServer, MockServerError};
use ragroute_core::pipeline::{Fallback, Mode, Pipeline, PipelineError, QueryTrace};
use ragroute_core::schema_index::{self, ApiSchema, IndexError, SchemaIndex};
use ragroute_core::sufficiency::{self, SufficiencyError, TunedThreshold};
use ragroute_core::synthetic::{self, SynthError, SynthOptions};
use thiserror::Error;

pub const TRACES_FILE: &str = "traces.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const RUN_TRACE_FILE: &str = "run_trace.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Pipeline(PipelineError),
    #[error(transparent)]
    Sufficiency(#[from] SufficiencyError),
    #[error(transparent)]
    MockServer(#[from] MockServerError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => CliError::Config(m),
            other => CliError::Pipeline(other),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Flags shared by the subcommands. Unset flags defer to the environment,
/// then the config file, then defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    #[arg(long, global = true)]
    pub fixtures: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// task1 (web pages only) or task2 (API fallback allowed).
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    /// Sufficiency threshold in [0, 1].
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub top_n: Option<usize>,
    #[arg(long, global = true)]
    pub top_m: Option<usize>,
    #[arg(long, global = true)]
    pub k_max: Option<usize>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Prompt budget in words.
    #[arg(long, global = true)]
    pub token_budget: Option<usize>,
    /// API call timeout.
    #[arg(long, global = true)]
    pub timeout_ms: Option<u64>,
    #[arg(long, global = true)]
    pub scorer: Option<BindingKind>,
    #[arg(long, global = true)]
    pub scorer_url: Option<String>,
    #[arg(long, global = true)]
    pub embedder: Option<BindingKind>,
    #[arg(long, global = true)]
    pub embedder_url: Option<String>,
    #[arg(long, global = true)]
    pub caller: Option<BindingKind>,
    #[arg(long, global = true)]
    pub caller_url: Option<String>,
    #[arg(long, global = true)]
    pub generator: Option<BindingKind>,
    #[arg(long, global = true)]
    pub generator_url: Option<String>,
}

impl CommonArgs {
    pub fn to_layer(&self) -> ConfigLayer {
        let mut l = ConfigLayer::default();
        l.paths.dataset = self.dataset.clone();
        l.paths.catalog = self.catalog.clone();
        l.paths.fixtures = self.fixtures.clone();
        l.paths.output = self.output.clone();
        l.pipeline.mode = self.mode;
        l.pipeline.threshold = self.threshold;
        l.pipeline.top_n = self.top_n;
        l.pipeline.top_m = self.top_m;
        l.pipeline.k_max = self.k_max;
        l.pipeline.parallelism = self.parallelism;
        l.pipeline.token_budget = self.token_budget;
        l.pipeline.timeout_ms = self.timeout_ms;
        l.bindings.scorer.kind = self.scorer;
        l.bindings.scorer.url = self.scorer_url.clone();
        l.bindings.embedder.kind = self.embedder;
        l.bindings.embedder.url = self.embedder_url.clone();
        l.bindings.caller.kind = self.caller;
        l.bindings.caller.url = self.caller_url.clone();
        l.bindings.generator.kind = self.generator;
        l.bindings.generator.url = self.generator_url.clone();
        l
    }
}

/// Flags over `env` over the config file named by `--config`.
pub fn resolve_config(args: &CommonArgs, env: ConfigLayer) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(path) => ConfigLayer::load(path)?,
        None => ConfigLayer::default(),
    };
    Ok(RunConfig::resolve([args.to_layer(), env, file])?)
}

fn load_catalog(config: &RunConfig) -> Result<Vec<ApiSchema>, CliError> {
    match (&config.paths.catalog, config.pipeline.mode) {
        (Some(path), _) => Ok(schema_index::load_catalog(path)?),
        (None, Mode::Task2) => Err(CliError::Config("task2 mode needs an API catalog (--catalog)".into())),
        (None, Mode::Task1) => Ok(Vec::new()),
    }
}

fn build_pipeline(config: &RunConfig) -> Result<Pipeline, CliError> {
    let catalog = load_catalog(config)?;
    let pipeline = Pipeline::new(config.pipeline.clone(), config.bindings.build(), catalog)?;
    Ok(pipeline.with_api_token(config.bindings.api_token.clone()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: QueryTrace,
    pub trace_path: PathBuf,
}

impl RunOutput {
    pub fn answer(&self) -> Option<&AnswerRecord> {
        self.trace.answer.as_ref()
    }

    pub fn summary(&self) -> String {
        let t = &self.trace;
        let mut out = String::new();
        match &t.answer {
            Some(a) => {
                let _ = writeln!(out, "answer: {}", a.answer_text);
                let _ = writeln!(out, "abstained: {}", a.abstained);
                let _ = writeln!(out, "used_api: {}", a.used_api);
            }
            None => {
                let _ = writeln!(out, "answer: (none)");
            }
        }
        if let Some(d) = &t.decision {
            let verdict = match d.verdict {
                sufficiency::Verdict::Sufficient => "sufficient",
                sufficiency::Verdict::Insufficient => "insufficient",
            };
            let _ = writeln!(out, "verdict: {verdict} (top score {:.3}, threshold {:.3})", d.top_score.value(), d.threshold);
        }
        if let Some(call) = &t.api_call {
            let _ = writeln!(out, "api_call: {} {}", call.schema_name, serde_json::to_string(&call.arguments).unwrap_or_default());
        }
        if let Some(f) = &t.fallback {
            let _ = writeln!(out, "fallback: {}", fallback_label(f));
        }
        let _ = writeln!(out, "trace: {}", self.trace_path.display());
        out
    }
}

fn fallback_label(f: &Fallback) -> String {
    match f {
        Fallback::NotNeeded => "not needed".into(),
        Fallback::NotPermitted => "not permitted in task1".into(),
        Fallback::Succeeded => "succeeded".into(),
        Fallback::CallerFailed { message } => format!("caller failed: {message}"),
        Fallback::ValidationFailed { message } => format!("validation failed: {message}"),
        Fallback::ApiFailed { message } => format!("api failed: {message}"),
    }
}

/// Answers one query. `query` is looked up in the dataset by id, then by
/// text; an unknown query runs without any pages.
pub fn cmd_run(query: &str, config: &RunConfig) -> Result<RunOutput, CliError> {
    let pipeline = build_pipeline(config)?;
    let records = match &config.paths.dataset {
        Some(path) => corpus::load_dataset(path, config.pipeline.k_max)?,
        None => Vec::new(),
    };
    let record = records
        .iter()
        .find(|r| r.query.id == query)
        .or_else(|| records.iter().find(|r| r.query.text == query))
        .cloned()
        .unwrap_or_else(|| DatasetRecord { query: Query::new("adhoc", query), documents: Vec::new() });
    let trace = pipeline.run_query(&record)?;

    create_dir(&config.paths.output)?;
    let trace_path = config.paths.output.join(RUN_TRACE_FILE);
    let json = serde_json::to_string_pretty(&trace).expect("traces serialize");
    write_file(&trace_path, &(json + "\n"))?;
    Ok(RunOutput { trace, trace_path })
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub metrics: EvalMetrics,
    /// `(key, per-label metrics)` for each requested breakdown.
    pub breakdowns: Vec<(BreakdownKey, BTreeMap<String, EvalMetrics>)>,
    pub unscorable: usize,
    pub traces: Vec<QueryTrace>,
    pub report: String,
    pub traces_path: PathBuf,
    pub metrics_path: PathBuf,
    pub report_path: PathBuf,
}

pub fn breakdown_name(key: BreakdownKey) -> &'static str {
    match key {
        BreakdownKey::Dynamism => "dynamism",
        BreakdownKey::Domain => "domain",
        BreakdownKey::QuestionType => "question_type",
    }
}

fn fallback_counts(traces: &[QueryTrace]) -> String {
    let count = |f: &dyn Fn(&QueryTrace) -> bool| traces.iter().filter(|t| f(t)).count();
    format!(
        "api attempted: {}  succeeded: {}  failed: {}  degraded: {}  errors: {}\n",
        count(&|t| t.fallback.as_ref().is_some_and(Fallback::attempted)),
        count(&|t| t.fallback == Some(Fallback::Succeeded)),
        count(&|t| t.fallback.as_ref().is_some_and(|f| f.attempted() && *f != Fallback::Succeeded)),
        count(&|t| t.degraded),
        count(&|t| t.error.is_some()),
    )
}

/// Writes `traces.jsonl`, `metrics.csv` and `report.txt` under the output
/// directory.
pub fn write_eval_outputs(
    dir: &Path,
    config: &RunConfig,
    traces: &[QueryTrace],
    queries: &[Query],
    keys: &[BreakdownKey],
) -> Result<EvalReport, CliError> {
    let (judgments, unscorable) = eval::judge_all(traces, queries);
    let metrics = eval::aggregate(&judgments)?;
    let breakdowns: Vec<_> = keys.iter().map(|&k| (k, eval::breakdown(&judgments, queries, k))).collect();

    let mut rows = vec![("all".to_string(), metrics)];
    for (key, groups) in &breakdowns {
        rows.extend(groups.iter().map(|(label, m)| (format!("{}={label}", breakdown_name(*key)), *m)));
    }

    let mut report = format!(
        "mode: {}  threshold: {:.4}  top_n: {}  top_m: {}  k_max: {}\nqueries: {}  scored: {}  unscorable: {}\n",
        match config.pipeline.mode {
            Mode::Task1 => "task1",
            Mode::Task2 => "task2",
        },
        config.pipeline.threshold,
        config.pipeline.top_n,
        config.pipeline.top_m,
        config.pipeline.k_max,
        traces.len(),
        judgments.len(),
        unscorable,
    );
    report.push_str(&fallback_counts(traces));
    report.push('\n');
    report.push_str(&eval::format_table(&[("all".to_string(), metrics)]));
    for (key, groups) in &breakdowns {
        let _ = write!(report, "\nby {}:\n", breakdown_name(*key));
        let group_rows: Vec<_> = groups.iter().map(|(l, m)| (l.clone(), *m)).collect();
        report.push_str(&eval::format_table(&group_rows));
    }

    create_dir(dir)?;
    let traces_path = dir.join(TRACES_FILE);
    let mut lines = String::new();
    for t in traces {
        lines.push_str(&serde_json::to_string(t).expect("traces serialize"));
        lines.push('\n');
    }
    write_file(&traces_path, &lines)?;

    let metrics_path = dir.join(METRICS_FILE);
    let file = fs::File::create(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut w = BufWriter::new(file);
    eval::write_csv(&mut w, &rows).map_err(io_err(&metrics_path))?;
    w.flush().map_err(io_err(&metrics_path))?;

    let report_path = dir.join(REPORT_FILE);
    write_file(&report_path, &report)?;

    Ok(EvalReport {
        metrics,
        breakdowns,
        unscorable,
        traces: traces.to_vec(),
        report,
        traces_path,
        metrics_path,
        report_path,
    })
}

/// Runs the whole dataset and scores it.
pub fn cmd_eval(config: &RunConfig, keys: &[BreakdownKey]) -> Result<EvalReport, CliError> {
    let dataset = config.paths.dataset.as_ref().ok_or_else(|| CliError::Config("eval needs a dataset (--dataset)".into()))?;
    let pipeline = build_pipeline(config)?;
    let records = corpus::load_dataset(dataset, config.pipeline.k_max)?;
    let traces = pipeline.run_batch(&records, config.parallelism);
    let queries: Vec<Query> = records.into_iter().map(|r| r.query).collect();
    write_eval_outputs(&config.paths.output, config, &traces, &queries, keys)
}

pub fn cmd_tune(dev_set: &Path) -> Result<TunedThreshold, CliError> {
    let dev = sufficiency::load_dev_set(dev_set)?;
    Ok(sufficiency::tune_threshold(&dev)?)
}

/// Index summary, plus the top-m schemas for `query` when given.
pub fn cmd_index(config: &RunConfig, query: Option<&str>) -> Result<String, CliError> {
    let path = config.paths.catalog.as_ref().ok_or_else(|| CliError::Config("index needs a catalog (--catalog)".into()))?;
    let catalog = schema_index::load_catalog(path)?;
    let bindings = config.bindings.build();
    let index = SchemaIndex::build(&catalog, bindings.embedder.as_ref())?;
    let mut out = format!(
        "{} schemas, dimension {}\n",
        index.len(),
        index.dimension().map_or_else(|| "-".to_string(), |d| d.to_string())
    );
    if let Some(text) = query {
        let vector = bindings.embedder.embed(text).map_err(IndexError::EmbedQuery)?;
        for (rank, (schema, score)) in index.top_m_by_vector(&vector, config.pipeline.top_m)?.into_iter().enumerate() {
            let _ = writeln!(out, "{:>2}. {:<32} {score:.4}", rank + 1, schema.name);
        }
    }
    Ok(out)
}

/// Starts the mock API server for the configured catalog and fixtures.
pub fn cmd_mock_apis(config: &RunConfig, addr: &str) -> Result<MockApiServer, CliError> {
    let catalog_path = config.paths.catalog.as_ref().ok_or_else(|| CliError::Config("mock-apis needs --catalog".into()))?;
    let fixtures_path = config.paths.fixtures.as_ref().ok_or_else(|| CliError::Config("mock-apis needs --fixtures".into()))?;
    let catalog = schema_index::load_catalog(catalog_path)?;
    let fixtures = mock_server::load_fixtures(fixtures_path)?;
    Ok(MockApiServer::start(&catalog, &fixtures, addr)?)
}

fn write_records(path: &Path, records: &[DatasetRecord]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    corpus::write_dataset(&mut w, records).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub dataset: PathBuf,
    pub dev_dataset: PathBuf,
    pub dev_set: PathBuf,
    pub catalog: PathBuf,
    pub fixtures: PathBuf,
}

/// Writes a synthetic benchmark: datasets, the labelled dev set (scored
/// with the configured scorer), catalog and fixtures.
pub fn cmd_synth(opts: &SynthOptions, config: &RunConfig, dir: &Path) -> Result<SynthFiles, CliError> {
    let bench = synthetic::generate(opts)?;
    create_dir(dir)?;
    let files = SynthFiles {
        dataset: dir.join("dataset.jsonl"),
        dev_dataset: dir.join("dev_dataset.jsonl"),
        dev_set: dir.join("dev.jsonl"),
        catalog: dir.join("catalog.json"),
        fixtures: dir.join("fixtures.json"),
    };
    write_records(&files.dataset, &bench.dataset)?;
    write_records(&files.dev_dataset, &bench.dev_dataset)?;

    let scorer = config.bindings.build().scorer;
    let dev = synthetic::label_dev_set(&bench.dev_dataset, scorer.as_ref(), config.pipeline.top_n, config.pipeline.k_max)
        .map_err(|e| CliError::Pipeline(PipelineError::Query { query_id: "dev".into(), stage: "rerank", message: e.to_string() }))?;
    let dev_lines: String = dev.iter().map(|e| serde_json::to_string(e).expect("serializable") + "\n").collect();
    write_file(&files.dev_set, &dev_lines)?;

    write_file(&files.catalog, &(serde_json::to_string_pretty(&bench.catalog).expect("serializable") + "\n"))?;
    write_file(&files.fixtures, &(serde_json::to_string_pretty(&bench.fixtures).expect("serializable") + "\n"))?;
    Ok(files)
}

fn load_traces(path: &Path) -> Result<Vec<QueryTrace>, CliError> {
    let contents = fs::read_to_string(path).map_err(io_err(path))?;
    contents
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Io { path: path.display().to_string(), message: format!("line {}: {e}", i + 1) })
        })
        .collect()
}

/// Re-scores a trace file, optionally against a baseline trace file.
pub fn cmd_report(traces: &Path, baseline: Option<&Path>, config: &RunConfig, keys: &[BreakdownKey]) -> Result<String, CliError> {
    let dataset = config.paths.dataset.as_ref().ok_or_else(|| CliError::Config("report needs a dataset (--dataset)".into()))?;
    let queries: Vec<Query> = corpus::load_dataset(dataset, config.pipeline.k_max)?.into_iter().map(|r| r.query).collect();
    let score = |path: &Path| -> Result<(Vec<eval::Judgment>, EvalMetrics), CliError> {
        let (judgments, _) = eval::judge_all(&load_traces(path)?, &queries);
        let metrics = eval::aggregate(&judgments)?;
        Ok((judgments, metrics))
    };
    let (judgments, metrics) = score(traces)?;
    let mut out = match baseline {
        Some(b) => {
            let (_, base) = score(b)?;
            eval::format_comparison("baseline", &base, "candidate", &metrics)
        }
        None => eval::format_table(&[("all".to_string(), metrics)]),
    };
    for &key in keys {
        let _ = write!(out, "\nby {}:\n", breakdown_name(key));
        let rows: Vec<_> = eval::breakdown(&judgments, &queries, key).into_iter().collect();
        out.push_str(&eval::format_table(&rows));
    }
    Ok(out)
}
