//! Prompt assembly and grounded answer generation.
//!
//! The prompt is laid out as
//!
//! ```text
//! <SYSTEM_PREAMBLE>
//!
//! API response:
//! <body>
//!
//! Passage 1 (<url>):
//! <text>
//!
//! Question: <query>
//! Answer:
//! ```
//!
//! The API block only appears for a successful response, and always ahead
//! of the passages. Budgets count whitespace-delimited words over the whole
//! prompt; passages are dropped whole from the lowest-ranked end until it
//! fits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Query;
use crate::rerank::RankedPassage;
use crate::router::ApiResponse;
use crate::text;

pub const SYSTEM_PREAMBLE: &str =
    "Answer in one or two short sentences. If you are not sure, respond with I don't know.";
pub const ABSTENTION: &str = "I don't know";
/// Default budget in words, standing in for a 4K-token context window.
pub const DEFAULT_TOKEN_BUDGET: usize = 4000;
/// Below this query coverage the extractive generator abstains.
pub const EXTRACTIVE_MIN_COVERAGE: f64 = 0.2;

const API_HEADER: &str = "API response:";
const PASSAGE_PREFIX: &str = "Passage ";
const QUESTION_PREFIX: &str = "Question: ";
const ANSWER_CUE: &str = "Answer:";

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationContext {
    pub query: Query,
    /// Passages in rank order.
    pub passages: Vec<RankedPassage>,
    pub api_response: Option<ApiResponse>,
    pub token_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub answer_text: String,
    pub abstained: bool,
    pub used_api: bool,
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    /// How many of the context's passages made it in (a prefix).
    pub passages_included: usize,
    pub api_included: bool,
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("generator unreachable: {0}")]
    Unreachable(String),
    #[error("unparseable generator output: {0}")]
    Unparseable(String),
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("preamble and question need {needed} words but the budget is {budget}")]
    QueryExceedsBudget { needed: usize, budget: usize },
    #[error("generation failed: {0}")]
    Binding(#[from] GeneratorError),
}

pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError>;
}

fn passage_block(position: usize, passage: &RankedPassage) -> String {
    format!("{PASSAGE_PREFIX}{position} ({}):\n{}", passage.snippet.source_url, passage.snippet.text)
}

/// Renders the prompt within `ctx.token_budget` words.
pub fn render_prompt(ctx: &GenerationContext) -> Result<RenderedPrompt, GenerateError> {
    let question = format!("{QUESTION_PREFIX}{}\n{ANSWER_CUE}", ctx.query.text);
    let mut used = text::word_count(SYSTEM_PREAMBLE) + text::word_count(&question);
    if used > ctx.token_budget {
        return Err(GenerateError::QueryExceedsBudget { needed: used, budget: ctx.token_budget });
    }

    let mut blocks = vec![SYSTEM_PREAMBLE.to_string()];
    let mut api_included = false;
    if let Some(response) = ctx.api_response.as_ref().filter(|r| r.is_ok()) {
        let block = format!("{API_HEADER}\n{}", response.body);
        let words = text::word_count(&block);
        if used + words <= ctx.token_budget {
            used += words;
            blocks.push(block);
            api_included = true;
        }
    }
    let mut passages_included = 0;
    for (i, passage) in ctx.passages.iter().enumerate() {
        let block = passage_block(i + 1, passage);
        let words = text::word_count(&block);
        if used + words > ctx.token_budget {
            break;
        }
        used += words;
        blocks.push(block);
        passages_included += 1;
    }
    blocks.push(question);
    Ok(RenderedPrompt { text: blocks.join("\n\n"), passages_included, api_included })
}

/// Lowercases, unifies apostrophes, collapses whitespace and strips trailing
/// punctuation.
fn normalize_abstention(text: &str) -> String {
    let lowered = text.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'");
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace()).to_string()
}

/// True when `answer` is the abstention phrase, up to case, whitespace and
/// terminal punctuation. Longer answers that merely contain it do not count.
pub fn is_abstention(answer: &str) -> bool {
    normalize_abstention(answer) == normalize_abstention(ABSTENTION)
}

pub fn generate_answer(ctx: &GenerationContext, generator: &dyn Generator) -> Result<AnswerRecord, GenerateError> {
    let prompt = render_prompt(ctx)?;
    let answer_text = generator.generate(&prompt.text)?;
    Ok(AnswerRecord {
        abstained: is_abstention(&answer_text),
        answer_text,
        used_api: prompt.api_included,
        sources: ctx.passages[..prompt.passages_included]
            .iter()
            .map(|p| p.snippet.source_url.clone())
            .collect(),
    })
}

/// The parts of a prompt rendered by [`render_prompt`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPrompt {
    pub question: String,
    /// Context lines (API body and passage text), headers removed.
    pub context: Vec<String>,
}

pub fn parse_prompt(prompt: &str) -> ParsedPrompt {
    let body = prompt.strip_prefix(SYSTEM_PREAMBLE).unwrap_or(prompt);
    let (context, question) = match body.rfind(&format!("\n{QUESTION_PREFIX}")) {
        Some(at) => (&body[..at], &body[at + 1 + QUESTION_PREFIX.len()..]),
        None => (body, ""),
    };
    let question = question.strip_suffix(ANSWER_CUE).unwrap_or(question).trim().to_string();
    let context = context
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && *l != API_HEADER && !is_passage_header(l))
        .map(str::to_string)
        .collect();
    ParsedPrompt { question, context }
}

fn is_passage_header(line: &str) -> bool {
    line.strip_prefix(PASSAGE_PREFIX)
        .and_then(|rest| rest.split_once(' '))
        .is_some_and(|(n, rest)| n.chars().all(|c| c.is_ascii_digit()) && rest.starts_with('(') && rest.ends_with("):"))
}

/// Splits at `.`, `!` or `?` followed by whitespace.
pub fn split_sentences(line: &str) -> Vec<&str> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut chars = line.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_some_and(|(_, next)| next.is_whitespace()) {
            sentences.push(line[start..=i].trim());
            start = i + 1;
        }
    }
    sentences.push(line[start..].trim());
    sentences.retain(|s| !s.is_empty());
    sentences
}

/// Reference generator: returns the context sentence covering the most
/// query terms (earliest wins ties), or abstains when the best coverage is
/// under [`EXTRACTIVE_MIN_COVERAGE`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveGenerator;

impl Generator for ExtractiveGenerator {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorError> {
        let parsed = parse_prompt(prompt);
        let terms = text::content_terms(&parsed.question);
        let mut best: Option<(&str, f64)> = None;
        for line in &parsed.context {
            for sentence in split_sentences(line) {
                let coverage = text::query_coverage(&terms, sentence);
                if best.is_none_or(|(_, b)| coverage > b) {
                    best = Some((sentence, coverage));
                }
            }
        }
        Ok(match best {
            Some((sentence, coverage)) if coverage >= EXTRACTIVE_MIN_COVERAGE => sentence.to_string(),
            _ => format!("{ABSTENTION}."),
        })
    }
}
