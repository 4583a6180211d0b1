//! Accuracy / hallucination / missing scoring of pipeline traces.
//!
//! An abstention is *missing*; an answer containing the gold answer (after
//! normalization, on word boundaries) is *correct*; any other answer is
//! *hallucinated*. A query that failed outright has no answer and counts as
//! missing.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Query;
use crate::pipeline::QueryTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Correct,
    Hallucinated,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub query_id: String,
    pub outcome: Outcome,
}

/// Percentages are kept unrounded; [`EvalMetrics::rounded`] gives the
/// two-decimal values that reports print.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy_pct: f64,
    pub hallucination_pct: f64,
    pub missing_pct: f64,
    pub n: usize,
}

impl EvalMetrics {
    pub fn rounded(&self) -> [f64; 3] {
        let r = |v: f64| (v * 100.0).round() / 100.0;
        [r(self.accuracy_pct), r(self.hallucination_pct), r(self.missing_pct)]
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot aggregate an empty judgment set")]
    Empty,
    #[error("gold answer is empty")]
    EmptyGold,
}

/// Lowercase, punctuation replaced by spaces, whitespace collapsed.
pub fn normalize_answer(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Whether the normalized gold occurs in the normalized answer as a whole
/// word sequence.
pub fn contains_answer(answer: &str, gold: &str) -> bool {
    let gold = normalize_answer(gold);
    !gold.is_empty() && format!(" {} ", normalize_answer(answer)).contains(&format!(" {gold} "))
}

pub fn judge(trace: &QueryTrace, gold: &str) -> Result<Judgment, EvalError> {
    if normalize_answer(gold).is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let outcome = match &trace.answer {
        None => Outcome::Missing,
        Some(a) if a.abstained => Outcome::Missing,
        Some(a) if contains_answer(&a.answer_text, gold) => Outcome::Correct,
        Some(_) => Outcome::Hallucinated,
    };
    Ok(Judgment { query_id: trace.query_id.clone(), outcome })
}

pub fn aggregate(judgments: &[Judgment]) -> Result<EvalMetrics, EvalError> {
    if judgments.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = judgments.len();
    let pct = |o: Outcome| 100.0 * judgments.iter().filter(|j| j.outcome == o).count() as f64 / n as f64;
    Ok(EvalMetrics {
        accuracy_pct: pct(Outcome::Correct),
        hallucination_pct: pct(Outcome::Hallucinated),
        missing_pct: pct(Outcome::Missing),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownKey {
    Dynamism,
    Domain,
    QuestionType,
}

impl std::str::FromStr for BreakdownKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dynamism" => Ok(Self::Dynamism),
            "domain" => Ok(Self::Domain),
            "question_type" | "question-type" => Ok(Self::QuestionType),
            other => Err(format!("unknown breakdown key {other:?}")),
        }
    }
}

pub const UNKNOWN_GROUP: &str = "unknown";

fn group_label(query: Option<&Query>, key: BreakdownKey) -> String {
    let label = query.and_then(|q| match key {
        BreakdownKey::Dynamism => q.dynamism.map(|d| d.as_str().to_string()),
        BreakdownKey::Domain => q.domain.map(|d| d.as_str().to_string()),
        BreakdownKey::QuestionType => q.question_type.clone(),
    });
    label.unwrap_or_else(|| UNKNOWN_GROUP.to_string())
}

/// Per-label metrics. Judgments whose query is unknown or unlabelled fall
/// under [`UNKNOWN_GROUP`].
pub fn breakdown(judgments: &[Judgment], queries: &[Query], key: BreakdownKey) -> BTreeMap<String, EvalMetrics> {
    let by_id: HashMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut groups: BTreeMap<String, Vec<Judgment>> = BTreeMap::new();
    for j in judgments {
        groups.entry(group_label(by_id.get(j.query_id.as_str()).copied(), key)).or_default().push(j.clone());
    }
    groups
        .into_iter()
        .map(|(label, js)| (label, aggregate(&js).expect("groups are never empty")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricDeltas {
    pub accuracy: f64,
    pub hallucination: f64,
    pub missing: f64,
}

/// `candidate - baseline` for each metric.
pub fn compare(baseline: &EvalMetrics, candidate: &EvalMetrics) -> MetricDeltas {
    MetricDeltas {
        accuracy: candidate.accuracy_pct - baseline.accuracy_pct,
        hallucination: candidate.hallucination_pct - baseline.hallucination_pct,
        missing: candidate.missing_pct - baseline.missing_pct,
    }
}

pub fn format_comparison(baseline_label: &str, baseline: &EvalMetrics, candidate_label: &str, candidate: &EvalMetrics) -> String {
    let d = compare(baseline, candidate);
    let mut out = format_table(&[(baseline_label.to_string(), *baseline), (candidate_label.to_string(), *candidate)]);
    let _ = writeln!(
        out,
        "{:<16} {:>+9.2} {:>+9.2} {:>+9.2}",
        "delta",
        d.accuracy,
        d.hallucination,
        d.missing
    );
    out
}

/// Plain-text table, columns Acc. / Hall. / Miss. in percent.
pub fn format_table(rows: &[(String, EvalMetrics)]) -> String {
    let mut out = format!("{:<16} {:>9} {:>9} {:>9} {:>6}\n", "", "Acc.(%)", "Hall.(%)", "Miss.(%)", "n");
    for (label, m) in rows {
        let [a, h, mi] = m.rounded();
        let _ = writeln!(out, "{label:<16} {a:>9.2} {h:>9.2} {mi:>9.2} {:>6}", m.n);
    }
    out
}

/// CSV with header `group,n,accuracy_pct,hallucination_pct,missing_pct`.
pub fn write_csv<W: io::Write>(out: W, rows: &[(String, EvalMetrics)]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "n", "accuracy_pct", "hallucination_pct", "missing_pct"])?;
    for (label, m) in rows {
        let [a, h, mi] = m.rounded();
        w.write_record([label.clone(), m.n.to_string(), format!("{a:.2}"), format!("{h:.2}"), format!("{mi:.2}")])?;
    }
    w.flush()
}

/// Judgments for every trace whose query has a gold answer, plus the number
/// of traces skipped for lacking one.
pub fn judge_all(traces: &[QueryTrace], queries: &[Query]) -> (Vec<Judgment>, usize) {
    let gold: HashMap<&str, &str> = queries
        .iter()
        .filter_map(|q| q.gold_answer.as_deref().filter(|g| !normalize_answer(g).is_empty()).map(|g| (q.id.as_str(), g)))
        .collect();
    let mut judgments = Vec::new();
    let mut unscorable = 0;
    for trace in traces {
        match gold.get(trace.query_id.as_str()) {
            Some(g) => judgments.push(judge(trace, g).expect("gold checked non-empty")),
            None => unscorable += 1,
        }
    }
    (judgments, unscorable)
}
