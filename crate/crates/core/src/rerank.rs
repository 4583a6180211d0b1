//! Pointwise relevance scoring and top-N selection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clean::CleanedSnippet;
use crate::corpus::Query;
use crate::text;

/// Default number of passages forwarded to generation.
pub const DEFAULT_TOP_N: usize = 3;

/// A relevance score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RelevanceScore(f64);

impl RelevanceScore {
    pub const ZERO: RelevanceScore = RelevanceScore(0.0);

    /// Rejects values outside `[0, 1]` and non-finite values.
    pub fn new(value: f64) -> Option<Self> {
        (value.is_finite() && (0.0..=1.0).contains(&value)).then_some(Self(value))
    }

    /// Clamps finite values into `[0, 1]`; `None` for NaN.
    pub fn clamped(value: f64) -> Option<Self> {
        if value.is_nan() {
            None
        } else {
            Some(Self(value.clamp(0.0, 1.0)))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for RelevanceScore {
    type Error = String;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value).ok_or_else(|| format!("relevance score {value} outside [0, 1]"))
    }
}

impl From<RelevanceScore> for f64 {
    fn from(score: RelevanceScore) -> f64 {
        score.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPassage {
    pub snippet: CleanedSnippet,
    pub score: RelevanceScore,
    /// Position in the snippet list handed to [`rerank`].
    pub original_index: usize,
}

/// Failure inside a scorer binding.
#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer unreachable: {0}")]
    Unreachable(String),
    #[error("unparseable score: {0}")]
    Unparseable(String),
}

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("scoring snippet {index} ({url}) failed: {source}")]
    Scorer {
        index: usize,
        url: String,
        #[source]
        source: ScorerError,
    },
    #[error("snippet {index} ({url}) has empty text")]
    EmptySnippet { index: usize, url: String },
    #[error("top-n must be at least 1")]
    ZeroTopN,
}

/// Relevance of one passage to one query. Implementations may return any
/// finite value; callers clamp into `[0, 1]`.
pub trait Scorer: Send + Sync {
    fn score(&self, query: &str, passage: &str) -> Result<f64, ScorerError>;
}

/// Share of the query's content terms that also occur in the passage, after
/// lowercasing and stop-word removal. Deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl Scorer for LexicalScorer {
    fn score(&self, query: &str, passage: &str) -> Result<f64, ScorerError> {
        Ok(text::query_coverage(&text::content_terms(query), passage))
    }
}

fn score_at(
    index: usize,
    query: &Query,
    snippet: &CleanedSnippet,
    scorer: &dyn Scorer,
) -> Result<RelevanceScore, RerankError> {
    if snippet.text.is_empty() {
        return Err(RerankError::EmptySnippet { index, url: snippet.source_url.clone() });
    }
    let wrap = |source| RerankError::Scorer { index, url: snippet.source_url.clone(), source };
    let raw = scorer.score(&query.text, &snippet.text).map_err(wrap)?;
    RelevanceScore::clamped(raw).ok_or_else(|| wrap(ScorerError::Unparseable(format!("{raw}"))))
}

/// Scores one snippet against the query, clamping into `[0, 1]`.
pub fn score(query: &Query, snippet: &CleanedSnippet, scorer: &dyn Scorer) -> Result<RelevanceScore, RerankError> {
    score_at(0, query, snippet, scorer)
}

/// Scores every snippet and returns the best `n`, by descending score with
/// ties kept in input order. Any scorer failure fails the whole call.
pub fn rerank(
    query: &Query,
    snippets: &[CleanedSnippet],
    scorer: &dyn Scorer,
    n: usize,
) -> Result<Vec<RankedPassage>, RerankError> {
    if n == 0 {
        return Err(RerankError::ZeroTopN);
    }
    let mut ranked = snippets
        .iter()
        .enumerate()
        .map(|(i, snippet)| {
            Ok(RankedPassage {
                snippet: snippet.clone(),
                score: score_at(i, query, snippet, scorer)?,
                original_index: i,
            })
        })
        .collect::<Result<Vec<_>, RerankError>>()?;
    ranked.sort_by(|a, b| {
        b.score
            .value()
            .total_cmp(&a.score.value())
            .then(a.original_index.cmp(&b.original_index))
    });
    ranked.truncate(n);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn snippet(text: &str) -> CleanedSnippet {
        CleanedSnippet { source_url: format!("https://s/{text}"), text: text.into(), source_rank: 1 }
    }

    /// Replays a fixed score per passage text.
    struct TableScorer(Vec<(String, f64)>);

    impl Scorer for TableScorer {
        fn score(&self, _query: &str, passage: &str) -> Result<f64, ScorerError> {
            self.0
                .iter()
                .find(|(p, _)| p == passage)
                .map(|(_, s)| *s)
                .ok_or_else(|| ScorerError::Unreachable("no entry".into()))
        }
    }

    #[test]
    fn identical_text_scores_one() {
        let q = Query::new("q", "capital of France");
        assert_eq!(score(&q, &snippet("capital of France"), &LexicalScorer).unwrap().value(), 1.0);
    }

    #[test]
    fn disjoint_text_scores_zero() {
        let q = Query::new("q", "capital of France");
        assert_eq!(score(&q, &snippet("football results today"), &LexicalScorer).unwrap().value(), 0.0);
    }

    #[test]
    fn on_topic_passage_outscores_off_topic() {
        // terms(q) = {capital, france}; the first passage covers 2/2, the second 0/2
        let q = Query::new("q", "capital of France");
        let a = score(&q, &snippet("Paris is the capital of France"), &LexicalScorer).unwrap();
        let b = score(&q, &snippet("Football scores today"), &LexicalScorer).unwrap();
        assert_eq!((a.value(), b.value()), (1.0, 0.0));
    }

    #[test]
    fn stable_ties_by_original_index() {
        let table = TableScorer(vec![("a".into(), 0.2), ("b".into(), 0.9), ("c".into(), 0.9), ("d".into(), 0.1)]);
        let snippets: Vec<_> = ["a", "b", "c", "d"].into_iter().map(snippet).collect();
        let out = rerank(&Query::new("q", "x"), &snippets, &table, 3).unwrap();
        let idx: Vec<_> = out.iter().map(|p| p.original_index).collect();
        assert_eq!(idx, [1, 2, 0]);
    }

    #[test]
    fn out_of_range_remote_scores_clamped() {
        let table = TableScorer(vec![("hi".into(), 1.7), ("lo".into(), -0.3)]);
        let q = Query::new("q", "x");
        assert_eq!(score(&q, &snippet("hi"), &table).unwrap().value(), 1.0);
        assert_eq!(score(&q, &snippet("lo"), &table).unwrap().value(), 0.0);
    }

    #[test]
    fn nan_score_is_a_failure() {
        let table = TableScorer(vec![("x".into(), f64::NAN)]);
        assert!(matches!(
            score(&Query::new("q", "x"), &snippet("x"), &table),
            Err(RerankError::Scorer { source: ScorerError::Unparseable(_), .. })
        ));
    }

    #[test]
    fn one_failing_snippet_fails_the_query() {
        let table = TableScorer(vec![("a".into(), 0.5)]);
        let snippets = vec![snippet("a"), snippet("missing")];
        match rerank(&Query::new("q", "x"), &snippets, &table, 2) {
            Err(RerankError::Scorer { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected scorer failure, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_and_zero_n() {
        let q = Query::new("q", "x");
        assert!(rerank(&q, &[], &LexicalScorer, 3).unwrap().is_empty());
        assert!(matches!(rerank(&q, &[snippet("a")], &LexicalScorer, 0), Err(RerankError::ZeroTopN)));
    }

    #[test]
    fn relevance_score_rejects_out_of_range_on_deserialize() {
        assert!(serde_json::from_str::<RelevanceScore>("1.5").is_err());
        assert_eq!(serde_json::from_str::<RelevanceScore>("0.25").unwrap().value(), 0.25);
    }

    proptest! {
        #[test]
        fn truncation_is_monotone_and_keeps_max(scores in proptest::collection::vec(0u8..=10, 0..12), n in 1usize..12) {
            let table = TableScorer(scores.iter().enumerate().map(|(i, s)| (format!("p{i}"), *s as f64 / 10.0)).collect());
            let snippets: Vec<_> = (0..scores.len()).map(|i| snippet(&format!("p{i}"))).collect();
            let q = Query::new("q", "x");
            let shorter = rerank(&q, &snippets, &table, n).unwrap();
            let longer = rerank(&q, &snippets, &table, n + 1).unwrap();
            prop_assert_eq!(shorter.len(), n.min(scores.len()));
            prop_assert_eq!(&longer[..shorter.len()], &shorter[..]);
            let best = scores.iter().max().map(|s| *s as f64 / 10.0);
            prop_assert_eq!(shorter.first().map(|p| p.score.value()), best);
            for p in &shorter {
                prop_assert_eq!(p.score.value(), scores[p.original_index] as f64 / 10.0);
            }
        }
    }
}
