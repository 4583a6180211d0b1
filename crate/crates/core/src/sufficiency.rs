//! The sufficiency gate and its threshold tuner.
//!
//! A query's static context is *sufficient* when its best rerank score is at
//! least the threshold. The threshold is tuned on labelled development data
//! to maximize F1 of the "sufficient" class.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rerank::{RankedPassage, RelevanceScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Sufficient,
    Insufficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyDecision {
    pub verdict: Verdict,
    pub top_score: RelevanceScore,
    pub threshold: f64,
}

/// One development-set observation: the best rerank score of a query and
/// whether its static context really sufficed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub top_score: f64,
    pub label: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedThreshold {
    pub threshold: f64,
    pub f1: f64,
}

#[derive(Debug, Error)]
pub enum SufficiencyError {
    #[error("threshold {0} outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("development set needs at least one sufficient and one insufficient example")]
    SingleLabel,
    #[error("development example {index} has score {score} outside [0, 1]")]
    ScoreOutOfRange { index: usize, score: f64 },
    #[error("failed to read dev set {path}: {message}")]
    Io { path: String, message: String },
    #[error("dev set line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Applies the gate: sufficient iff `max score >= threshold`. An empty list
/// has top score 0.
pub fn decide(ranked: &[RankedPassage], threshold: f64) -> Result<SufficiencyDecision, SufficiencyError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(SufficiencyError::ThresholdOutOfRange(threshold));
    }
    let top_score = ranked
        .iter()
        .map(|p| p.score)
        .max_by(|a, b| a.value().total_cmp(&b.value()))
        .unwrap_or(RelevanceScore::ZERO);
    let verdict = if top_score.value() >= threshold {
        Verdict::Sufficient
    } else {
        Verdict::Insufficient
    };
    Ok(SufficiencyDecision { verdict, top_score, threshold })
}

/// F1 of the sufficient class from confusion counts; 0 when nothing is
/// predicted or labelled sufficient.
pub fn f1_from_counts(true_pos: usize, false_pos: usize, false_neg: usize) -> f64 {
    let denom = 2 * true_pos + false_pos + false_neg;
    if denom == 0 {
        0.0
    } else {
        (2 * true_pos) as f64 / denom as f64
    }
}

/// Picks the threshold from `{0} ∪ {dev scores}` maximizing F1 under the rule
/// `score >= threshold`. Ties go to the larger threshold.
///
/// F1 only changes at observed scores, so scanning those candidates is exact.
/// Runs in `O(n log n)`: candidates are visited in descending order while the
/// confusion counts are updated incrementally.
pub fn tune_threshold(dev: &[LabeledExample]) -> Result<TunedThreshold, SufficiencyError> {
    for (index, ex) in dev.iter().enumerate() {
        if !(ex.top_score.is_finite() && (0.0..=1.0).contains(&ex.top_score)) {
            return Err(SufficiencyError::ScoreOutOfRange { index, score: ex.top_score });
        }
    }
    let positives = dev.iter().filter(|e| e.label == Verdict::Sufficient).count();
    if positives == 0 || positives == dev.len() {
        return Err(SufficiencyError::SingleLabel);
    }

    let mut sorted: Vec<LabeledExample> = dev.to_vec();
    sorted.sort_by(|a, b| b.top_score.total_cmp(&a.top_score));

    let mut best = TunedThreshold { threshold: 0.0, f1: f64::NEG_INFINITY };
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].top_score;
        // admit every example tied at this score
        while i < sorted.len() && sorted[i].top_score == threshold {
            match sorted[i].label {
                Verdict::Sufficient => tp += 1,
                Verdict::Insufficient => fp += 1,
            }
            i += 1;
        }
        let f1 = f1_from_counts(tp, fp, positives - tp);
        // descending scan: only a strictly better F1 may move to a smaller τ
        if f1 > best.f1 {
            best = TunedThreshold { threshold, f1 };
        }
    }
    // τ = 0 admits everything; it equals the last candidate when a score of 0 exists
    let f1_all = f1_from_counts(positives, dev.len() - positives, 0);
    if f1_all > best.f1 {
        best = TunedThreshold { threshold: 0.0, f1: f1_all };
    }
    Ok(best)
}

/// Reads a dev set: JSONL of `{"top_score": number, "label": "sufficient"|"insufficient"}`.
pub fn load_dev_set(path: impl AsRef<Path>) -> Result<Vec<LabeledExample>, SufficiencyError> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path).map_err(|e| SufficiencyError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    contents
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SufficiencyError::Malformed { line: i + 1, message: e.to_string() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clean::CleanedSnippet;
    use proptest::prelude::*;

    fn passage(score: f64) -> RankedPassage {
        RankedPassage {
            snippet: CleanedSnippet { source_url: "u".into(), text: "t".into(), source_rank: 1 },
            score: RelevanceScore::new(score).unwrap(),
            original_index: 0,
        }
    }

    fn ex(top_score: f64, sufficient: bool) -> LabeledExample {
        LabeledExample {
            top_score,
            label: if sufficient { Verdict::Sufficient } else { Verdict::Insufficient },
        }
    }

    #[test]
    fn gate_examples() {
        assert_eq!(decide(&[passage(0.9)], 0.5).unwrap().verdict, Verdict::Sufficient);
        // boundary: score equal to threshold passes
        assert_eq!(decide(&[passage(0.5)], 0.5).unwrap().verdict, Verdict::Sufficient);
        let empty = decide(&[], 0.3).unwrap();
        assert_eq!(empty.verdict, Verdict::Insufficient);
        assert_eq!(empty.top_score.value(), 0.0);
    }

    #[test]
    fn gate_rejects_out_of_range_threshold() {
        assert!(decide(&[], 1.5).is_err());
        assert!(decide(&[], -0.1).is_err());
        assert!(decide(&[], f64::NAN).is_err());
    }

    #[test]
    fn separable_dev_set() {
        let dev = [ex(0.9, true), ex(0.8, true), ex(0.2, false), ex(0.1, false)];
        let tuned = tune_threshold(&dev).unwrap();
        assert_eq!(tuned.threshold, 0.8);
        assert_eq!(tuned.f1, 1.0);
    }

    #[test]
    fn tie_breaks_toward_larger_threshold() {
        // τ=0 and τ=0.6 both admit both examples: F1 = 2/3 at each
        let tuned = tune_threshold(&[ex(0.6, true), ex(0.6, false)]).unwrap();
        assert_eq!(tuned.threshold, 0.6);
        assert_eq!(tuned.f1, 2.0 / 3.0);
    }

    #[test]
    fn single_label_dev_set_is_an_error() {
        assert!(matches!(tune_threshold(&[ex(0.4, true)]), Err(SufficiencyError::SingleLabel)));
        assert!(matches!(tune_threshold(&[]), Err(SufficiencyError::SingleLabel)));
    }

    #[test]
    fn zero_threshold_wins_when_positives_score_lowest() {
        // suff at 0.0 and 0.1, insuff at 0.5: only τ=0 recovers every positive
        let tuned = tune_threshold(&[ex(0.0, true), ex(0.1, true), ex(0.5, false)]).unwrap();
        assert_eq!(tuned.threshold, 0.0);
        assert_eq!(tuned.f1, 0.8);
    }

    proptest! {
        #[test]
        fn gate_is_monotone_and_permutation_invariant(
            scores in proptest::collection::vec(0.0f64..=1.0, 0..8),
            t1 in 0.0f64..=1.0,
            t2 in 0.0f64..=1.0,
        ) {
            let ranked: Vec<_> = scores.iter().map(|&s| passage(s)).collect();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if decide(&ranked, hi).unwrap().verdict == Verdict::Sufficient {
                prop_assert_eq!(decide(&ranked, lo).unwrap().verdict, Verdict::Sufficient);
            }
            let mut reversed = ranked.clone();
            reversed.reverse();
            prop_assert_eq!(decide(&ranked, t1).unwrap(), decide(&reversed, t1).unwrap());
        }

        #[test]
        fn tuned_threshold_in_unit_interval(
            dev in proptest::collection::vec((0u8..=20, any::<bool>()), 2..30)
        ) {
            let dev: Vec<_> = dev.into_iter().map(|(s, l)| ex(s as f64 / 20.0, l)).collect();
            if let Ok(t) = tune_threshold(&dev) {
                prop_assert!((0.0..=1.0).contains(&t.threshold));
                prop_assert!((0.0..=1.0).contains(&t.f1));
            }
        }
    }
}
