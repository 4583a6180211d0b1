//! Tokenization shared by the lexical scorer, the reference tool caller and
//! the extractive generator.

use std::collections::BTreeSet;

/// English function words ignored when comparing query and passage terms.
pub const STOP_WORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be",
    "been", "before", "being", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "doing", "during", "each", "few", "for", "from", "had", "has", "have", "having", "he",
    "her", "here", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its",
    "itself", "just", "me", "more", "most", "my", "no", "nor", "not", "now", "of", "off", "on",
    "once", "only", "or", "other", "our", "ours", "out", "over", "own", "same", "she", "should",
    "so", "some", "such", "than", "that", "the", "their", "theirs", "them", "then", "there",
    "these", "they", "this", "those", "through", "to", "too", "under", "until", "up", "very",
    "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will",
    "with", "would", "you", "your", "yours",
];

pub fn is_stop_word(word: &str) -> bool {
    STOP_WORDS.binary_search(&word).is_ok()
}

/// Lowercased alphanumeric runs, in order, stop words included.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Distinct lowercased tokens with stop words removed.
pub fn content_terms(text: &str) -> BTreeSet<String> {
    tokens(text).filter(|t| !is_stop_word(t)).collect()
}

/// `|terms(query) ∩ terms(passage)| / |terms(query)|`, or 0 when the query has
/// no content terms.
pub fn query_coverage(query_terms: &BTreeSet<String>, passage: &str) -> f64 {
    if query_terms.is_empty() {
        return 0.0;
    }
    let passage_terms = content_terms(passage);
    let shared = query_terms.intersection(&passage_terms).count();
    shared as f64 / query_terms.len() as f64
}

/// Whitespace-delimited word count, the unit of every token budget.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}
