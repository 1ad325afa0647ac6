//! Text canonicalization shared by the retrieval paths and the test backends.

use std::collections::BTreeSet;

/// Unicode-aware lowercase tokenization: alphanumeric runs are tokens,
/// whitespace and punctuation are separators. No stemming, no stop-list —
/// deception cues often live in function words.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Token set of a text, for overlap measures.
pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// Jaccard overlap of two token sets: |A ∩ B| / |A ∪ B|.
/// Two empty texts count as identical (1.0).
pub fn jaccard(a: &str, b: &str) -> f64 {
    let sa = token_set(a);
    let sb = token_set(b);
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    inter as f64 / union as f64
}
