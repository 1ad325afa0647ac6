//! Hybrid long-range fact anchoring: dual-path recall (BM25 lexical +
//! embedding cosine), weighted reciprocal rank fusion, Top-M candidate
//! selection, cross-encoder reranking, and Top-K context selection.
//!
//! Fusion depends only on *ranks*, never raw scores, so any strictly
//! increasing transform of the underlying scores leaves the fused output
//! unchanged. Ties break toward recency (larger turn index first) with
//! ascending turn index as the final determinizer, everywhere.

use serde::{Deserialize, Serialize};

use crate::decoupler::FactSet;
use crate::gateway::{Embedder, GatewayError, Reranker};
use crate::memory::MemoryBank;
use crate::parallel::parallel_map;
use crate::text::tokenize;
use crate::types::TurnRef;

/// BM25 parameters, fixed for the lexical path.
pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Weights and smoothing for reciprocal rank fusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub w_lex: f64,
    pub w_sem: f64,
    pub eta: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            w_lex: 1.0,
            w_sem: 1.0,
            eta: 60.0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.w_lex < 0.0 || self.w_sem < 0.0 {
            return Err("fusion weights must be nonnegative".to_string());
        }
        if self.w_lex + self.w_sem <= 0.0 {
            return Err("at least one fusion weight must be positive".to_string());
        }
        if self.eta <= 0.0 {
            return Err("eta must be positive".to_string());
        }
        Ok(())
    }
}

/// Candidate and context sizes for the two anchoring stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchoringConfig {
    pub m_candidates: usize,
    pub k_context: usize,
    pub fusion: FusionConfig,
    pub rerank_parallelism: usize,
}

impl Default for AnchoringConfig {
    fn default() -> Self {
        Self {
            m_candidates: 20,
            k_context: 5,
            fusion: FusionConfig::default(),
            rerank_parallelism: 4,
        }
    }
}

impl AnchoringConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.m_candidates == 0 || self.k_context == 0 {
            return Err("m and k must be at least 1".to_string());
        }
        if self.k_context > self.m_candidates {
            return Err(format!(
                "k ({}) must not exceed m ({})",
                self.k_context, self.m_candidates
            ));
        }
        self.fusion.validate()
    }
}

/// One historical fact with its full score provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFact {
    pub fact: FactSet,
    pub rank_lex: Option<usize>,
    pub rank_sem: Option<usize>,
    pub omega: f64,
    pub s_ce: Option<f64>,
}

/// The Top-K anchored historical facts for one query turn, descending by
/// rerank score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalContext {
    pub query_turn: TurnRef,
    pub anchored: Vec<ScoredFact>,
}

impl RetrievalContext {
    pub fn empty(query_turn: TurnRef) -> Self {
        Self {
            query_turn,
            anchored: Vec::new(),
        }
    }

    pub fn turns(&self) -> impl Iterator<Item = &TurnRef> {
        self.anchored.iter().map(|s| &s.fact.turn)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnchorError {
    #[error("cannot rank over empty history")]
    EmptyHistory,
    #[error("ranking mismatch: lexical covers {lex} facts, semantic covers {sem}")]
    RankingMismatch { lex: usize, sem: usize },
    #[error("ranking for an enabled path is missing")]
    MissingRanking,
    #[error("embedding failed: {0}")]
    Embed(#[source] GatewayError),
    #[error("reranking candidate {turn} failed: {source}")]
    Rerank { turn: TurnRef, source: GatewayError },
    #[error("invalid anchoring config: {0}")]
    Config(String),
}

/// Canonical text view of a fact set: `T: <transcript> | V: <visual> |
/// A: <audio>` with absent parts omitted. This exact string feeds both
/// retrieval paths and the reranker.
pub fn fact_text(fact_set: &FactSet) -> String {
    let mut out = format!("T: {}", fact_set.transcript);
    if let Some(v) = &fact_set.visual_fact {
        out.push_str(" | V: ");
        out.push_str(&v.text);
    }
    if let Some(a) = &fact_set.audio_fact {
        out.push_str(" | A: ");
        out.push_str(&a.text);
    }
    out
}

/// Okapi BM25 score of every document against the query, straight over the
/// in-memory document list (session histories are small; no index needed).
/// IDF uses the nonnegative `ln(1 + (N - df + 0.5) / (df + 0.5))` form.
pub fn bm25_scores(query: &str, docs: &[String]) -> Vec<f64> {
    let query_tokens = tokenize(query);
    let doc_tokens: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d)).collect();
    let n = docs.len() as f64;
    let total_len: usize = doc_tokens.iter().map(Vec::len).sum();
    let avgdl = total_len as f64 / docs.len().max(1) as f64;

    let mut scores = vec![0.0f64; docs.len()];
    if query_tokens.is_empty() || avgdl == 0.0 {
        return scores;
    }

    let mut seen = std::collections::BTreeSet::new();
    for term in &query_tokens {
        // Repeated query terms contribute once, as in the standard
        // formulation over the query's term set.
        if !seen.insert(term.clone()) {
            continue;
        }
        let df = doc_tokens
            .iter()
            .filter(|tokens| tokens.iter().any(|t| t == term))
            .count() as f64;
        if df == 0.0 {
            continue;
        }
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        for (i, tokens) in doc_tokens.iter().enumerate() {
            let tf = tokens.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let dl = tokens.len() as f64;
            let tf_norm =
                (tf * (BM25_K1 + 1.0)) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / avgdl));
            scores[i] += idf * tf_norm;
        }
    }
    scores
}

/// Converts raw scores into a 1-based rank permutation: best score gets rank
/// one; ties break toward recency (larger turn index ranks better), then by
/// ascending turn index.
pub fn ranks_from_scores(scores: &[f64], turn_indices: &[u32]) -> Vec<usize> {
    debug_assert_eq!(scores.len(), turn_indices.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(turn_indices[b].cmp(&turn_indices[a]))
            .then(turn_indices[a].cmp(&turn_indices[b]))
    });
    let mut ranks = vec![0usize; scores.len()];
    for (position, &index) in order.iter().enumerate() {
        ranks[index] = position + 1;
    }
    ranks
}

fn history_turn_indices(history: &[FactSet]) -> Vec<u32> {
    history.iter().map(|f| f.turn.turn_index).collect()
}

/// Lexical recall: BM25 of each history fact's text against the query.
pub fn lexical_rank(query: &str, history: &[FactSet]) -> Result<Vec<usize>, AnchorError> {
    if history.is_empty() {
        return Err(AnchorError::EmptyHistory);
    }
    let docs: Vec<String> = history.iter().map(fact_text).collect();
    let scores = bm25_scores(query, &docs);
    Ok(ranks_from_scores(&scores, &history_turn_indices(history)))
}

/// Semantic recall: cosine similarity between the query embedding and each
/// history fact's embedding. Embeddings are unit vectors, so cosine is the
/// dot product.
pub fn semantic_rank(
    query: &str,
    history: &[FactSet],
    embedder: &dyn Embedder,
) -> Result<Vec<usize>, AnchorError> {
    if history.is_empty() {
        return Err(AnchorError::EmptyHistory);
    }
    let query_vec = embedder.embed(query).map_err(AnchorError::Embed)?;
    let mut scores = Vec::with_capacity(history.len());
    for fact in history {
        let doc_vec = embedder
            .embed(&fact_text(fact))
            .map_err(AnchorError::Embed)?;
        scores.push(cosine(&query_vec, &doc_vec));
    }
    Ok(ranks_from_scores(&scores, &history_turn_indices(history)))
}

/// Cosine similarity of two vectors (not assuming unit norm).
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// The rankings feeding fusion. A path with weight zero may omit its
/// ranking entirely.
#[derive(Debug, Clone, Default)]
pub struct Rankings {
    pub lex: Option<Vec<usize>>,
    pub sem: Option<Vec<usize>>,
}

/// Weighted reciprocal rank fusion:
/// `omega(f) = w_lex / (eta + rank_lex(f)) + w_sem / (eta + rank_sem(f))`.
/// A zero-weight path contributes nothing.
pub fn rrf_fuse(rankings: &Rankings, fusion: &FusionConfig) -> Result<Vec<f64>, AnchorError> {
    fusion.validate().map_err(AnchorError::Config)?;
    let lex = (fusion.w_lex > 0.0)
        .then(|| rankings.lex.as_deref().ok_or(AnchorError::MissingRanking))
        .transpose()?;
    let sem = (fusion.w_sem > 0.0)
        .then(|| rankings.sem.as_deref().ok_or(AnchorError::MissingRanking))
        .transpose()?;
    let n = match (lex, sem) {
        (Some(l), Some(s)) => {
            if l.len() != s.len() {
                return Err(AnchorError::RankingMismatch {
                    lex: l.len(),
                    sem: s.len(),
                });
            }
            l.len()
        }
        (Some(l), None) => l.len(),
        (None, Some(s)) => s.len(),
        (None, None) => unreachable!("validated: some weight is positive"),
    };
    let mut omega = vec![0.0f64; n];
    if let Some(lex) = lex {
        for (i, rank) in lex.iter().enumerate() {
            omega[i] += fusion.w_lex / (fusion.eta + *rank as f64);
        }
    }
    if let Some(sem) = sem {
        for (i, rank) in sem.iter().enumerate() {
            omega[i] += fusion.w_sem / (fusion.eta + *rank as f64);
        }
    }
    Ok(omega)
}

fn recency_sort<F: Fn(&ScoredFact) -> f64>(facts: &mut [ScoredFact], key: F) {
    facts.sort_by(|a, b| {
        key(b)
            .total_cmp(&key(a))
            .then(b.fact.turn.turn_index.cmp(&a.fact.turn.turn_index))
            .then(a.fact.turn.turn_index.cmp(&b.fact.turn.turn_index))
    });
}

/// The min(M, |history|) facts of highest fused score, descending, ties
/// toward recency.
pub fn select_candidates(mut scored: Vec<ScoredFact>, m: usize) -> Vec<ScoredFact> {
    recency_sort(&mut scored, |s| s.omega);
    scored.truncate(m);
    scored
}

/// Scores every candidate against the query with one reranker call per
/// candidate, clamped to [0, 1]. Calls may run concurrently, bounded by
/// `parallelism`; results keep candidate order.
pub fn rerank(
    query: &str,
    candidates: &mut [ScoredFact],
    reranker: &dyn Reranker,
    parallelism: usize,
) -> Result<(), AnchorError> {
    let jobs: Vec<(TurnRef, String)> = candidates
        .iter()
        .map(|c| (c.fact.turn.clone(), fact_text(&c.fact)))
        .collect();
    let scores = parallel_map(jobs, parallelism, |(turn, document)| {
        reranker
            .rerank_score(query, &document)
            .map_err(|source| AnchorError::Rerank { turn, source })
    });
    for (candidate, score) in candidates.iter_mut().zip(scores) {
        let score = score?;
        if !(0.0..=1.0).contains(&score) {
            log::warn!(
                "reranker returned {score} for {}; clamping to [0, 1]",
                candidate.fact.turn
            );
        }
        candidate.s_ce = Some(score.clamp(0.0, 1.0));
    }
    Ok(())
}

/// The top min(K, |candidates|) by rerank score, descending, ties toward
/// recency — the final retrieval context.
pub fn select_context(
    mut reranked: Vec<ScoredFact>,
    k: usize,
    query_turn: TurnRef,
) -> RetrievalContext {
    recency_sort(&mut reranked, |s| s.s_ce.unwrap_or(0.0));
    reranked.truncate(k);
    RetrievalContext {
        query_turn,
        anchored: reranked,
    }
}

/// The full anchoring pipeline for one turn. Empty history yields an empty
/// context with no backend calls.
pub fn anchor(
    fact_set: &FactSet,
    bank: &MemoryBank,
    cfg: &AnchoringConfig,
    embedder: &dyn Embedder,
    reranker: &dyn Reranker,
) -> Result<RetrievalContext, AnchorError> {
    cfg.validate().map_err(AnchorError::Config)?;
    let history = bank.history_before(fact_set.turn.turn_index);
    if history.is_empty() {
        return Ok(RetrievalContext::empty(fact_set.turn.clone()));
    }
    let query = fact_text(fact_set);
    let rankings = Rankings {
        lex: (cfg.fusion.w_lex > 0.0)
            .then(|| lexical_rank(&query, history))
            .transpose()?,
        sem: (cfg.fusion.w_sem > 0.0)
            .then(|| semantic_rank(&query, history, embedder))
            .transpose()?,
    };
    let omega = rrf_fuse(&rankings, &cfg.fusion)?;
    let scored: Vec<ScoredFact> = history
        .iter()
        .enumerate()
        .map(|(i, fact)| ScoredFact {
            fact: fact.clone(),
            rank_lex: rankings.lex.as_ref().map(|r| r[i]),
            rank_sem: rankings.sem.as_ref().map(|r| r[i]),
            omega: omega[i],
            s_ce: None,
        })
        .collect();
    let mut candidates = select_candidates(scored, cfg.m_candidates);
    rerank(&query, &mut candidates, reranker, cfg.rerank_parallelism)?;
    Ok(select_context(
        candidates,
        cfg.k_context,
        fact_set.turn.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoupler::{FactSet, ModalFact};
    use crate::gateway::testkit::{HashingEmbedder, JaccardReranker, SpyReranker};
    use crate::types::Modality;
    use std::sync::Arc;

    fn fact(turn: u32, transcript: &str) -> FactSet {
        FactSet::text_only(TurnRef::new("s1", turn), "p1", transcript)
    }

    fn bank_of(texts: &[&str]) -> MemoryBank {
        let mut bank = MemoryBank::new("s1");
        for (i, text) in texts.iter().enumerate() {
            bank.append(fact(i as u32 + 1, text)).unwrap();
        }
        bank
    }

    #[test]
    fn fact_text_single_part() {
        let fs = fact(1, "I am the seer");
        assert_eq!(fact_text(&fs), "T: I am the seer");
    }

    #[test]
    fn fact_text_three_parts_fixed_order() {
        let mut fs = fact(1, "claim");
        let turn = fs.turn.clone();
        fs.audio_fact = Some(ModalFact {
            modality: Modality::Audio,
            text: "steady voice".to_string(),
            source_turn: turn.clone(),
            backend_id: "b".to_string(),
        });
        fs.visual_fact = Some(ModalFact {
            modality: Modality::Visual,
            text: "averted gaze".to_string(),
            source_turn: turn,
            backend_id: "b".to_string(),
        });
        assert_eq!(
            fact_text(&fs),
            "T: claim | V: averted gaze | A: steady voice"
        );
    }

    #[test]
    fn fact_text_is_construction_order_independent() {
        let a = fact(1, "same");
        let mut b = FactSet::text_only(TurnRef::new("s1", 1), "p1", "other");
        b.transcript = "same".to_string();
        assert_eq!(fact_text(&a), fact_text(&b));
    }

    #[test]
    fn bm25_zero_overlap_ranks_last() {
        let history = [
            fact(1, "seer checked the wolf"),
            fact(2, "completely unrelated words here"),
        ];
        let ranks = lexical_rank("seer check wolf", &history).unwrap();
        assert_eq!(ranks[1], 2);
    }

    #[test]
    fn bm25_two_matching_terms_beat_one() {
        // Equal lengths, equal document frequencies (each term appears in
        // exactly one doc), so only match count differentiates. Frozen
        // expected scores: per-term tf_norm is exactly 1 at dl = avgdl, so
        // doc scores are (matches × ln 2).
        let docs = vec![
            "seer check tonight".to_string(),
            "wolf sleeps deeply".to_string(),
        ];
        let scores = bm25_scores("seer check wolf", &docs);
        let ln2 = std::f64::consts::LN_2;
        assert!((scores[0] - 2.0 * ln2).abs() < 1e-12);
        assert!((scores[1] - ln2).abs() < 1e-12);
        let history = [fact(1, "seer check tonight"), fact(2, "wolf sleeps deeply")];
        let ranks = lexical_rank("seer check wolf", &history).unwrap();
        assert_eq!(ranks, vec![1, 2]);
    }

    #[test]
    fn bm25_tie_breaks_toward_recency() {
        let history = [fact(5, "the seer spoke"), fact(9, "the seer spoke")];
        let ranks = lexical_rank("seer", &history).unwrap();
        assert_eq!(ranks, vec![2, 1]);
    }

    #[test]
    fn lexical_rank_rejects_empty_history() {
        assert!(matches!(
            lexical_rank("q", &[]).unwrap_err(),
            AnchorError::EmptyHistory
        ));
    }

    #[test]
    fn semantic_identical_text_ranks_first() {
        let embedder = HashingEmbedder::default();
        let history = [
            fact(1, "votes were counted at dusk"),
            fact(2, "I am the seer"),
            fact(3, "the hunter stayed quiet"),
        ];
        let ranks = semantic_rank("I am the seer", &history, &embedder).unwrap();
        assert_eq!(ranks[1], 1);
    }

    #[test]
    fn semantic_self_similarity_is_one() {
        let embedder = HashingEmbedder::default();
        let v = embedder.embed("any text at all").unwrap();
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn semantic_rank_matches_brute_force_cosine() {
        let embedder = HashingEmbedder::default();
        let texts = [
            "the witch used her potion",
            "voting against p3 tonight",
            "I am the seer and I checked p3",
            "calm statement with no content",
            "seer seer seer",
        ];
        let history: Vec<FactSet> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| fact(i as u32 + 1, t))
            .collect();
        let query = "the seer checked p3";
        let ranks = semantic_rank(query, &history, &embedder).unwrap();

        // Independent brute-force cosine over all of history.
        let qv = embedder.embed(query).unwrap();
        let scores: Vec<f64> = history
            .iter()
            .map(|f| {
                let dv = embedder.embed(&fact_text(f)).unwrap();
                let dot: f64 = qv.iter().zip(&dv).map(|(a, b)| a * b).sum();
                let nq = qv.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nd = dv.iter().map(|x| x * x).sum::<f64>().sqrt();
                dot / (nq * nd)
            })
            .collect();
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then(history[b].turn.turn_index.cmp(&history[a].turn.turn_index))
        });
        let mut expected = vec![0usize; scores.len()];
        for (pos, &i) in order.iter().enumerate() {
            expected[i] = pos + 1;
        }
        assert_eq!(ranks, expected);
    }

    #[test]
    fn rrf_hand_values() {
        let fusion = FusionConfig {
            w_lex: 1.0,
            w_sem: 1.0,
            eta: 60.0,
        };
        let rankings = Rankings {
            lex: Some(vec![1]),
            sem: Some(vec![3]),
        };
        let omega = rrf_fuse(&rankings, &fusion).unwrap();
        assert!((omega[0] - (1.0 / 61.0 + 1.0 / 63.0)).abs() < 1e-15);
        assert!((omega[0] - 0.0322665).abs() < 1e-7);
    }

    #[test]
    fn rrf_single_path_degenerate() {
        let fusion = FusionConfig {
            w_lex: 1.0,
            w_sem: 0.0,
            eta: 60.0,
        };
        let rankings = Rankings {
            lex: Some(vec![2]),
            sem: None,
        };
        let omega = rrf_fuse(&rankings, &fusion).unwrap();
        assert!((omega[0] - 1.0 / 62.0).abs() < 1e-15);
    }

    #[test]
    fn rrf_rank_one_on_both_paths() {
        let fusion = FusionConfig {
            w_lex: 1.0,
            w_sem: 1.0,
            eta: 60.0,
        };
        let rankings = Rankings {
            lex: Some(vec![1]),
            sem: Some(vec![1]),
        };
        let omega = rrf_fuse(&rankings, &fusion).unwrap();
        assert!((omega[0] - 2.0 / 61.0).abs() < 1e-15);
    }

    #[test]
    fn rrf_rejects_coverage_mismatch() {
        let fusion = FusionConfig::default();
        let rankings = Rankings {
            lex: Some(vec![1, 2]),
            sem: Some(vec![1]),
        };
        assert!(matches!(
            rrf_fuse(&rankings, &fusion).unwrap_err(),
            AnchorError::RankingMismatch { lex: 2, sem: 1 }
        ));
    }

    fn scored(turn: u32, omega: f64) -> ScoredFact {
        ScoredFact {
            fact: fact(turn, &format!("text {turn}")),
            rank_lex: None,
            rank_sem: None,
            omega,
            s_ce: None,
        }
    }

    #[test]
    fn select_candidates_sorts_and_truncates() {
        let scored = vec![scored(1, 0.03), scored(2, 0.01), scored(3, 0.02)];
        let picked = select_candidates(scored, 2);
        let turns: Vec<u32> = picked.iter().map(|s| s.fact.turn.turn_index).collect();
        assert_eq!(turns, vec![1, 3]);
    }

    #[test]
    fn select_candidates_saturates() {
        let scored = vec![scored(1, 0.3), scored(2, 0.1)];
        assert_eq!(select_candidates(scored, 10).len(), 2);
    }

    #[test]
    fn select_candidates_equal_omega_prefers_recent() {
        let scored = vec![scored(2, 0.5), scored(7, 0.5)];
        let picked = select_candidates(scored, 1);
        assert_eq!(picked[0].fact.turn.turn_index, 7);
    }

    #[test]
    fn select_context_orders_and_breaks_ties_by_recency() {
        let mut a = scored(3, 0.1);
        a.s_ce = Some(0.9);
        let mut b = scored(8, 0.1);
        b.s_ce = Some(0.9);
        let mut c = scored(5, 0.1);
        c.s_ce = Some(0.2);
        let ctx = select_context(vec![a, c, b], 1, TurnRef::new("s1", 9));
        assert_eq!(ctx.anchored.len(), 1);
        assert_eq!(ctx.anchored[0].fact.turn.turn_index, 8);
    }

    #[test]
    fn select_context_saturates_and_is_nonincreasing() {
        let mut facts = Vec::new();
        for (turn, ce) in [(1, 0.4), (2, 0.9), (3, 0.1), (4, 0.6), (5, 0.5)] {
            let mut s = scored(turn, 0.0);
            s.s_ce = Some(ce);
            facts.push(s);
        }
        let ctx = select_context(facts.clone(), 3, TurnRef::new("s1", 9));
        assert_eq!(ctx.anchored.len(), 3);
        let scores: Vec<f64> = ctx.anchored.iter().map(|s| s.s_ce.unwrap()).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        let all = select_context(facts, 99, TurnRef::new("s1", 9));
        assert_eq!(all.anchored.len(), 5);
    }

    #[test]
    fn rerank_clamps_out_of_range_scores() {
        use crate::gateway::testkit::ConstReranker;
        let mut candidates = vec![scored(1, 0.1)];
        rerank("q", &mut candidates, &ConstReranker(1.5), 1).unwrap();
        assert_eq!(candidates[0].s_ce, Some(1.0));
    }

    #[test]
    fn anchor_empty_history_makes_no_backend_calls() {
        let bank = MemoryBank::new("s1");
        let query = fact(1, "first words");
        let spy = SpyReranker::new(Arc::new(JaccardReranker));
        let embedder = HashingEmbedder::default();
        let ctx = anchor(&query, &bank, &AnchoringConfig::default(), &embedder, &spy).unwrap();
        assert!(ctx.anchored.is_empty());
        assert_eq!(spy.call_count(), 0);
    }

    #[test]
    fn anchor_finds_the_token_sharing_fact() {
        let texts: Vec<String> = (1..=10)
            .map(|i| {
                if i == 4 {
                    "I am the seer and I checked p3".to_string()
                } else {
                    format!("filler chatter number {i} zz{i}")
                }
            })
            .collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let bank = bank_of(&refs);
        let query = fact(11, "the seer checked p3 last night");
        let cfg = AnchoringConfig {
            m_candidates: 5,
            k_context: 3,
            ..AnchoringConfig::default()
        };
        let embedder = HashingEmbedder::default();
        let ctx = anchor(&query, &bank, &cfg, &embedder, &JaccardReranker).unwrap();
        assert!(
            ctx.turns().any(|t| t.turn_index == 4),
            "the token-sharing fact must be anchored; got {:?}",
            ctx.anchored
                .iter()
                .map(|s| s.fact.turn.turn_index)
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn anchor_m_k_one_returns_omega_argmax() {
        let bank = bank_of(&[
            "the seer checked p3",
            "nothing shared qq",
            "other filler ww",
        ]);
        let query = fact(4, "seer checked p3");
        let cfg = AnchoringConfig {
            m_candidates: 1,
            k_context: 1,
            ..AnchoringConfig::default()
        };
        let embedder = HashingEmbedder::default();
        let ctx = anchor(&query, &bank, &cfg, &embedder, &JaccardReranker).unwrap();
        assert_eq!(ctx.anchored.len(), 1);
        // Reranking a singleton cannot change the fused argmax.
        assert_eq!(ctx.anchored[0].fact.turn.turn_index, 1);
    }

    #[test]
    fn anchor_subset_chain_and_turn_bound() {
        let texts: Vec<String> = (1..=12)
            .map(|i| format!("utterance {i} about round {}", i % 3))
            .collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let bank = bank_of(&refs);
        let query = fact(13, "utterance about round 1");
        let cfg = AnchoringConfig {
            m_candidates: 6,
            k_context: 4,
            ..AnchoringConfig::default()
        };
        let embedder = HashingEmbedder::default();
        let ctx = anchor(&query, &bank, &cfg, &embedder, &JaccardReranker).unwrap();
        assert!(ctx.anchored.len() <= cfg.k_context);
        assert!(ctx.turns().all(|t| t.turn_index < 13));
    }

    #[test]
    fn omega_strictly_decreases_as_eta_increases() {
        let rankings = Rankings {
            lex: Some(vec![1, 2, 3]),
            sem: Some(vec![3, 1, 2]),
        };
        let omega_small = rrf_fuse(
            &rankings,
            &FusionConfig {
                eta: 10.0,
                ..FusionConfig::default()
            },
        )
        .unwrap();
        let omega_large = rrf_fuse(
            &rankings,
            &FusionConfig {
                eta: 60.0,
                ..FusionConfig::default()
            },
        )
        .unwrap();
        for (small, large) in omega_small.iter().zip(&omega_large) {
            assert!(large < small);
        }
    }

    #[test]
    fn weight_scaling_preserves_selection() {
        let rankings = Rankings {
            lex: Some(vec![2, 1, 3]),
            sem: Some(vec![1, 3, 2]),
        };
        let base = FusionConfig {
            w_lex: 1.0,
            w_sem: 0.5,
            eta: 60.0,
        };
        let scaled = FusionConfig {
            w_lex: 3.0,
            w_sem: 1.5,
            eta: 60.0,
        };
        let a = rrf_fuse(&rankings, &base).unwrap();
        let b = rrf_fuse(&rankings, &scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((y - 3.0 * x).abs() < 1e-15);
        }
    }
}
