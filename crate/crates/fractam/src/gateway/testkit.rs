//! Deterministic in-process backends. These ship with the library (not as
//! test-only code) so the full pipeline is demonstrable offline: point a
//! backend profile at a `test:` endpoint and no network is touched.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};

use crate::decoupler::PromptSet;
use crate::metrics::{JudgeScores, ReasoningTask};
use crate::text::{jaccard, tokenize};
use crate::types::TurnRef;
use crate::util::short_digest;

use super::{
    check_parts, render_parts, Embedder, GatewayError, Generator, Judge, PromptPart, Reranker,
};

/// Canned decoupling backend: for a payload carrying a media reference it
/// returns deterministic factual text keyed by the digest of that reference.
pub struct MockGenerator {
    id: String,
}

impl MockGenerator {
    pub fn new() -> Self {
        Self {
            id: "mock-generate".to_string(),
        }
    }
}

impl Default for MockGenerator {
    fn default() -> Self {
        Self::new()
    }
}

impl Generator for MockGenerator {
    fn generate(&self, parts: &[PromptPart]) -> Result<String, GatewayError> {
        check_parts(parts)?;
        for part in parts {
            if let PromptPart::Media { uri, modality } = part {
                let word = match modality {
                    crate::types::Modality::Visual => "visual",
                    crate::types::Modality::Audio => "audio",
                    crate::types::Modality::Text => "text",
                };
                return Ok(format!("mock {word} fact {}", short_digest(uri.as_bytes())));
            }
        }
        Ok(format!(
            "mock reply {}",
            short_digest(render_parts(parts).as_bytes())
        ))
    }

    fn id(&self) -> &str {
        &self.id
    }
}

/// Deterministic reasoning backend. It tells evidence-chain requests apart
/// from prediction requests by comparing the first payload part against the
/// prompt set it was built with, then emits well-formed output for either:
/// chains cite the query turn plus the first retrieved facts; predictions are
/// complete tagged-field blocks with values derived from the payload digest.
pub struct MockReasoner {
    prompts: PromptSet,
    roles: Vec<String>,
    id: String,
}

impl MockReasoner {
    pub fn new(prompts: PromptSet, mut roles: Vec<String>) -> Self {
        roles.sort();
        if roles.is_empty() {
            roles.push("villager".to_string());
        }
        Self {
            prompts,
            roles,
            id: "mock-reasoner".to_string(),
        }
    }

    fn query_turn(parts: &[PromptPart]) -> Result<TurnRef, GatewayError> {
        for part in parts {
            if let PromptPart::Text(text) = part {
                for line in text.lines() {
                    if let Some(rest) = line.strip_prefix("current turn: ") {
                        return rest.trim().parse().map_err(|_| {
                            GatewayError::Contract(format!(
                                "unparseable current-turn header `{rest}`"
                            ))
                        });
                    }
                }
            }
        }
        Err(GatewayError::Contract(
            "payload carries no current-turn header".to_string(),
        ))
    }

    fn context_turns(parts: &[PromptPart]) -> Vec<TurnRef> {
        let mut turns = Vec::new();
        for part in parts {
            if let PromptPart::Text(text) = part {
                let mut in_context = false;
                for line in text.lines() {
                    if line.starts_with("retrieved context:") {
                        in_context = true;
                        continue;
                    }
                    if !in_context {
                        continue;
                    }
                    let Some((turn, _)) = line.split_once(": ") else {
                        continue;
                    };
                    if let Ok(parsed) = turn.parse::<TurnRef>() {
                        turns.push(parsed);
                    }
                }
            }
        }
        turns
    }

    fn chain_reply(&self, parts: &[PromptPart]) -> Result<String, GatewayError> {
        let query = Self::query_turn(parts)?;
        let context = Self::context_turns(parts);
        let mut lines = vec![format!(
            "step 1: current statement examined against history [cites: {query}/t]"
        )];
        for (offset, turn) in context.iter().take(2).enumerate() {
            lines.push(format!(
                "step {}: consistent with prior fact at {turn} [cites: {turn}/t]",
                offset + 2
            ));
        }
        Ok(lines.join("\n"))
    }

    fn prediction_reply(&self, parts: &[PromptPart]) -> Result<String, GatewayError> {
        let query = Self::query_turn(parts)?;
        let digest = crate::util::sha256_hex(render_parts(parts).as_bytes());
        let nibble = |i: usize| usize::from_str_radix(&digest[i..i + 1], 16).unwrap_or(0);
        let emotion = crate::corpus::EMOTION_VOCABULARY[nibble(0) % 7];
        let intensity = 1 + nibble(1) % 5;
        let subjectivity = crate::corpus::SUBJECTIVITY_VOCABULARY[nibble(2) % 2];
        let identity = &self.roles[nibble(3) % self.roles.len()];
        let lie = crate::corpus::DECEPTION_VOCABULARY[nibble(4) % 2];
        let tag = &digest[..8];
        Ok(format!(
            "turn: {query}\n\
             emotion: {emotion}\n\
             emotion_intensity: {intensity}\n\
             subjectivity: {subjectivity}\n\
             identity: {identity}\n\
             identity_reasoning: mock identity reasoning {tag}\n\
             lie: {lie}\n\
             lie_reasoning: mock lie reasoning {tag}\n\
             hidden_intent: mock hidden intent {tag}"
        ))
    }
}

impl Generator for MockReasoner {
    fn generate(&self, parts: &[PromptPart]) -> Result<String, GatewayError> {
        check_parts(parts)?;
        match parts.first() {
            Some(PromptPart::Text(t)) if *t == self.prompts.p_align => self.chain_reply(parts),
            Some(PromptPart::Text(t)) if *t == self.prompts.p_sys => self.prediction_reply(parts),
            _ => Err(GatewayError::Contract(
                "mock reasoner: payload does not start with a known prompt".to_string(),
            )),
        }
    }

    fn id(&self) -> &str {
        &self.id
    }
}

/// Fails the first `failures` calls with a retryable scripted error, then
/// answers every later call with the fixed text.
pub struct ScriptedGenerator {
    failures: u32,
    reply: Option<String>,
    calls: AtomicU32,
    id: String,
}

impl ScriptedGenerator {
    pub fn fail_times_then(failures: u32, reply: impl Into<String>) -> Self {
        Self {
            failures,
            reply: Some(reply.into()),
            calls: AtomicU32::new(0),
            id: "scripted-generate".to_string(),
        }
    }

    pub fn always_fail() -> Self {
        Self {
            failures: u32::MAX,
            reply: None,
            calls: AtomicU32::new(0),
            id: "scripted-generate".to_string(),
        }
    }

    pub fn calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Generator for ScriptedGenerator {
    fn generate(&self, parts: &[PromptPart]) -> Result<String, GatewayError> {
        check_parts(parts)?;
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        if call < self.failures {
            return Err(GatewayError::Scripted(format!(
                "scripted failure {}",
                call + 1
            )));
        }
        Ok(self.reply.clone().unwrap_or_default())
    }

    fn id(&self) -> &str {
        &self.id
    }
}

/// Passes through the first `allow` calls, then fails every later one.
/// Simulates a backend outage partway through a run.
pub struct FailAfter<G> {
    inner: G,
    allow: u32,
    calls: AtomicU32,
}

impl<G> FailAfter<G> {
    pub fn new(inner: G, allow: u32) -> Self {
        Self {
            inner,
            allow,
            calls: AtomicU32::new(0),
        }
    }
}

impl<G: Generator> Generator for FailAfter<G> {
    fn generate(&self, parts: &[PromptPart]) -> Result<String, GatewayError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        if call >= self.allow {
            return Err(GatewayError::Scripted("backend outage".to_string()));
        }
        self.inner.generate(parts)
    }

    fn id(&self) -> &str {
        self.inner.id()
    }
}

/// Records every payload it forwards; for isolation and call-count checks.
pub struct SpyGenerator {
    inner: Arc<dyn Generator>,
    calls: Mutex<Vec<Vec<PromptPart>>>,
}

impl SpyGenerator {
    pub fn new(inner: Arc<dyn Generator>) -> Self {
        Self {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<Vec<PromptPart>> {
        self.calls.lock().expect("spy lock poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("spy lock poisoned").len()
    }
}

impl Generator for SpyGenerator {
    fn generate(&self, parts: &[PromptPart]) -> Result<String, GatewayError> {
        self.calls
            .lock()
            .expect("spy lock poisoned")
            .push(parts.to_vec());
        self.inner.generate(parts)
    }

    fn id(&self) -> &str {
        self.inner.id()
    }
}

/// Records every (query, document) pair scored.
pub struct SpyReranker {
    inner: Arc<dyn Reranker>,
    calls: Mutex<Vec<(String, String)>>,
}

impl SpyReranker {
    pub fn new(inner: Arc<dyn Reranker>) -> Self {
        Self {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<(String, String)> {
        self.calls.lock().expect("spy lock poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("spy lock poisoned").len()
    }
}

impl Reranker for SpyReranker {
    fn rerank_score(&self, query: &str, document: &str) -> Result<f64, GatewayError> {
        self.calls
            .lock()
            .expect("spy lock poisoned")
            .push((query.to_string(), document.to_string()));
        self.inner.rerank_score(query, document)
    }
}

/// Token feature hashing into a fixed dimension with L2 normalization.
/// Deterministic and dependency-free; exercises the full semantic path
/// offline. Texts with no tokens yield a zero-norm error, matching the
/// embedding interface contract.
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let mut counts = vec![0u64; self.dim];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(GatewayError::ZeroNormEmbedding);
        }
        for token in &tokens {
            let bucket = (fnv1a64(token.as_bytes()) % self.dim as u64) as usize;
            counts[bucket] += 1;
        }
        // Reduce by the gcd so proportional token distributions (the same
        // direction mathematically) normalize to bitwise-identical vectors.
        let divisor = counts.iter().copied().filter(|c| *c > 0).fold(0, gcd);
        let mut vector: Vec<f64> = counts.iter().map(|c| (c / divisor) as f64).collect();
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut vector {
            *x /= norm;
        }
        Ok(vector)
    }
}

/// Jaccard token overlap of the concatenated pair: monotone, bounded,
/// deterministic.
pub struct JaccardReranker;

impl Reranker for JaccardReranker {
    fn rerank_score(&self, query: &str, document: &str) -> Result<f64, GatewayError> {
        Ok(jaccard(query, document))
    }
}

/// Always returns the same score; useful for exercising the clamping path
/// with out-of-range values.
pub struct ConstReranker(pub f64);

impl Reranker for ConstReranker {
    fn rerank_score(&self, _query: &str, _document: &str) -> Result<f64, GatewayError> {
        Ok(self.0)
    }
}

/// Deterministic judge: fact-grounding is the fraction of key facts quoted
/// verbatim in the prediction (vacuously 1.0 with no key facts); logical
/// consistency is the Jaccard token overlap with the gold reasoning.
pub struct LexicalJudge;

impl Judge for LexicalJudge {
    fn judge(
        &self,
        task: ReasoningTask,
        key_facts: &[String],
        gold_reasoning: &str,
        pred_text: &str,
    ) -> Result<JudgeScores, GatewayError> {
        let fg = if key_facts.is_empty() {
            1.0
        } else {
            let quoted = key_facts
                .iter()
                .filter(|f| pred_text.contains(f.as_str()))
                .count();
            quoted as f64 / key_facts.len() as f64
        };
        let lc = jaccard(gold_reasoning, pred_text);
        Ok(JudgeScores {
            fg,
            lc,
            rationale: format!(
                "{task}: {}/{} key facts quoted; token overlap {lc:.4}",
                key_facts
                    .iter()
                    .filter(|f| pred_text.contains(f.as_str()))
                    .count(),
                key_facts.len()
            ),
        })
    }
}

/// Fixed judge scores, including out-of-range ones for clamp tests.
pub struct ConstJudge {
    pub fg: f64,
    pub lc: f64,
}

impl Judge for ConstJudge {
    fn judge(
        &self,
        _task: ReasoningTask,
        _key_facts: &[String],
        _gold_reasoning: &str,
        _pred_text: &str,
    ) -> Result<JudgeScores, GatewayError> {
        Ok(JudgeScores {
            fg: self.fg,
            lc: self.lc,
            rationale: "const judge".to_string(),
        })
    }
}
