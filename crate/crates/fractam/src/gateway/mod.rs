//! Uniform access to external model services behind four interfaces:
//! text generation (decoupling and reasoning), embedding, reranking, and
//! judging. Each has an HTTP implementation ([`http`]) and deterministic
//! in-process implementations ([`testkit`]) so the full pipeline runs with
//! zero network access.

pub mod http;
pub mod testkit;

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::metrics::{JudgeScores, ReasoningTask};
use crate::types::Modality;

/// What a backend profile is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Generate,
    Embed,
    Rerank,
    Judge,
}

/// Connection settings for one external service. The auth secret itself is
/// never stored — only the name of the environment variable holding it — so
/// profiles and request logs cannot leak it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendProfile {
    pub kind: BackendKind,
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    /// Retry budget: how many times a failed call is retried; a budget of N
    /// allows N+1 attempts in total.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
}

fn default_model() -> String {
    "default".to_string()
}

fn default_timeout_s() -> u64 {
    60
}

fn default_retries() -> u32 {
    3
}

fn default_max_parallel() -> usize {
    4
}

impl BackendProfile {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_s)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            budget: self.retries,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// One ordered piece of a generation request: either instruction/content text
/// or an opaque media reference the backend resolves itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PromptPart {
    Text(String),
    Media { uri: String, modality: Modality },
}

impl PromptPart {
    pub fn text(s: impl Into<String>) -> Self {
        PromptPart::Text(s.into())
    }

    pub fn media(uri: impl Into<String>, modality: Modality) -> Self {
        PromptPart::Media {
            uri: uri.into(),
            modality,
        }
    }

    /// Substring check across the textual content of the part (media URIs
    /// included — they are payload too).
    pub fn contains(&self, needle: &str) -> bool {
        match self {
            PromptPart::Text(t) => t.contains(needle),
            PromptPart::Media { uri, .. } => uri.contains(needle),
        }
    }
}

/// Renders a payload for logs and digests. Secrets never appear here:
/// payloads carry only prompt content and media references.
pub fn render_parts(parts: &[PromptPart]) -> String {
    let mut out = String::new();
    for part in parts {
        match part {
            PromptPart::Text(t) => {
                out.push_str("[text]\n");
                out.push_str(t);
            }
            PromptPart::Media { uri, modality } => {
                out.push_str(&format!("[media {modality}] {uri}"));
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("timeout after {attempts} attempt(s): {message}")]
    Timeout { attempts: u32, message: String },
    #[error("backend returned status {status} on attempt {attempts}: {message}")]
    Status {
        status: u16,
        attempts: u32,
        message: String,
    },
    #[error("transport failure on attempt {attempts}: {message}")]
    Transport { attempts: u32, message: String },
    #[error("retry budget exhausted after {attempts} attempt(s): {last}")]
    BudgetExhausted { attempts: u32, last: String },
    #[error("malformed backend reply: {message}; raw: {raw}")]
    MalformedReply { message: String, raw: String },
    #[error("embedding dimension drift: expected {expected}, got {got}")]
    DimensionDrift { expected: usize, got: usize },
    #[error("zero-norm embedding")]
    ZeroNormEmbedding,
    #[error("scripted failure: {0}")]
    Scripted(String),
}

impl GatewayError {
    /// Transient faults are retried; contract and format faults are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Timeout { .. }
            | GatewayError::Transport { .. }
            | GatewayError::Scripted(_) => true,
            GatewayError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

/// Retry with exponential backoff. A budget of N means N retries on top of
/// the initial attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub budget: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    /// No retries at all: single attempt.
    pub fn none() -> Self {
        RetryPolicy {
            budget: 0,
            base_delay: Duration::ZERO,
        }
    }

    /// Budget with no backoff delay, for deterministic fast tests.
    pub fn immediate(budget: u32) -> Self {
        RetryPolicy {
            budget,
            base_delay: Duration::ZERO,
        }
    }

    /// Runs `op` until it succeeds, fails non-retryably, or the budget runs
    /// out. Returns the outcome together with the number of attempts made.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, GatewayError>,
    ) -> (Result<T, GatewayError>, u32) {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match op() {
                Ok(value) => return (Ok(value), attempt),
                Err(e) if !e.is_retryable() => return (Err(e), attempt),
                Err(e) if attempt > self.budget => {
                    return (
                        Err(GatewayError::BudgetExhausted {
                            attempts: attempt,
                            last: e.to_string(),
                        }),
                        attempt,
                    );
                }
                Err(e) => {
                    let delay = self.base_delay * 2u32.saturating_pow(attempt - 1);
                    log::debug!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                }
            }
        }
    }
}

/// Text generation (decoupling backends and reasoning backends).
pub trait Generator: Send + Sync {
    /// One logical request assembling `parts` in order. Implementations must
    /// reject an empty part list as a contract violation.
    fn generate(&self, parts: &[PromptPart]) -> Result<String, GatewayError>;

    /// Stable identifier recorded as fact provenance.
    fn id(&self) -> &str;
}

/// Text embedding. Returned vectors are unit-L2-normalized and of a constant
/// dimension for the life of the instance.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError>;
}

/// Cross-encoder scoring of a (query, document) pair, in [0, 1].
pub trait Reranker: Send + Sync {
    fn rerank_score(&self, query: &str, document: &str) -> Result<f64, GatewayError>;
}

/// LLM-as-judge scoring of predicted reasoning against key facts and a gold
/// reference.
pub trait Judge: Send + Sync {
    fn judge(
        &self,
        task: ReasoningTask,
        key_facts: &[String],
        gold_reasoning: &str,
        pred_text: &str,
    ) -> Result<JudgeScores, GatewayError>;
}

pub(crate) fn check_parts(parts: &[PromptPart]) -> Result<(), GatewayError> {
    if parts.is_empty() {
        return Err(GatewayError::Contract("empty prompt parts".to_string()));
    }
    Ok(())
}

/// Counting semaphore bounding in-flight calls per backend profile.
pub struct Limiter {
    permits: std::sync::Mutex<usize>,
    available: std::sync::Condvar,
}

impl Limiter {
    pub fn new(max_parallel: usize) -> Self {
        Self {
            permits: std::sync::Mutex::new(max_parallel.max(1)),
            available: std::sync::Condvar::new(),
        }
    }

    /// Blocks until a permit is free; the guard releases it on drop.
    pub fn acquire(&self) -> LimiterGuard<'_> {
        let mut permits = self.permits.lock().expect("limiter poisoned");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("limiter poisoned");
        }
        *permits -= 1;
        LimiterGuard { limiter: self }
    }
}

pub struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.limiter.permits.lock().expect("limiter poisoned");
        *permits += 1;
        self.limiter.available.notify_one();
    }
}

/// Wraps any generator with a retry policy, exposing the attempt count of the
/// most recent call for audit.
pub struct Retrying<G> {
    inner: G,
    policy: RetryPolicy,
    last_attempts: AtomicU32,
}

impl<G> Retrying<G> {
    pub fn new(inner: G, policy: RetryPolicy) -> Self {
        Self {
            inner,
            policy,
            last_attempts: AtomicU32::new(0),
        }
    }

    pub fn last_attempts(&self) -> u32 {
        self.last_attempts.load(Ordering::SeqCst)
    }
}

impl<G: Generator> Generator for Retrying<G> {
    fn generate(&self, parts: &[PromptPart]) -> Result<String, GatewayError> {
        let (result, attempts) = self.policy.run(|| self.inner.generate(parts));
        self.last_attempts.store(attempts, Ordering::SeqCst);
        result
    }

    fn id(&self) -> &str {
        self.inner.id()
    }
}

/// Enforces the embedding interface contract around any inner embedder:
/// unit normalization, zero-vector rejection, and dimension stability across
/// calls.
pub struct GuardedEmbedder<E> {
    inner: E,
    dim_seen: std::sync::Mutex<Option<usize>>,
}

impl<E> GuardedEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            dim_seen: std::sync::Mutex::new(None),
        }
    }
}

impl<E: Embedder> Embedder for GuardedEmbedder<E> {
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let mut vector = self.inner.embed(text)?;
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(GatewayError::ZeroNormEmbedding);
        }
        for x in &mut vector {
            *x /= norm;
        }
        let mut seen = self.dim_seen.lock().expect("dim lock poisoned");
        match *seen {
            None => *seen = Some(vector.len()),
            Some(expected) if expected != vector.len() => {
                return Err(GatewayError::DimensionDrift {
                    expected,
                    got: vector.len(),
                });
            }
            Some(_) => {}
        }
        Ok(vector)
    }
}

impl<E: Embedder + ?Sized> Embedder for Arc<E> {
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        (**self).embed(text)
    }
}

impl<G: Generator + ?Sized> Generator for Arc<G> {
    fn generate(&self, parts: &[PromptPart]) -> Result<String, GatewayError> {
        (**self).generate(parts)
    }

    fn id(&self) -> &str {
        (**self).id()
    }
}

impl<R: Reranker + ?Sized> Reranker for Arc<R> {
    fn rerank_score(&self, query: &str, document: &str) -> Result<f64, GatewayError> {
        (**self).rerank_score(query, document)
    }
}

impl<J: Judge + ?Sized> Judge for Arc<J> {
    fn judge(
        &self,
        task: ReasoningTask,
        key_facts: &[String],
        gold_reasoning: &str,
        pred_text: &str,
    ) -> Result<JudgeScores, GatewayError> {
        (**self).judge(task, key_facts, gold_reasoning, pred_text)
    }
}

/// Strict parse of a judge reply: requires an `fg:` line and an `lc:` line
/// with values in [0, 1]; an optional `rationale:` line carries free text.
pub fn parse_judge_reply(raw: &str) -> Result<JudgeScores, GatewayError> {
    let mut fg: Option<f64> = None;
    let mut lc: Option<f64> = None;
    let mut rationale = String::new();
    for line in raw.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("fg:") {
            if fg.is_some() {
                return malformed("duplicate fg line", raw);
            }
            fg = Some(parse_unit_score(rest, raw)?);
        } else if let Some(rest) = line.strip_prefix("lc:") {
            if lc.is_some() {
                return malformed("duplicate lc line", raw);
            }
            lc = Some(parse_unit_score(rest, raw)?);
        } else if let Some(rest) = line.strip_prefix("rationale:") {
            rationale = rest.trim().to_string();
        }
    }
    match (fg, lc) {
        (Some(fg), Some(lc)) => Ok(JudgeScores { fg, lc, rationale }),
        (None, _) => malformed("missing fg line", raw),
        (_, None) => malformed("missing lc line", raw),
    }
}

fn malformed<T>(message: &str, raw: &str) -> Result<T, GatewayError> {
    Err(GatewayError::MalformedReply {
        message: message.to_string(),
        raw: raw.to_string(),
    })
}

fn parse_unit_score(text: &str, raw: &str) -> Result<f64, GatewayError> {
    let value: f64 = text
        .trim()
        .parse()
        .map_err(|_| GatewayError::MalformedReply {
            message: format!("`{}` is not a number", text.trim()),
            raw: raw.to_string(),
        })?;
    if !(0.0..=1.0).contains(&value) {
        return malformed(&format!("score {value} outside [0, 1]"), raw);
    }
    Ok(value)
}
