//! HTTP backends speaking OpenAI-compatible request/response bodies for
//! generation and judging, with conventional `/embeddings` and `/rerank`
//! shapes for the other two interfaces.
//!
//! Auth secrets are resolved from the environment at call time and travel
//! only in the `Authorization` header; request logs carry the URL and body,
//! never headers.

use std::sync::atomic::{AtomicU32, Ordering};

use serde_json::{json, Value};

use crate::metrics::{JudgeScores, ReasoningTask};
use crate::types::Modality;

use super::{
    check_parts, parse_judge_reply, BackendProfile, Embedder, GatewayError, Generator, Judge,
    Limiter, PromptPart, Reranker, RetryPolicy,
};

fn build_client(profile: &BackendProfile) -> Result<reqwest::blocking::Client, GatewayError> {
    reqwest::blocking::Client::builder()
        .timeout(profile.timeout())
        .build()
        .map_err(|e| GatewayError::Transport {
            attempts: 0,
            message: e.to_string(),
        })
}

fn endpoint_url(profile: &BackendProfile, path: &str) -> String {
    format!("{}/{}", profile.endpoint.trim_end_matches('/'), path)
}

fn auth_secret(profile: &BackendProfile) -> Option<String> {
    profile
        .auth_env
        .as_ref()
        .and_then(|name| std::env::var(name).ok())
}

/// The log line emitted per request: URL plus body. Secrets live only in
/// headers, so they cannot appear here by construction.
pub fn request_log_line(url: &str, body: &Value) -> String {
    format!("POST {url} {body}")
}

fn post_json(
    client: &reqwest::blocking::Client,
    profile: &BackendProfile,
    url: &str,
    body: &Value,
    attempt: u32,
) -> Result<Value, GatewayError> {
    log::debug!("{}", request_log_line(url, body));
    let mut request = client.post(url).json(body);
    if let Some(secret) = auth_secret(profile) {
        request = request.bearer_auth(secret);
    }
    let response = request.send().map_err(|e| {
        if e.is_timeout() {
            GatewayError::Timeout {
                attempts: attempt,
                message: e.to_string(),
            }
        } else {
            GatewayError::Transport {
                attempts: attempt,
                message: e.to_string(),
            }
        }
    })?;
    let status = response.status();
    let text = response.text().map_err(|e| GatewayError::Transport {
        attempts: attempt,
        message: e.to_string(),
    })?;
    if !status.is_success() {
        return Err(GatewayError::Status {
            status: status.as_u16(),
            attempts: attempt,
            message: text,
        });
    }
    serde_json::from_str(&text).map_err(|e| GatewayError::MalformedReply {
        message: e.to_string(),
        raw: text,
    })
}

fn post_with_retry(
    client: &reqwest::blocking::Client,
    profile: &BackendProfile,
    policy: &RetryPolicy,
    limiter: &Limiter,
    url: &str,
    body: &Value,
) -> Result<Value, GatewayError> {
    let _permit = limiter.acquire();
    let attempt = AtomicU32::new(0);
    let (result, _) = policy.run(|| {
        let n = attempt.fetch_add(1, Ordering::SeqCst) + 1;
        post_json(client, profile, url, body, n)
    });
    result
}

/// Chat-completion request body. Deterministic decoding is requested via
/// `temperature: 0`; media references travel as content parts.
pub fn chat_completion_body(model: &str, parts: &[PromptPart]) -> Value {
    let content: Vec<Value> = parts
        .iter()
        .map(|part| match part {
            PromptPart::Text(text) => json!({ "type": "text", "text": text }),
            PromptPart::Media { uri, modality } => match modality {
                Modality::Audio => json!({ "type": "input_audio", "input_audio": { "url": uri } }),
                _ => json!({ "type": "image_url", "image_url": { "url": uri } }),
            },
        })
        .collect();
    json!({
        "model": model,
        "temperature": 0,
        "messages": [ { "role": "user", "content": content } ],
    })
}

/// Extracts `choices[0].message.content` from a chat-completion response.
pub fn parse_chat_completion(value: &Value) -> Result<String, GatewayError> {
    let content = value.pointer("/choices/0/message/content").ok_or_else(|| {
        GatewayError::MalformedReply {
            message: "missing choices[0].message.content".to_string(),
            raw: value.to_string(),
        }
    })?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(items) => {
            let mut out = String::new();
            for item in items {
                if let Some(text) = item.pointer("/text").and_then(Value::as_str) {
                    out.push_str(text);
                }
            }
            Ok(out)
        }
        other => Err(GatewayError::MalformedReply {
            message: "content is neither string nor parts".to_string(),
            raw: other.to_string(),
        }),
    }
}

pub struct HttpGenerator {
    profile: BackendProfile,
    client: reqwest::blocking::Client,
    policy: RetryPolicy,
    limiter: Limiter,
    id: String,
}

impl HttpGenerator {
    pub fn new(profile: BackendProfile) -> Result<Self, GatewayError> {
        let client = build_client(&profile)?;
        let policy = profile.retry_policy();
        let limiter = Limiter::new(profile.max_parallel);
        let id = format!("http:{}", profile.model);
        Ok(Self {
            profile,
            client,
            policy,
            limiter,
            id,
        })
    }

    /// Overrides the profile-derived retry policy (for tests that need zero
    /// backoff delay).
    pub fn with_policy(profile: BackendProfile, policy: RetryPolicy) -> Result<Self, GatewayError> {
        let mut this = Self::new(profile)?;
        this.policy = policy;
        Ok(this)
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, parts: &[PromptPart]) -> Result<String, GatewayError> {
        check_parts(parts)?;
        let url = endpoint_url(&self.profile, "chat/completions");
        let body = chat_completion_body(&self.profile.model, parts);
        let value = post_with_retry(
            &self.client,
            &self.profile,
            &self.policy,
            &self.limiter,
            &url,
            &body,
        )?;
        parse_chat_completion(&value)
    }

    fn id(&self) -> &str {
        &self.id
    }
}

pub fn embeddings_body(model: &str, text: &str) -> Value {
    json!({ "model": model, "input": text })
}

pub fn parse_embeddings(value: &Value) -> Result<Vec<f64>, GatewayError> {
    let items = value
        .pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| GatewayError::MalformedReply {
            message: "missing data[0].embedding".to_string(),
            raw: value.to_string(),
        })?;
    items
        .iter()
        .map(|x| {
            x.as_f64().ok_or_else(|| GatewayError::MalformedReply {
                message: "non-numeric embedding component".to_string(),
                raw: value.to_string(),
            })
        })
        .collect()
}

/// Raw HTTP embedder. Wrap it in [`super::GuardedEmbedder`] to get the
/// interface guarantees (unit norm, zero-vector rejection, stable dimension).
pub struct HttpEmbedder {
    profile: BackendProfile,
    client: reqwest::blocking::Client,
    policy: RetryPolicy,
    limiter: Limiter,
}

impl HttpEmbedder {
    pub fn new(profile: BackendProfile) -> Result<Self, GatewayError> {
        let client = build_client(&profile)?;
        let policy = profile.retry_policy();
        let limiter = Limiter::new(profile.max_parallel);
        Ok(Self {
            profile,
            client,
            policy,
            limiter,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let url = endpoint_url(&self.profile, "embeddings");
        let body = embeddings_body(&self.profile.model, text);
        let value = post_with_retry(
            &self.client,
            &self.profile,
            &self.policy,
            &self.limiter,
            &url,
            &body,
        )?;
        parse_embeddings(&value)
    }
}

pub fn rerank_body(model: &str, query: &str, document: &str) -> Value {
    json!({ "model": model, "query": query, "documents": [document] })
}

pub fn parse_rerank(value: &Value) -> Result<f64, GatewayError> {
    let score = value
        .pointer("/results/0/relevance_score")
        .or_else(|| value.pointer("/results/0/score"))
        .and_then(Value::as_f64)
        .ok_or_else(|| GatewayError::MalformedReply {
            message: "missing results[0].relevance_score".to_string(),
            raw: value.to_string(),
        })?;
    Ok(score)
}

pub struct HttpReranker {
    profile: BackendProfile,
    client: reqwest::blocking::Client,
    policy: RetryPolicy,
    limiter: Limiter,
}

impl HttpReranker {
    pub fn new(profile: BackendProfile) -> Result<Self, GatewayError> {
        let client = build_client(&profile)?;
        let policy = profile.retry_policy();
        let limiter = Limiter::new(profile.max_parallel);
        Ok(Self {
            profile,
            client,
            policy,
            limiter,
        })
    }
}

impl Reranker for HttpReranker {
    fn rerank_score(&self, query: &str, document: &str) -> Result<f64, GatewayError> {
        let url = endpoint_url(&self.profile, "rerank");
        let body = rerank_body(&self.profile.model, query, document);
        let value = post_with_retry(
            &self.client,
            &self.profile,
            &self.policy,
            &self.limiter,
            &url,
            &body,
        )?;
        let score = parse_rerank(&value)?;
        if !(0.0..=1.0).contains(&score) {
            log::warn!("rerank backend returned {score}; clamping to [0, 1]");
        }
        Ok(score.clamp(0.0, 1.0))
    }
}

/// Fills the judge prompt template. Placeholders: `{task}`, `{key_facts}`,
/// `{gold_reasoning}`, `{prediction}`.
pub fn judge_prompt(
    template: &str,
    task: ReasoningTask,
    key_facts: &[String],
    gold_reasoning: &str,
    pred_text: &str,
) -> String {
    let facts = if key_facts.is_empty() {
        "(none)".to_string()
    } else {
        key_facts
            .iter()
            .enumerate()
            .map(|(i, f)| format!("{}. {f}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    };
    template
        .replace("{task}", &task.to_string())
        .replace("{key_facts}", &facts)
        .replace("{gold_reasoning}", gold_reasoning)
        .replace("{prediction}", pred_text)
}

/// Judge backed by a chat-completion endpoint plus strict `fg:`/`lc:` reply
/// parsing.
pub struct HttpJudge {
    generator: HttpGenerator,
    template: String,
}

impl HttpJudge {
    pub fn new(profile: BackendProfile, template: String) -> Result<Self, GatewayError> {
        Ok(Self {
            generator: HttpGenerator::new(profile)?,
            template,
        })
    }
}

impl Judge for HttpJudge {
    fn judge(
        &self,
        task: ReasoningTask,
        key_facts: &[String],
        gold_reasoning: &str,
        pred_text: &str,
    ) -> Result<JudgeScores, GatewayError> {
        let prompt = judge_prompt(&self.template, task, key_facts, gold_reasoning, pred_text);
        let raw = self.generator.generate(&[PromptPart::text(prompt)])?;
        parse_judge_reply(&raw)
    }
}

impl BackendProfile {
    /// Profile for tests against a local listener.
    pub fn test_http(endpoint: &str) -> Self {
        Self {
            kind: super::BackendKind::Generate,
            endpoint: endpoint.to_string(),
            model: "test-model".to_string(),
            timeout_s: 5,
            retries: 0,
            max_parallel: 1,
            auth_env: None,
        }
    }
}
