//! Run configuration: a single TOML document holding every tunable the
//! pipeline uses, with shipped defaults for each value the dataset and
//! method leave open. Relative paths are resolved against the config file's
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anchoring::{AnchoringConfig, FusionConfig};
use crate::corpus::RoleCampMap;
use crate::decoupler::PromptSet;
use crate::gateway::{BackendKind, BackendProfile};
use crate::metrics::MetricConfig;
use crate::util::sha256_hex;

/// Pipeline input mode: `full` decouples clips, `text_only` runs on
/// transcripts alone and forbids decouple backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Full,
    TextOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchoringSection {
    pub eta: f64,
    pub w_lex: f64,
    pub w_sem: f64,
    pub m: usize,
    pub k: usize,
    pub rerank_parallelism: usize,
}

impl Default for AnchoringSection {
    fn default() -> Self {
        Self {
            eta: 60.0,
            w_lex: 1.0,
            w_sem: 1.0,
            m: 20,
            k: 5,
            rerank_parallelism: 4,
        }
    }
}

impl AnchoringSection {
    pub fn to_config(&self) -> AnchoringConfig {
        AnchoringConfig {
            m_candidates: self.m,
            k_context: self.k,
            fusion: FusionConfig {
                w_lex: self.w_lex,
                w_sem: self.w_sem,
                eta: self.eta,
            },
            rerank_parallelism: self.rerank_parallelism,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub partial_role: f64,
    pub judge_parallelism: usize,
    /// Judge prompt template; placeholders {task}, {key_facts},
    /// {gold_reasoning}, {prediction}.
    pub judge_prompt: String,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            tau: 0.2,
            partial_role: 0.5,
            judge_parallelism: 4,
            judge_prompt: default_judge_prompt(),
        }
    }
}

pub fn default_judge_prompt() -> String {
    "You are scoring a model's {task} reasoning.\n\
     Key facts the reasoning must be grounded in:\n{key_facts}\n\
     Reference reasoning:\n{gold_reasoning}\n\
     Predicted reasoning:\n{prediction}\n\
     Score fact-grounded responsiveness (how much of the key facts the \
     prediction actually uses) and logical consistency (how well the \
     prediction's logic matches the reference). Reply with exactly three \
     lines:\nfg: <number in [0,1]>\nlc: <number in [0,1]>\nrationale: <one line>"
        .to_string()
}

impl MetricsSection {
    pub fn to_config(&self) -> MetricConfig {
        MetricConfig {
            alpha: self.alpha,
            beta: self.beta,
            tau: self.tau,
            partial_role_score: self.partial_role,
            judge_parallelism: self.judge_parallelism,
        }
    }
}

/// Which named backend profile serves each pipeline role.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineBindings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decouple_backend: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain_backend: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infer_backend: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed_backend: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rerank_backend: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_backend: Option<String>,
    /// Row label in evaluation reports.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    pub lenient: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Separate prompts file; omitted means the built-in defaults.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompts_path: Option<PathBuf>,
    pub session_parallelism: usize,
    pub decouple_parallelism: usize,
    pub anchoring: AnchoringSection,
    pub metrics: MetricsSection,
    /// Role label → camp label.
    pub roles: RoleCampMap,
    pub backends: BTreeMap<String, BackendProfile>,
    pub pipeline: PipelineBindings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Full,
            lenient: false,
            corpus_path: None,
            output_dir: None,
            prompts_path: None,
            session_parallelism: 4,
            decouple_parallelism: 4,
            anchoring: AnchoringSection::default(),
            metrics: MetricsSection::default(),
            roles: RoleCampMap::new(),
            backends: BTreeMap::new(),
            pipeline: PipelineBindings::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("backend `{0}` is referenced but not defined under [backends]")]
    UnknownBackend(String),
    #[error(
        "backend `{name}` has kind {actual:?}, but the `{binding}` binding needs {expected:?}"
    )]
    KindMismatch {
        name: String,
        binding: String,
        expected: BackendKind,
        actual: BackendKind,
    },
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Loads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [
            &mut config.corpus_path,
            &mut config.output_dir,
            &mut config.prompts_path,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
        Ok(config)
    }

    /// Loads the prompt set from `prompts_path`, or the built-in defaults
    /// when no path is configured.
    pub fn load_prompts(&self) -> Result<PromptSet, ConfigError> {
        let prompts = match &self.prompts_path {
            None => PromptSet::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.display().to_string(),
                    source,
                })?;
                parse_prompts_str(&text)?
            }
        };
        prompts.validate().map_err(ConfigError::Invalid)?;
        Ok(prompts)
    }

    fn check_binding(
        &self,
        binding: &str,
        name: &Option<String>,
        expected: BackendKind,
    ) -> Result<(), ConfigError> {
        if let Some(name) = name {
            let profile = self
                .backends
                .get(name)
                .ok_or_else(|| ConfigError::UnknownBackend(name.clone()))?;
            if profile.kind != expected {
                return Err(ConfigError::KindMismatch {
                    name: name.clone(),
                    binding: binding.to_string(),
                    expected,
                    actual: profile.kind,
                });
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.anchoring
            .to_config()
            .validate()
            .map_err(ConfigError::Invalid)?;
        self.metrics
            .to_config()
            .validate()
            .map_err(ConfigError::Invalid)?;
        if self.mode == Mode::TextOnly && self.pipeline.decouple_backend.is_some() {
            return Err(ConfigError::Invalid(
                "text_only mode forbids a decouple backend".to_string(),
            ));
        }
        self.check_binding(
            "decouple_backend",
            &self.pipeline.decouple_backend,
            BackendKind::Generate,
        )?;
        self.check_binding(
            "chain_backend",
            &self.pipeline.chain_backend,
            BackendKind::Generate,
        )?;
        self.check_binding(
            "infer_backend",
            &self.pipeline.infer_backend,
            BackendKind::Generate,
        )?;
        self.check_binding(
            "embed_backend",
            &self.pipeline.embed_backend,
            BackendKind::Embed,
        )?;
        self.check_binding(
            "rerank_backend",
            &self.pipeline.rerank_backend,
            BackendKind::Rerank,
        )?;
        self.check_binding(
            "judge_backend",
            &self.pipeline.judge_backend,
            BackendKind::Judge,
        )?;
        for (name, profile) in &self.backends {
            if profile.endpoint.is_empty() {
                return Err(ConfigError::Invalid(format!(
                    "backend `{name}` has an empty endpoint"
                )));
            }
        }
        Ok(())
    }

    /// Digest of the effective configuration, for checkpoint keys and run
    /// manifests. Path fields are excluded — they locate inputs, they are
    /// not part of the run semantics (prompt content has its own digest) —
    /// so the same logical config digests identically from any directory.
    pub fn digest(&self) -> String {
        let mut semantic = self.clone();
        semantic.corpus_path = None;
        semantic.output_dir = None;
        semantic.prompts_path = None;
        let canonical = toml::to_string(&semantic).expect("config serializes");
        sha256_hex(canonical.as_bytes())
    }

    /// Report row label: the configured model id, else the infer backend's
    /// model name, else a fixed fallback.
    pub fn model_id(&self) -> String {
        if let Some(id) = &self.pipeline.model_id {
            return id.clone();
        }
        self.pipeline
            .infer_backend
            .as_ref()
            .and_then(|name| self.backends.get(name))
            .map(|profile| profile.model.clone())
            .unwrap_or_else(|| "model".to_string())
    }
}

/// Parses a prompts file (TOML with the four prompt keys).
pub fn parse_prompts_str(text: &str) -> Result<PromptSet, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}
