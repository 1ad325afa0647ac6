//! Run orchestration: per session, in turn order, build the fact set, append
//! it to the session's memory bank, anchor against history, build the
//! evidence chain, infer, and parse the prediction. Sessions run in
//! parallel; turns within a session are sequential by contract.
//!
//! Every completed turn leaves a durable checkpoint keyed by the config
//! digest, so interrupted runs resume without repeating backend calls.
//! Output files are canonically ordered (sessions sorted by id), making runs
//! byte-stable under session-level input shuffling.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::anchoring::{anchor, AnchorError, RetrievalContext};
use crate::config::{ConfigError, Mode, RunConfig};
use crate::corpus::{corpus_digest, Session, SessionCorpus};
use crate::decoupler::{build_fact_set, DecoupleError, FactSet, PromptSet};
use crate::gateway::http::{HttpEmbedder, HttpGenerator, HttpJudge, HttpReranker};
use crate::gateway::testkit::{
    HashingEmbedder, JaccardReranker, LexicalJudge, MockGenerator, MockReasoner,
};
use crate::gateway::{Embedder, GatewayError, Generator, GuardedEmbedder, Judge, Reranker};
use crate::memory::{MemoryBank, MemoryError};
use crate::parallel::parallel_map;
use crate::reasoner::{
    build_evidence_chain, infer, parse_prediction, serialize_prediction, ChainValidation,
    PredictionRecord, ReasonError,
};
use crate::types::TurnRef;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Decouple(#[from] DecoupleError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("anchoring {turn}: {source}")]
    Anchor { turn: TurnRef, source: AnchorError },
    #[error(transparent)]
    Reason(#[from] ReasonError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("checkpoint {path} is corrupt: {message}")]
    Checkpoint { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// The constructed backends a run needs. The judge is separate because it
/// belongs to evaluation, not generation.
pub struct PipelineBackends {
    pub decoupler: Option<Arc<dyn Generator>>,
    pub chain: Arc<dyn Generator>,
    pub infer: Arc<dyn Generator>,
    pub embedder: Arc<dyn Embedder>,
    pub reranker: Arc<dyn Reranker>,
}

fn profile_of<'c>(
    cfg: &'c RunConfig,
    name: &str,
) -> Result<&'c crate::gateway::BackendProfile, PipelineError> {
    cfg.backends
        .get(name)
        .ok_or_else(|| PipelineError::Config(ConfigError::UnknownBackend(name.to_string())))
}

fn generator_for(
    cfg: &RunConfig,
    prompts: &PromptSet,
    name: &str,
) -> Result<Arc<dyn Generator>, PipelineError> {
    let profile = profile_of(cfg, name)?;
    match profile.endpoint.as_str() {
        "test:decoupler" => Ok(Arc::new(MockGenerator::new())),
        "test:reasoner" => Ok(Arc::new(MockReasoner::new(
            prompts.clone(),
            cfg.roles.keys().cloned().collect(),
        ))),
        endpoint if endpoint.starts_with("http://") || endpoint.starts_with("https://") => {
            Ok(Arc::new(HttpGenerator::new(profile.clone())?))
        }
        other => Err(PipelineError::Config(ConfigError::Invalid(format!(
            "backend `{name}`: unsupported endpoint `{other}`"
        )))),
    }
}

/// Builds the generation-side backends named in the config's pipeline
/// bindings. `test:` endpoints map to the deterministic in-process backends.
pub fn build_backends(
    cfg: &RunConfig,
    prompts: &PromptSet,
) -> Result<PipelineBackends, PipelineError> {
    let binding = |name: &Option<String>, role: &str| -> Result<String, PipelineError> {
        name.clone().ok_or_else(|| {
            PipelineError::Config(ConfigError::Invalid(format!(
                "pipeline binding `{role}` is not configured"
            )))
        })
    };

    let decoupler = match (&cfg.mode, &cfg.pipeline.decouple_backend) {
        (Mode::TextOnly, _) | (_, None) => None,
        (Mode::Full, Some(name)) => Some(generator_for(cfg, prompts, name)?),
    };
    let chain = generator_for(
        cfg,
        prompts,
        &binding(&cfg.pipeline.chain_backend, "chain_backend")?,
    )?;
    let infer_backend = match &cfg.pipeline.infer_backend {
        Some(name) => generator_for(cfg, prompts, name)?,
        // One reasoning backend serves both calls unless configured apart.
        None => chain.clone(),
    };

    let embedder: Arc<dyn Embedder> = {
        let name = binding(&cfg.pipeline.embed_backend, "embed_backend")?;
        let profile = profile_of(cfg, &name)?;
        match profile.endpoint.as_str() {
            "test:embedder" => Arc::new(HashingEmbedder::default()),
            endpoint if endpoint.starts_with("http") => {
                Arc::new(GuardedEmbedder::new(HttpEmbedder::new(profile.clone())?))
            }
            other => {
                return Err(PipelineError::Config(ConfigError::Invalid(format!(
                    "backend `{name}`: unsupported endpoint `{other}`"
                ))))
            }
        }
    };
    let reranker: Arc<dyn Reranker> = {
        let name = binding(&cfg.pipeline.rerank_backend, "rerank_backend")?;
        let profile = profile_of(cfg, &name)?;
        match profile.endpoint.as_str() {
            "test:reranker" => Arc::new(JaccardReranker),
            endpoint if endpoint.starts_with("http") => {
                Arc::new(HttpReranker::new(profile.clone())?)
            }
            other => {
                return Err(PipelineError::Config(ConfigError::Invalid(format!(
                    "backend `{name}`: unsupported endpoint `{other}`"
                ))))
            }
        }
    };

    Ok(PipelineBackends {
        decoupler,
        chain,
        infer: infer_backend,
        embedder,
        reranker,
    })
}

/// Builds the judge backend named in the config.
pub fn build_judge(cfg: &RunConfig) -> Result<Arc<dyn Judge>, PipelineError> {
    let name = cfg.pipeline.judge_backend.clone().ok_or_else(|| {
        PipelineError::Config(ConfigError::Invalid(
            "pipeline binding `judge_backend` is not configured".to_string(),
        ))
    })?;
    let profile = profile_of(cfg, &name)?;
    match profile.endpoint.as_str() {
        "test:judge" => Ok(Arc::new(LexicalJudge)),
        endpoint if endpoint.starts_with("http") => Ok(Arc::new(HttpJudge::new(
            profile.clone(),
            cfg.metrics.judge_prompt.clone(),
        )?)),
        other => Err(PipelineError::Config(ConfigError::Invalid(format!(
            "backend `{name}`: unsupported endpoint `{other}`"
        )))),
    }
}

/// Filesystem-safe session name: alphanumerics, `.`, `_`, `-` pass through,
/// everything else is percent-encoded.
pub fn sanitize_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for byte in name.bytes() {
        match byte {
            b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'.' | b'_' | b'-' => out.push(byte as char),
            other => out.push_str(&format!("%{other:02X}")),
        }
    }
    out
}

/// Retrieval provenance for one anchored fact in the run audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextProvenance {
    pub turn_index: u32,
    pub rank_lex: Option<usize>,
    pub rank_sem: Option<usize>,
    pub omega: f64,
    pub s_ce: Option<f64>,
}

/// One run-audit line: what was decoupled, what was anchored, how long the
/// chain was, and whether the turn came from a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAuditLine {
    pub session_id: String,
    pub turn_index: u32,
    pub speaker_id: String,
    pub visual_decoupled: bool,
    pub audio_decoupled: bool,
    pub context: Vec<ContextProvenance>,
    pub chain_steps: usize,
    pub resumed: bool,
}

fn provenance(context: &RetrievalContext) -> Vec<ContextProvenance> {
    context
        .anchored
        .iter()
        .map(|s| ContextProvenance {
            turn_index: s.fact.turn.turn_index,
            rank_lex: s.rank_lex,
            rank_sem: s.rank_sem,
            omega: s.omega,
            s_ce: s.s_ce,
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    config_digest: String,
    prediction: String,
    audit: RunAuditLine,
}

fn checkpoint_path(out_dir: &Path, session_id: &str, turn_index: u32) -> PathBuf {
    out_dir
        .join("checkpoints")
        .join(sanitize_name(session_id))
        .join(format!("t{turn_index}.json"))
}

fn bank_path(out_dir: &Path, session_id: &str) -> PathBuf {
    out_dir
        .join("banks")
        .join(format!("{}.jsonl", sanitize_name(session_id)))
}

fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let json = serde_json::to_string(checkpoint).expect("checkpoint serializes");
    fs::write(path, json).map_err(io_err(path))
}

fn load_checkpoint(path: &Path, config_digest: &str) -> Option<Checkpoint> {
    let text = fs::read_to_string(path).ok()?;
    match serde_json::from_str::<Checkpoint>(&text) {
        Ok(checkpoint) if checkpoint.config_digest == config_digest => Some(checkpoint),
        Ok(_) => {
            log::warn!(
                "checkpoint {} was written under a different config; ignoring",
                path.display()
            );
            None
        }
        Err(e) => {
            log::warn!(
                "checkpoint {} is unreadable ({e}); ignoring",
                path.display()
            );
            None
        }
    }
}

/// Everything produced for one session, in turn order.
#[derive(Debug)]
pub struct SessionRun {
    pub session_id: String,
    pub predictions: Vec<PredictionRecord>,
    pub audits: Vec<RunAuditLine>,
}

fn strip_clips(record: &crate::corpus::UtteranceRecord) -> crate::corpus::UtteranceRecord {
    let mut stripped = record.clone();
    stripped.visual_clip = None;
    stripped.audio_clip = None;
    stripped
}

/// Runs one session in turn order. See the module docs for the per-turn
/// composition and the checkpoint rules.
pub fn run_session(
    session: &Session,
    cfg: &RunConfig,
    prompts: &PromptSet,
    backends: &PipelineBackends,
    out_dir: &Path,
    resume: bool,
) -> Result<SessionRun, PipelineError> {
    let config_digest = cfg.digest();
    let validation = if cfg.lenient {
        ChainValidation::Lenient
    } else {
        ChainValidation::Strict
    };
    let anchoring_cfg = cfg.anchoring.to_config();
    let mut bank = MemoryBank::open(
        session.session_id.clone(),
        bank_path(out_dir, &session.session_id),
    )?;
    let mut predictions = Vec::with_capacity(session.turns.len());
    let mut audits = Vec::with_capacity(session.turns.len());

    for record in &session.turns {
        let turn_index = record.turn_index;
        let fact_set: FactSet = match bank.entry(turn_index) {
            Some(entry) => entry.clone(),
            None => {
                let effective = if cfg.mode == Mode::TextOnly {
                    strip_clips(record)
                } else {
                    record.clone()
                };
                let fact_set = build_fact_set(
                    &effective,
                    backends.decoupler.as_deref(),
                    prompts,
                    cfg.decouple_parallelism,
                )?;
                bank.append(fact_set.clone())?;
                fact_set
            }
        };

        let ckpt_path = checkpoint_path(out_dir, &session.session_id, turn_index);
        if resume {
            if let Some(checkpoint) = load_checkpoint(&ckpt_path, &config_digest) {
                // The serialized block carries the chain as step lines.
                let prediction = parse_prediction(&checkpoint.prediction, &fact_set.turn)
                    .map_err(|e| PipelineError::Checkpoint {
                        path: ckpt_path.display().to_string(),
                        message: e.to_string(),
                    })?;
                let mut audit = checkpoint.audit;
                audit.resumed = true;
                predictions.push(prediction);
                audits.push(audit);
                continue;
            }
        }

        let context = anchor(
            &fact_set,
            &bank,
            &anchoring_cfg,
            &backends.embedder,
            &backends.reranker,
        )
        .map_err(|source| PipelineError::Anchor {
            turn: fact_set.turn.clone(),
            source,
        })?;
        let chain = build_evidence_chain(
            &fact_set,
            &context,
            &backends.chain,
            &prompts.p_align,
            validation,
        )?;
        let raw = infer(&chain, &fact_set, &context, &backends.infer, &prompts.p_sys)?;
        let mut prediction = parse_prediction(&raw, &fact_set.turn)?;
        // The validated first-stage chain is authoritative over any step
        // lines the model may have restated.
        prediction.evidence_chain = chain;

        let audit = RunAuditLine {
            session_id: session.session_id.clone(),
            turn_index,
            speaker_id: record.speaker_id.clone(),
            visual_decoupled: fact_set.visual_fact.is_some(),
            audio_decoupled: fact_set.audio_fact.is_some(),
            context: provenance(&context),
            chain_steps: prediction.evidence_chain.steps.len(),
            resumed: false,
        };
        write_checkpoint(
            &ckpt_path,
            &Checkpoint {
                config_digest: config_digest.clone(),
                prediction: serialize_prediction(&prediction),
                audit: audit.clone(),
            },
        )?;
        predictions.push(prediction);
        audits.push(audit);
    }

    Ok(SessionRun {
        session_id: session.session_id.clone(),
        predictions,
        audits,
    })
}

/// Everything produced for a corpus run, canonically ordered.
#[derive(Debug)]
pub struct RunOutput {
    pub predictions: Vec<PredictionRecord>,
    pub audits: Vec<RunAuditLine>,
    pub manifest: Manifest,
}

/// Provenance for every number a run produces. Content digests only — no
/// timestamps, no absolute paths — so identical inputs give identical
/// manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_digest: String,
    pub prompts_digest: String,
    pub corpus_digest: String,
    pub mode: Mode,
    pub sessions: usize,
    pub turns: usize,
}

/// Runs every session (in parallel, bounded by `session_parallelism`) and
/// assembles canonical outputs. A failed session aborts the run after all
/// sessions have been attempted; completed turns stay checkpointed for
/// `--resume`.
pub fn run_corpus(
    corpus: &SessionCorpus,
    cfg: &RunConfig,
    prompts: &PromptSet,
    backends: &PipelineBackends,
    out_dir: &Path,
    resume: bool,
) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    if !resume {
        for sub in ["banks", "checkpoints"] {
            let dir = out_dir.join(sub);
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
            }
        }
    }

    let sessions: Vec<&Session> = corpus.sessions.iter().collect();
    let results = parallel_map(sessions, cfg.session_parallelism, |session| {
        run_session(session, cfg, prompts, backends, out_dir, resume)
    });

    let mut runs = Vec::with_capacity(results.len());
    for result in results {
        runs.push(result?);
    }
    runs.sort_by(|a, b| a.session_id.cmp(&b.session_id));

    let mut predictions = Vec::new();
    let mut audits = Vec::new();
    for run in runs {
        predictions.extend(run.predictions);
        audits.extend(run.audits);
    }

    let manifest = Manifest {
        config_digest: cfg.digest(),
        prompts_digest: prompts.digest(),
        corpus_digest: corpus_digest(corpus),
        mode: cfg.mode,
        sessions: corpus.sessions.len(),
        turns: corpus.total_turns(),
    };

    Ok(RunOutput {
        predictions,
        audits,
        manifest,
    })
}

/// Writes the predictions file: blank-line-separated blocks in canonical
/// order.
pub fn write_predictions(
    path: &Path,
    predictions: &[PredictionRecord],
) -> Result<(), PipelineError> {
    let blocks: Vec<String> = predictions.iter().map(serialize_prediction).collect();
    fs::write(path, blocks.join("\n")).map_err(io_err(path))
}

/// Writes the run audit as one JSON object per line.
pub fn write_run_audit(path: &Path, audits: &[RunAuditLine]) -> Result<(), PipelineError> {
    let mut out = String::new();
    for line in audits {
        out.push_str(&serde_json::to_string(line).expect("audit line serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(path, json).map_err(io_err(path))
}
