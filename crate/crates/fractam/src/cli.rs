//! Command implementations behind the `fractam` binary: ingest, run,
//! evaluate, report. All artifacts land under the output directory together
//! with a manifest recording content digests, so every number is traceable
//! to its inputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig};
use crate::corpus::{
    load_corpus, save_corpus, tally, CorpusError, CorpusTally, SessionCorpus, Strictness,
};
use crate::metrics::{
    aggregate_report, evaluate_turns, gold_record, EvaluationReport, MetricsError, TurnScores,
};
use crate::pipeline::{
    build_backends, build_judge, run_corpus, write_manifest, write_predictions, write_run_audit,
    PipelineError,
};
use crate::reasoner::{parse_prediction_file, PredictionRecord, ReasonError};
use crate::report::{merge_report_files, render_table, ReportError, ReportRow};
use crate::types::TurnRef;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Predictions(#[from] ReasonError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("prediction for {0} has no matching gold turn")]
    UnmatchedPrediction(TurnRef),
    #[error("gold turn {0} has no prediction")]
    MissingPrediction(TurnRef),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn strictness(cfg: &RunConfig, lenient_flag: bool) -> Strictness {
    if cfg.lenient || lenient_flag {
        Strictness::Lenient
    } else {
        Strictness::Strict
    }
}

fn require_corpus_path(cfg: &RunConfig, flag: Option<&Path>) -> Result<PathBuf, CliError> {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.corpus_path.clone())
        .ok_or_else(|| CliError::Invalid("no corpus path: pass --corpus or set corpus_path".into()))
}

fn require_out_dir(cfg: &RunConfig, flag: Option<&Path>) -> Result<PathBuf, CliError> {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| {
            CliError::Invalid("no output directory: pass --out or set output_dir".into())
        })
}

/// Validates and normalizes a corpus, returning its tally. With an output
/// directory, writes the normalized corpus and the tally file there.
pub fn cmd_ingest(
    cfg: &RunConfig,
    corpus_flag: Option<&Path>,
    out_flag: Option<&Path>,
    lenient_flag: bool,
) -> Result<CorpusTally, CliError> {
    let corpus_path = require_corpus_path(cfg, corpus_flag)?;
    let corpus = load_corpus(
        &corpus_path,
        cfg.roles.clone(),
        strictness(cfg, lenient_flag),
    )?;
    let counts = tally(&corpus);
    if let Some(out_dir) = out_flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
    {
        fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
        save_corpus(&corpus, &out_dir.join("normalized.jsonl"))?;
        let tally_path = out_dir.join("tally.txt");
        fs::write(&tally_path, format!("{counts}\n")).map_err(io_err(&tally_path))?;
    }
    Ok(counts)
}

/// Output of a run: where the artifacts landed plus headline counts.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub predictions: usize,
    pub sessions: usize,
}

/// Runs the full pipeline over the corpus and writes predictions, the run
/// audit, and the manifest under the output directory.
pub fn cmd_run(
    cfg: &RunConfig,
    corpus_flag: Option<&Path>,
    out_flag: Option<&Path>,
    resume: bool,
) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let corpus_path = require_corpus_path(cfg, corpus_flag)?;
    let out_dir = require_out_dir(cfg, out_flag)?;
    let corpus = load_corpus(&corpus_path, cfg.roles.clone(), strictness(cfg, false))?;
    let prompts = cfg.load_prompts()?;
    let backends = build_backends(cfg, &prompts)?;
    let output = run_corpus(&corpus, cfg, &prompts, &backends, &out_dir, resume)?;
    write_predictions(&out_dir.join("predictions.txt"), &output.predictions)?;
    write_run_audit(&out_dir.join("run_audit.jsonl"), &output.audits)?;
    write_manifest(&out_dir.join("manifest.json"), &output.manifest)?;
    Ok(RunSummary {
        out_dir,
        predictions: output.predictions.len(),
        sessions: corpus.sessions.len(),
    })
}

/// One evaluation-audit line: the corpus identity fields extended with every
/// per-turn score and the judge rationales.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalAuditLine {
    pub session_id: String,
    pub turn_index: u32,
    pub esa: f64,
    pub eis: f64,
    pub sa: f64,
    pub ija: f64,
    pub lda: f64,
    pub irs: f64,
    pub lrs: f64,
    pub his: f64,
    pub his_raw: f64,
    pub gate_fired: bool,
    pub judge_identity_rationale: String,
    pub judge_lie_rationale: String,
    pub judge_hidden_intent_rationale: String,
}

impl From<&TurnScores> for EvalAuditLine {
    fn from(t: &TurnScores) -> Self {
        Self {
            session_id: t.turn.session_id.clone(),
            turn_index: t.turn.turn_index,
            esa: t.esa,
            eis: t.eis,
            sa: t.sa,
            ija: t.ija,
            lda: t.lda,
            irs: t.irs,
            lrs: t.lrs,
            his: t.his,
            his_raw: t.his_raw,
            gate_fired: t.gate_fired,
            judge_identity_rationale: t.judge_identity.rationale.clone(),
            judge_lie_rationale: t.judge_lie.rationale.clone(),
            judge_hidden_intent_rationale: t.judge_hidden_intent.rationale.clone(),
        }
    }
}

/// Pairs predictions with gold turns. Evaluation iterates turns in canonical
/// order, so a shuffled prediction file yields an identical report. In
/// strict mode every gold turn must have a prediction; lenient mode skips
/// missing ones with a warning.
pub fn pair_with_gold(
    corpus: &SessionCorpus,
    predictions: Vec<PredictionRecord>,
    lenient: bool,
) -> Result<Vec<(crate::metrics::GoldRecord, PredictionRecord)>, CliError> {
    let mut by_turn: BTreeMap<TurnRef, PredictionRecord> = BTreeMap::new();
    for prediction in predictions {
        by_turn.insert(prediction.turn.clone(), prediction);
    }
    let mut pairs = Vec::new();
    let mut sessions: Vec<_> = corpus.sessions.iter().collect();
    sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    for session in sessions {
        for record in &session.turns {
            let turn = record.turn();
            match by_turn.remove(&turn) {
                Some(prediction) => {
                    let gold = gold_record(record, session, &corpus.role_camp_map)?;
                    pairs.push((gold, prediction));
                }
                None if lenient => log::warn!("no prediction for {turn}; skipping"),
                None => return Err(CliError::MissingPrediction(turn)),
            }
        }
    }
    if let Some(orphan) = by_turn.into_keys().next() {
        return Err(CliError::UnmatchedPrediction(orphan));
    }
    Ok(pairs)
}

/// Scores a predictions file against the gold corpus and writes the report
/// table plus the per-turn evaluation audit.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    predictions_path: &Path,
    corpus_flag: Option<&Path>,
    out_flag: Option<&Path>,
    model_id: Option<&str>,
) -> Result<EvaluationReport, CliError> {
    cfg.validate()?;
    let corpus_path = require_corpus_path(cfg, corpus_flag)?;
    let out_dir = require_out_dir(cfg, out_flag)?;
    let corpus = load_corpus(&corpus_path, cfg.roles.clone(), strictness(cfg, false))?;
    let text = fs::read_to_string(predictions_path).map_err(io_err(predictions_path))?;
    let predictions = parse_prediction_file(&text)?;
    let pairs = pair_with_gold(&corpus, predictions, cfg.lenient)?;
    let judge = build_judge(cfg)?;
    let turns = evaluate_turns(
        pairs,
        &corpus.role_camp_map,
        &cfg.metrics.to_config(),
        &judge,
    )?;
    let model = model_id
        .map(str::to_string)
        .unwrap_or_else(|| cfg.model_id());
    let report = aggregate_report(turns, model)?;

    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let table = render_table(&[ReportRow::from(&report)]);
    let report_path = out_dir.join("report.tsv");
    fs::write(&report_path, table).map_err(io_err(&report_path))?;
    let mut audit = String::new();
    for turn in &report.turns {
        audit.push_str(
            &serde_json::to_string(&EvalAuditLine::from(turn)).expect("audit serializes"),
        );
        audit.push('\n');
    }
    let audit_path = out_dir.join("eval_audit.jsonl");
    fs::write(&audit_path, audit).map_err(io_err(&audit_path))?;
    Ok(report)
}

/// Merges per-model report files into one comparison table; returns the
/// rendered table and optionally writes it.
pub fn cmd_report(inputs: &[PathBuf], out: Option<&Path>) -> Result<String, CliError> {
    let rows = merge_report_files(inputs)?;
    let table = render_table(&rows);
    if let Some(path) = out {
        fs::write(path, &table).map_err(io_err(path))?;
    }
    Ok(table)
}
