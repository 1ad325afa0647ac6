//! Dual-phase evaluation: state-recognition metrics (tiered role scoring,
//! binary deception accuracy), perception metrics with linear distance-decay
//! on the 1-5 intensity scale, judge-scored reasoning metrics, and the hard
//! truncation gate that caps hidden-intent scores when the underlying role or
//! lie judgment is wrong.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{RoleCampMap, Session, UtteranceRecord};
use crate::gateway::{GatewayError, Judge};
use crate::parallel::parallel_map;
use crate::reasoner::PredictionRecord;
use crate::types::TurnRef;

/// The three judge-scored reasoning dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningTask {
    Identity,
    Lie,
    HiddenIntent,
}

impl fmt::Display for ReasoningTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReasoningTask::Identity => "identity",
            ReasoningTask::Lie => "lie",
            ReasoningTask::HiddenIntent => "hidden_intent",
        })
    }
}

/// Fact-grounding and logical-consistency scores from a judge, both in
/// [0, 1], with the judge's rationale retained for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub fg: f64,
    pub lc: f64,
    pub rationale: String,
}

/// Weights and thresholds for the reasoning metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Weight on fact-grounded responsiveness.
    pub alpha: f64,
    /// Weight on logical consistency; alpha + beta = 1.
    pub beta: f64,
    /// Hidden-intent truncation threshold in [0, 1].
    pub tau: f64,
    /// Score in (0, 1) for a wrong role in the right camp.
    pub partial_role_score: f64,
    pub judge_parallelism: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            tau: 0.2,
            partial_role_score: 0.5,
            judge_parallelism: 4,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err("alpha and beta must be nonnegative".to_string());
        }
        if (self.alpha + self.beta - 1.0).abs() > 1e-9 {
            return Err(format!(
                "alpha + beta must equal 1 (got {})",
                self.alpha + self.beta
            ));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err("tau must lie in [0, 1]".to_string());
        }
        if !(0.0..1.0).contains(&self.partial_role_score) || self.partial_role_score == 0.0 {
            return Err("partial_role_score must lie in (0, 1)".to_string());
        }
        Ok(())
    }
}

/// Per-turn gold values mirroring the gradable prediction fields, with key
/// facts resolved to the anchored turns' transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub turn: TurnRef,
    pub emotion: String,
    pub emotion_intensity: u8,
    pub subjectivity: String,
    pub role: String,
    pub camp: String,
    pub lie: String,
    pub key_facts: Vec<String>,
    pub gold_identity_reasoning: String,
    pub gold_lie_reasoning: String,
    pub gold_hidden_intent: String,
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("gold/prediction length mismatch: {golds} vs {preds}")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("cannot score an empty turn set")]
    EmptyInput,
    #[error("intensity {value} for {side} is outside the 1-5 scale")]
    IntensityOutOfRange { side: &'static str, value: u8 },
    #[error("gold role `{0}` has no camp assignment")]
    UnknownGoldRole(String),
    #[error("key-event anchor {anchor} of {turn} does not resolve to a turn")]
    UnresolvedAnchor { turn: TurnRef, anchor: TurnRef },
    #[error("judge call for {turn} failed: {source}")]
    Judge { turn: TurnRef, source: GatewayError },
    #[error("invalid metric config: {0}")]
    Config(String),
}

/// Builds the gold record for one utterance, resolving key-event anchors to
/// the referenced turns' transcripts within the same session.
pub fn gold_record(
    record: &UtteranceRecord,
    session: &Session,
    role_camp_map: &RoleCampMap,
) -> Result<GoldRecord, MetricsError> {
    let camp = role_camp_map
        .get(&record.role)
        .ok_or_else(|| MetricsError::UnknownGoldRole(record.role.clone()))?
        .clone();
    let mut key_facts = Vec::with_capacity(record.key_events.len());
    for anchor in &record.key_events {
        let target = session
            .turns
            .iter()
            .find(|t| t.turn_index == anchor.turn_index)
            .ok_or_else(|| MetricsError::UnresolvedAnchor {
                turn: record.turn(),
                anchor: anchor.clone(),
            })?;
        key_facts.push(target.transcript.clone());
    }
    Ok(GoldRecord {
        turn: record.turn(),
        emotion: record.emotion.clone(),
        emotion_intensity: record.emotion_intensity,
        subjectivity: record.subjectivity.clone(),
        role: record.role.clone(),
        camp,
        lie: record.deception.clone(),
        key_facts,
        gold_identity_reasoning: record.gold_identity_reasoning.clone(),
        gold_lie_reasoning: record.gold_lie_reasoning.clone(),
        gold_hidden_intent: record.gold_hidden_intent.clone(),
    })
}

/// Tiered role scoring: 1.0 for the exact role, the partial score for a
/// wrong role in the right camp, 0 otherwise. A predicted role absent from
/// the role map scores 0 with a warning — an unknown role cannot share a
/// camp.
pub fn role_score(
    gold_role: &str,
    gold_camp: &str,
    pred_role: &str,
    role_camp_map: &RoleCampMap,
    cfg: &MetricConfig,
) -> f64 {
    if pred_role == gold_role {
        return 1.0;
    }
    match role_camp_map.get(pred_role) {
        Some(pred_camp) if pred_camp == gold_camp => cfg.partial_role_score,
        Some(_) => 0.0,
        None => {
            log::warn!("predicted role `{pred_role}` is not in the role map; scoring 0");
            0.0
        }
    }
}

fn mean(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Percentage of turns whose lie label matches exactly.
pub fn deception_binary_accuracy(golds: &[&str], preds: &[&str]) -> Result<f64, MetricsError> {
    if golds.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    let indicators: Vec<f64> = golds
        .iter()
        .zip(preds)
        .map(|(g, p)| if g == p { 1.0 } else { 0.0 })
        .collect();
    Ok(mean(&indicators)? * 100.0)
}

/// Exact-label match rate × 100; shared by emotion state and subjectivity
/// accuracy.
pub fn exact_match_accuracy(golds: &[&str], preds: &[&str]) -> Result<f64, MetricsError> {
    deception_binary_accuracy(golds, preds)
}

/// Per-turn distance-decay intensity score: linear over the 4-step maximum
/// gap on the 1-5 scale, `max(0, 1 - |gold - pred| / 4)`.
pub fn intensity_score(gold: u8, pred: u8) -> Result<f64, MetricsError> {
    for (side, value) in [("gold", gold), ("prediction", pred)] {
        if !(1..=5).contains(&value) {
            return Err(MetricsError::IntensityOutOfRange { side, value });
        }
    }
    let gap = (i16::from(gold) - i16::from(pred)).abs() as f64;
    Ok((1.0 - gap / 4.0).max(0.0))
}

/// Mean distance-decay intensity score × 100.
pub fn emotion_intensity_score(golds: &[u8], preds: &[u8]) -> Result<f64, MetricsError> {
    if golds.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    let scores = golds
        .iter()
        .zip(preds)
        .map(|(g, p)| intensity_score(*g, *p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mean(&scores)? * 100.0)
}

/// One judge call scoring predicted reasoning text:
/// `alpha * fg + beta * lc`, with out-of-range judge scores clamped (and
/// warned about) before weighting. Returns the score together with the
/// judge's raw scores and rationale for audit.
pub fn reasoning_score(
    task: ReasoningTask,
    key_facts: &[String],
    gold_reasoning: &str,
    pred_text: &str,
    judge: &dyn Judge,
    cfg: &MetricConfig,
    turn: &TurnRef,
) -> Result<(f64, JudgeScores), MetricsError> {
    let mut scores = judge
        .judge(task, key_facts, gold_reasoning, pred_text)
        .map_err(|source| MetricsError::Judge {
            turn: turn.clone(),
            source,
        })?;
    for (name, value) in [("fg", &mut scores.fg), ("lc", &mut scores.lc)] {
        if !(0.0..=1.0).contains(value) {
            log::warn!("judge returned {name} = {value} for {turn}; clamping to [0, 1]");
            *value = value.clamp(0.0, 1.0);
        }
    }
    Ok((cfg.alpha * scores.fg + cfg.beta * scores.lc, scores))
}

/// The hard truncation gate: when the role judgment scored exactly 0 or the
/// lie judgment is wrong, the hidden-intent score is capped at tau. Partial
/// (camp-only) role credit does not fire the gate.
pub fn truncate_his(his: f64, role_score: f64, lie_correct: bool, cfg: &MetricConfig) -> f64 {
    if role_score == 0.0 || !lie_correct {
        his.min(cfg.tau)
    } else {
        his
    }
}

/// All per-turn scores plus judge audit material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnScores {
    pub turn: TurnRef,
    /// Emotion state match, 0 or 1.
    pub esa: f64,
    /// Distance-decay intensity score in [0, 1].
    pub eis: f64,
    /// Subjectivity match, 0 or 1.
    pub sa: f64,
    /// Tiered role score in {0, partial, 1}.
    pub ija: f64,
    /// Lie indicator, 0 or 1.
    pub lda: f64,
    /// Identity reasoning score in [0, 1].
    pub irs: f64,
    /// Lie reasoning score in [0, 1].
    pub lrs: f64,
    /// Hidden-intent score after the truncation gate.
    pub his: f64,
    /// Hidden-intent score before the gate.
    pub his_raw: f64,
    pub gate_fired: bool,
    pub judge_identity: JudgeScores,
    pub judge_lie: JudgeScores,
    pub judge_hidden_intent: JudgeScores,
}

/// Scores one prediction against its gold record, including the three judge
/// calls and the truncation gate.
pub fn evaluate_turn(
    gold: &GoldRecord,
    pred: &PredictionRecord,
    role_camp_map: &RoleCampMap,
    cfg: &MetricConfig,
    judge: &dyn Judge,
) -> Result<TurnScores, MetricsError> {
    let esa = if gold.emotion == pred.emotion {
        1.0
    } else {
        0.0
    };
    let eis = intensity_score(gold.emotion_intensity, pred.emotion_intensity)?;
    let sa = if gold.subjectivity == pred.subjectivity {
        1.0
    } else {
        0.0
    };
    let ija = role_score(&gold.role, &gold.camp, &pred.identity, role_camp_map, cfg);
    let lda = if gold.lie == pred.lie { 1.0 } else { 0.0 };

    let (irs, judge_identity) = reasoning_score(
        ReasoningTask::Identity,
        &gold.key_facts,
        &gold.gold_identity_reasoning,
        &pred.identity_reasoning,
        judge,
        cfg,
        &gold.turn,
    )?;
    let (lrs, judge_lie) = reasoning_score(
        ReasoningTask::Lie,
        &gold.key_facts,
        &gold.gold_lie_reasoning,
        &pred.lie_reasoning,
        judge,
        cfg,
        &gold.turn,
    )?;
    let (his_raw, judge_hidden_intent) = reasoning_score(
        ReasoningTask::HiddenIntent,
        &gold.key_facts,
        &gold.gold_hidden_intent,
        &pred.hidden_intent,
        judge,
        cfg,
        &gold.turn,
    )?;
    let gate_fired = ija == 0.0 || lda == 0.0;
    let his = truncate_his(his_raw, ija, lda == 1.0, cfg);

    Ok(TurnScores {
        turn: gold.turn.clone(),
        esa,
        eis,
        sa,
        ija,
        lda,
        irs,
        lrs,
        his,
        his_raw,
        gate_fired,
        judge_identity,
        judge_lie,
        judge_hidden_intent,
    })
}

/// Scores many turns, running judge calls concurrently (bounded) while
/// keeping deterministic output order.
pub fn evaluate_turns(
    pairs: Vec<(GoldRecord, PredictionRecord)>,
    role_camp_map: &RoleCampMap,
    cfg: &MetricConfig,
    judge: &dyn Judge,
) -> Result<Vec<TurnScores>, MetricsError> {
    cfg.validate().map_err(MetricsError::Config)?;
    let results = parallel_map(pairs, cfg.judge_parallelism, |(gold, pred)| {
        evaluate_turn(&gold, &pred, role_camp_map, cfg, judge)
    });
    results.into_iter().collect()
}

/// The eight report columns, each a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportColumns {
    pub esa: f64,
    pub eis: f64,
    pub sa: f64,
    pub ija: f64,
    pub irs: f64,
    pub lda: f64,
    pub lrs: f64,
    pub his: f64,
}

impl ReportColumns {
    pub fn as_array(&self) -> [f64; 8] {
        [
            self.esa, self.eis, self.sa, self.ija, self.irs, self.lda, self.lrs, self.his,
        ]
    }
}

/// Column headers in report order.
pub const REPORT_COLUMNS: [&str; 8] = ["ESA", "EIS", "SA", "IJA", "IRS", "LDA", "LRS", "HIS"];

/// One model's evaluation: aggregate columns plus the per-turn detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model_id: String,
    pub columns: ReportColumns,
    pub turns: Vec<TurnScores>,
}

/// Aggregates per-turn scores into report columns: each column is the
/// arithmetic mean of its per-turn scores × 100.
pub fn aggregate_report(
    mut turns: Vec<TurnScores>,
    model_id: impl Into<String>,
) -> Result<EvaluationReport, MetricsError> {
    if turns.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    turns.sort_by(|a, b| a.turn.cmp(&b.turn));
    let col = |f: fn(&TurnScores) -> f64| -> f64 {
        turns.iter().map(f).sum::<f64>() / turns.len() as f64 * 100.0
    };
    Ok(EvaluationReport {
        model_id: model_id.into(),
        columns: ReportColumns {
            esa: col(|t| t.esa),
            eis: col(|t| t.eis),
            sa: col(|t| t.sa),
            ija: col(|t| t.ija),
            irs: col(|t| t.irs),
            lda: col(|t| t.lda),
            lrs: col(|t| t.lrs),
            his: col(|t| t.his),
        },
        turns,
    })
}
