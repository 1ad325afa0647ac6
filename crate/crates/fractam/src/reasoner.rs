//! Two-step constrained generation per turn: first an explicit cross-modal
//! evidence chain whose citations must stay inside the provided context, then
//! the final structured prediction that has to follow it. Exactly two
//! generation calls per turn, and a citation violation blocks inference for
//! that turn — grounding is fail-closed by default.

use serde::{Deserialize, Serialize};

use crate::anchoring::{fact_text, RetrievalContext};
use crate::corpus::{DECEPTION_VOCABULARY, EMOTION_VOCABULARY, SUBJECTIVITY_VOCABULARY};
use crate::decoupler::FactSet;
use crate::gateway::{GatewayError, Generator, PromptPart};
use crate::types::{Modality, TurnRef};

/// One `(turn, modality)` citation inside an evidence step, rendered as
/// `s<session>#t<turn>/<m>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub turn: TurnRef,
    pub modality: Modality,
}

impl std::fmt::Display for Citation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.turn, self.modality)
    }
}

impl std::str::FromStr for Citation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (turn_part, tag) = s
            .rsplit_once('/')
            .ok_or_else(|| format!("citation `{s}` has no modality tag"))?;
        let modality = Modality::from_tag(tag)
            .ok_or_else(|| format!("citation `{s}` has unknown modality `{tag}`"))?;
        let turn: TurnRef = turn_part
            .parse()
            .map_err(|e| format!("citation `{s}`: {e}"))?;
        Ok(Citation { turn, modality })
    }
}

/// One claim with its supporting citations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceStep {
    pub claim: String,
    pub sources: Vec<Citation>,
}

/// The parsed and citation-validated evidence chain, with the verbatim
/// backend output preserved for the follow-up conditioning call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceChain {
    pub steps: Vec<EvidenceStep>,
    pub raw_text: String,
}

impl EvidenceChain {
    pub fn empty() -> Self {
        Self {
            steps: Vec::new(),
            raw_text: String::new(),
        }
    }
}

/// The structured dual-phase output for one turn: perception fields plus
/// reasoning fields, backed by the evidence chain it followed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub turn: TurnRef,
    pub emotion: String,
    pub emotion_intensity: u8,
    pub subjectivity: String,
    pub identity: String,
    pub identity_reasoning: String,
    pub lie: String,
    pub lie_reasoning: String,
    pub hidden_intent: String,
    pub evidence_chain: EvidenceChain,
}

/// Citation-validation strictness: strict errors out on an out-of-context
/// citation, lenient drops the offending step with a warning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChainValidation {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, thiserror::Error)]
pub enum ReasonError {
    #[error("generation for {turn} failed: {source}")]
    Backend { turn: TurnRef, source: GatewayError },
    #[error("unparseable output ({message}); raw text preserved:\n{raw}")]
    Unparseable { message: String, raw: String },
    #[error("evidence chain cites {citation}, which is outside the provided context")]
    ChainViolation { citation: TurnRef },
    #[error("evidence chain is empty although the retrieved context is not")]
    EmptyChain,
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("field `{0}` must be non-empty")]
    EmptyField(String),
    #[error("duplicate field `{0}`")]
    DuplicateField(String),
    #[error("unknown field `{0}` in prediction output")]
    UnknownField(String),
    #[error("field `{field}`: `{value}` is outside its vocabulary")]
    OutOfVocabulary { field: String, value: String },
    #[error("field `{field}`: `{value}` is outside the 1-5 range")]
    OutOfRange { field: String, value: String },
    #[error("prediction block is for {found}, expected {expected}")]
    TurnMismatch { expected: TurnRef, found: TurnRef },
}

/// The labeled current-turn block embedded in reasoning payloads.
pub fn current_turn_block(fact_set: &FactSet) -> String {
    format!("current turn: {}\n{}", fact_set.turn, fact_text(fact_set))
}

/// Serializes the retrieval context for reasoning payloads: one line per
/// anchored fact, `s<session>#t<turn>: <fact text>`.
pub fn serialize_context(context: &RetrievalContext) -> String {
    if context.anchored.is_empty() {
        return "retrieved context: (none)".to_string();
    }
    let mut out = String::from("retrieved context:");
    for scored in &context.anchored {
        out.push('\n');
        out.push_str(&format!(
            "{}: {}",
            scored.fact.turn,
            fact_text(&scored.fact)
        ));
    }
    out
}

/// Parses evidence-chain text: nonempty lines of
/// `step <n>: <claim> [cites: <c1>, <c2>, ...]` with sequential numbering
/// from 1. A step without a cites block has no sources. Empty input parses
/// to an empty chain.
pub fn parse_evidence_chain(raw: &str) -> Result<Vec<EvidenceStep>, ReasonError> {
    let mut steps = Vec::new();
    for line in raw.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let rest = line
            .strip_prefix("step ")
            .ok_or_else(|| ReasonError::Unparseable {
                message: format!("line `{line}` is not a step line"),
                raw: raw.to_string(),
            })?;
        let (number, body) = rest
            .split_once(':')
            .ok_or_else(|| ReasonError::Unparseable {
                message: format!("step line `{line}` has no `:`"),
                raw: raw.to_string(),
            })?;
        let number: usize = number
            .trim()
            .parse()
            .map_err(|_| ReasonError::Unparseable {
                message: format!("step number `{}` is not an integer", number.trim()),
                raw: raw.to_string(),
            })?;
        if number != steps.len() + 1 {
            return Err(ReasonError::Unparseable {
                message: format!(
                    "step {number} out of sequence (expected {})",
                    steps.len() + 1
                ),
                raw: raw.to_string(),
            });
        }
        let body = body.trim();
        let (claim, sources) = match body.rfind("[cites:") {
            Some(open) if body.ends_with(']') => {
                let claim = body[..open].trim_end().to_string();
                let cites = &body[open + "[cites:".len()..body.len() - 1];
                let mut sources = Vec::new();
                for token in cites.split(',') {
                    let token = token.trim();
                    if token.is_empty() {
                        continue;
                    }
                    let citation: Citation =
                        token
                            .parse()
                            .map_err(|e: String| ReasonError::Unparseable {
                                message: e,
                                raw: raw.to_string(),
                            })?;
                    sources.push(citation);
                }
                (claim, sources)
            }
            _ => (body.to_string(), Vec::new()),
        };
        if claim.is_empty() {
            return Err(ReasonError::Unparseable {
                message: format!("step {number} has an empty claim"),
                raw: raw.to_string(),
            });
        }
        steps.push(EvidenceStep { claim, sources });
    }
    Ok(steps)
}

/// Checks that every citation targets the query turn itself or a member of
/// the retrieved context. Strict mode fails on the first offender; lenient
/// mode drops offending steps with a warning.
pub fn validate_chain(
    steps: Vec<EvidenceStep>,
    context: &RetrievalContext,
    query_turn: &TurnRef,
    validation: ChainValidation,
) -> Result<Vec<EvidenceStep>, ReasonError> {
    let allowed: Vec<&TurnRef> = std::iter::once(query_turn).chain(context.turns()).collect();
    let mut kept = Vec::with_capacity(steps.len());
    for step in steps {
        match step.sources.iter().find(|c| !allowed.contains(&&c.turn)) {
            None => kept.push(step),
            Some(offender) => match validation {
                ChainValidation::Strict => {
                    return Err(ReasonError::ChainViolation {
                        citation: offender.turn.clone(),
                    })
                }
                ChainValidation::Lenient => {
                    log::warn!(
                        "dropping evidence step citing {} outside the context of {query_turn}",
                        offender.turn
                    );
                }
            },
        }
    }
    Ok(kept)
}

/// Chain stage: one backend call conditioned on the current fact set, the
/// retrieved context, and the alignment prompt; the output is parsed into
/// steps and citation-validated.
pub fn build_evidence_chain(
    fact_set: &FactSet,
    context: &RetrievalContext,
    backend: &dyn Generator,
    p_align: &str,
    validation: ChainValidation,
) -> Result<EvidenceChain, ReasonError> {
    let parts = [
        PromptPart::text(p_align),
        PromptPart::text(current_turn_block(fact_set)),
        PromptPart::text(serialize_context(context)),
    ];
    let raw = backend
        .generate(&parts)
        .map_err(|source| ReasonError::Backend {
            turn: fact_set.turn.clone(),
            source,
        })?;
    let steps = parse_evidence_chain(&raw)?;
    let steps = validate_chain(steps, context, &fact_set.turn, validation)?;
    if steps.is_empty() && !context.anchored.is_empty() {
        return Err(ReasonError::EmptyChain);
    }
    Ok(EvidenceChain {
        steps,
        raw_text: raw,
    })
}

/// Inference stage: one backend call whose payload carries, in order, the system
/// prompt, the chain's verbatim text, the current fact set, and the
/// retrieved context. Returns the raw prediction text.
pub fn infer(
    chain: &EvidenceChain,
    fact_set: &FactSet,
    context: &RetrievalContext,
    backend: &dyn Generator,
    p_sys: &str,
) -> Result<String, ReasonError> {
    let parts = [
        PromptPart::text(p_sys),
        PromptPart::text(chain.raw_text.clone()),
        PromptPart::text(current_turn_block(fact_set)),
        PromptPart::text(serialize_context(context)),
    ];
    backend
        .generate(&parts)
        .map_err(|source| ReasonError::Backend {
            turn: fact_set.turn.clone(),
            source,
        })
}

const PREDICTION_FIELDS: [&str; 9] = [
    "turn",
    "emotion",
    "emotion_intensity",
    "subjectivity",
    "identity",
    "identity_reasoning",
    "lie",
    "lie_reasoning",
    "hidden_intent",
];

/// Parses tagged-field prediction output: lines of `<field>: <value>`, one
/// field per line, plus optional `step <n>:` evidence lines. A `turn:` line
/// is optional but must match `turn` when present; everything else from the
/// nine-field block except `turn` is required.
pub fn parse_prediction(raw: &str, turn: &TurnRef) -> Result<PredictionRecord, ReasonError> {
    let mut fields: std::collections::BTreeMap<&str, String> = std::collections::BTreeMap::new();
    let mut step_lines: Vec<&str> = Vec::new();

    for line in raw.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with("step ") {
            step_lines.push(trimmed);
            continue;
        }
        let (name, value) = trimmed
            .split_once(':')
            .ok_or_else(|| ReasonError::Unparseable {
                message: format!("line `{trimmed}` is not `<field>: <value>`"),
                raw: raw.to_string(),
            })?;
        let name = name.trim();
        let field = PREDICTION_FIELDS
            .iter()
            .find(|f| **f == name)
            .ok_or_else(|| ReasonError::UnknownField(name.to_string()))?;
        if fields.insert(field, value.trim().to_string()).is_some() {
            return Err(ReasonError::DuplicateField(name.to_string()));
        }
    }

    if let Some(turn_value) = fields.get("turn") {
        let found: TurnRef = turn_value.parse().map_err(|_| ReasonError::Unparseable {
            message: format!("turn value `{turn_value}` is not a turn reference"),
            raw: raw.to_string(),
        })?;
        if found != *turn {
            return Err(ReasonError::TurnMismatch {
                expected: turn.clone(),
                found,
            });
        }
    }

    let required = |name: &str| -> Result<String, ReasonError> {
        let value = fields
            .get(name)
            .ok_or_else(|| ReasonError::MissingField(name.to_string()))?;
        if value.is_empty() {
            return Err(ReasonError::EmptyField(name.to_string()));
        }
        Ok(value.clone())
    };

    let emotion = required("emotion")?;
    if !EMOTION_VOCABULARY.contains(&emotion.as_str()) {
        return Err(ReasonError::OutOfVocabulary {
            field: "emotion".to_string(),
            value: emotion,
        });
    }
    let intensity_text = required("emotion_intensity")?;
    let emotion_intensity: u8 = intensity_text
        .parse()
        .ok()
        .filter(|v| (1..=5).contains(v))
        .ok_or(ReasonError::OutOfRange {
            field: "emotion_intensity".to_string(),
            value: intensity_text,
        })?;
    let subjectivity = required("subjectivity")?;
    if !SUBJECTIVITY_VOCABULARY.contains(&subjectivity.as_str()) {
        return Err(ReasonError::OutOfVocabulary {
            field: "subjectivity".to_string(),
            value: subjectivity,
        });
    }
    let lie = required("lie")?;
    if !DECEPTION_VOCABULARY.contains(&lie.as_str()) {
        return Err(ReasonError::OutOfVocabulary {
            field: "lie".to_string(),
            value: lie,
        });
    }

    let steps = if step_lines.is_empty() {
        Vec::new()
    } else {
        parse_evidence_chain(&step_lines.join("\n"))?
    };
    let raw_steps = step_lines.join("\n");

    Ok(PredictionRecord {
        turn: turn.clone(),
        emotion,
        emotion_intensity,
        subjectivity,
        identity: required("identity")?,
        identity_reasoning: required("identity_reasoning")?,
        lie,
        lie_reasoning: required("lie_reasoning")?,
        hidden_intent: required("hidden_intent")?,
        evidence_chain: EvidenceChain {
            steps,
            raw_text: raw_steps,
        },
    })
}

fn render_step(index: usize, step: &EvidenceStep) -> String {
    if step.sources.is_empty() {
        format!("step {}: {}", index + 1, step.claim)
    } else {
        let cites = step
            .sources
            .iter()
            .map(Citation::to_string)
            .collect::<Vec<_>>()
            .join(", ");
        format!("step {}: {} [cites: {}]", index + 1, step.claim, cites)
    }
}

/// Bit-exact prediction block: the nine `field: value` lines in fixed order,
/// followed by the evidence steps as numbered lines.
pub fn serialize_prediction(record: &PredictionRecord) -> String {
    let mut out = format!(
        "turn: {}\n\
         emotion: {}\n\
         emotion_intensity: {}\n\
         subjectivity: {}\n\
         identity: {}\n\
         identity_reasoning: {}\n\
         lie: {}\n\
         lie_reasoning: {}\n\
         hidden_intent: {}\n",
        record.turn,
        record.emotion,
        record.emotion_intensity,
        record.subjectivity,
        record.identity,
        record.identity_reasoning,
        record.lie,
        record.lie_reasoning,
        record.hidden_intent,
    );
    for (index, step) in record.evidence_chain.steps.iter().enumerate() {
        out.push_str(&render_step(index, step));
        out.push('\n');
    }
    out
}

/// Parses a predictions file: blank-line-separated blocks, each with a
/// mandatory `turn:` line identifying it.
pub fn parse_prediction_file(text: &str) -> Result<Vec<PredictionRecord>, ReasonError> {
    let mut records = Vec::new();
    for block in text.split("\n\n") {
        if block.trim().is_empty() {
            continue;
        }
        let turn_line = block
            .lines()
            .find_map(|l| l.trim().strip_prefix("turn:"))
            .ok_or_else(|| ReasonError::MissingField("turn".to_string()))?;
        let turn: TurnRef = turn_line
            .trim()
            .parse()
            .map_err(|_| ReasonError::Unparseable {
                message: format!("turn value `{}` is not a turn reference", turn_line.trim()),
                raw: block.to_string(),
            })?;
        records.push(parse_prediction(block, &turn)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchoring::ScoredFact;
    use crate::gateway::testkit::{ScriptedGenerator, SpyGenerator};
    use std::sync::Arc;

    fn fs(turn: u32) -> FactSet {
        FactSet::text_only(TurnRef::new("g1", turn), "p1", format!("statement {turn}"))
    }

    fn ctx_with(turns: &[u32], query: u32) -> RetrievalContext {
        RetrievalContext {
            query_turn: TurnRef::new("g1", query),
            anchored: turns
                .iter()
                .map(|t| ScoredFact {
                    fact: fs(*t),
                    rank_lex: Some(1),
                    rank_sem: Some(1),
                    omega: 0.03,
                    s_ce: Some(0.9),
                })
                .collect(),
        }
    }

    fn chain_reply(text: &str) -> ScriptedGenerator {
        ScriptedGenerator::fail_times_then(0, text)
    }

    #[test]
    fn chain_parses_two_steps_with_valid_citations() {
        let context = ctx_with(&[2, 5], 6);
        let backend = chain_reply(
            "step 1: p1 earlier claimed the seer role [cites: sg1#t2/t]\n\
             step 2: gaze aversion at the vote [cites: sg1#t5/v]",
        );
        let chain = build_evidence_chain(
            &fs(6),
            &context,
            &backend,
            "p_align",
            ChainValidation::Strict,
        )
        .unwrap();
        assert_eq!(chain.steps.len(), 2);
        assert_eq!(chain.steps[0].sources[0].turn, TurnRef::new("g1", 2));
        assert_eq!(chain.steps[1].sources[0].modality, Modality::Visual);
    }

    #[test]
    fn chain_citation_outside_context_is_a_violation_naming_it() {
        let context = ctx_with(&[2], 6);
        let backend = chain_reply("step 1: invented [cites: sg1#t99/t]");
        let err = build_evidence_chain(
            &fs(6),
            &context,
            &backend,
            "p_align",
            ChainValidation::Strict,
        )
        .unwrap_err();
        match err {
            ReasonError::ChainViolation { citation } => {
                assert_eq!(citation, TurnRef::new("g1", 99));
            }
            other => panic!("expected ChainViolation, got {other}"),
        }
    }

    #[test]
    fn chain_lenient_drops_offending_step() {
        let context = ctx_with(&[2], 6);
        let backend =
            chain_reply("step 1: fine [cites: sg1#t2/t]\nstep 2: invented [cites: sg1#t99/t]");
        let chain = build_evidence_chain(
            &fs(6),
            &context,
            &backend,
            "p_align",
            ChainValidation::Lenient,
        )
        .unwrap();
        assert_eq!(chain.steps.len(), 1);
    }

    #[test]
    fn chain_may_be_empty_when_context_is_empty() {
        let context = RetrievalContext::empty(TurnRef::new("g1", 1));
        let backend = chain_reply("");
        let chain = build_evidence_chain(
            &fs(1),
            &context,
            &backend,
            "p_align",
            ChainValidation::Strict,
        )
        .unwrap();
        assert!(chain.steps.is_empty());
    }

    #[test]
    fn chain_must_be_nonempty_when_context_is_not() {
        let context = ctx_with(&[2], 6);
        let backend = chain_reply("");
        assert!(matches!(
            build_evidence_chain(
                &fs(6),
                &context,
                &backend,
                "p_align",
                ChainValidation::Strict
            ),
            Err(ReasonError::EmptyChain)
        ));
    }

    #[test]
    fn chain_may_cite_the_query_turn_itself() {
        let context = ctx_with(&[2], 6);
        let backend = chain_reply("step 1: the current statement itself [cites: sg1#t6/t]");
        let chain = build_evidence_chain(
            &fs(6),
            &context,
            &backend,
            "p_align",
            ChainValidation::Strict,
        )
        .unwrap();
        assert_eq!(chain.steps.len(), 1);
    }

    #[test]
    fn chain_unparseable_output_preserves_raw() {
        let context = ctx_with(&[2], 6);
        let backend = chain_reply("free prose with no steps");
        match build_evidence_chain(
            &fs(6),
            &context,
            &backend,
            "p_align",
            ChainValidation::Strict,
        ) {
            Err(ReasonError::Unparseable { raw, .. }) => {
                assert_eq!(raw, "free prose with no steps");
            }
            other => panic!("expected Unparseable, got {other:?}"),
        }
    }

    #[test]
    fn infer_payload_contains_chain_verbatim_and_sys_prompt_first() {
        let context = ctx_with(&[2], 6);
        let chain = EvidenceChain {
            steps: vec![EvidenceStep {
                claim: "x".to_string(),
                sources: vec![],
            }],
            raw_text: "step 1: x".to_string(),
        };
        let spy = SpyGenerator::new(Arc::new(chain_reply("turn: sg1#t6")));
        let _ = infer(&chain, &fs(6), &context, &spy, "THE SYS PROMPT");
        let calls = spy.calls();
        assert_eq!(calls.len(), 1);
        let payload = &calls[0];
        assert_eq!(payload[0], PromptPart::text("THE SYS PROMPT"));
        assert!(payload.iter().any(|p| p.contains("step 1: x")));
        assert!(payload.iter().any(|p| p.contains("current turn: sg1#t6")));
        assert!(payload.iter().any(|p| p.contains("retrieved context:")));
    }

    #[test]
    fn infer_is_deterministic_under_mocks() {
        let context = ctx_with(&[2], 6);
        let chain = EvidenceChain::empty();
        let backend = crate::gateway::testkit::MockReasoner::new(
            crate::decoupler::PromptSet::default(),
            vec!["seer".to_string()],
        );
        let p_sys = crate::decoupler::PromptSet::default().p_sys;
        let a = infer(&chain, &fs(6), &context, &backend, &p_sys).unwrap();
        let b = infer(&chain, &fs(6), &context, &backend, &p_sys).unwrap();
        assert_eq!(a, b);
    }

    fn well_formed_block() -> String {
        "turn: sg1#t4\n\
         emotion: Calm\n\
         emotion_intensity: 3\n\
         subjectivity: Subj\n\
         identity: seer\n\
         identity_reasoning: consistent check claims\n\
         lie: Truth\n\
         lie_reasoning: no contradiction found\n\
         hidden_intent: build trust before the vote\n"
            .to_string()
    }

    #[test]
    fn parse_prediction_happy_path() {
        let turn = TurnRef::new("g1", 4);
        let record = parse_prediction(&well_formed_block(), &turn).unwrap();
        assert_eq!(record.emotion, "Calm");
        assert_eq!(record.emotion_intensity, 3);
        assert_eq!(record.identity, "seer");
        assert_eq!(record.lie, "Truth");
        assert!(record.evidence_chain.steps.is_empty());
    }

    #[test]
    fn parse_prediction_range_error() {
        let turn = TurnRef::new("g1", 4);
        let block = well_formed_block().replace("emotion_intensity: 3", "emotion_intensity: 7");
        assert!(matches!(
            parse_prediction(&block, &turn).unwrap_err(),
            ReasonError::OutOfRange { field, .. } if field == "emotion_intensity"
        ));
    }

    #[test]
    fn parse_prediction_missing_field_named() {
        let turn = TurnRef::new("g1", 4);
        let block: String = well_formed_block()
            .lines()
            .filter(|l| !l.starts_with("lie_reasoning:"))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(matches!(
            parse_prediction(&block, &turn).unwrap_err(),
            ReasonError::MissingField(f) if f == "lie_reasoning"
        ));
    }

    #[test]
    fn parse_prediction_duplicate_field() {
        let turn = TurnRef::new("g1", 4);
        let block = format!("{}emotion: Joy\n", well_formed_block());
        assert!(matches!(
            parse_prediction(&block, &turn).unwrap_err(),
            ReasonError::DuplicateField(f) if f == "emotion"
        ));
    }

    #[test]
    fn parse_prediction_turn_mismatch() {
        let turn = TurnRef::new("g1", 5);
        assert!(matches!(
            parse_prediction(&well_formed_block(), &turn).unwrap_err(),
            ReasonError::TurnMismatch { .. }
        ));
    }

    #[test]
    fn parse_prediction_unknown_field() {
        let turn = TurnRef::new("g1", 4);
        let block = format!("{}confidence: 3\n", well_formed_block());
        assert!(matches!(
            parse_prediction(&block, &turn).unwrap_err(),
            ReasonError::UnknownField(f) if f == "confidence"
        ));
    }

    #[test]
    fn prediction_with_steps_round_trips() {
        let turn = TurnRef::new("g1", 4);
        let block = format!(
            "{}step 1: earlier claim [cites: sg1#t2/t, sg1#t3/v]\nstep 2: no cites claim\n",
            well_formed_block()
        );
        let record = parse_prediction(&block, &turn).unwrap();
        assert_eq!(record.evidence_chain.steps.len(), 2);
        assert_eq!(record.evidence_chain.steps[0].sources.len(), 2);
        let rendered = serialize_prediction(&record);
        let reparsed = parse_prediction(&rendered, &turn).unwrap();
        assert_eq!(reparsed, record);
    }

    #[test]
    fn prediction_file_round_trips_multiple_blocks() {
        let a = parse_prediction(&well_formed_block(), &TurnRef::new("g1", 4)).unwrap();
        let mut b = a.clone();
        b.turn = TurnRef::new("g2", 1);
        b.emotion = "Joy".to_string();
        let text = format!("{}\n{}", serialize_prediction(&a), serialize_prediction(&b));
        let parsed = parse_prediction_file(&text).unwrap();
        assert_eq!(parsed, vec![a, b]);
    }
}
