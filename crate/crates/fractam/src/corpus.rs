//! MISID-format session corpus: the line format, record validation, loading,
//! saving, and label tallies.
//!
//! The corpus is UTF-8, one record per line, each line a flat JSON object.
//! Field order within a line is irrelevant on load; [`save_corpus`] always
//! emits the canonical field order, so save ∘ load is byte-stable on files it
//! produced. Unknown fields are rejected in strict mode and warned about in
//! lenient mode.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::types::TurnRef;

/// Closed emotion vocabulary.
pub const EMOTION_VOCABULARY: [&str; 7] = [
    "Calm", "Disgust", "Joy", "Anger", "Surprise", "Sadness", "Fear",
];

/// Closed subjectivity vocabulary.
pub const SUBJECTIVITY_VOCABULARY: [&str; 2] = ["Subj", "Obj"];

/// Closed deception vocabulary.
pub const DECEPTION_VOCABULARY: [&str; 2] = ["Truth", "Lie"];

/// Role label → camp label. Supplied in a sidecar config; the role vocabulary
/// itself stays open.
pub type RoleCampMap = BTreeMap<String, String>;

/// One annotated multimodal turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub session_id: String,
    pub turn_index: u32,
    pub speaker_id: String,
    pub transcript: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual_clip: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_clip: Option<String>,
    pub emotion: String,
    pub emotion_intensity: u8,
    pub subjectivity: String,
    pub subjectivity_score: u8,
    pub confidence: u8,
    pub modality_inconsistency: u8,
    pub deception: String,
    pub role: String,
    #[serde(default)]
    pub key_events: Vec<TurnRef>,
    pub gold_identity_reasoning: String,
    pub gold_lie_reasoning: String,
    pub gold_hidden_intent: String,
}

impl UtteranceRecord {
    pub fn turn(&self) -> TurnRef {
        TurnRef::new(self.session_id.clone(), self.turn_index)
    }
}

/// The exact set of corpus line fields; anything else is unknown.
pub const RECORD_FIELDS: [&str; 18] = [
    "session_id",
    "turn_index",
    "speaker_id",
    "transcript",
    "visual_clip",
    "audio_clip",
    "emotion",
    "emotion_intensity",
    "subjectivity",
    "subjectivity_score",
    "confidence",
    "modality_inconsistency",
    "deception",
    "role",
    "key_events",
    "gold_identity_reasoning",
    "gold_lie_reasoning",
    "gold_hidden_intent",
];

/// One session: a gapless 1..T run of turns sharing a session id.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub turns: Vec<UtteranceRecord>,
}

/// A loaded corpus. Immutable after load; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionCorpus {
    /// Sessions in first-appearance order of the input file.
    pub sessions: Vec<Session>,
    pub role_camp_map: RoleCampMap,
}

impl SessionCorpus {
    pub fn session(&self, session_id: &str) -> Option<&Session> {
        self.sessions.iter().find(|s| s.session_id == session_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &UtteranceRecord> {
        self.sessions.iter().flat_map(|s| s.turns.iter())
    }

    pub fn total_turns(&self) -> usize {
        self.sessions.iter().map(|s| s.turns.len()).sum()
    }
}

/// Whether unknown corpus fields are fatal or merely warned about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

/// A single violated record invariant. Violations are data, not faults:
/// [`validate_record`] collects every one it finds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: unknown field `{field}`")]
    UnknownField { line: usize, field: String },
    #[error("line {line}: record {turn} invalid: {}", join_violations(.violations))]
    InvalidRecord {
        line: usize,
        turn: TurnRef,
        violations: Vec<Violation>,
    },
    #[error("duplicate turn {turn}: lines {first_line} and {second_line}")]
    DuplicateTurn {
        turn: TurnRef,
        first_line: usize,
        second_line: usize,
    },
    #[error("session {session_id}: turns do not form a gapless 1..{expected} sequence (missing turn {missing})")]
    GappedSession {
        session_id: String,
        expected: u32,
        missing: u32,
    },
}

/// Checks every [`UtteranceRecord`] invariant and returns the complete list
/// of violations; an empty list means the record is valid.
pub fn validate_record(record: &UtteranceRecord, role_camp_map: &RoleCampMap) -> Vec<Violation> {
    let mut violations = Vec::new();

    if record.turn_index == 0 {
        violations.push(Violation::new(
            "turn_index",
            "must be a positive 1-based index",
        ));
    }
    if !EMOTION_VOCABULARY.contains(&record.emotion.as_str()) {
        violations.push(Violation::new(
            "emotion",
            format!(
                "`{}` is not in the emotion vocabulary {:?}",
                record.emotion, EMOTION_VOCABULARY
            ),
        ));
    }
    if !SUBJECTIVITY_VOCABULARY.contains(&record.subjectivity.as_str()) {
        violations.push(Violation::new(
            "subjectivity",
            format!(
                "`{}` is not one of {:?}",
                record.subjectivity, SUBJECTIVITY_VOCABULARY
            ),
        ));
    }
    if !DECEPTION_VOCABULARY.contains(&record.deception.as_str()) {
        violations.push(Violation::new(
            "deception",
            format!(
                "`{}` is not one of {:?}",
                record.deception, DECEPTION_VOCABULARY
            ),
        ));
    }
    for (field, value) in [
        ("emotion_intensity", record.emotion_intensity),
        ("subjectivity_score", record.subjectivity_score),
        ("confidence", record.confidence),
        ("modality_inconsistency", record.modality_inconsistency),
    ] {
        if !(1..=5).contains(&value) {
            violations.push(Violation::new(
                field,
                format!("{value} is outside the 1-5 scale"),
            ));
        }
    }
    if !role_camp_map.contains_key(&record.role) {
        violations.push(Violation::new(
            "role",
            format!("`{}` has no camp assignment in the role map", record.role),
        ));
    }
    for anchor in &record.key_events {
        if anchor.session_id != record.session_id {
            violations.push(Violation::new(
                "key_events",
                format!(
                    "anchor {anchor} points outside session {}",
                    record.session_id
                ),
            ));
        } else if anchor.turn_index == 0 || anchor.turn_index >= record.turn_index {
            violations.push(Violation::new(
                "key_events",
                format!(
                    "anchor {anchor} must reference a turn strictly earlier than {}",
                    record.turn_index
                ),
            ));
        }
    }

    violations
}

/// Parses one corpus line. Returns the record plus the names of any unknown
/// fields encountered (only ever non-empty in lenient mode).
pub fn parse_record_line(
    line: &str,
    strictness: Strictness,
) -> Result<(UtteranceRecord, Vec<String>), ParseLineError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| ParseLineError::Malformed(e.to_string()))?;
    let object = value
        .as_object()
        .ok_or_else(|| ParseLineError::Malformed("line is not a JSON object".into()))?;

    let mut unknown = Vec::new();
    for key in object.keys() {
        if !RECORD_FIELDS.contains(&key.as_str()) {
            match strictness {
                Strictness::Strict => return Err(ParseLineError::UnknownField(key.clone())),
                Strictness::Lenient => unknown.push(key.clone()),
            }
        }
    }

    let mut cleaned = object.clone();
    for key in &unknown {
        cleaned.remove(key);
    }
    let record: UtteranceRecord = serde_json::from_value(serde_json::Value::Object(cleaned))
        .map_err(|e| ParseLineError::Malformed(e.to_string()))?;
    Ok((record, unknown))
}

#[derive(Debug, thiserror::Error)]
pub enum ParseLineError {
    #[error("{0}")]
    Malformed(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
}

/// Loads a corpus file: parses every line, validates every record, groups
/// records into sessions (first-appearance order), sorts each session by
/// turn index, and checks the gapless/duplicate invariants.
pub fn load_corpus(
    path: &Path,
    role_camp_map: RoleCampMap,
    strictness: Strictness,
) -> Result<SessionCorpus, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Read {
        path: path.display().to_string(),
        source,
    })?;
    load_corpus_str(&content, role_camp_map, strictness)
}

/// Same as [`load_corpus`] but over in-memory text.
pub fn load_corpus_str(
    content: &str,
    role_camp_map: RoleCampMap,
    strictness: Strictness,
) -> Result<SessionCorpus, CorpusError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_session: BTreeMap<String, Vec<(usize, UtteranceRecord)>> = BTreeMap::new();

    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (record, unknown) = parse_record_line(line, strictness).map_err(|e| match e {
            ParseLineError::Malformed(message) => CorpusError::MalformedLine {
                line: line_no,
                message,
            },
            ParseLineError::UnknownField(field) => CorpusError::UnknownField {
                line: line_no,
                field,
            },
        })?;
        for field in unknown {
            log::warn!("corpus line {line_no}: ignoring unknown field `{field}`");
        }
        let violations = validate_record(&record, &role_camp_map);
        if !violations.is_empty() {
            return Err(CorpusError::InvalidRecord {
                line: line_no,
                turn: record.turn(),
                violations,
            });
        }
        if !by_session.contains_key(&record.session_id) {
            order.push(record.session_id.clone());
        }
        by_session
            .entry(record.session_id.clone())
            .or_default()
            .push((line_no, record));
    }

    let mut sessions = Vec::with_capacity(order.len());
    for session_id in order {
        let mut rows = by_session.remove(&session_id).expect("session collected");
        rows.sort_by_key(|(line, record)| (record.turn_index, *line));
        for pair in rows.windows(2) {
            let (first_line, first) = (&pair[0].0, &pair[0].1);
            let (second_line, second) = (&pair[1].0, &pair[1].1);
            if first.turn_index == second.turn_index {
                return Err(CorpusError::DuplicateTurn {
                    turn: second.turn(),
                    first_line: *first_line,
                    second_line: *second_line,
                });
            }
        }
        let expected = rows.len() as u32;
        for (offset, (_, record)) in rows.iter().enumerate() {
            let want = offset as u32 + 1;
            if record.turn_index != want {
                return Err(CorpusError::GappedSession {
                    session_id: session_id.clone(),
                    expected,
                    missing: want,
                });
            }
        }
        sessions.push(Session {
            session_id,
            turns: rows.into_iter().map(|(_, record)| record).collect(),
        });
    }

    Ok(SessionCorpus {
        sessions,
        role_camp_map,
    })
}

/// Canonical serialization: sessions in stored order, turns ascending, one
/// compact JSON object per line with fields in declaration order.
pub fn corpus_to_string(corpus: &SessionCorpus) -> String {
    let mut out = String::new();
    for session in &corpus.sessions {
        for record in &session.turns {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

pub fn save_corpus(corpus: &SessionCorpus, path: &Path) -> Result<(), CorpusError> {
    let mut file = fs::File::create(path).map_err(|source| CorpusError::Write {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(corpus_to_string(corpus).as_bytes())
        .map_err(|source| CorpusError::Write {
            path: path.display().to_string(),
            source,
        })
}

/// Digest of the corpus *content*, independent of session file order:
/// sessions are sorted by id before hashing. Used for run provenance.
pub fn corpus_digest(corpus: &SessionCorpus) -> String {
    let mut sorted = corpus.clone();
    sorted
        .sessions
        .sort_by(|a, b| a.session_id.cmp(&b.session_id));
    crate::util::sha256_hex(corpus_to_string(&sorted).as_bytes())
}

/// Label tallies over a corpus, mirroring the dataset's headline counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusTally {
    pub total_utterances: usize,
    pub subjectivity_subj: usize,
    pub subjectivity_obj: usize,
    pub emotion_calm: usize,
    pub emotion_others: usize,
    pub deception_truth: usize,
    pub deception_lie: usize,
}

impl fmt::Display for CorpusTally {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total_utterances: {}", self.total_utterances)?;
        writeln!(f, "subjectivity_subj: {}", self.subjectivity_subj)?;
        writeln!(f, "subjectivity_obj: {}", self.subjectivity_obj)?;
        writeln!(f, "emotion_calm: {}", self.emotion_calm)?;
        writeln!(f, "emotion_others: {}", self.emotion_others)?;
        writeln!(f, "deception_truth: {}", self.deception_truth)?;
        write!(f, "deception_lie: {}", self.deception_lie)
    }
}

/// Counts the Subj/Obj, Calm/Others, and Truth/Lie splits.
pub fn tally(corpus: &SessionCorpus) -> CorpusTally {
    let mut t = CorpusTally {
        total_utterances: 0,
        subjectivity_subj: 0,
        subjectivity_obj: 0,
        emotion_calm: 0,
        emotion_others: 0,
        deception_truth: 0,
        deception_lie: 0,
    };
    for record in corpus.records() {
        t.total_utterances += 1;
        match record.subjectivity.as_str() {
            "Subj" => t.subjectivity_subj += 1,
            _ => t.subjectivity_obj += 1,
        }
        match record.emotion.as_str() {
            "Calm" => t.emotion_calm += 1,
            _ => t.emotion_others += 1,
        }
        match record.deception.as_str() {
            "Truth" => t.deception_truth += 1,
            _ => t.deception_lie += 1,
        }
    }
    t
}
