//! The historical fact repository: an append-only, optionally persistent,
//! per-session store of fact sets queried by the anchoring stage.
//!
//! The bank file reuses the corpus line discipline (UTF-8, one JSON object
//! per line) with the decoupled-fact fields flattened in, so a saved bank is
//! itself line-delimited and diff-friendly. Appends are durable before they
//! are acknowledged; a torn final line (a crash mid-append) is dropped on
//! load, recovering exactly the acknowledged prefix. Corruption anywhere
//! else is an error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoupler::{FactSet, ModalFact};
use crate::types::{Modality, TurnRef};

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("session mismatch: bank is for `{bank}`, entry is for `{entry}`")]
    SessionMismatch { bank: String, entry: String },
    #[error("out-of-order append: turn {turn} does not exceed the current maximum {max}")]
    OutOfOrder { turn: u32, max: u32 },
    #[error("bank storage {path}: {source}")]
    Storage {
        path: String,
        source: std::io::Error,
    },
    #[error("bank file line {line}: {message}")]
    CorruptLine { line: usize, message: String },
    #[error("bank file line {line}: turn {turn} violates monotonic ordering")]
    Monotonicity { line: usize, turn: u32 },
}

/// One persisted bank line: the corpus identity fields plus the decoupled
/// fact texts and their backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BankLine {
    session_id: String,
    turn_index: u32,
    speaker_id: String,
    transcript: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    visual_fact: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    audio_fact: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    backend_id: Option<String>,
}

impl BankLine {
    fn from_fact_set(fs: &FactSet) -> Self {
        let backend_id = fs
            .visual_fact
            .as_ref()
            .or(fs.audio_fact.as_ref())
            .map(|f| f.backend_id.clone());
        Self {
            session_id: fs.turn.session_id.clone(),
            turn_index: fs.turn.turn_index,
            speaker_id: fs.speaker_id.clone(),
            transcript: fs.transcript.clone(),
            visual_fact: fs.visual_fact.as_ref().map(|f| f.text.clone()),
            audio_fact: fs.audio_fact.as_ref().map(|f| f.text.clone()),
            backend_id,
        }
    }

    fn into_fact_set(self) -> FactSet {
        let turn = TurnRef::new(self.session_id, self.turn_index);
        let backend_id = self.backend_id.unwrap_or_default();
        let modal = |modality: Modality, text: String| ModalFact {
            modality,
            text,
            source_turn: turn.clone(),
            backend_id: backend_id.clone(),
        };
        FactSet {
            visual_fact: self.visual_fact.map(|t| modal(Modality::Visual, t)),
            audio_fact: self.audio_fact.map(|t| modal(Modality::Audio, t)),
            speaker_id: self.speaker_id,
            transcript: self.transcript,
            turn,
        }
    }
}

/// Append-only per-session history of fact sets, strictly increasing in
/// turn index.
#[derive(Debug)]
pub struct MemoryBank {
    session_id: String,
    entries: Vec<FactSet>,
    storage_path: Option<PathBuf>,
}

impl MemoryBank {
    /// An empty in-memory bank.
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            entries: Vec::new(),
            storage_path: None,
        }
    }

    /// Opens a persistent bank: an existing file is loaded (it must belong to
    /// this session), a missing one starts empty. Later appends are written
    /// durably to the file before returning.
    pub fn open(
        session_id: impl Into<String>,
        path: impl Into<PathBuf>,
    ) -> Result<Self, MemoryError> {
        let session_id = session_id.into();
        let path = path.into();
        let mut bank = if path.exists() {
            let loaded = Self::load(&path)?;
            if !loaded.entries.is_empty() && loaded.session_id != session_id {
                return Err(MemoryError::SessionMismatch {
                    bank: session_id,
                    entry: loaded.session_id,
                });
            }
            Self {
                session_id,
                entries: loaded.entries,
                storage_path: None,
            }
        } else {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|source| MemoryError::Storage {
                    path: path.display().to_string(),
                    source,
                })?;
            }
            Self::new(session_id)
        };
        bank.storage_path = Some(path);
        Ok(bank)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn entries(&self) -> &[FactSet] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_turn_index(&self) -> Option<u32> {
        self.entries.last().map(|fs| fs.turn.turn_index)
    }

    pub fn entry(&self, turn_index: u32) -> Option<&FactSet> {
        let i = self
            .entries
            .partition_point(|fs| fs.turn.turn_index < turn_index);
        self.entries
            .get(i)
            .filter(|fs| fs.turn.turn_index == turn_index)
    }

    /// Appends one fact set. The entry is durably on disk before this
    /// returns when the bank has a storage path.
    pub fn append(&mut self, fact_set: FactSet) -> Result<(), MemoryError> {
        if fact_set.turn.session_id != self.session_id {
            return Err(MemoryError::SessionMismatch {
                bank: self.session_id.clone(),
                entry: fact_set.turn.session_id,
            });
        }
        let max = self.last_turn_index().unwrap_or(0);
        if fact_set.turn.turn_index <= max {
            return Err(MemoryError::OutOfOrder {
                turn: fact_set.turn.turn_index,
                max,
            });
        }
        if let Some(path) = &self.storage_path {
            let line = serde_json::to_string(&BankLine::from_fact_set(&fact_set))
                .expect("bank line serializes");
            let mut file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|source| MemoryError::Storage {
                    path: path.display().to_string(),
                    source,
                })?;
            file.write_all(line.as_bytes())
                .and_then(|_| file.write_all(b"\n"))
                .and_then(|_| file.sync_data())
                .map_err(|source| MemoryError::Storage {
                    path: path.display().to_string(),
                    source,
                })?;
        }
        self.entries.push(fact_set);
        Ok(())
    }

    /// Exactly the entries with turn index strictly below `t`, ascending.
    pub fn history_before(&self, t: u32) -> &[FactSet] {
        let end = self.entries.partition_point(|fs| fs.turn.turn_index < t);
        &self.entries[..end]
    }

    /// Writes the whole bank to `path` (independent of the storage path).
    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        let mut out = String::new();
        for fs in &self.entries {
            out.push_str(
                &serde_json::to_string(&BankLine::from_fact_set(fs)).expect("bank line serializes"),
            );
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| MemoryError::Storage {
            path: path.display().to_string(),
            source,
        })
    }

    /// Loads a bank file. An unparseable *final* line is treated as a torn
    /// append and dropped (crash recovery keeps the acknowledged prefix); a
    /// bad line anywhere else is corruption and fails with its line number.
    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let content = fs::read_to_string(path).map_err(|source| MemoryError::Storage {
            path: path.display().to_string(),
            source,
        })?;
        let mut bank = Self::from_lines(&content)?;
        bank.storage_path = None;
        Ok(bank)
    }

    /// Parses bank-file text; see [`MemoryBank::load`] for the recovery
    /// rules. Public so untrusted bank bytes can be exercised directly.
    pub fn from_lines(content: &str) -> Result<Self, MemoryError> {
        let lines: Vec<(usize, &str)> = content
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty())
            .collect();
        let mut entries: Vec<FactSet> = Vec::with_capacity(lines.len());
        let mut session_id: Option<String> = None;
        let last = lines.len();

        for (position, (line_no, line)) in lines.iter().enumerate() {
            let parsed: Result<BankLine, _> = serde_json::from_str(line);
            let bank_line = match parsed {
                Ok(l) => l,
                Err(e) if position + 1 == last => {
                    log::warn!(
                        "bank line {line_no} is unparseable ({e}); dropping torn final append"
                    );
                    break;
                }
                Err(e) => {
                    return Err(MemoryError::CorruptLine {
                        line: *line_no,
                        message: e.to_string(),
                    })
                }
            };
            match &session_id {
                None => session_id = Some(bank_line.session_id.clone()),
                Some(expected) if *expected != bank_line.session_id => {
                    return Err(MemoryError::CorruptLine {
                        line: *line_no,
                        message: format!(
                            "session `{}` does not match the bank session `{expected}`",
                            bank_line.session_id
                        ),
                    });
                }
                Some(_) => {}
            }
            let max = entries
                .last()
                .map(|f: &FactSet| f.turn.turn_index)
                .unwrap_or(0);
            if bank_line.turn_index <= max {
                return Err(MemoryError::Monotonicity {
                    line: *line_no,
                    turn: bank_line.turn_index,
                });
            }
            entries.push(bank_line.into_fact_set());
        }

        Ok(Self {
            session_id: session_id.unwrap_or_default(),
            entries,
            storage_path: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoupler::FactSet;
    use proptest::prelude::*;

    fn fact(session: &str, turn: u32) -> FactSet {
        FactSet::text_only(
            TurnRef::new(session, turn),
            format!("p{turn}"),
            format!("text {turn}"),
        )
    }

    fn fact_with_modal(session: &str, turn: u32) -> FactSet {
        let mut fs = fact(session, turn);
        fs.visual_fact = Some(ModalFact {
            modality: Modality::Visual,
            text: format!("visual {turn}"),
            source_turn: fs.turn.clone(),
            backend_id: "mock-generate".to_string(),
        });
        fs
    }

    #[test]
    fn append_in_order_counts() {
        let mut bank = MemoryBank::new("s1");
        for t in 1..=3 {
            bank.append(fact("s1", t)).unwrap();
        }
        assert_eq!(bank.len(), 3);
    }

    #[test]
    fn append_out_of_order_is_rejected() {
        let mut bank = MemoryBank::new("s1");
        bank.append(fact("s1", 3)).unwrap();
        let err = bank.append(fact("s1", 2)).unwrap_err();
        assert!(matches!(err, MemoryError::OutOfOrder { turn: 2, max: 3 }));
    }

    #[test]
    fn append_duplicate_is_rejected() {
        let mut bank = MemoryBank::new("s1");
        bank.append(fact("s1", 1)).unwrap();
        assert!(matches!(
            bank.append(fact("s1", 1)).unwrap_err(),
            MemoryError::OutOfOrder { .. }
        ));
    }

    #[test]
    fn append_other_session_is_rejected() {
        let mut bank = MemoryBank::new("s1");
        let err = bank.append(fact("s2", 1)).unwrap_err();
        assert!(matches!(err, MemoryError::SessionMismatch { .. }));
    }

    #[test]
    fn history_before_first_turn_is_empty() {
        let mut bank = MemoryBank::new("s1");
        assert!(bank.history_before(1).is_empty());
        bank.append(fact("s1", 1)).unwrap();
        assert!(bank.history_before(1).is_empty());
    }

    #[test]
    fn history_before_returns_full_prefix() {
        let mut bank = MemoryBank::new("s1");
        for t in 1..=5 {
            bank.append(fact("s1", t)).unwrap();
        }
        assert_eq!(bank.history_before(6).len(), 5);
    }

    #[test]
    fn history_before_is_strict() {
        let mut bank = MemoryBank::new("s1");
        for t in [1, 2, 4] {
            bank.append(fact("s1", t)).unwrap();
        }
        let history = bank.history_before(4);
        let turns: Vec<u32> = history.iter().map(|f| f.turn.turn_index).collect();
        assert_eq!(turns, vec![1, 2]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let mut bank = MemoryBank::new("s1");
        for t in 1..=10 {
            if t % 2 == 0 {
                bank.append(fact_with_modal("s1", t)).unwrap();
            } else {
                bank.append(fact("s1", t)).unwrap();
            }
        }
        bank.save(&path).unwrap();
        let loaded = MemoryBank::load(&path).unwrap();
        assert_eq!(loaded.session_id(), "s1");
        assert_eq!(loaded.entries(), bank.entries());
    }

    #[test]
    fn load_rejects_monotonicity_violation_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let lines = [fact("s1", 1), fact("s1", 3), fact("s1", 2)]
            .iter()
            .map(|f| serde_json::to_string(&BankLine::from_fact_set(f)).unwrap())
            .collect::<Vec<_>>()
            .join("\n");
        fs::write(&path, lines).unwrap();
        let err = MemoryBank::load(&path).unwrap_err();
        assert!(matches!(
            err,
            MemoryError::Monotonicity { line: 3, turn: 2 }
        ));
    }

    #[test]
    fn load_empty_file_is_empty_bank() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        fs::write(&path, "").unwrap();
        let bank = MemoryBank::load(&path).unwrap();
        assert!(bank.is_empty());
    }

    #[test]
    fn load_rejects_interior_corruption_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let good = serde_json::to_string(&BankLine::from_fact_set(&fact("s1", 1))).unwrap();
        let good2 = serde_json::to_string(&BankLine::from_fact_set(&fact("s1", 2))).unwrap();
        fs::write(&path, format!("{good}\n{{broken\n{good2}\n")).unwrap();
        let err = MemoryBank::load(&path).unwrap_err();
        assert!(matches!(err, MemoryError::CorruptLine { line: 2, .. }));
    }

    #[test]
    fn torn_final_append_recovers_acknowledged_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        let mut bank = MemoryBank::open("s1", &path).unwrap();
        for t in 1..=3 {
            bank.append(fact("s1", t)).unwrap();
        }
        // Crash mid-append: half a line, no trailing newline.
        let mut file = fs::OpenOptions::new().append(true).open(&path).unwrap();
        file.write_all(b"{\"session_id\":\"s1\",\"turn_ind")
            .unwrap();
        drop(file);
        let recovered = MemoryBank::load(&path).unwrap();
        assert_eq!(recovered.len(), 3);
        assert_eq!(recovered.entries(), bank.entries());
    }

    #[test]
    fn open_resumes_existing_file_and_appends_durably() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        {
            let mut bank = MemoryBank::open("s1", &path).unwrap();
            bank.append(fact("s1", 1)).unwrap();
            bank.append(fact("s1", 2)).unwrap();
        }
        let mut bank = MemoryBank::open("s1", &path).unwrap();
        assert_eq!(bank.len(), 2);
        bank.append(fact("s1", 3)).unwrap();
        let loaded = MemoryBank::load(&path).unwrap();
        assert_eq!(loaded.len(), 3);
    }

    #[test]
    fn open_rejects_session_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.jsonl");
        {
            let mut bank = MemoryBank::open("s1", &path).unwrap();
            bank.append(fact("s1", 1)).unwrap();
        }
        assert!(matches!(
            MemoryBank::open("s2", &path).unwrap_err(),
            MemoryError::SessionMismatch { .. }
        ));
    }

    proptest! {
        #[test]
        fn history_prefix_property(
            turns in proptest::collection::btree_set(1u32..40, 0..12),
            t1 in 1u32..45,
            t2 in 1u32..45,
        ) {
            let mut bank = MemoryBank::new("s1");
            for t in &turns {
                bank.append(fact("s1", *t)).unwrap();
            }
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let shorter = bank.history_before(lo);
            let longer = bank.history_before(hi);
            prop_assert!(longer.len() >= shorter.len());
            prop_assert_eq!(&longer[..shorter.len()], shorter);
            prop_assert!(shorter.iter().all(|f| f.turn.turn_index < lo));
        }
    }
}
