//! Identifiers shared across the pipeline: turn coordinates and modality tags.

use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// A (session, turn) coordinate. Renders as `s<session>#t<turn>`, the anchor
/// notation used in corpus key-event lists and evidence-chain citations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TurnRef {
    pub session_id: String,
    pub turn_index: u32,
}

impl TurnRef {
    pub fn new(session_id: impl Into<String>, turn_index: u32) -> Self {
        Self {
            session_id: session_id.into(),
            turn_index,
        }
    }
}

impl fmt::Display for TurnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}#t{}", self.session_id, self.turn_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid turn reference `{0}`: expected s<session>#t<number>")]
pub struct ParseTurnRefError(pub String);

impl FromStr for TurnRef {
    type Err = ParseTurnRefError;

    /// Parses `s<session>#t<number>`. The split happens at the *rightmost*
    /// `#t` whose suffix is all digits, so session ids containing `#t` still
    /// round-trip.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseTurnRefError(s.to_string());
        let body = s.strip_prefix('s').ok_or_else(err)?;
        let sep = body.rfind("#t").ok_or_else(err)?;
        let (session_id, rest) = body.split_at(sep);
        let digits = &rest[2..];
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let turn_index: u32 = digits.parse().map_err(|_| err())?;
        Ok(TurnRef::new(session_id, turn_index))
    }
}

impl Serialize for TurnRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TurnRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Input channel of an utterance component, a decoupled fact, or a citation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "t")]
    Text,
    #[serde(rename = "v")]
    Visual,
    #[serde(rename = "a")]
    Audio,
}

impl Modality {
    pub fn tag(self) -> &'static str {
        match self {
            Modality::Text => "t",
            Modality::Visual => "v",
            Modality::Audio => "a",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "t" => Some(Modality::Text),
            "v" => Some(Modality::Visual),
            "a" => Some(Modality::Audio),
            _ => None,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}
