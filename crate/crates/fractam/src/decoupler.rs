//! Strict unimodal fact decoupling: each non-text clip is sent alone, with a
//! restrictive prompt, to a generation backend that returns objective factual
//! text. The request never carries the transcript or the other modality's
//! clip — that is the operational meaning of disabled early cross-modal
//! attention.

use serde::{Deserialize, Serialize};

use crate::corpus::UtteranceRecord;
use crate::gateway::{GatewayError, Generator, PromptPart};
use crate::parallel::parallel_map;
use crate::types::{Modality, TurnRef};
use crate::util::sha256_hex;

/// Objective factual text decoupled from one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalFact {
    pub modality: Modality,
    pub text: String,
    pub source_turn: TurnRef,
    pub backend_id: String,
}

/// The unified plain-text fact set for one turn: transcript plus the
/// decoupled visual and audio facts, when their clips exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactSet {
    pub turn: TurnRef,
    pub speaker_id: String,
    pub transcript: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual_fact: Option<ModalFact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_fact: Option<ModalFact>,
}

impl FactSet {
    /// A transcript-only fact set, as produced in text-only mode or for
    /// records without clips.
    pub fn text_only(
        turn: TurnRef,
        speaker_id: impl Into<String>,
        transcript: impl Into<String>,
    ) -> Self {
        Self {
            turn,
            speaker_id: speaker_id.into(),
            transcript: transcript.into(),
            visual_fact: None,
            audio_fact: None,
        }
    }
}

/// The four prompts driving the pipeline, loaded from config and versioned
/// by content digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSet {
    pub p_v: String,
    pub p_a: String,
    pub p_align: String,
    pub p_sys: String,
}

impl PromptSet {
    pub fn digest(&self) -> String {
        let joined = format!(
            "p_v\x1f{}\x1fp_a\x1f{}\x1fp_align\x1f{}\x1fp_sys\x1f{}",
            self.p_v, self.p_a, self.p_align, self.p_sys
        );
        sha256_hex(joined.as_bytes())
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, value) in [
            ("p_v", &self.p_v),
            ("p_a", &self.p_a),
            ("p_align", &self.p_align),
            ("p_sys", &self.p_sys),
        ] {
            if value.trim().is_empty() {
                return Err(format!("prompt {name} is empty"));
            }
        }
        Ok(())
    }

    pub fn for_modality(&self, modality: Modality) -> Option<&str> {
        match modality {
            Modality::Visual => Some(&self.p_v),
            Modality::Audio => Some(&self.p_a),
            Modality::Text => None,
        }
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            p_v: "Watch the clip and describe only the observable physical behavior: \
                  facial movements, gaze direction, gestures, posture. Do not infer \
                  emotion, intent, or identity. Do not reference anything said."
                .to_string(),
            p_a: "Listen to the clip and describe only the observable vocal delivery: \
                  pace, pitch, volume, pauses, tremor. Do not infer emotion, intent, or \
                  identity. Do not transcribe or reference the words spoken."
                .to_string(),
            p_align: "Construct an explicit evidence chain linking the current turn to \
                      the retrieved historical facts. Output numbered lines of the form \
                      `step <n>: <claim> [cites: s<session>#t<turn>/<modality>, ...]` and \
                      nothing else. Cite only the current turn or turns present in the \
                      retrieved context; modality tags are t, v, and a."
                .to_string(),
            p_sys: "Follow the evidence chain strictly and answer from cited facts only. \
                    Output exactly these fields, one per line, in this order: turn, \
                    emotion, emotion_intensity, subjectivity, identity, \
                    identity_reasoning, lie, lie_reasoning, hidden_intent. emotion is one \
                    of Calm, Disgust, Joy, Anger, Surprise, Sadness, Fear; \
                    emotion_intensity is an integer 1-5; subjectivity is Subj or Obj; lie \
                    is Truth or Lie. Reasoning fields must be single-line, non-empty text."
                .to_string(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DecoupleError {
    #[error("modality `{0}` is never decoupled; only visual and audio clips are")]
    NotDecoupled(Modality),
    #[error("no decoupling backend configured but {turn} has a {modality} clip")]
    NoBackend { turn: TurnRef, modality: Modality },
    #[error("decoupling the {modality} clip of {turn} failed: {source}")]
    Backend {
        turn: TurnRef,
        modality: Modality,
        source: GatewayError,
    },
    #[error("backend returned empty text for the {modality} clip of {turn}")]
    EmptyFact { turn: TurnRef, modality: Modality },
}

/// Sends exactly one backend call carrying only this clip and this prompt —
/// never the transcript, never the other modality — and wraps the reply as a
/// [`ModalFact`].
pub fn decouple(
    clip: &str,
    modality: Modality,
    source_turn: &TurnRef,
    backend: &dyn Generator,
    prompt: &str,
) -> Result<ModalFact, DecoupleError> {
    if modality == Modality::Text {
        return Err(DecoupleError::NotDecoupled(modality));
    }
    let parts = [PromptPart::text(prompt), PromptPart::media(clip, modality)];
    let text = backend
        .generate(&parts)
        .map_err(|source| DecoupleError::Backend {
            turn: source_turn.clone(),
            modality,
            source,
        })?;
    if text.trim().is_empty() {
        return Err(DecoupleError::EmptyFact {
            turn: source_turn.clone(),
            modality,
        });
    }
    Ok(ModalFact {
        modality,
        text,
        source_turn: source_turn.clone(),
        backend_id: backend.id().to_string(),
    })
}

/// Builds the fact set for one record: the transcript is copied verbatim and
/// each present clip is decoupled independently (absent clips yield absent
/// facts). Both clips may be decoupled concurrently, bounded by
/// `parallelism`.
pub fn build_fact_set(
    record: &UtteranceRecord,
    backend: Option<&dyn Generator>,
    prompts: &PromptSet,
    parallelism: usize,
) -> Result<FactSet, DecoupleError> {
    let turn = record.turn();
    let mut jobs: Vec<(Modality, &str, &str)> = Vec::new();
    if let Some(clip) = record.visual_clip.as_deref() {
        jobs.push((Modality::Visual, clip, prompts.p_v.as_str()));
    }
    if let Some(clip) = record.audio_clip.as_deref() {
        jobs.push((Modality::Audio, clip, prompts.p_a.as_str()));
    }

    let mut visual_fact = None;
    let mut audio_fact = None;
    if !jobs.is_empty() {
        let backend = match backend {
            Some(b) => b,
            None => {
                return Err(DecoupleError::NoBackend {
                    turn,
                    modality: jobs[0].0,
                })
            }
        };
        let results = parallel_map(jobs, parallelism, |(modality, clip, prompt)| {
            decouple(clip, modality, &turn, backend, prompt)
        });
        for result in results {
            let fact = result?;
            match fact.modality {
                Modality::Visual => visual_fact = Some(fact),
                Modality::Audio => audio_fact = Some(fact),
                Modality::Text => unreachable!("text is never decoupled"),
            }
        }
    }

    Ok(FactSet {
        turn,
        speaker_id: record.speaker_id.clone(),
        transcript: record.transcript.clone(),
        visual_fact,
        audio_fact,
    })
}
