//! Fact-grounded reasoning over multi-turn strategic-deception sessions.
//!
//! The pipeline runs in three stages per turn:
//!
//! 1. **Decouple** ([`decoupler`]): each non-text clip is sent alone, with a
//!    restrictive prompt, to a generation backend that returns objective
//!    factual text. The transcript plus the decoupled facts form a
//!    [`decoupler::FactSet`].
//! 2. **Anchor** ([`anchoring`]): the turn's fact set is matched against the
//!    session's historical [`memory::MemoryBank`] via dual-path recall
//!    (BM25 + embedding cosine), weighted reciprocal rank fusion, Top-M
//!    candidate selection, cross-encoder reranking, and Top-K context
//!    selection.
//! 3. **Reason** ([`reasoner`]): the model first emits an explicit evidence
//!    chain citing (turn, modality) sources from the retrieved context, then
//!    produces a structured prediction that must follow that chain.
//!
//! The [`metrics`] module scores predictions against gold annotations in two
//! phases (perception and reasoning), including LLM-as-judge scoring with a
//! hard truncation gate on hidden-intent scores. [`gateway`] hosts the four
//! backend interfaces (generate, embed, rerank, judge) with both HTTP and
//! deterministic in-process implementations, so the whole pipeline runs
//! offline. [`cli`] ties everything together behind `ingest`, `run`,
//! `evaluate`, and `report` commands.

pub mod anchoring;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod decoupler;
pub mod gateway;
pub mod memory;
pub mod metrics;
pub mod parallel;
pub mod pipeline;
pub mod reasoner;
pub mod report;
pub mod text;
pub mod types;
pub mod util;
