//! Synthetic full-duplex conversation pipeline.
//!
//! Four per-session stages run in order: grammar scripting
//! ([`generate_dialogue`]), timeline construction with a mock duration
//! model ([`construct_timeline`]), backchannel timing refinement
//! ([`refine_timing`]) and barge-in truncation ([`truncate_barge_in`]).
//! [`synthesize_corpus`] then filters and deduplicates across sessions.

pub mod corpus;
pub mod filter;
pub mod grammar;
pub mod random;
pub mod refine;
pub mod script;
pub mod tts;

pub use corpus::{synthesize_corpus, synthesize_session, Corpus, CorpusConfig, FilterStats, Manifest};
pub use filter::{achieved_snr_db, mix_at_snr, rms, AugmentConfig, MixError, RejectReason, TimelineFilter};
pub use grammar::Grammar;
pub use random::random_timeline;
pub use refine::{refine_timing, snap_to_boundary, truncate_barge_in, BargeInNote};
pub use script::{
    generate_dialogue, DialogueScript, Flow, Focus, OverlapMix, ScenarioTemplate, ScriptTurn, Specificity,
    TemplateError, TemplateFamily,
};
pub use tts::{construct_timeline, MockTts};
