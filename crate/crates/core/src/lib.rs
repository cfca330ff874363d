//! Frame-synchronous full-duplex spoken-dialogue toolkit.
//!
//! The assistant is modeled as a single interleaved token stream. Every
//! 80 ms frame holds a user speech code frame, then an assistant text slot
//! followed by the assistant's own code frame. Special text-slot tokens
//! drive a two-state listening/speaking automaton.
//!
//! Modules:
//! - [`clock`], [`token`] and [`timeline`]: shared data model and Timeline JSONL.
//! - [`codec`]: mock residual vector quantizer.
//! - [`sequence`]: timeline to interleaved sequence, with lookahead.
//! - [`engine`]: runtime automaton and policies.
//! - [`synth`]: synthetic full-duplex conversation pipeline.
//! - [`eval`]: offline full-duplex metrics.

pub mod clock;
pub mod codec;
pub mod engine;
pub mod eval;
pub mod exec;
pub mod seed;
pub mod sequence;
pub mod synth;
pub mod timeline;
pub mod token;

pub use clock::{overlap_duration, FrameClock, FrameSpan, SampleInterval};
pub use codec::{Codebook, CodecFrame, RvqCodec};
pub use exec::Execution;
pub use timeline::{
    validate_timeline, Channel, ConversationTimeline, Role, TimelineViolation, UtteranceEvent, WordAlignment,
};
pub use token::{TokenKind, TokenSlot};
