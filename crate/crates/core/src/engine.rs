//! Runtime listening/speaking automaton.
//!
//! One engine serves one session: each tick consumes a user code frame,
//! asks the policy for the assistant's text slot and speech codes, checks
//! the slot against the state machine and word grammar, and appends a
//! frame block. Illegal outputs are coerced to `SIL` and counted.

use crate::codec::{mock_embedding, CodecFrame, RvqCodec};
use crate::seed;
use crate::sequence::{
    build_sequence, invert_slots, BuilderConfig, CharChunkTokenizer, FrameBlock, InterleavedSequence, SequenceEntry,
    SequenceError, StateRun, TagRecord, Tokenizer, TrailerRecord,
};
use crate::timeline::{Channel, ConversationTimeline, UtteranceEvent};
use crate::token::{TokenKind, TokenSlot};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DuplexState {
    #[default]
    Listening,
    Speaking,
}

impl DuplexState {
    pub fn letter(self) -> &'static str {
        match self {
            DuplexState::Listening => "L",
            DuplexState::Speaking => "S",
        }
    }

    pub fn from_letter(s: &str) -> Option<Self> {
        match s {
            "L" => Some(DuplexState::Listening),
            "S" => Some(DuplexState::Speaking),
            _ => None,
        }
    }
}

impl fmt::Display for DuplexState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DuplexState::Listening => "listening",
            DuplexState::Speaking => "speaking",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("illegal transition: {kind} while {state}")]
    IllegalTransition { state: DuplexState, kind: TokenKind },
    #[error("illegal slot order: {kind} after {prev}")]
    IllegalOrder { prev: TokenKind, kind: TokenKind },
    #[error("assistant codes rejected: {0}")]
    Codes(String),
    #[error("engine already finalized")]
    Finalized,
    #[error("user stream is empty")]
    EmptyStream,
    #[error("malformed session log: {0}")]
    Log(String),
}

/// The two-state transition table.
pub fn transition(state: DuplexState, kind: TokenKind) -> Result<DuplexState, EngineError> {
    use DuplexState::*;
    use TokenKind::*;
    match (state, kind) {
        (Listening, Sil) => Ok(Listening),
        (Listening, Bow | Bc) => Ok(Speaking),
        (Listening, Text | Pad) => Err(EngineError::IllegalTransition { state, kind }),
        (Speaking, Sil) => Ok(Listening),
        (Speaking, Bow | Bc | Text | Pad) => Ok(Speaking),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub text_slot: TokenSlot,
    pub assistant_codes: CodecFrame,
    /// Content tag for the segment this frame opens, when the policy knows it.
    pub content_tag: Option<String>,
}

impl PolicyDecision {
    pub fn silent(silence: &CodecFrame) -> Self {
        Self { text_slot: TokenSlot::sil(), assistant_codes: silence.clone(), content_tag: None }
    }
}

/// What a policy sees at one tick.
pub struct FrameContext<'a> {
    pub frame_index: usize,
    pub state: DuplexState,
    pub previous_kind: TokenKind,
    pub user_frame: &'a CodecFrame,
    /// User frame differs from the canonical silence frame.
    pub user_active: bool,
    pub silence_frame: &'a CodecFrame,
    pub codec: &'a RvqCodec,
}

/// Decision source driving the engine. Must be deterministic given its seed.
pub trait Policy {
    fn decide(&mut self, ctx: &FrameContext<'_>) -> PolicyDecision;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub session_id: String,
    pub blocks: Vec<FrameBlock>,
    pub state_trace: Vec<DuplexState>,
    pub events: Vec<UtteranceEvent>,
    pub coercions: usize,
    /// (frame, tag) pairs emitted by the policy.
    pub segment_tags: Vec<TagRecord>,
}

pub struct DuplexEngine<'a> {
    session_id: String,
    codec: &'a RvqCodec,
    silence: CodecFrame,
    state: DuplexState,
    prev_kind: TokenKind,
    blocks: Vec<FrameBlock>,
    trace: Vec<DuplexState>,
    coercions: Vec<(usize, EngineError)>,
    tags: Vec<TagRecord>,
    finalized: bool,
}

impl<'a> DuplexEngine<'a> {
    pub fn new(session_id: impl Into<String>, codec: &'a RvqCodec) -> Self {
        Self {
            session_id: session_id.into(),
            codec,
            silence: codec.silence_frame(),
            state: DuplexState::Listening,
            prev_kind: TokenKind::Sil,
            blocks: Vec::new(),
            trace: Vec::new(),
            coercions: Vec::new(),
            tags: Vec::new(),
            finalized: false,
        }
    }

    pub fn state(&self) -> DuplexState {
        self.state
    }

    pub fn frame_index(&self) -> usize {
        self.blocks.len()
    }

    pub fn coercions(&self) -> &[(usize, EngineError)] {
        &self.coercions
    }

    fn check(&self, d: &PolicyDecision) -> Result<DuplexState, EngineError> {
        if !d.text_slot.is_well_formed() {
            return Err(EngineError::Codes(format!("malformed slot {}", d.text_slot)));
        }
        let next = transition(self.state, d.text_slot.kind)?;
        if self.prev_kind == TokenKind::Pad && d.text_slot.kind == TokenKind::Text {
            return Err(EngineError::IllegalOrder { prev: self.prev_kind, kind: d.text_slot.kind });
        }
        self.codec.check_frame(&d.assistant_codes).map_err(|e| EngineError::Codes(e.to_string()))?;
        Ok(next)
    }

    /// Advances one frame.
    pub fn step(&mut self, user_frame: CodecFrame, policy: &mut dyn Policy) -> Result<&FrameBlock, EngineError> {
        if self.finalized {
            return Err(EngineError::Finalized);
        }
        let f = self.blocks.len();
        let ctx = FrameContext {
            frame_index: f,
            state: self.state,
            previous_kind: self.prev_kind,
            user_active: user_frame != self.silence,
            user_frame: &user_frame,
            silence_frame: &self.silence,
            codec: self.codec,
        };
        let mut decision = policy.decide(&ctx);
        let next = match self.check(&decision) {
            Ok(next) => next,
            Err(e) => {
                self.coercions.push((f, e));
                decision = PolicyDecision::silent(&self.silence);
                DuplexState::Listening
            }
        };
        if let Some(tag) = decision.content_tag.take() {
            if decision.text_slot.kind.is_opener() {
                self.tags.push(TagRecord { frame: f, tag });
            }
        }
        self.state = next;
        self.prev_kind = decision.text_slot.kind;
        self.trace.push(next);
        self.blocks.push(FrameBlock {
            frame_index: f,
            user_speech: user_frame,
            text_slot: decision.text_slot,
            assistant_speech: decision.assistant_codes,
        });
        Ok(self.blocks.last().expect("just pushed"))
    }

    pub fn finish(mut self) -> SessionLog {
        self.finalized = true;
        let events = derive_events(&self.blocks, &self.tags, self.codec);
        SessionLog {
            session_id: self.session_id,
            blocks: self.blocks,
            state_trace: self.trace,
            events,
            coercions: self.coercions.len(),
            segment_tags: self.tags,
        }
    }
}

fn derive_events(blocks: &[FrameBlock], tags: &[TagRecord], codec: &RvqCodec) -> Vec<UtteranceEvent> {
    derive_events_with_clock(blocks, tags, &codec.clock())
}

fn derive_events_with_clock(
    blocks: &[FrameBlock],
    tags: &[TagRecord],
    clock: &crate::clock::FrameClock,
) -> Vec<UtteranceEvent> {
    let slots: Vec<TokenSlot> = blocks.iter().map(|b| b.text_slot.clone()).collect();
    let skeleton = invert_slots(&slots).expect("engine keeps the slot grammar");
    skeleton.to_events(clock, |span| {
        tags.iter()
            .find(|t| span.frames.contains(t.frame))
            .map(|t| t.tag.clone())
            .unwrap_or_else(|| format!("seg{}", span.frames.start))
    })
}

/// Drives `policy` over the whole user stream.
pub fn run_session(
    session_id: &str,
    user_stream: &[CodecFrame],
    policy: &mut dyn Policy,
    codec: &RvqCodec,
) -> Result<SessionLog, EngineError> {
    if user_stream.is_empty() {
        return Err(EngineError::EmptyStream);
    }
    let mut engine = DuplexEngine::new(session_id, codec);
    for frame in user_stream {
        engine.step(frame.clone(), policy)?;
    }
    Ok(engine.finish())
}

// ---- session log serialization ----

fn run_length(trace: &[DuplexState]) -> Vec<StateRun> {
    let mut out: Vec<StateRun> = Vec::new();
    for s in trace {
        match out.last_mut() {
            Some((l, n)) if l == s.letter() => *n += 1,
            _ => out.push((s.letter().to_string(), 1)),
        }
    }
    out
}

impl SessionLog {
    /// Same line format as the sequence builder, plus a trailer record.
    pub fn to_jsonl(&self) -> String {
        let seq = InterleavedSequence {
            session_id: self.session_id.clone(),
            config: BuilderConfig::default(),
            lookahead_applied: 0,
            blocks: self.blocks.clone(),
        };
        let mut out = seq.to_jsonl();
        let trailer = TrailerRecord {
            state_rle: run_length(&self.state_trace),
            coercions: self.coercions,
            segment_tags: self.segment_tags.clone(),
        };
        out.push_str(&serde_json::to_string(&serde_json::json!({ "trailer": trailer })).expect("trailer serializes"));
        out.push('\n');
        out
    }

    /// Rebuilds a log from a parsed Sequence JSONL entry carrying a trailer.
    pub fn from_entry(entry: SequenceEntry, clock: &crate::clock::FrameClock) -> Result<Self, EngineError> {
        let trailer = entry
            .trailer
            .ok_or_else(|| EngineError::Log(format!("session {} has no trailer", entry.sequence.session_id)))?;
        let mut trace = Vec::new();
        for (letter, n) in &trailer.state_rle {
            let s = DuplexState::from_letter(letter)
                .ok_or_else(|| EngineError::Log(format!("unknown state {letter:?}")))?;
            trace.extend(std::iter::repeat_n(s, *n));
        }
        let blocks = entry.sequence.blocks;
        if trace.len() != blocks.len() {
            return Err(EngineError::Log(format!(
                "state trace has {} frames, log has {} blocks",
                trace.len(),
                blocks.len()
            )));
        }
        let slots: Vec<TokenSlot> = blocks.iter().map(|b| b.text_slot.clone()).collect();
        invert_slots(&slots).map_err(|e| EngineError::Log(e.to_string()))?;
        let events = derive_events_with_clock(&blocks, &trailer.segment_tags, clock);
        Ok(SessionLog {
            session_id: entry.sequence.session_id,
            blocks,
            state_trace: trace,
            events,
            coercions: trailer.coercions,
            segment_tags: trailer.segment_tags,
        })
    }

    pub fn assistant_events(&self) -> impl Iterator<Item = &UtteranceEvent> {
        self.events.iter().filter(|e| e.channel == Channel::Assistant)
    }

    pub fn frame_count(&self) -> usize {
        self.blocks.len()
    }
}

// ---- policies ----

/// Never speaks.
#[derive(Debug, Clone, Copy, Default)]
pub struct SilentPolicy;

impl Policy for SilentPolicy {
    fn decide(&mut self, ctx: &FrameContext<'_>) -> PolicyDecision {
        PolicyDecision::silent(ctx.silence_frame)
    }
}

/// Replays the aligned sequence built from a reference timeline.
#[derive(Debug, Clone)]
pub struct ScriptedTimelinePolicy {
    blocks: Vec<FrameBlock>,
    tags: BTreeMap<usize, String>,
}

impl ScriptedTimelinePolicy {
    pub fn from_timeline(
        timeline: &ConversationTimeline,
        tokenizer: &dyn Tokenizer,
        codec: &RvqCodec,
        config: &BuilderConfig,
    ) -> Result<Self, SequenceError> {
        let config = config.clone().with_lookahead(0);
        let seq = build_sequence(timeline, tokenizer, codec, &config)?;
        let tags = timeline
            .events_on(Channel::Assistant)
            .map(|(_, e)| (timeline.clock.frame_of(e.interval.start), e.content_tag.clone()))
            .collect();
        Ok(Self { blocks: seq.blocks, tags })
    }

    pub fn sequence_blocks(&self) -> &[FrameBlock] {
        &self.blocks
    }
}

impl Policy for ScriptedTimelinePolicy {
    fn decide(&mut self, ctx: &FrameContext<'_>) -> PolicyDecision {
        match self.blocks.get(ctx.frame_index) {
            Some(b) => PolicyDecision {
                text_slot: b.text_slot.clone(),
                assistant_codes: b.assistant_speech.clone(),
                content_tag: self.tags.get(&ctx.frame_index).cloned(),
            },
            None => PolicyDecision::silent(ctx.silence_frame),
        }
    }
}

/// Speaks a fixed script once the user has been silent for more than
/// `silence_threshold` consecutive frames after having spoken. Optionally
/// yields (emits `SIL`) as soon as the user starts talking over it.
#[derive(Debug, Clone)]
pub struct ThresholdVadPolicy {
    pub silence_threshold: usize,
    pub script: Vec<String>,
    pub frames_per_word: usize,
    pub yield_on_user_speech: bool,
    pub tag: String,
    tokenizer: CharChunkTokenizer,
    silent_run: usize,
    armed: bool,
    queue: VecDeque<(TokenSlot, String, u64)>,
    opened: bool,
}

impl ThresholdVadPolicy {
    pub fn new(silence_threshold: usize, script: Vec<String>) -> Self {
        Self {
            silence_threshold,
            script,
            frames_per_word: 3,
            yield_on_user_speech: true,
            tag: "vad-response".into(),
            tokenizer: CharChunkTokenizer::default(),
            silent_run: 0,
            armed: false,
            queue: VecDeque::new(),
            opened: false,
        }
    }

    pub fn default_script() -> Vec<String> {
        ["sure", "let", "me", "help", "with", "that"].iter().map(|s| s.to_string()).collect()
    }

    fn enqueue_script(&mut self) {
        for (wi, word) in self.script.iter().enumerate() {
            let tokens = self.tokenizer.tokenize(word);
            let frames = self.frames_per_word.max(1 + tokens.len());
            let key = format!("vad/{}/{wi}/{word}", self.tag);
            for i in 0..frames {
                let slot = match i {
                    0 => TokenSlot::bow(),
                    i if i <= tokens.len() => TokenSlot::text(tokens[i - 1].clone()),
                    _ => TokenSlot::pad(),
                };
                self.queue.push_back((slot, key.clone(), i as u64));
            }
        }
        self.opened = false;
    }
}

impl Policy for ThresholdVadPolicy {
    fn decide(&mut self, ctx: &FrameContext<'_>) -> PolicyDecision {
        if ctx.user_active {
            self.silent_run = 0;
            self.armed = true;
            if self.yield_on_user_speech && !self.queue.is_empty() {
                self.queue.clear();
            }
        } else {
            self.silent_run += 1;
        }
        if self.queue.is_empty()
            && ctx.state == DuplexState::Listening
            && self.armed
            && self.silent_run > self.silence_threshold
        {
            self.armed = false;
            self.enqueue_script();
        }
        match self.queue.pop_front() {
            Some((slot, key, off)) => {
                let codes = ctx
                    .codec
                    .encode_frame(&mock_embedding(&key, off, ctx.codec.dim()))
                    .unwrap_or_else(|_| ctx.silence_frame.clone());
                let tag = (!self.opened).then(|| self.tag.clone());
                self.opened = true;
                PolicyDecision { text_slot: slot, assistant_codes: codes, content_tag: tag }
            }
            None => PolicyDecision::silent(ctx.silence_frame),
        }
    }
}

/// Emits uniformly random slot kinds, legal or not. For fuzzing the engine.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: seed::rng(seed) }
    }
}

impl Policy for RandomPolicy {
    fn decide(&mut self, ctx: &FrameContext<'_>) -> PolicyDecision {
        let kind = TokenKind::ALL[self.rng.random_range(0..TokenKind::ALL.len())];
        let slot = match kind {
            TokenKind::Text => TokenSlot::text("x"),
            TokenKind::Sil => TokenSlot::sil(),
            TokenKind::Bow => TokenSlot::bow(),
            TokenKind::Bc => TokenSlot::bc(),
            TokenKind::Pad => TokenSlot::pad(),
        };
        PolicyDecision { text_slot: slot, assistant_codes: ctx.silence_frame.clone(), content_tag: None }
    }
}
