//! Timeline → interleaved token sequence.
//!
//! Each frame carries `[user speech, assistant text slot, assistant speech]`.
//! Per assistant word spanning frames `[s, e)`: slot `s` opens the word
//! (`BOW`, or `BC` inside a backchannel), the word's text tokens follow and
//! `PAD` fills the rest of the span. A word's span runs to the next word's
//! onset, so inter-word gaps inside an utterance are padded; frames outside
//! every assistant utterance are `SIL`.

use crate::clock::{FrameClock, FrameSpan, SampleInterval};
use crate::codec::{mock_embedding, CodecError, CodecFrame, RvqCodec};
use crate::timeline::{
    validate_timeline, Channel, ConversationTimeline, Role, TimelineViolation, UtteranceEvent, WordAlignment,
};
use crate::token::{TokenKind, TokenSlot};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Splits a word into text tokens.
pub trait Tokenizer: Sync {
    fn tokenize(&self, word: &str) -> Vec<String>;
}

impl<F> Tokenizer for F
where
    F: Fn(&str) -> Vec<String> + Sync,
{
    fn tokenize(&self, word: &str) -> Vec<String> {
        self(word)
    }
}

/// One token per word.
#[derive(Debug, Clone, Copy, Default)]
pub struct WholeWordTokenizer;

impl Tokenizer for WholeWordTokenizer {
    fn tokenize(&self, word: &str) -> Vec<String> {
        vec![word.to_string()]
    }
}

/// Mock character-level tokenizer: consecutive chunks of at most
/// `max_chars` characters. Concatenating the tokens restores the word.
#[derive(Debug, Clone, Copy)]
pub struct CharChunkTokenizer {
    pub max_chars: usize,
}

impl Default for CharChunkTokenizer {
    fn default() -> Self {
        Self { max_chars: 6 }
    }
}

impl Tokenizer for CharChunkTokenizer {
    fn tokenize(&self, word: &str) -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        chars.chunks(self.max_chars.max(1)).map(|c| c.iter().collect()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    Pretraining,
    Finetuning,
}

impl TrainingMode {
    pub fn default_sil_weight(self) -> f64 {
        match self {
            TrainingMode::Pretraining => 0.5,
            TrainingMode::Finetuning => 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuilderConfig {
    pub lookahead_frames: usize,
    pub pad_weight: f64,
    pub sil_weight: f64,
    pub bc_weight_multiplier: f64,
    pub text_weight: f64,
    pub mode: TrainingMode,
}

impl BuilderConfig {
    pub fn for_mode(mode: TrainingMode) -> Self {
        Self {
            lookahead_frames: 1,
            pad_weight: 0.75,
            sil_weight: mode.default_sil_weight(),
            bc_weight_multiplier: 50.0,
            text_weight: 1.0,
            mode,
        }
    }

    pub fn pretraining() -> Self {
        Self::for_mode(TrainingMode::Pretraining)
    }

    pub fn finetuning() -> Self {
        Self::for_mode(TrainingMode::Finetuning)
    }

    pub fn with_lookahead(mut self, k: usize) -> Self {
        self.lookahead_frames = k;
        self
    }

    pub fn is_valid(&self) -> bool {
        [self.pad_weight, self.sil_weight, self.bc_weight_multiplier, self.text_weight]
            .iter()
            .all(|w| *w >= 0.0 && w.is_finite())
    }

    pub fn weight_for(&self, kind: TokenKind) -> f64 {
        match kind {
            TokenKind::Pad => self.pad_weight,
            TokenKind::Sil => self.sil_weight,
            TokenKind::Text | TokenKind::Bow => self.text_weight,
            TokenKind::Bc => self.text_weight * self.bc_weight_multiplier,
        }
    }
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self::pretraining()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBlock {
    pub frame_index: usize,
    /// Consumed by the model, never loss-weighted.
    pub user_speech: CodecFrame,
    pub text_slot: TokenSlot,
    pub assistant_speech: CodecFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterleavedSequence {
    pub session_id: String,
    pub config: BuilderConfig,
    /// Frames of text lookahead currently applied (0 = aligned layout).
    pub lookahead_applied: usize,
    pub blocks: Vec<FrameBlock>,
}

impl InterleavedSequence {
    pub fn kinds(&self) -> Vec<TokenKind> {
        self.blocks.iter().map(|b| b.text_slot.kind).collect()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("invalid timeline: {}", join_display(.0))]
    InvalidTimeline(Vec<TimelineViolation>),
    #[error("assistant events {first} and {second} overlap")]
    AssistantOverlap { first: usize, second: usize },
    #[error("word {word:?} (event {event}) spans {available} frames but needs {needed}")]
    SpanCapacity { word: String, event: usize, needed: usize, available: usize },
    #[error("lookahead of {k} frames would move non-SIL slot at frame {frame} before frame 0")]
    LookaheadUnderflow { k: usize, frame: usize },
    #[error("lookahead {requested} does not match configured {configured} (already applied: {applied})")]
    LookaheadMismatch { requested: usize, configured: usize, applied: usize },
    #[error("lookahead removal is ambiguous for this sequence")]
    LookaheadAmbiguous,
    #[error("sequence still carries {0} frames of lookahead")]
    LookaheadPresent(usize),
    #[error("grammar violations: {}", join_display(.0))]
    Grammar(Vec<GrammarViolation>),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

fn join_display<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Frame layout of one assistant word.
#[derive(Debug, Clone, PartialEq)]
struct WordLayout {
    span: FrameSpan,
    opener: TokenKind,
    tokens: Vec<String>,
    key: String,
}

fn layout_assistant(
    timeline: &ConversationTimeline,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<WordLayout>, SequenceError> {
    let clock = timeline.clock;
    let mut asst: Vec<(usize, &UtteranceEvent)> = timeline.events_on(Channel::Assistant).collect();
    asst.sort_by_key(|(i, e)| (e.interval.start, *i));
    for w in asst.windows(2) {
        if w[0].1.interval.overlap(&w[1].1.interval) > 0 {
            return Err(SequenceError::AssistantOverlap { first: w[0].0.min(w[1].0), second: w[0].0.max(w[1].0) });
        }
    }

    let mut out = Vec::new();
    for (n, (ei, e)) in asst.iter().enumerate() {
        let mut utt = clock.to_frames(e.interval);
        if let Some((_, next)) = asst.get(n + 1) {
            // touching utterances can share a boundary frame; the later onset wins
            utt.end = utt.end.min(clock.frame_of(next.interval.start));
        }
        let opener = if e.role == Role::Backchannel { TokenKind::Bc } else { TokenKind::Bow };
        let placeholder;
        let words: &[WordAlignment] = if e.words.is_empty() {
            placeholder = [WordAlignment::new("", e.interval)];
            &placeholder
        } else {
            &e.words
        };
        let onsets: Vec<usize> = words
            .iter()
            .enumerate()
            .map(|(i, w)| if i == 0 { utt.start } else { clock.frame_of(w.interval.start) })
            .collect();
        for (wi, w) in words.iter().enumerate() {
            let start = onsets[wi];
            let end = onsets.get(wi + 1).copied().unwrap_or(utt.end);
            let tokens = if w.word.is_empty() { Vec::new() } else { tokenizer.tokenize(&w.word) };
            let available = end.saturating_sub(start);
            if available < 1 + tokens.len() {
                return Err(SequenceError::SpanCapacity {
                    word: w.word.clone(),
                    event: *ei,
                    needed: 1 + tokens.len(),
                    available,
                });
            }
            out.push(WordLayout {
                span: FrameSpan::new(start, end),
                opener,
                tokens,
                key: format!("{}/asst/{}/{}/{}", timeline.session_id, e.content_tag, wi, w.word),
            });
        }
    }
    Ok(out)
}

/// Speech code frames for the user channel; frames with no user speech
/// carry the codec's silence frame.
pub fn user_frames(
    timeline: &ConversationTimeline,
    codec: &RvqCodec,
    frames: usize,
) -> Result<Vec<CodecFrame>, CodecError> {
    let silence = codec.silence_frame();
    let mut slots: Vec<Option<CodecFrame>> = vec![None; frames];
    for (_, e) in timeline.events_on(Channel::User) {
        let span = timeline.clock.to_frames(e.interval);
        let key = format!("{}/user/{}", timeline.session_id, e.content_tag);
        let end = span.end.min(frames);
        for (offset, slot) in slots[span.start.min(end)..end].iter_mut().enumerate() {
            if slot.is_none() {
                let emb = mock_embedding(&key, offset as u64, codec.dim());
                *slot = Some(codec.encode_frame(&emb)?);
            }
        }
    }
    Ok(slots.into_iter().map(|s| s.unwrap_or_else(|| silence.clone())).collect())
}

/// Builds the aligned (lookahead-free) interleaved sequence with loss
/// weights assigned.
pub fn build_sequence(
    timeline: &ConversationTimeline,
    tokenizer: &dyn Tokenizer,
    codec: &RvqCodec,
    config: &BuilderConfig,
) -> Result<InterleavedSequence, SequenceError> {
    let violations = validate_timeline(timeline);
    if !violations.is_empty() {
        return Err(SequenceError::InvalidTimeline(violations));
    }
    let words = layout_assistant(timeline, tokenizer)?;
    let n = timeline.frame_count();
    let silence = codec.silence_frame();

    let mut slots = vec![TokenSlot::sil(); n];
    let mut asst = vec![silence.clone(); n];
    for w in &words {
        for (off, f) in (w.span.start..w.span.end).enumerate() {
            slots[f] = match off {
                0 => TokenSlot { kind: w.opener, text: None, loss_weight: 0.0 },
                i if i <= w.tokens.len() => TokenSlot::text(w.tokens[i - 1].clone()),
                _ => TokenSlot::pad(),
            };
            asst[f] = codec.encode_frame(&mock_embedding(&w.key, off as u64, codec.dim()))?;
        }
    }
    let user = user_frames(timeline, codec, n)?;

    let blocks = slots
        .into_iter()
        .zip(asst)
        .zip(user)
        .enumerate()
        .map(|(f, ((text_slot, assistant_speech), user_speech))| FrameBlock {
            frame_index: f,
            user_speech,
            text_slot,
            assistant_speech,
        })
        .collect();
    let mut seq = InterleavedSequence {
        session_id: timeline.session_id.clone(),
        config: config.clone(),
        lookahead_applied: 0,
        blocks,
    };
    assign_loss_weights(&mut seq, config);
    Ok(seq)
}

/// Moves text slots `k` frames earlier than the speech they describe.
///
/// The last `k` frames take `SIL`, except where assistant speech is still
/// playing: those frames become `PAD` so the speaking extent is preserved.
pub fn apply_text_lookahead(seq: &InterleavedSequence, k: usize) -> Result<InterleavedSequence, SequenceError> {
    if k != seq.config.lookahead_frames || seq.lookahead_applied != 0 {
        return Err(SequenceError::LookaheadMismatch {
            requested: k,
            configured: seq.config.lookahead_frames,
            applied: seq.lookahead_applied,
        });
    }
    if k == 0 {
        return Ok(seq.clone());
    }
    let kinds: Vec<&TokenSlot> = seq.blocks.iter().map(|b| &b.text_slot).collect();
    if let Some(frame) = kinds.iter().take(k).position(|s| !s.is_sil()) {
        return Err(SequenceError::LookaheadUnderflow { k, frame });
    }
    let n = kinds.len();
    let shifted: Vec<TokenSlot> = (0..n)
        .map(|f| {
            let incoming = kinds.get(f + k).map_or_else(TokenSlot::sil, |s| (*s).clone());
            if incoming.is_sil() && !kinds[f].is_sil() {
                TokenSlot::pad()
            } else {
                incoming
            }
        })
        .collect();
    let mut out = seq.clone();
    for (b, s) in out.blocks.iter_mut().zip(shifted) {
        b.text_slot = s;
    }
    out.lookahead_applied = k;
    let cfg = out.config.clone();
    assign_loss_weights(&mut out, &cfg);
    Ok(out)
}

/// Inverse of [`apply_text_lookahead`].
///
/// A silent gap of at most `k` frames before an onset shifts to the same
/// slots as in-utterance padding, so such gaps come back as `PAD`. The
/// result is exact whenever every gap between spans is longer than `k`.
/// [`SequenceError::LookaheadAmbiguous`] when no preimage reproduces `seq`.
pub fn remove_text_lookahead(seq: &InterleavedSequence) -> Result<InterleavedSequence, SequenceError> {
    let k = seq.lookahead_applied;
    if k == 0 {
        return Ok(seq.clone());
    }
    let n = seq.blocks.len();
    let shifted: Vec<&TokenSlot> = seq.blocks.iter().map(|b| &b.text_slot).collect();
    // Solve left to right: original[f + k] follows from shifted[f] and
    // original[f]. A PAD over a speaking frame is either real padding or
    // fill over silence. SIL at shifted[t] forces SIL at original[t], and
    // PAD cannot follow SIL; otherwise prefer padding.
    let mut orig: Vec<TokenSlot> = vec![TokenSlot::sil(); n];
    for f in 0..n.saturating_sub(k) {
        let t = f + k;
        orig[t] = if shifted[f].kind == TokenKind::Pad && !orig[f].is_sil() {
            if shifted[t].is_sil() || orig[t - 1].is_sil() {
                TokenSlot::sil()
            } else {
                TokenSlot::pad()
            }
        } else {
            shifted[f].clone()
        };
    }
    let mut candidate = seq.clone();
    for (b, s) in candidate.blocks.iter_mut().zip(orig) {
        b.text_slot = s;
    }
    candidate.lookahead_applied = 0;
    let cfg = candidate.config.clone();
    assign_loss_weights(&mut candidate, &cfg);
    let reapplied = apply_text_lookahead(&candidate, k)?;
    if reapplied.kinds() == seq.kinds()
        && reapplied.blocks.iter().zip(&seq.blocks).all(|(a, b)| a.text_slot.text == b.text_slot.text)
    {
        Ok(candidate)
    } else {
        Err(SequenceError::LookaheadAmbiguous)
    }
}

/// Sets every text slot's weight from its kind and the config.
pub fn assign_loss_weights(seq: &mut InterleavedSequence, config: &BuilderConfig) {
    for b in &mut seq.blocks {
        b.text_slot.loss_weight = config.weight_for(b.text_slot.kind);
    }
}

// ---- grammar ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrammarIssue {
    /// TEXT or PAD opening a speaking span.
    ContentWithoutOpener,
    /// TEXT following PAD inside one word.
    TextAfterPad,
    /// Payload present iff TEXT, weight nonnegative.
    MalformedSlot,
    /// Frame indices must run 0, 1, 2, ...
    FrameIndex { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrammarViolation {
    pub frame: usize,
    pub issue: GrammarIssue,
}

impl fmt::Display for GrammarViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "frame {}: {:?}", self.frame, self.issue)
    }
}

/// Checks `((BOW|BC) TEXT* PAD*)+` inside every maximal non-SIL span.
pub fn validate_kinds(kinds: &[TokenKind]) -> Vec<GrammarViolation> {
    let mut out = Vec::new();
    let mut prev = TokenKind::Sil;
    for (f, &k) in kinds.iter().enumerate() {
        let issue = match (prev, k) {
            (TokenKind::Sil, TokenKind::Text | TokenKind::Pad) => Some(GrammarIssue::ContentWithoutOpener),
            (TokenKind::Pad, TokenKind::Text) => Some(GrammarIssue::TextAfterPad),
            _ => None,
        };
        if let Some(issue) = issue {
            out.push(GrammarViolation { frame: f, issue });
        }
        prev = k;
    }
    out
}

pub fn validate_sequence(seq: &InterleavedSequence) -> Vec<GrammarViolation> {
    let mut out = Vec::new();
    for (i, b) in seq.blocks.iter().enumerate() {
        if b.frame_index != i {
            out.push(GrammarViolation {
                frame: i,
                issue: GrammarIssue::FrameIndex { expected: i, got: b.frame_index },
            });
        }
        if !b.text_slot.is_well_formed() {
            out.push(GrammarViolation { frame: i, issue: GrammarIssue::MalformedSlot });
        }
    }
    out.extend(validate_kinds(&seq.kinds()));
    out.sort_by_key(|v| v.frame);
    out
}

/// Frames where BC appears while already speaking. Legal, but worth flagging:
/// backchannels are expected as listener responses.
pub fn self_backchannel_frames(kinds: &[TokenKind]) -> Vec<usize> {
    kinds
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(f, k)| **k == TokenKind::Bc && kinds[f - 1] != TokenKind::Sil)
        .map(|(f, _)| f)
        .collect()
}

// ---- inversion ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordOnset {
    pub frame: usize,
    pub opener: TokenKind,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakingSpan {
    pub frames: FrameSpan,
    pub opener: TokenKind,
}

/// Frame-resolution skeleton recovered from a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SequenceSkeleton {
    pub onsets: Vec<WordOnset>,
    pub spans: Vec<SpeakingSpan>,
}

impl SequenceSkeleton {
    pub fn onset_frames(&self) -> Vec<usize> {
        self.onsets.iter().map(|o| o.frame).collect()
    }

    pub fn span_extents(&self) -> Vec<FrameSpan> {
        self.spans.iter().map(|s| s.frames).collect()
    }

    /// Assistant utterance events at frame resolution. Words run from their
    /// onset to the next onset (or span end); BC-opened spans become
    /// backchannels. `tags` supplies a content tag per span.
    pub fn to_events(&self, clock: &FrameClock, mut tags: impl FnMut(&SpeakingSpan) -> String) -> Vec<UtteranceEvent> {
        let to_iv = |s: usize, e: usize| SampleInterval {
            start: clock.frame_start_sample(s),
            end: clock.frame_start_sample(e),
        };
        self.spans
            .iter()
            .map(|span| {
                let inside: Vec<&WordOnset> = self.onsets.iter().filter(|o| span.frames.contains(o.frame)).collect();
                let words = inside
                    .iter()
                    .enumerate()
                    .map(|(i, o)| {
                        let end = inside.get(i + 1).map_or(span.frames.end, |n| n.frame);
                        WordAlignment::new(o.tokens.concat(), to_iv(o.frame, end))
                    })
                    .collect();
                UtteranceEvent {
                    channel: Channel::Assistant,
                    role: if span.opener == TokenKind::Bc { Role::Backchannel } else { Role::Speech },
                    interval: to_iv(span.frames.start, span.frames.end),
                    words,
                    content_tag: tags(span),
                }
            })
            .collect()
    }
}

/// Maximal non-SIL runs.
pub fn speaking_runs(kinds: &[TokenKind]) -> Vec<FrameSpan> {
    let mut out = Vec::new();
    let mut start = None;
    for (f, k) in kinds.iter().enumerate() {
        match (start, *k == TokenKind::Sil) {
            (None, false) => start = Some(f),
            (Some(s), true) => {
                out.push(FrameSpan::new(s, f));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(FrameSpan::new(s, kinds.len()));
    }
    out
}

/// Recovers word onsets and speaking spans from an aligned sequence.
pub fn invert_slots(slots: &[TokenSlot]) -> Result<SequenceSkeleton, SequenceError> {
    let kinds: Vec<TokenKind> = slots.iter().map(|s| s.kind).collect();
    let violations = validate_kinds(&kinds);
    if !violations.is_empty() {
        return Err(SequenceError::Grammar(violations));
    }
    let mut onsets: Vec<WordOnset> = Vec::new();
    for (f, s) in slots.iter().enumerate() {
        match s.kind {
            k if k.is_opener() => onsets.push(WordOnset { frame: f, opener: k, tokens: Vec::new() }),
            TokenKind::Text => {
                let text = s.text.clone().unwrap_or_default();
                onsets.last_mut().expect("grammar guarantees an opener").tokens.push(text);
            }
            _ => {}
        }
    }
    let spans =
        speaking_runs(&kinds).into_iter().map(|frames| SpeakingSpan { frames, opener: kinds[frames.start] }).collect();
    Ok(SequenceSkeleton { onsets, spans })
}

pub fn invert_sequence(seq: &InterleavedSequence) -> Result<SequenceSkeleton, SequenceError> {
    if seq.lookahead_applied != 0 {
        return Err(SequenceError::LookaheadPresent(seq.lookahead_applied));
    }
    let slots: Vec<TokenSlot> = seq.blocks.iter().map(|b| b.text_slot.clone()).collect();
    invert_slots(&slots)
}

// ---- Sequence JSONL ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotRecord {
    pub kind: TokenKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub loss_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockRecord {
    pub f: usize,
    pub text_slot: SlotRecord,
    pub user_codes: Vec<u32>,
    pub asst_codes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaderRecord {
    pub session_id: String,
    pub config: BuilderConfig,
    pub lookahead: usize,
}

/// Run-length encoded state trace entry: (state letter, run length).
pub type StateRun = (String, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagRecord {
    pub frame: usize,
    pub tag: String,
}

/// Closing record of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrailerRecord {
    pub state_rle: Vec<StateRun>,
    pub coercions: usize,
    pub segment_tags: Vec<TagRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SequenceLine {
    Header(HeaderRecord),
    Block(BlockRecord),
    Trailer { trailer: TrailerRecord },
}

impl From<&FrameBlock> for BlockRecord {
    fn from(b: &FrameBlock) -> Self {
        BlockRecord {
            f: b.frame_index,
            text_slot: SlotRecord {
                kind: b.text_slot.kind,
                text: b.text_slot.text.clone(),
                loss_w: b.text_slot.loss_weight,
            },
            user_codes: b.user_speech.codes.clone(),
            asst_codes: b.assistant_speech.codes.clone(),
        }
    }
}

impl From<BlockRecord> for FrameBlock {
    fn from(r: BlockRecord) -> Self {
        FrameBlock {
            frame_index: r.f,
            user_speech: CodecFrame::new(r.user_codes),
            text_slot: TokenSlot { kind: r.text_slot.kind, text: r.text_slot.text, loss_weight: r.text_slot.loss_w },
            assistant_speech: CodecFrame::new(r.asst_codes),
        }
    }
}

impl InterleavedSequence {
    pub fn header(&self) -> HeaderRecord {
        HeaderRecord {
            session_id: self.session_id.clone(),
            config: self.config.clone(),
            lookahead: self.lookahead_applied,
        }
    }

    /// Header line followed by one line per block, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header()).expect("header serializes");
        out.push('\n');
        for b in &self.blocks {
            out.push_str(&serde_json::to_string(&BlockRecord::from(b)).expect("block serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum SequenceIoError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Structure { line: usize, message: String },
}

impl SequenceIoError {
    pub fn line(&self) -> usize {
        match self {
            Self::Json { line, .. } | Self::Structure { line, .. } => *line,
        }
    }
}

/// One session as read back from Sequence JSONL.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEntry {
    pub sequence: InterleavedSequence,
    pub trailer: Option<TrailerRecord>,
}

/// Parses a stream of sessions: each header line starts a new session,
/// blocks follow, and an optional trailer closes it.
pub fn read_sequences_jsonl(text: &str) -> Result<Vec<SequenceEntry>, SequenceIoError> {
    let mut out: Vec<SequenceEntry> = Vec::new();
    let mut closed = true;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: SequenceLine = serde_json::from_str(raw).map_err(|source| SequenceIoError::Json { line, source })?;
        match rec {
            SequenceLine::Header(h) => {
                out.push(SequenceEntry {
                    sequence: InterleavedSequence {
                        session_id: h.session_id,
                        config: h.config,
                        lookahead_applied: h.lookahead,
                        blocks: Vec::new(),
                    },
                    trailer: None,
                });
                closed = false;
            }
            SequenceLine::Block(b) => match out.last_mut() {
                Some(entry) if !closed => entry.sequence.blocks.push(b.into()),
                _ => return Err(SequenceIoError::Structure { line, message: "frame block outside a session".into() }),
            },
            SequenceLine::Trailer { trailer } => match out.last_mut() {
                Some(entry) if !closed => {
                    entry.trailer = Some(trailer);
                    closed = true;
                }
                _ => return Err(SequenceIoError::Structure { line, message: "trailer outside a session".into() }),
            },
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Codebook;

    fn tiny_codec() -> RvqCodec {
        RvqCodec::seeded_random(16, 8, 4, 11).unwrap()
    }

    /// Timeline with one assistant word covering frames [s, e).
    fn one_word(word: &str, s: u64, e: u64, role: Role) -> ConversationTimeline {
        let mut t = ConversationTimeline::new("t", FrameClock::default());
        let iv = SampleInterval::new(s * 1920, e * 1920).unwrap();
        t.events.push(UtteranceEvent {
            channel: Channel::Assistant,
            role,
            interval: iv,
            words: vec![WordAlignment::new(word, iv)],
            content_tag: "c".into(),
        });
        t
    }

    fn kinds_of(seq: &InterleavedSequence) -> Vec<String> {
        seq.blocks.iter().map(|b| b.text_slot.to_string()).collect()
    }

    #[test]
    fn silence_only() {
        let mut t = ConversationTimeline::new("t", FrameClock::default());
        t.events.push(UtteranceEvent {
            channel: Channel::User,
            role: Role::Speech,
            interval: SampleInterval::new(0, 3 * 1920).unwrap(),
            words: vec![],
            content_tag: "u".into(),
        });
        let codec = tiny_codec();
        let seq = build_sequence(&t, &WholeWordTokenizer, &codec, &BuilderConfig::default()).unwrap();
        assert_eq!(kinds_of(&seq), ["SIL", "SIL", "SIL"]);
        assert!(seq.blocks.iter().all(|b| b.assistant_speech == codec.silence_frame()));
        assert!(seq.blocks.iter().all(|b| b.user_speech != codec.silence_frame()));
    }

    #[test]
    fn one_token_word_layout() {
        let t = one_word("hi", 2, 4, Role::Speech);
        let seq = build_sequence(&t, &WholeWordTokenizer, &tiny_codec(), &BuilderConfig::default()).unwrap();
        assert_eq!(kinds_of(&seq), ["SIL", "SIL", "BOW", "TEXT(hi)"]);
    }

    #[test]
    fn two_token_word_layout_with_fill() {
        let t = one_word("hello", 2, 6, Role::Speech);
        let tok = |w: &str| vec![w[..3].to_string(), w[3..].to_string()];
        let seq = build_sequence(&t, &tok, &tiny_codec(), &BuilderConfig::default()).unwrap();
        assert_eq!(kinds_of(&seq), ["SIL", "SIL", "BOW", "TEXT(hel)", "TEXT(lo)", "PAD"]);
    }

    #[test]
    fn backchannel_opens_with_bc() {
        let t = one_word("yeah", 1, 3, Role::Backchannel);
        let seq = build_sequence(&t, &WholeWordTokenizer, &tiny_codec(), &BuilderConfig::default()).unwrap();
        assert_eq!(kinds_of(&seq), ["SIL", "BC", "TEXT(yeah)"]);
        assert_eq!(seq.blocks[1].text_slot.loss_weight, 50.0);
    }

    #[test]
    fn span_too_short_names_word() {
        let t = one_word("hi", 2, 3, Role::Speech);
        let err = build_sequence(&t, &WholeWordTokenizer, &tiny_codec(), &BuilderConfig::default()).unwrap_err();
        assert_eq!(err, SequenceError::SpanCapacity { word: "hi".into(), event: 0, needed: 2, available: 1 });
        assert!(err.to_string().contains("\"hi\""));
    }

    #[test]
    fn overlapping_assistant_events_rejected() {
        let mut t = one_word("one", 0, 4, Role::Speech);
        let mut other = one_word("two", 2, 6, Role::Backchannel).events.remove(0);
        other.content_tag = "d".into();
        t.events.push(other);
        assert!(matches!(
            build_sequence(&t, &WholeWordTokenizer, &tiny_codec(), &BuilderConfig::default()),
            Err(SequenceError::AssistantOverlap { first: 0, second: 1 })
        ));
        t.events[1].role = Role::Speech;
        assert!(matches!(
            build_sequence(&t, &WholeWordTokenizer, &tiny_codec(), &BuilderConfig::default()),
            Err(SequenceError::InvalidTimeline(_))
        ));
    }

    #[test]
    fn lookahead_examples() {
        let t = one_word("hi", 2, 4, Role::Speech);
        let codec = tiny_codec();
        let base =
            build_sequence(&t, &WholeWordTokenizer, &codec, &BuilderConfig::default().with_lookahead(0)).unwrap();
        assert_eq!(apply_text_lookahead(&base, 0).unwrap(), base);

        let base = build_sequence(&t, &WholeWordTokenizer, &codec, &BuilderConfig::default()).unwrap();
        let shifted = apply_text_lookahead(&base, 1).unwrap();
        assert_eq!(kinds_of(&shifted), ["SIL", "BOW", "TEXT(hi)", "PAD"]);
        for (a, b) in shifted.blocks.iter().zip(&base.blocks) {
            assert_eq!(a.assistant_speech, b.assistant_speech);
            assert_eq!(a.user_speech, b.user_speech);
        }
        assert_eq!(remove_text_lookahead(&shifted).unwrap(), base);

        let t0 = one_word("hi", 0, 2, Role::Speech);
        let base0 = build_sequence(&t0, &WholeWordTokenizer, &codec, &BuilderConfig::default()).unwrap();
        assert_eq!(apply_text_lookahead(&base0, 1), Err(SequenceError::LookaheadUnderflow { k: 1, frame: 0 }));
        assert!(matches!(apply_text_lookahead(&base, 2), Err(SequenceError::LookaheadMismatch { .. })));
    }

    #[test]
    fn loss_weight_table() {
        let pre = BuilderConfig::pretraining();
        let fine = BuilderConfig::finetuning();
        assert_eq!(pre.weight_for(TokenKind::Pad), 0.75);
        assert_eq!(pre.weight_for(TokenKind::Sil), 0.5);
        assert_eq!(fine.weight_for(TokenKind::Sil), 0.25);
        assert_eq!(pre.weight_for(TokenKind::Bc), 50.0);
        assert_eq!(pre.weight_for(TokenKind::Text), 1.0);
        assert_eq!(pre.weight_for(TokenKind::Bow), 1.0);
    }

    #[test]
    fn grammar_examples() {
        use TokenKind::*;
        assert!(validate_kinds(&[Sil, Bow, Text, Sil]).is_empty());
        assert_eq!(
            validate_kinds(&[Sil, Text, Sil]),
            vec![GrammarViolation { frame: 1, issue: GrammarIssue::ContentWithoutOpener }]
        );
        assert_eq!(
            validate_kinds(&[Bow, Pad, Text]),
            vec![GrammarViolation { frame: 2, issue: GrammarIssue::TextAfterPad }]
        );
        assert_eq!(self_backchannel_frames(&[Sil, Bc, Text, Bc, Pad]), vec![3]);
    }

    #[test]
    fn inversion_examples() {
        let sil = vec![TokenSlot::sil(); 5];
        assert_eq!(invert_slots(&sil).unwrap(), SequenceSkeleton::default());

        let t = one_word("hi", 2, 4, Role::Speech);
        let seq = build_sequence(&t, &WholeWordTokenizer, &tiny_codec(), &BuilderConfig::default()).unwrap();
        let sk = invert_sequence(&seq).unwrap();
        assert_eq!(sk.onset_frames(), vec![2]);
        assert_eq!(sk.span_extents(), vec![FrameSpan::new(2, 4)]);

        let slots = vec![TokenSlot::bow(), TokenSlot::text("a"), TokenSlot::bow(), TokenSlot::text("b")];
        let sk = invert_slots(&slots).unwrap();
        assert_eq!(sk.onset_frames(), vec![0, 2]);
        assert_eq!(sk.span_extents(), vec![FrameSpan::new(0, 4)]);

        assert!(matches!(invert_slots(&[TokenSlot::sil(), TokenSlot::text("x")]), Err(SequenceError::Grammar(_))));
    }

    #[test]
    fn chunk_tokenizer_concatenates_back() {
        let tok = CharChunkTokenizer { max_chars: 3 };
        assert_eq!(tok.tokenize("weather"), vec!["wea", "the", "r"]);
        assert_eq!(tok.tokenize("weather").concat(), "weather");
    }

    #[test]
    fn sequence_jsonl_round_trip() {
        let codec =
            RvqCodec::new(FrameClock::default(), vec![Codebook::from_rows(&[vec![0.0], vec![1.0]]).unwrap()]).unwrap();
        let t = one_word("hi", 1, 3, Role::Speech);
        let seq = build_sequence(&t, &WholeWordTokenizer, &codec, &BuilderConfig::finetuning()).unwrap();
        let text = seq.to_jsonl();
        let first_block = text.lines().nth(1).unwrap();
        assert_eq!(
            first_block,
            r#"{"f":0,"text_slot":{"kind":"SIL","loss_w":0.25},"user_codes":[0],"asst_codes":[0]}"#
        );
        let back = read_sequences_jsonl(&text).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].sequence, seq);
        assert!(back[0].trailer.is_none());

        let orphan = r#"{"f":0,"text_slot":{"kind":"SIL","loss_w":0.25},"user_codes":[0],"asst_codes":[0]}"#;
        assert_eq!(read_sequences_jsonl(orphan).unwrap_err().line(), 1);
        let bad = format!("{}\n{{\"f\":1,\"oops\":2}}\n", text.lines().next().unwrap());
        assert_eq!(read_sequences_jsonl(&bad).unwrap_err().line(), 2);
    }
}
