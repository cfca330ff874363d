//! Dual-channel conversation timelines and their JSONL form.

use crate::clock::{overlap_duration, ClockError, FrameClock, SampleInterval};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    User,
    Assistant,
}

impl Channel {
    pub fn other(self) -> Channel {
        match self {
            Channel::User => Channel::Assistant,
            Channel::Assistant => Channel::User,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::User => "user",
            Channel::Assistant => "assistant",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Conversational role of an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Speech,
    Backchannel,
    Interrupt,
    Simultaneous,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Speech, Role::Backchannel, Role::Interrupt, Role::Simultaneous];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Speech => "speech",
            Role::Backchannel => "backchannel",
            Role::Interrupt => "interrupt",
            Role::Simultaneous => "simultaneous",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WordAlignment {
    pub word: String,
    pub interval: SampleInterval,
}

impl WordAlignment {
    pub fn new(word: impl Into<String>, interval: SampleInterval) -> Self {
        Self { word: word.into(), interval }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UtteranceEvent {
    pub channel: Channel,
    pub role: Role,
    pub interval: SampleInterval,
    pub words: Vec<WordAlignment>,
    /// Opaque identifier linking content across segments.
    pub content_tag: String,
}

impl UtteranceEvent {
    pub fn transcript(&self) -> String {
        self.words.iter().map(|w| w.word.as_str()).collect::<Vec<_>>().join(" ")
    }

    /// Shift the utterance and all its words by `delta` samples.
    pub fn shift(&mut self, delta: i64) {
        self.interval = self.interval.shifted(delta);
        for w in &mut self.words {
            w.interval = w.interval.shifted(delta);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversationTimeline {
    pub session_id: String,
    pub clock: FrameClock,
    pub events: Vec<UtteranceEvent>,
}

impl ConversationTimeline {
    pub fn new(session_id: impl Into<String>, clock: FrameClock) -> Self {
        Self { session_id: session_id.into(), clock, events: Vec::new() }
    }

    pub fn events_on(&self, channel: Channel) -> impl Iterator<Item = (usize, &UtteranceEvent)> {
        self.events.iter().enumerate().filter(move |(_, e)| e.channel == channel)
    }

    /// Last sample covered by any event.
    pub fn end_sample(&self) -> u64 {
        self.events.iter().map(|e| e.interval.end).max().unwrap_or(0)
    }

    /// Number of frames needed to cover every event.
    pub fn frame_count(&self) -> usize {
        self.end_sample().div_ceil(self.clock.samples_per_frame()) as usize
    }

    /// Sort events by (start, channel) so serialization is canonical.
    pub fn sort_events(&mut self) {
        self.events.sort_by_key(|e| (e.interval.start, e.channel));
    }
}

/// A single broken timeline invariant, addressed by event (and word) index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimelineViolation {
    ReversedInterval { event: usize, word: Option<usize> },
    WordOutsideUtterance { event: usize, word: usize },
    WordsOutOfOrder { event: usize, word: usize },
    SameChannelOverlap { first: usize, second: usize, samples: u64 },
}

impl fmt::Display for TimelineViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ReversedInterval { event, word: None } => {
                write!(f, "event {event}: empty or reversed interval")
            }
            Self::ReversedInterval { event, word: Some(w) } => {
                write!(f, "event {event} word {w}: empty or reversed interval")
            }
            Self::WordOutsideUtterance { event, word } => {
                write!(f, "event {event} word {word}: outside utterance interval")
            }
            Self::WordsOutOfOrder { event, word } => {
                write!(f, "event {event} word {word}: overlaps or precedes previous word")
            }
            Self::SameChannelOverlap { first, second, samples } => {
                write!(f, "events {first} and {second}: same-channel speech overlap of {samples} samples")
            }
        }
    }
}

/// Reports every invariant violation; an empty list means the timeline is valid.
pub fn validate_timeline(t: &ConversationTimeline) -> Vec<TimelineViolation> {
    let mut out = Vec::new();
    for (ei, e) in t.events.iter().enumerate() {
        if !e.interval.is_valid() {
            out.push(TimelineViolation::ReversedInterval { event: ei, word: None });
        }
        let mut prev_end: Option<u64> = None;
        for (wi, w) in e.words.iter().enumerate() {
            if !w.interval.is_valid() {
                out.push(TimelineViolation::ReversedInterval { event: ei, word: Some(wi) });
                continue;
            }
            if !e.interval.contains(&w.interval) {
                out.push(TimelineViolation::WordOutsideUtterance { event: ei, word: wi });
            }
            if prev_end.is_some_and(|p| w.interval.start < p) {
                out.push(TimelineViolation::WordsOutOfOrder { event: ei, word: wi });
            }
            prev_end = Some(w.interval.end);
        }
    }
    for i in 0..t.events.len() {
        let a = &t.events[i];
        if a.role != Role::Speech || !a.interval.is_valid() {
            continue;
        }
        for j in i + 1..t.events.len() {
            let b = &t.events[j];
            if b.role != Role::Speech || b.channel != a.channel || !b.interval.is_valid() {
                continue;
            }
            let ov = overlap_duration(a.interval, b.interval);
            if ov > 0 {
                out.push(TimelineViolation::SameChannelOverlap { first: i, second: j, samples: ov });
            }
        }
    }
    out
}

// ---- Timeline JSONL ----

#[derive(Debug, Error)]
pub enum TimelineIoError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {source}")]
    Clock {
        line: usize,
        #[source]
        source: ClockError,
    },
}

impl TimelineIoError {
    pub fn line(&self) -> usize {
        match self {
            Self::Json { line, .. } | Self::Clock { line, .. } => *line,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WordRecord {
    w: String,
    start_sample: u64,
    end_sample: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRecord {
    channel: Channel,
    role: Role,
    start_sample: u64,
    end_sample: u64,
    content_tag: String,
    words: Vec<WordRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimelineRecord {
    session_id: String,
    sample_rate: u32,
    frame_rate: f64,
    events: Vec<EventRecord>,
}

impl From<&ConversationTimeline> for TimelineRecord {
    fn from(t: &ConversationTimeline) -> Self {
        TimelineRecord {
            session_id: t.session_id.clone(),
            sample_rate: t.clock.sample_rate(),
            frame_rate: t.clock.frame_rate(),
            events: t
                .events
                .iter()
                .map(|e| EventRecord {
                    channel: e.channel,
                    role: e.role,
                    start_sample: e.interval.start,
                    end_sample: e.interval.end,
                    content_tag: e.content_tag.clone(),
                    words: e
                        .words
                        .iter()
                        .map(|w| WordRecord {
                            w: w.word.clone(),
                            start_sample: w.interval.start,
                            end_sample: w.interval.end,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl ConversationTimeline {
    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&TimelineRecord::from(self)).expect("timeline serializes")
    }

    /// Parses one line. Intervals are taken as written; run
    /// [`validate_timeline`] to check them.
    pub fn from_json_line(line: &str, line_no: usize) -> Result<Self, TimelineIoError> {
        let rec: TimelineRecord =
            serde_json::from_str(line).map_err(|source| TimelineIoError::Json { line: line_no, source })?;
        let clock = FrameClock::new(rec.frame_rate, rec.sample_rate)
            .map_err(|source| TimelineIoError::Clock { line: line_no, source })?;
        let events = rec
            .events
            .into_iter()
            .map(|e| UtteranceEvent {
                channel: e.channel,
                role: e.role,
                interval: SampleInterval { start: e.start_sample, end: e.end_sample },
                content_tag: e.content_tag,
                words: e
                    .words
                    .into_iter()
                    .map(|w| WordAlignment {
                        word: w.w,
                        interval: SampleInterval { start: w.start_sample, end: w.end_sample },
                    })
                    .collect(),
            })
            .collect();
        Ok(ConversationTimeline { session_id: rec.session_id, clock, events })
    }
}

/// Serializes timelines one per line, newline-terminated.
pub fn write_timelines_jsonl(timelines: &[ConversationTimeline]) -> String {
    let mut out = String::new();
    for t in timelines {
        out.push_str(&t.to_json_line());
        out.push('\n');
    }
    out
}

/// Parses Timeline JSONL; blank lines are skipped, line numbers are 1-based.
pub fn read_timelines_jsonl(text: &str) -> Result<Vec<ConversationTimeline>, TimelineIoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| ConversationTimeline::from_json_line(l, i + 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: u64, b: u64) -> SampleInterval {
        SampleInterval::new(a, b).unwrap()
    }

    fn ev(channel: Channel, role: Role, a: u64, b: u64) -> UtteranceEvent {
        UtteranceEvent { channel, role, interval: iv(a, b), words: vec![], content_tag: "t".into() }
    }

    #[test]
    fn empty_timeline_is_valid() {
        let t = ConversationTimeline::new("s", FrameClock::default());
        assert!(validate_timeline(&t).is_empty());
    }

    #[test]
    fn same_channel_speech_overlap_reported() {
        let mut t = ConversationTimeline::new("s", FrameClock::default());
        t.events.push(ev(Channel::Assistant, Role::Speech, 0, 100));
        t.events.push(ev(Channel::Assistant, Role::Speech, 50, 150));
        let v = validate_timeline(&t);
        assert_eq!(v, vec![TimelineViolation::SameChannelOverlap { first: 0, second: 1, samples: 50 }]);
    }

    #[test]
    fn cross_channel_overlap_is_fine() {
        let mut t = ConversationTimeline::new("s", FrameClock::default());
        t.events.push(ev(Channel::Assistant, Role::Speech, 0, 100));
        t.events.push(ev(Channel::User, Role::Speech, 50, 150));
        assert!(validate_timeline(&t).is_empty());
    }

    #[test]
    fn word_outside_utterance_reported() {
        let mut t = ConversationTimeline::new("s", FrameClock::default());
        let mut e = ev(Channel::Assistant, Role::Speech, 0, 100);
        e.words.push(WordAlignment::new("long", iv(0, 200)));
        t.events.push(e);
        assert_eq!(validate_timeline(&t), vec![TimelineViolation::WordOutsideUtterance { event: 0, word: 0 }]);
    }

    #[test]
    fn reversed_and_unordered_reported() {
        let mut t = ConversationTimeline::new("s", FrameClock::default());
        let mut e = ev(Channel::User, Role::Speech, 0, 1000);
        e.words.push(WordAlignment::new("b", iv(500, 600)));
        e.words.push(WordAlignment::new("a", iv(100, 200)));
        t.events.push(e);
        t.events.push(UtteranceEvent {
            interval: SampleInterval { start: 9, end: 3 },
            ..ev(Channel::User, Role::Backchannel, 0, 1)
        });
        let v = validate_timeline(&t);
        assert!(v.contains(&TimelineViolation::WordsOutOfOrder { event: 0, word: 1 }));
        assert!(v.contains(&TimelineViolation::ReversedInterval { event: 1, word: None }));
    }

    #[test]
    fn jsonl_round_trip_and_field_names() {
        let mut t = ConversationTimeline::new("sess-1", FrameClock::default());
        let mut e = ev(Channel::Assistant, Role::Backchannel, 1920, 4800);
        e.words.push(WordAlignment::new("yeah", iv(1920, 4800)));
        t.events.push(e);
        let line = t.to_json_line();
        assert_eq!(
            line,
            r#"{"session_id":"sess-1","sample_rate":24000,"frame_rate":12.5,"events":[{"channel":"assistant","role":"backchannel","start_sample":1920,"end_sample":4800,"content_tag":"t","words":[{"w":"yeah","start_sample":1920,"end_sample":4800}]}]}"#
        );
        let back = ConversationTimeline::from_json_line(&line, 1).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn unknown_fields_rejected_with_line_number() {
        let text = "\n{\"session_id\":\"a\",\"sample_rate\":24000,\"frame_rate\":12.5,\"events\":[],\"extra\":1}\n";
        let err = read_timelines_jsonl(text).unwrap_err();
        assert_eq!(err.line(), 2);
    }
}
