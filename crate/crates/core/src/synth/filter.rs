//! Corpus filtering and noise mixing.

use super::tts::MockTts;
use crate::clock::overlap_duration;
use crate::timeline::{ConversationTimeline, Role};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    #[serde(rename = "audio-transcript-ratio")]
    AudioTranscriptRatio,
    #[serde(rename = "non-overlapping-backchannel")]
    NonOverlappingBackchannel,
    #[serde(rename = "duplicate")]
    Duplicate,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::AudioTranscriptRatio => "audio-transcript-ratio",
            RejectReason::NonOverlappingBackchannel => "non-overlapping-backchannel",
            RejectReason::Duplicate => "duplicate",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stateful filter: the duplicate rule remembers every timeline it has seen.
#[derive(Debug, Clone)]
pub struct TimelineFilter {
    pub tts: MockTts,
    /// Maximum utterance duration relative to its expected transcript duration.
    pub max_ratio: f64,
    seen: HashSet<[u8; 32]>,
}

impl Default for TimelineFilter {
    fn default() -> Self {
        Self::new(MockTts::default())
    }
}

/// Hash of the timeline's events, ignoring the session id so that the same
/// conversation under two ids counts as a duplicate.
pub fn content_hash(timeline: &ConversationTimeline) -> [u8; 32] {
    let mut anon = timeline.clone();
    anon.session_id.clear();
    Sha256::digest(anon.to_json_line().as_bytes()).into()
}

impl TimelineFilter {
    pub fn new(tts: MockTts) -> Self {
        Self { tts, max_ratio: 3.0, seen: HashSet::new() }
    }

    /// Rules that do not depend on previously seen timelines.
    pub fn stateless_reasons(&self, timeline: &ConversationTimeline) -> Vec<RejectReason> {
        let clock = &timeline.clock;
        let mut reasons = Vec::new();
        let too_long = timeline.events.iter().any(|e| {
            let expected = self.tts.expected_ms(&e.transcript());
            let actual = clock.samples_to_seconds(e.interval.len()) * 1000.0;
            expected > 0.0 && actual > self.max_ratio * expected
        });
        if too_long {
            reasons.push(RejectReason::AudioTranscriptRatio);
        }
        let orphan_bc = timeline.events.iter().any(|bc| {
            bc.role == Role::Backchannel
                && !timeline.events.iter().any(|o| {
                    o.channel != bc.channel
                        && o.role != Role::Backchannel
                        && overlap_duration(o.interval, bc.interval) > 0
                })
        });
        if orphan_bc {
            reasons.push(RejectReason::NonOverlappingBackchannel);
        }
        reasons
    }

    /// Returns `(kept, reasons)`. A timeline is recorded as seen even when
    /// it is rejected for other reasons.
    pub fn check(&mut self, timeline: &ConversationTimeline) -> (bool, Vec<RejectReason>) {
        let mut reasons = self.stateless_reasons(timeline);
        if !self.seen.insert(content_hash(timeline)) {
            reasons.push(RejectReason::Duplicate);
        }
        (reasons.is_empty(), reasons)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub snr_db_min: f64,
    pub snr_db_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { snr_db_min: -30.0, snr_db_max: 6.0 }
    }
}

impl AugmentConfig {
    pub fn is_valid(&self) -> bool {
        self.snr_db_min.is_finite() && self.snr_db_max.is_finite() && self.snr_db_min <= self.snr_db_max
    }

    pub fn sample_snr<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        rng.random_range(self.snr_db_min..=self.snr_db_max)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("RMS values must be positive and finite (signal {signal}, noise {noise})")]
pub struct MixError {
    pub signal: f64,
    pub noise: f64,
}

/// Noise gain `g` with `20·log10(signal / (g·noise)) = target_snr_db`.
pub fn mix_at_snr(signal_rms: f64, noise_rms: f64, target_snr_db: f64) -> Result<f64, MixError> {
    let ok = |x: f64| x.is_finite() && x > 0.0;
    if !ok(signal_rms) || !ok(noise_rms) {
        return Err(MixError { signal: signal_rms, noise: noise_rms });
    }
    Ok(signal_rms / noise_rms * 10f64.powf(-target_snr_db / 20.0))
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// SNR in dB of `signal` against `noise` scaled by `gain`.
pub fn achieved_snr_db(signal: &[f64], noise: &[f64], gain: f64) -> f64 {
    20.0 * (rms(signal) / (gain * rms(noise))).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{FrameClock, SampleInterval};
    use crate::timeline::{Channel, UtteranceEvent, WordAlignment};
    use approx::assert_abs_diff_eq;

    fn ev(channel: Channel, role: Role, text: &str, s: u64, e: u64) -> UtteranceEvent {
        let iv = SampleInterval { start: s, end: e };
        UtteranceEvent {
            channel,
            role,
            interval: iv,
            words: vec![WordAlignment::new(text, iv)],
            content_tag: "t".into(),
        }
    }

    fn well_formed() -> ConversationTimeline {
        let mut tl = ConversationTimeline::new("a", FrameClock::new(12.5, 24_000).unwrap());
        // "hello": 210 ms nominal
        tl.events.push(ev(Channel::User, Role::Speech, "hello", 0, 5_040));
        tl.events.push(ev(Channel::Assistant, Role::Backchannel, "yeah", 1_000, 4_000));
        tl
    }

    #[test]
    fn well_formed_timeline_passes() {
        assert_eq!(TimelineFilter::default().check(&well_formed()), (true, vec![]));
    }

    #[test]
    fn late_backchannel_is_rejected() {
        let mut tl = well_formed();
        tl.events[1].interval = SampleInterval { start: 6_000, end: 9_000 };
        tl.events[1].words[0].interval = tl.events[1].interval;
        assert_eq!(TimelineFilter::default().check(&tl), (false, vec![RejectReason::NonOverlappingBackchannel]));
    }

    #[test]
    fn overlong_audio_is_rejected() {
        let mut tl = ConversationTimeline::new("a", FrameClock::new(12.5, 24_000).unwrap());
        // expected duration is exactly 1 s; the utterance lasts 10 s
        let tts = MockTts { base_ms: 1000.0, per_char_ms: 0.0, ..MockTts::default() };
        tl.events.push(ev(Channel::User, Role::Speech, "word", 0, 240_000));
        assert_eq!(TimelineFilter::new(tts).check(&tl), (false, vec![RejectReason::AudioTranscriptRatio]));
    }

    #[test]
    fn duplicates_are_rejected_across_session_ids() {
        let mut f = TimelineFilter::default();
        let a = well_formed();
        let mut b = well_formed();
        b.session_id = "b".into();
        assert!(f.check(&a).0);
        assert_eq!(f.check(&b), (false, vec![RejectReason::Duplicate]));
    }

    #[test]
    fn snr_gain_examples() {
        assert_abs_diff_eq!(mix_at_snr(1.0, 1.0, 0.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mix_at_snr(1.0, 1.0, 6.0).unwrap(), 0.501_187, epsilon = 1e-6);
        assert_abs_diff_eq!(mix_at_snr(1.0, 1.0, -30.0).unwrap(), 31.622_777, epsilon = 1e-6);
        assert!(mix_at_snr(0.0, 1.0, 0.0).is_err());
        assert!(mix_at_snr(1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn augment_defaults() {
        let c = AugmentConfig::default();
        assert!(c.is_valid());
        assert_eq!((c.snr_db_min, c.snr_db_max), (-30.0, 6.0));
    }
}
