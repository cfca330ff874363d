//! Mock TTS duration model and dual-channel timeline construction.

use super::script::DialogueScript;
use crate::clock::{FrameClock, SampleInterval};
use crate::seed;
use crate::timeline::{Channel, ConversationTimeline, Role, UtteranceEvent, WordAlignment};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Affine word-duration model standing in for a real TTS engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MockTts {
    pub base_ms: f64,
    pub per_char_ms: f64,
    pub gap_ms: f64,
    /// Half-width of the multiplicative jitter; 0 disables it.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for MockTts {
    fn default() -> Self {
        Self { base_ms: 60.0, per_char_ms: 30.0, gap_ms: 40.0, jitter: 0.1, seed: 0 }
    }
}

impl MockTts {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn without_jitter(mut self) -> Self {
        self.jitter = 0.0;
        self
    }

    pub fn nominal_word_ms(&self, word: &str) -> f64 {
        self.base_ms + self.per_char_ms * word.chars().count() as f64
    }

    pub fn word_ms<R: Rng>(&self, word: &str, rng: &mut R) -> f64 {
        let j = if self.jitter > 0.0 { rng.random_range(1.0 - self.jitter..=1.0 + self.jitter) } else { 1.0 };
        self.nominal_word_ms(word) * j
    }

    /// Jitter-free duration of a whitespace-separated transcript.
    pub fn expected_ms(&self, transcript: &str) -> f64 {
        let words: Vec<&str> = transcript.split_whitespace().collect();
        if words.is_empty() {
            return 0.0;
        }
        words.iter().map(|w| self.nominal_word_ms(w)).sum::<f64>() + self.gap_ms * (words.len() - 1) as f64
    }

    /// Lays out `text` starting at `start`. Returns word alignments; the
    /// utterance spans the first word start to the last word end.
    pub fn synthesize<R: Rng>(&self, text: &str, start: u64, clock: &FrameClock, rng: &mut R) -> Vec<WordAlignment> {
        let gap = clock.ms_to_samples(self.gap_ms);
        let mut t = start;
        let mut out = Vec::new();
        for (i, w) in text.split_whitespace().enumerate() {
            if i > 0 {
                t += gap;
            }
            let d = clock.ms_to_samples(self.word_ms(w, rng)).max(1);
            out.push(WordAlignment::new(w, SampleInterval { start: t, end: t + d }));
            t += d;
        }
        out
    }
}

/// Uniform turn gap between consecutive floor-taking turns.
const TURN_GAP_MS: (f64, f64) = (300.0, 700.0);
/// Silence before the first turn, so either side may open the session.
const LEAD_IN_MS: (f64, f64) = (300.0, 700.0);
/// Simultaneous speech starts this long after the host onset.
const SIMULTANEOUS_LAG_MS: (f64, f64) = (100.0, 400.0);
/// Fraction of the shorter utterance by which an interrupt overlaps its host.
const INTERRUPT_OVERLAP: (f64, f64) = (0.3, 0.7);

fn make_event(channel: Channel, role: Role, words: Vec<WordAlignment>, tag: &str) -> UtteranceEvent {
    let interval = SampleInterval {
        start: words.first().map_or(0, |w| w.interval.start),
        end: words.last().map_or(0, |w| w.interval.end),
    };
    UtteranceEvent { channel, role, interval, words, content_tag: tag.to_string() }
}

/// Places scripted turns on a dual-channel sample timeline.
///
/// The first turn follows a short lead-in; later speech turns follow the
/// previous floor end after a sampled gap.
/// Backchannels sit after a word near the middle of the other channel's
/// latest utterance. Interrupts start inside that utterance and run past
/// its end. Simultaneous turns start shortly after its onset. Backchannels
/// never advance the floor.
pub fn construct_timeline(
    session_id: &str,
    script: &DialogueScript,
    tts: &MockTts,
    clock: FrameClock,
) -> ConversationTimeline {
    let mut tts_rng = seed::rng(seed::derive(tts.seed, "tts", script.seed));
    let mut place_rng = seed::rng(seed::derive(script.seed, "place", 0));
    let mut tl = ConversationTimeline::new(session_id, clock);
    let mut floor_end: Option<u64> = None;
    let mut last_speech: [Option<usize>; 2] = [None, None];
    let ch_idx = |c: Channel| usize::from(c == Channel::Assistant);

    for turn in &script.turns {
        let host = last_speech[ch_idx(turn.speaker.other())].map(|i| tl.events[i].clone());
        let sequential_start = |rng: &mut rand_chacha::ChaCha8Rng| match floor_end {
            None => clock.ms_to_samples(rng.random_range(LEAD_IN_MS.0..=LEAD_IN_MS.1)),
            Some(end) => {
                let gap = match turn.delay_ms {
                    Some(ms) => ms as f64,
                    None => rng.random_range(TURN_GAP_MS.0..=TURN_GAP_MS.1),
                };
                end + clock.ms_to_samples(gap)
            }
        };

        let event = match (turn.role, host) {
            (Role::Backchannel, Some(host)) => {
                let words = tts.synthesize(&turn.text, 0, &clock, &mut tts_rng);
                let dur = words.last().map_or(0, |w| w.interval.end);
                let n = host.words.len();
                let anchor = if n >= 2 {
                    let lo = (n / 3).max(1) - 1;
                    let hi = (2 * n / 3).max(lo + 1).min(n - 1);
                    host.words[place_rng.random_range(lo..hi)].interval.end
                } else {
                    host.interval.start + host.interval.len() / 2
                };
                let latest = host.interval.end.saturating_sub(dur).max(host.interval.start);
                let mut ev = make_event(turn.speaker, turn.role, words, &turn.content_tag);
                ev.shift(anchor.min(latest) as i64);
                ev
            }
            (Role::Interrupt, Some(host)) => {
                let words = tts.synthesize(&turn.text, 0, &clock, &mut tts_rng);
                let own = words.last().map_or(0, |w| w.interval.end);
                let u = place_rng.random_range(INTERRUPT_OVERLAP.0..=INTERRUPT_OVERLAP.1);
                let back = (u * own.min(host.interval.len()) as f64).round() as u64;
                let start = (host.interval.end - back).max(host.interval.start + 1);
                let mut ev = make_event(turn.speaker, turn.role, words, &turn.content_tag);
                ev.shift(start as i64);
                ev
            }
            (Role::Simultaneous, Some(host)) => {
                let lag = place_rng.random_range(SIMULTANEOUS_LAG_MS.0..=SIMULTANEOUS_LAG_MS.1);
                let start = host.interval.start + clock.ms_to_samples(lag);
                let words = tts.synthesize(&turn.text, start, &clock, &mut tts_rng);
                make_event(turn.speaker, turn.role, words, &turn.content_tag)
            }
            _ => {
                let start = sequential_start(&mut place_rng);
                let words = tts.synthesize(&turn.text, start, &clock, &mut tts_rng);
                make_event(turn.speaker, turn.role, words, &turn.content_tag)
            }
        };

        if event.role != Role::Backchannel {
            floor_end = Some(floor_end.map_or(event.interval.end, |e| e.max(event.interval.end)));
        }
        if event.role == Role::Speech {
            last_speech[ch_idx(event.channel)] = Some(tl.events.len());
        }
        tl.events.push(event);
    }
    tl
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::overlap_duration;
    use crate::synth::script::{generate_dialogue, Flow, Focus, ScenarioTemplate, ScriptTurn, Specificity};
    use crate::timeline::validate_timeline;

    fn clock() -> FrameClock {
        FrameClock::new(12.5, 24_000).unwrap()
    }

    fn turn(speaker: Channel, role: Role, text: &str, tag: &str) -> ScriptTurn {
        ScriptTurn { speaker, role, text: text.into(), content_tag: tag.into(), clarification: false, delay_ms: None }
    }

    #[test]
    fn hi_lasts_120_ms() {
        let tts = MockTts::default().without_jitter();
        let words = tts.synthesize("hi", 0, &clock(), &mut seed::rng(0));
        assert_eq!(words[0].interval.len(), 2880);
    }

    #[test]
    fn jittered_durations_stay_in_band() {
        let tts = MockTts::with_seed(3);
        let mut rng = seed::rng(1);
        for _ in 0..200 {
            let ms = tts.word_ms("hello", &mut rng);
            assert!((0.9 * 210.0..=1.1 * 210.0).contains(&ms));
        }
    }

    #[test]
    fn first_turn_follows_a_lead_in() {
        for seed in 0..20 {
            let script =
                DialogueScript { turns: vec![turn(Channel::Assistant, Role::Speech, "hello there", "a")], seed };
            let tl = construct_timeline("s", &script, &MockTts::default(), clock());
            assert_eq!(tl.events.len(), 1);
            let start = tl.events[0].interval.start;
            assert!((7_200..=16_800).contains(&start), "{start}");
        }
    }

    #[test]
    fn backchannel_overlaps_its_host() {
        let script = DialogueScript {
            turns: vec![
                turn(Channel::User, Role::Speech, "well the story about my trip goes back years", "a"),
                turn(Channel::Assistant, Role::Backchannel, "yeah", "b"),
            ],
            seed: 5,
        };
        let tl = construct_timeline("s", &script, &MockTts::default(), clock());
        assert!(overlap_duration(tl.events[0].interval, tl.events[1].interval) > 0);
        assert!(tl.events[0].interval.contains(&tl.events[1].interval));
    }

    #[test]
    fn interrupt_starts_inside_and_ends_after_host() {
        let script = DialogueScript {
            turns: vec![
                turn(Channel::Assistant, Role::Speech, "the tables look available tomorrow morning", "a"),
                turn(Channel::User, Role::Interrupt, "wait actually stop", "b"),
            ],
            seed: 2,
        };
        let tl = construct_timeline("s", &script, &MockTts::default(), clock());
        let (h, i) = (tl.events[0].interval, tl.events[1].interval);
        assert!(i.start > h.start && i.start < h.end && i.end > h.end);
    }

    #[test]
    fn generated_timelines_are_valid() {
        for seed in 0..50u64 {
            let t = ScenarioTemplate::task_oriented(1 + (seed % 15) as u32, Specificity::Detailed, Flow::Inquiry)
                .unwrap()
                .with_focus(if seed % 2 == 0 { Focus::General } else { Focus::Interruption });
            let script = generate_dialogue(&t, seed);
            let tl = construct_timeline("s", &script, &MockTts::with_seed(seed), clock());
            assert!(validate_timeline(&tl).is_empty(), "{:?}", validate_timeline(&tl));
            assert_eq!(tl.events.len(), script.turns.len());
        }
    }
}
