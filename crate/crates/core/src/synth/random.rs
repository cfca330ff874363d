//! Randomized valid timelines for property tests and benchmarks.

use crate::clock::{FrameClock, SampleInterval};
use crate::seed;
use crate::timeline::{Channel, ConversationTimeline, Role, UtteranceEvent, WordAlignment};
use rand::Rng;

/// Token chunk size the layout budgets for; matches the default
/// character-chunk tokenizer.
const CHUNK: usize = 6;

fn random_word<R: Rng>(rng: &mut R) -> String {
    let len = rng.random_range(1..=10);
    (0..len).map(|_| char::from(b'a' + rng.random_range(0..26u8))).collect()
}

/// A valid timeline whose assistant words each get enough frames for
/// `BOW` plus their 6-character token chunks, with at least one silent
/// frame between assistant utterances. Word starts fall anywhere inside
/// their onset frame. User events overlap the assistant freely.
pub fn random_timeline(session_id: &str, rng_seed: u64, clock: FrameClock) -> ConversationTimeline {
    let mut rng = seed::rng(seed::derive(rng_seed, "random-timeline", 0));
    let spf = clock.samples_per_frame();
    let mut tl = ConversationTimeline::new(session_id, clock);
    let mut frame = rng.random_range(0..8u64);
    let n_asst = rng.random_range(1..=6);
    for ui in 0..n_asst {
        let bc = rng.random_bool(0.25);
        let n_words = if bc { 1 } else { rng.random_range(1..=6) };
        let mut words = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            let word = random_word(&mut rng);
            let needed = 1 + word.len().div_ceil(CHUNK) as u64;
            let span = needed + rng.random_range(0..3u64);
            let start = frame * spf + rng.random_range(0..spf);
            let end = rng.random_range((frame + span - 1) * spf + 1..=(frame + span) * spf).max(start + 1);
            words.push(WordAlignment::new(word, SampleInterval { start, end }));
            frame += span;
        }
        tl.events.push(UtteranceEvent {
            channel: Channel::Assistant,
            role: if bc { Role::Backchannel } else { Role::Speech },
            interval: SampleInterval { start: words[0].interval.start, end: words[n_words - 1].interval.end },
            words,
            content_tag: format!("a{ui}"),
        });
        frame += 1 + rng.random_range(0..5u64);
    }

    let horizon = frame * spf;
    let mut cursor = 0u64;
    for ui in 0..rng.random_range(0..=4) {
        let start = cursor + rng.random_range(0..horizon / 4 + 1);
        let n_words = rng.random_range(1..=3);
        let mut t = start;
        let mut words = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            let d = rng.random_range(spf / 2..4 * spf);
            words.push(WordAlignment::new(random_word(&mut rng), SampleInterval { start: t, end: t + d }));
            t += d + rng.random_range(0..spf);
        }
        let end = words[n_words - 1].interval.end;
        let role = [Role::Speech, Role::Interrupt, Role::Backchannel][rng.random_range(0..3)];
        tl.events.push(UtteranceEvent {
            channel: Channel::User,
            role,
            interval: SampleInterval { start, end },
            words,
            content_tag: format!("u{ui}"),
        });
        cursor = end + 1;
    }
    tl.sort_events();
    tl
}
