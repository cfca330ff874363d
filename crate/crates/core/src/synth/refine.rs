//! Timing refinement and barge-in truncation.

use crate::clock::{overlap_duration, SampleInterval};
use crate::seed;
use crate::timeline::{Channel, ConversationTimeline, Role};
use rand::Rng;

/// Backchannel re-centering window.
pub const BACKCHANNEL_JITTER_MS: f64 = 400.0;

/// Index of the other-channel, non-backchannel event overlapping `iv` the
/// most. Ties go to the earlier event.
fn host_of(tl: &ConversationTimeline, channel: Channel, iv: SampleInterval, roles: &[Role]) -> Option<usize> {
    let mut best: Option<(usize, u64)> = None;
    for (i, e) in tl.events.iter().enumerate() {
        if e.channel == channel || !roles.contains(&e.role) {
            continue;
        }
        let ov = overlap_duration(e.interval, iv);
        if ov > 0 && best.is_none_or(|(_, b)| ov > b) {
            best = Some((i, ov));
        }
    }
    best.map(|(i, _)| i)
}

const HOST_ROLES: [Role; 3] = [Role::Speech, Role::Interrupt, Role::Simultaneous];

/// Re-centers every backchannel by a seeded offset of up to ±400 ms while
/// keeping it inside its host utterance. Backchannels without a host they
/// overlap are dropped. Other events are untouched.
pub fn refine_timing(timeline: &ConversationTimeline, rng_seed: u64) -> ConversationTimeline {
    let jitter = timeline.clock.ms_to_samples(BACKCHANNEL_JITTER_MS) as i64;
    let mut out = timeline.clone();
    let mut orphans = Vec::new();
    for i in 0..out.events.len() {
        let e = &out.events[i];
        if e.role != Role::Backchannel {
            continue;
        }
        let Some(h) = host_of(&out, e.channel, e.interval, &HOST_ROLES) else {
            orphans.push(i);
            continue;
        };
        let host = out.events[h].interval;
        let len = e.interval.len();
        let mut rng = seed::rng(seed::derive(rng_seed, "refine", i as u64));
        let offset = rng.random_range(-jitter..=jitter);
        let proposed = (e.interval.start as i64 + offset).max(0) as u64;
        let start = if len <= host.len() {
            proposed.clamp(host.start, host.end - len)
        } else {
            // Cannot fit: center on the host so the overlap stays positive.
            (host.start + host.len() / 2).saturating_sub(len / 2)
        };
        let delta = start as i64 - e.interval.start as i64;
        out.events[i].shift(delta);
    }
    let mut index = 0;
    out.events.retain(|_| {
        index += 1;
        !orphans.contains(&(index - 1))
    });
    out
}

/// Index of the boundary nearest to `cut`; equidistant ties go to the
/// earlier boundary. `boundaries` must be ascending and nonempty.
pub fn snap_to_boundary(boundaries: &[u64], cut: u64) -> usize {
    let mut best = 0;
    for (i, &b) in boundaries.iter().enumerate() {
        if b.abs_diff(cut) < boundaries[best].abs_diff(cut) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BargeInNote {
    Truncated {
        interrupt: usize,
        host: usize,
        kept_words: usize,
        removed_words: usize,
    },
    /// The interrupt overlaps no assistant utterance; nothing was cut.
    NoOverlappingUtterance {
        interrupt: usize,
    },
}

/// Truncates every interrupted assistant utterance at a seeded cut point
/// snapped to the nearest word end.
///
/// The cut is drawn uniformly between the interrupt onset and the host end,
/// and only word ends after the onset are candidates, so the assistant
/// always stops after the user has started talking.
pub fn truncate_barge_in(timeline: &ConversationTimeline, rng_seed: u64) -> (ConversationTimeline, Vec<BargeInNote>) {
    let mut out = timeline.clone();
    let mut notes = Vec::new();
    let mut cut_hosts = Vec::new();
    for i in 0..out.events.len() {
        let e = &out.events[i];
        if e.channel != Channel::User || e.role != Role::Interrupt {
            continue;
        }
        let onset = e.interval.start;
        let Some(h) = host_of(&out, Channel::User, e.interval, &[Role::Speech]) else {
            notes.push(BargeInNote::NoOverlappingUtterance { interrupt: i });
            continue;
        };
        if cut_hosts.contains(&h) {
            continue;
        }
        let host = &out.events[h];
        let candidates: Vec<(usize, u64)> = host
            .words
            .iter()
            .enumerate()
            .filter(|(_, w)| w.interval.end > onset)
            .map(|(wi, w)| (wi, w.interval.end))
            .collect();
        if candidates.is_empty() {
            notes.push(BargeInNote::NoOverlappingUtterance { interrupt: i });
            continue;
        }
        let lo = onset.max(host.interval.start);
        let mut rng = seed::rng(seed::derive(rng_seed, "barge-in", i as u64));
        let cut = rng.random_range(lo..=host.interval.end);
        let ends: Vec<u64> = candidates.iter().map(|c| c.1).collect();
        let (last_word, boundary) = candidates[snap_to_boundary(&ends, cut)];
        let total = host.words.len();
        let host = &mut out.events[h];
        host.words.truncate(last_word + 1);
        host.interval.end = boundary;
        cut_hosts.push(h);
        notes.push(BargeInNote::Truncated {
            interrupt: i,
            host: h,
            kept_words: last_word + 1,
            removed_words: total - last_word - 1,
        });
    }
    (out, notes)
}
