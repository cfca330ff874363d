//! Parallel corpus driver and dataset manifest.

use super::filter::{RejectReason, TimelineFilter};
use super::refine::{refine_timing, truncate_barge_in, BargeInNote};
use super::script::{generate_dialogue, Flow, Focus, ScenarioTemplate, Specificity, TemplateFamily};
use super::tts::{construct_timeline, MockTts};
use crate::clock::FrameClock;
use crate::exec::Execution;
use crate::seed;
use crate::timeline::{validate_timeline, ConversationTimeline};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub template: ScenarioTemplate,
    /// Number of timelines to keep.
    pub n: usize,
    pub seed: u64,
    pub clock: FrameClock,
    /// Attempts are capped at `n × max_attempt_factor`.
    pub max_attempt_factor: usize,
}

impl CorpusConfig {
    pub fn new(template: ScenarioTemplate, n: usize, seed: u64) -> Self {
        Self { template, n, seed, clock: FrameClock::default(), max_attempt_factor: 4 }
    }
}

/// Outcome of the per-session stages, before cross-session dedup.
#[derive(Debug, Clone)]
pub struct SessionDraft {
    pub index: usize,
    pub seed: u64,
    pub timeline: ConversationTimeline,
    pub barge_in: Vec<BargeInNote>,
}

/// Runs script → timeline → refinement → truncation for one session.
pub fn synthesize_session(
    template: &ScenarioTemplate,
    corpus_seed: u64,
    index: usize,
    clock: FrameClock,
) -> SessionDraft {
    let s = seed::derive(corpus_seed, "session", index as u64);
    let id = format!("{}-{}-{:05}", template.label(), corpus_seed, index);
    let script = generate_dialogue(template, s);
    let tl = construct_timeline(&id, &script, &MockTts::with_seed(s), clock);
    let tl = refine_timing(&tl, seed::derive(s, "refine", 0));
    let (mut tl, barge_in) = truncate_barge_in(&tl, seed::derive(s, "truncate", 0));
    tl.sort_events();
    SessionDraft { index, seed: s, timeline: tl, barge_in }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateInfo {
    pub family: TemplateFamily,
    pub scenario_id: u32,
    pub specificity: Specificity,
    pub flow: Flow,
    pub focus: Focus,
    pub simultaneity: bool,
    pub response_delay_ms: f64,
}

impl From<&ScenarioTemplate> for TemplateInfo {
    fn from(t: &ScenarioTemplate) -> Self {
        Self {
            family: t.family,
            scenario_id: t.scenario_id,
            specificity: t.specificity,
            flow: t.flow,
            focus: t.focus,
            simultaneity: t.simultaneity,
            response_delay_ms: t.response_delay_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub session_id: String,
    pub seed: u64,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterStats {
    pub attempted: usize,
    pub kept: usize,
    pub rejected: usize,
    pub invalid: usize,
    pub reasons: BTreeMap<String, usize>,
    pub truncated_utterances: usize,
    pub unmatched_interrupts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub requested: usize,
    pub template: TemplateInfo,
    pub filter: FilterStats,
    pub sessions: Vec<SessionEntry>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub timelines: Vec<ConversationTimeline>,
    pub manifest: Manifest,
}

/// Generates sessions in parallel batches and filters them sequentially in
/// index order, so the result is independent of the execution mode.
pub fn synthesize_corpus(cfg: &CorpusConfig, exec: Execution) -> Corpus {
    let mut filter = TimelineFilter::default();
    let mut stats = FilterStats::default();
    let mut timelines = Vec::new();
    let mut sessions = Vec::new();
    let max_attempts = cfg.n.saturating_mul(cfg.max_attempt_factor.max(1));
    let mut next = 0;
    while timelines.len() < cfg.n && next < max_attempts {
        let batch = (cfg.n - timelines.len()).min(max_attempts - next);
        let drafts = exec.map_range(next..next + batch, |i| synthesize_session(&cfg.template, cfg.seed, i, cfg.clock));
        next += batch;
        for d in drafts {
            stats.attempted += 1;
            for note in &d.barge_in {
                match note {
                    BargeInNote::Truncated { .. } => stats.truncated_utterances += 1,
                    BargeInNote::NoOverlappingUtterance { .. } => stats.unmatched_interrupts += 1,
                }
            }
            if !validate_timeline(&d.timeline).is_empty() {
                stats.invalid += 1;
                continue;
            }
            let (kept, reasons) = filter.check(&d.timeline);
            if !kept {
                stats.rejected += 1;
                for r in reasons {
                    *stats.reasons.entry(RejectReason::as_str(r).to_string()).or_default() += 1;
                }
                continue;
            }
            if timelines.len() < cfg.n {
                sessions.push(SessionEntry {
                    session_id: d.timeline.session_id.clone(),
                    seed: d.seed,
                    events: d.timeline.events.len(),
                });
                timelines.push(d.timeline);
            }
        }
    }
    stats.kept = timelines.len();
    Corpus {
        timelines,
        manifest: Manifest {
            version: 1,
            seed: cfg.seed,
            requested: cfg.n,
            template: TemplateInfo::from(&cfg.template),
            filter: stats,
            sessions,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::RvqCodec;
    use crate::sequence::{apply_text_lookahead, build_sequence, BuilderConfig, CharChunkTokenizer};
    use crate::timeline::write_timelines_jsonl;

    fn cfg(focus: Focus, n: usize, seed: u64) -> CorpusConfig {
        let t = ScenarioTemplate::task_oriented(3, Specificity::Detailed, Flow::Inquiry).unwrap().with_focus(focus);
        CorpusConfig::new(t, n, seed)
    }

    #[test]
    fn corpus_is_deterministic_across_execution_modes() {
        let c = cfg(Focus::General, 12, 7);
        let a = synthesize_corpus(&c, Execution::Sequential);
        let b = synthesize_corpus(&c, Execution::Parallel);
        assert_eq!(write_timelines_jsonl(&a.timelines), write_timelines_jsonl(&b.timelines));
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(a.timelines.len(), 12);
    }

    #[test]
    fn every_synthesized_timeline_builds_a_sequence() {
        let codec = RvqCodec::seeded_random(4, 16, 4, 1).unwrap();
        let mut templates = Vec::new();
        for focus in [Focus::General, Focus::Interruption, Focus::Backchannel] {
            for id in 1..=15 {
                templates.push(
                    ScenarioTemplate::task_oriented(id, Specificity::Detailed, Flow::Inquiry)
                        .unwrap()
                        .with_focus(focus),
                );
            }
        }
        for id in 1..=7 {
            templates.push(ScenarioTemplate::speech_game(id, Specificity::Detailed).unwrap().with_simultaneity(true));
        }
        templates.push(ScenarioTemplate::open_domain(Specificity::Minimal, Flow::Direct));
        for (i, t) in templates.into_iter().enumerate() {
            let corpus = synthesize_corpus(&CorpusConfig::new(t, 4, i as u64), Execution::default());
            for tl in &corpus.timelines {
                let cfg = BuilderConfig::default();
                build_sequence(tl, &CharChunkTokenizer::default(), &codec, &cfg)
                    .and_then(|seq| apply_text_lookahead(&seq, cfg.lookahead_frames))
                    .unwrap_or_else(|e| panic!("{}: {e}", tl.session_id));
            }
        }
    }

    #[test]
    fn interruption_sessions_are_truncated() {
        let corpus = synthesize_corpus(&cfg(Focus::Interruption, 10, 3), Execution::default());
        assert!(corpus.manifest.filter.truncated_utterances >= 10);
        assert_eq!(corpus.manifest.filter.unmatched_interrupts, 0);
    }
}
