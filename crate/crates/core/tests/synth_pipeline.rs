use duplex_core::codec::RvqCodec;
use duplex_core::sequence::{build_sequence, validate_sequence, BuilderConfig, CharChunkTokenizer};
use duplex_core::synth::{
    achieved_snr_db, mix_at_snr, rms, synthesize_corpus, AugmentConfig, CorpusConfig, Flow, Focus, ScenarioTemplate,
    Specificity, TimelineFilter,
};
use duplex_core::timeline::{validate_timeline, Channel, Role};
use duplex_core::{seed, Execution};
use rand_distr::{Distribution, Normal};

fn template(focus: Focus) -> ScenarioTemplate {
    ScenarioTemplate::task_oriented(7, Specificity::TopicGuided, Flow::Direct).unwrap().with_focus(focus)
}

#[test]
fn kept_timelines_pass_every_filter_rule() {
    for focus in [Focus::General, Focus::Interruption, Focus::Backchannel] {
        let corpus = synthesize_corpus(&CorpusConfig::new(template(focus), 30, 5), Execution::default());
        assert_eq!(corpus.timelines.len(), 30);
        let filter = TimelineFilter::default();
        for tl in &corpus.timelines {
            assert!(validate_timeline(tl).is_empty());
            assert!(filter.stateless_reasons(tl).is_empty(), "{}", tl.session_id);
        }
        let m = &corpus.manifest;
        assert_eq!(m.filter.kept, 30);
        assert_eq!(m.filter.attempted, m.filter.kept + m.filter.rejected + m.filter.invalid);
        assert_eq!(m.sessions.len(), 30);
    }
}

#[test]
fn interruption_corpus_has_interrupts_that_cut_the_assistant() {
    let corpus = synthesize_corpus(&CorpusConfig::new(template(Focus::Interruption), 20, 9), Execution::default());
    for tl in &corpus.timelines {
        let interrupt = tl
            .events
            .iter()
            .find(|e| e.channel == Channel::User && e.role == Role::Interrupt)
            .unwrap_or_else(|| panic!("{} has no interrupt", tl.session_id));
        let host = tl
            .events_on(Channel::Assistant)
            .map(|(_, e)| e)
            .find(|e| e.interval.start < interrupt.interval.start && e.interval.end > interrupt.interval.start)
            .expect("interrupt lands inside assistant speech");
        let last = host.words.last().unwrap();
        assert!(last.interval.end <= host.interval.end);
    }
}

#[test]
fn backchannel_corpus_sequences_carry_bc_onsets() {
    let codec = RvqCodec::seeded_random(4, 16, 4, 2).unwrap();
    let t = template(Focus::Backchannel);
    let corpus = synthesize_corpus(&CorpusConfig::new(t, 15, 4), Execution::default());
    let mut with_bc = 0;
    for tl in &corpus.timelines {
        let seq = build_sequence(tl, &CharChunkTokenizer::default(), &codec, &BuilderConfig::default()).unwrap();
        assert!(validate_sequence(&seq).is_empty());
        let bc_events = tl.events_on(Channel::Assistant).filter(|(_, e)| e.role == Role::Backchannel).count();
        let bc_slots = seq.kinds().iter().filter(|k| **k == duplex_core::TokenKind::Bc).count();
        assert_eq!(bc_events, bc_slots);
        with_bc += usize::from(bc_slots > 0);
    }
    assert!(with_bc > 0);
}

#[test]
fn white_noise_mixes_hit_the_target_snr() {
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut rng = seed::rng(42);
    let signal: Vec<f64> = (0..48_000).map(|_| 0.3 * n.sample(&mut rng)).collect();
    let noise: Vec<f64> = (0..48_000).map(|_| 2.0 * n.sample(&mut rng)).collect();
    for target in [-30.0, -12.0, 0.0, 6.0] {
        let g = mix_at_snr(rms(&signal), rms(&noise), target).unwrap();
        assert!((achieved_snr_db(&signal, &noise, g) - target).abs() < 0.1);
    }
    let cfg = AugmentConfig::default();
    for _ in 0..1000 {
        let s = cfg.sample_snr(&mut rng);
        assert!((-30.0..=6.0).contains(&s));
    }
}
