use duplex_core::codec::{fit_codebooks_with, mock_embedding, CodecFrame, RvqCodec};
use duplex_core::engine::{run_session, transition, DuplexState, RandomPolicy};
use duplex_core::eval::{jsd, takeover_rate, timing_histogram};
use duplex_core::sequence::{
    apply_text_lookahead, build_sequence, invert_sequence, read_sequences_jsonl, remove_text_lookahead,
    validate_sequence, BuilderConfig, CharChunkTokenizer,
};
use duplex_core::synth::random_timeline;
use duplex_core::timeline::{read_timelines_jsonl, write_timelines_jsonl};
use duplex_core::{Channel, Execution, FrameClock, FrameSpan, TokenKind};
use proptest::prelude::*;

fn codec() -> RvqCodec {
    RvqCodec::seeded_random(16, 16, 4, 11).unwrap()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn build_then_invert_recovers_assistant_layout(seed in any::<u64>()) {
        let clock = FrameClock::default();
        let tl = random_timeline("p", seed, clock);
        let seq = build_sequence(&tl, &CharChunkTokenizer::default(), &codec(), &BuilderConfig::default()).unwrap();
        let sk = invert_sequence(&seq).unwrap();
        let asst: Vec<_> = tl.events_on(Channel::Assistant).map(|(_, e)| e).collect();
        let onsets: Vec<usize> = asst.iter().flat_map(|e| e.words.iter().map(|w| clock.frame_of(w.interval.start))).collect();
        let spans: Vec<FrameSpan> = asst.iter().map(|e| clock.to_frames(e.interval)).collect();
        prop_assert_eq!(sk.onset_frames(), onsets);
        prop_assert_eq!(sk.span_extents(), spans);
    }

    #[test]
    fn lookahead_round_trips_when_gaps_exceed_k(seed in any::<u64>(), k in 1usize..4) {
        let tl = random_timeline("p", seed, FrameClock::default());
        let cfg = BuilderConfig::default().with_lookahead(k);
        let seq = build_sequence(&tl, &CharChunkTokenizer::default(), &codec(), &cfg).unwrap();
        let kinds = seq.kinds();
        prop_assume!(kinds.iter().take(k).all(|t| *t == TokenKind::Sil));
        let shifted = apply_text_lookahead(&seq, k).unwrap();
        prop_assert_eq!(shifted.lookahead_applied, k);
        let back = remove_text_lookahead(&shifted).unwrap();
        prop_assert_eq!(&apply_text_lookahead(&back, k).unwrap(), &shifted);
        if shortest_inner_gap(&kinds) > k {
            prop_assert_eq!(back, seq);
        }
    }

    #[test]
    fn built_sequences_satisfy_grammar_and_serialize(seed in any::<u64>()) {
        let tl = random_timeline("p", seed, FrameClock::default());
        let seq = build_sequence(&tl, &CharChunkTokenizer::default(), &codec(), &BuilderConfig::finetuning()).unwrap();
        prop_assert!(validate_sequence(&seq).is_empty());
        let back = read_sequences_jsonl(&seq.to_jsonl()).unwrap();
        prop_assert_eq!(&back[0].sequence, &seq);
    }

    #[test]
    fn timeline_jsonl_round_trips(seeds in prop::collection::vec(any::<u64>(), 1..8)) {
        let tls: Vec<_> = seeds.iter().enumerate()
            .map(|(i, s)| random_timeline(&format!("s{i}"), *s, FrameClock::default()))
            .collect();
        prop_assert_eq!(read_timelines_jsonl(&write_timelines_jsonl(&tls)).unwrap(), tls);
    }

    #[test]
    fn reconstruction_error_never_grows_with_depth(seed in any::<u64>(), key in "[a-z]{1,8}") {
        let c = RvqCodec::seeded_random(16, 32, 6, seed).unwrap();
        let x = mock_embedding(&key, seed, 6);
        let f = c.encode_frame(&x).unwrap();
        let mut prev = f64::INFINITY;
        for d in 1..=16 {
            let e = sq_dist(&x, &c.decode_frame(&f, d).unwrap());
            prop_assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn greedy_never_beats_exhaustive(seed in any::<u64>(), depths in 1usize..=2, k in 1usize..=8) {
        let c = RvqCodec::seeded_random(depths, k, 3, seed).unwrap();
        let x = mock_embedding("g", seed, 3);
        let greedy = sq_dist(&x, &c.decode_frame(&c.encode_frame(&x).unwrap(), depths).unwrap());
        let mut best = f64::INFINITY;
        for combo in 0..k.pow(depths as u32) {
            let codes = (0..depths).map(|d| ((combo / k.pow(d as u32)) % k) as u32).collect();
            let y = c.decode_frame(&CodecFrame { codes }, depths).unwrap();
            best = best.min(sq_dist(&x, &y));
        }
        prop_assert!(best <= greedy + 1e-12);
    }

    #[test]
    fn engine_trace_is_the_fold_of_transition(seed in any::<u64>(), frames in 1usize..80) {
        let c = codec();
        let stream = vec![c.silence_frame(); frames];
        let log = run_session("r", &stream, &mut RandomPolicy::new(seed), &c).unwrap();
        let mut s = DuplexState::Listening;
        for (b, traced) in log.blocks.iter().zip(&log.state_trace) {
            s = transition(s, b.text_slot.kind).unwrap();
            prop_assert_eq!(s, *traced);
        }
        prop_assert!(validate_sequence_kinds_ok(&log.blocks.iter().map(|b| b.text_slot.kind).collect::<Vec<_>>()));
    }

    #[test]
    fn jsd_is_symmetric_and_bounded(a in prop::collection::vec(0.0f64..1.0, 1..20), b in prop::collection::vec(0.0f64..1.0, 1..20)) {
        let p = timing_histogram(&a, 10, 1e-9);
        let q = timing_histogram(&b, 10, 1e-9);
        let d = jsd(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - jsd(&q, &p).unwrap()).abs() < 1e-12);
        prop_assert!(jsd(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn tor_is_permutation_invariant(flags in prop::collection::vec(any::<bool>(), 1..60), rot in 0usize..60) {
        let mut rotated = flags.clone();
        rotated.rotate_left(rot % flags.len());
        prop_assert_eq!(takeover_rate(&flags).unwrap(), takeover_rate(&rotated).unwrap());
    }
}

/// Length of the shortest SIL run strictly between two speaking frames.
fn shortest_inner_gap(kinds: &[TokenKind]) -> usize {
    let mut best = usize::MAX;
    let mut run: Option<usize> = None;
    for k in kinds {
        match (k, run) {
            (TokenKind::Sil, Some(n)) => run = Some(n + 1),
            (TokenKind::Sil, None) => {}
            (_, Some(n)) => {
                if n > 0 {
                    best = best.min(n);
                }
                run = Some(0);
            }
            (_, None) => run = Some(0),
        }
    }
    best
}

fn validate_sequence_kinds_ok(kinds: &[TokenKind]) -> bool {
    duplex_core::sequence::validate_kinds(kinds).is_empty()
}

#[test]
fn fit_mse_never_increases_across_iterations() {
    let frames: Vec<Vec<f64>> = (0..400).map(|i| mock_embedding("fit", i, 4)).collect();
    for seed in 0..5 {
        let (_, report) = fit_codebooks_with(&frames, 4, 8, 15, seed, Execution::Sequential).unwrap();
        for history in &report.mse_per_depth {
            for w in history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{history:?}");
            }
        }
    }
}

#[test]
fn fitting_is_independent_of_execution_mode() {
    let frames: Vec<Vec<f64>> = (0..300).map(|i| mock_embedding("fit", i, 4)).collect();
    let a = fit_codebooks_with(&frames, 3, 8, 10, 9, Execution::Sequential).unwrap();
    let b = fit_codebooks_with(&frames, 3, 8, 10, 9, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}
