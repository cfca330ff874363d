//! Sequential vs parallel throughput on the batch stages.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use duplex_core::codec::{fit_codebooks_with, mock_embedding, RvqCodec};
use duplex_core::sequence::{build_sequence, BuilderConfig, CharChunkTokenizer};
use duplex_core::synth::{random_timeline, synthesize_corpus, CorpusConfig, Flow, ScenarioTemplate, Specificity};
use duplex_core::{Execution, FrameClock};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn encode(c: &mut Criterion) {
    let codec = RvqCodec::seeded_random(16, 64, 8, 1).unwrap();
    let frames: Vec<Vec<f64>> = (0..2000).map(|i| mock_embedding("bench", i, 8)).collect();
    let mut g = c.benchmark_group("encode_batch");
    g.throughput(Throughput::Elements(frames.len() as u64));
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| codec.encode_batch(black_box(&frames), exec).unwrap())
        });
    }
    g.finish();
}

fn fit(c: &mut Criterion) {
    let frames: Vec<Vec<f64>> = (0..1000).map(|i| mock_embedding("fit", i, 8)).collect();
    let mut g = c.benchmark_group("fit_codebooks");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| fit_codebooks_with(black_box(&frames), 4, 16, 5, 0, exec).unwrap())
        });
    }
    g.finish();
}

fn corpus(c: &mut Criterion) {
    let template = ScenarioTemplate::task_oriented(1, Specificity::Detailed, Flow::Inquiry).unwrap();
    let cfg = CorpusConfig::new(template, 64, 3);
    let mut g = c.benchmark_group("synthesize_corpus");
    g.sample_size(20);
    g.throughput(Throughput::Elements(cfg.n as u64));
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| synthesize_corpus(black_box(&cfg), exec))
        });
    }
    g.finish();
}

fn build(c: &mut Criterion) {
    let codec = RvqCodec::seeded_random(16, 64, 8, 2).unwrap();
    let timelines: Vec<_> = (0..256).map(|s| random_timeline("b", s, FrameClock::default())).collect();
    let cfg = BuilderConfig::default();
    let tok = CharChunkTokenizer::default();
    let mut g = c.benchmark_group("build_sequence");
    g.throughput(Throughput::Elements(timelines.len() as u64));
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| exec.map(black_box(&timelines), |tl| build_sequence(tl, &tok, &codec, &cfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, encode, fit, corpus, build);
criterion_main!(benches);
