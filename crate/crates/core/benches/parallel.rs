//! Compares the hot data-parallel paths on a single-thread pool against
//! rayon's default pool. Built without the `parallel` feature both runs
//! are sequential.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;

use qdeval::corpus::{split_corpus, tokenize, Scheme};
use qdeval::harness::{run_sweep, InMemoryModels, MetricKind, StrategyGrid, SweepConfig, SweepData};
use qdeval::lm::{FeedForwardLm, FfnDims};
use qdeval::losses::{Batch, TrainConfig, TrainData, Trainer};
use qdeval::metrics::{self_bleu, BleuConfig, SampleSet};
use qdeval::toy::toy_corpus;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("1-thread", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("default", ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn benches(c: &mut Criterion) {
    let text = toy_corpus(5, 40_000);
    let (seq, vocab) = tokenize(&text, Scheme::Word).unwrap();
    let splits = split_corpus(&seq, 40, [0.8, 0.1, 0.1]).unwrap();
    let dims = FfnDims { context: 4, embed: 16, hidden: 64, ..FfnDims::default() };
    let model = FeedForwardLm::new(vocab, dims, 1).unwrap();

    let samples = SampleSet::from_sequences(&splits.train[..120]);
    let mut g = c.benchmark_group("self_bleu");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| self_bleu(&samples, &BleuConfig::default()).unwrap()))
        });
    }
    g.finish();

    let models = InMemoryModels::default().with("m", Arc::new(model.clone()));
    let cfg = SweepConfig {
        models: vec!["m".into()],
        strategies: vec![StrategyGrid { name: "topp".into(), params: vec![0.9] }],
        prefix_len: 10,
        gen_len: 20,
        metrics: vec![MetricKind::SeqRep4],
        max_prompts: Some(64),
        ..SweepConfig::default()
    };
    let data = SweepData { train: splits.train.clone(), heldout: splits.test.clone() };
    let mut g = c.benchmark_group("generation");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| run_sweep(&cfg, &data, &models, None).unwrap()))
        });
    }
    g.finish();

    let train = TrainData { sequences: splits.train.clone(), ..TrainData::default() };
    let batch = Batch { sequences: (0..32).collect(), pairs: Vec::new(), labeled: Vec::new() };
    let mut g = c.benchmark_group("gradient_batch");
    g.sample_size(20);
    for (name, pool) in pools() {
        let mut trainer = Trainer::new(model.clone(), TrainConfig::default()).unwrap();
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| trainer.step(&train, &batch).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(parallel, benches);
criterion_main!(parallel);
