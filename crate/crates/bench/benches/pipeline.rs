use criterion::{criterion_group, criterion_main, Criterion};
use cspine_bench::corpus;
use cspine_core::features::{featurize, HashedFeaturizerConfig};
use cspine_core::pipeline::segment_corpus;
use cspine_core::segmenter::GroupingRuleConfig;

fn pipeline(c: &mut Criterion) {
    let corpus = corpus(100, 5);
    let rules = GroupingRuleConfig::default();
    c.bench_function("segment_100_reports", |b| {
        b.iter(|| segment_corpus(&corpus.reports, &corpus.bundles, &rules).unwrap())
    });
    let features = HashedFeaturizerConfig::default();
    c.bench_function("featurize_bundles", |b| {
        b.iter(|| corpus.bundles.iter().map(|x| featurize(&x.text, &features)[0]).sum::<f64>())
    });
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
