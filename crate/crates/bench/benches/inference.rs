use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cspine_bench::{inputs, models};
use cspine_core::features::HashedFeaturizerConfig;
use cspine_core::mtl::forward;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn inference(c: &mut Criterion) {
    let features = HashedFeaturizerConfig::default();
    let x = inputs(200, &features);
    let mut group = c.benchmark_group("inference");
    for adapter in [false, true] {
        let (mt, singles) = models(features.dim, 256, adapter);
        let tag = if adapter { "adapter" } else { "full" };
        group.bench_function(BenchmarkId::new("multitask", tag), |b| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            b.iter(|| x.iter().map(|v| forward(&mt, v, false, &mut rng).unwrap().0[0][0]).sum::<f64>())
        });
        group.bench_function(BenchmarkId::new("four_single", tag), |b| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            b.iter(|| {
                x.iter()
                    .flat_map(|v| singles.iter().map(|m| forward(m, v, false, &mut rng).unwrap().0[0][0]).collect::<Vec<_>>())
                    .sum::<f64>()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, inference);
criterion_main!(benches);
