//! Shared fixtures for the benchmarks.

use cspine_core::features::HashedFeaturizerConfig;
use cspine_core::pipeline::hashed_examples;
use cspine_core::similarity::Cloud;
use cspine_core::synth::{generate_corpus, GeneratorConfig, SynthCorpus};
use cspine_core::{MtlParams, PathologyTask, TrainMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn corpus(n_reports: usize, seed: u64) -> SynthCorpus {
    let config = GeneratorConfig {
        n_reports,
        seed,
        ..GeneratorConfig::default()
    };
    generate_corpus(&config).expect("default generator config is valid")
}

/// Hashed feature vectors of a synthetic corpus, cycled to `n` inputs.
pub fn inputs(n: usize, features: &HashedFeaturizerConfig) -> Vec<Vec<f64>> {
    let bundles = corpus(200, 11).bundles;
    let x: Vec<Vec<f64>> = hashed_examples(&bundles, features)
        .expect("default featurizer config is valid")
        .into_iter()
        .map(|e| e.x)
        .collect();
    x.into_iter().cycle().take(n).collect()
}

/// A multitask model and the four single-task models of the same shape.
pub fn models(input_dim: usize, hidden_dim: usize, adapter: bool) -> (MtlParams, [MtlParams; 4]) {
    let (multi, single): (TrainMode, fn(PathologyTask) -> TrainMode) = if adapter {
        (TrainMode::AdapterMultitask, TrainMode::AdapterSingle)
    } else {
        (TrainMode::Multitask, TrainMode::SingleTask)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mt = MtlParams::init(multi, input_dim, hidden_dim, 0.5, 1e-5, 1.0, &mut rng);
    let singles = PathologyTask::ALL.map(|t| MtlParams::init(single(t), input_dim, hidden_dim, 0.5, 1e-5, 1.0, &mut rng));
    (mt, singles)
}

/// Gaussian cloud of `n` points in `dim` dimensions centred at `shift`.
pub fn gaussian_cloud(n: usize, dim: usize, shift: f64, seed: u64) -> Cloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| shift + rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect();
    Cloud::from_rows(&rows).expect("rows share one dimension")
}
