//! Shared instance builders for the benchmark suite.

use poltree::synth::{generate, GeneratorSpec, SynthFeature};
use poltree::PolicyData;

/// A planted-signal population: `p` continuous features plus one 6-category
/// feature, two treatments, moderate noise.
pub fn bench_instance(n: usize, p: usize, seed: u64) -> PolicyData {
    let mut features = vec![SynthFeature::Continuous; p.saturating_sub(1).max(1)];
    features.push(SynthFeature::Categorical { categories: 6 });
    let spec = GeneratorSpec {
        n,
        treatments: 2,
        features,
        planted_depth: 2,
        signal: 1.0,
        noise_sd: 0.5,
        seed,
    };
    generate(&spec).expect("valid spec").data
}
