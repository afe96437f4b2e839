//! Synthetic populations with a planted policy.
//!
//! Scores follow `score[i][j] = base_i + signal * 1{planted tree assigns j to
//! row i} + noise`, so the planted tree is the welfare-optimal policy of its
//! depth when the noise is small, and its welfare gain over a random
//! allocation is known by construction. Useful for recovery and regret tests
//! and for benchmark instances.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::data::{FeatureKind, FeatureSpec, PolicyData};
use crate::search::SearchConfig;
use crate::tree::{Node, PolicyTree, SplitRule, TrainStats, TREE_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    BadSpec(String),
}

/// Feature kinds the generator can produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthFeature {
    /// Uniform on [0, 1).
    Continuous,
    /// Uniform integer grid 0..levels.
    OrderedDiscrete { levels: u32 },
    /// Uniform category index 0..categories.
    Categorical { categories: u32 },
}

#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub n: usize,
    pub treatments: usize,
    pub features: Vec<SynthFeature>,
    /// Depth of the planted policy tree.
    pub planted_depth: usize,
    /// Score bonus a row receives under its planted treatment.
    pub signal: f64,
    /// Standard deviation of i.i.d. Gaussian noise added to every score.
    pub noise_sd: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.n == 0 {
            return Err(SynthError::BadSpec("n must be >= 1".into()));
        }
        if self.treatments < 2 {
            return Err(SynthError::BadSpec("at least two treatments".into()));
        }
        if self.features.is_empty() {
            return Err(SynthError::BadSpec("at least one feature".into()));
        }
        for f in &self.features {
            match *f {
                SynthFeature::OrderedDiscrete { levels } if levels < 2 => {
                    return Err(SynthError::BadSpec("ordered features need >= 2 levels".into()))
                }
                SynthFeature::Categorical { categories } if categories < 2 => {
                    return Err(SynthError::BadSpec(
                        "categorical features need >= 2 categories".into(),
                    ))
                }
                _ => {}
            }
        }
        if !self.signal.is_finite() || !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(SynthError::BadSpec(
                "signal must be finite and noise_sd non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// The generated population and the planted tree as an oracle policy.
#[derive(Debug)]
pub struct SynthOutput {
    pub data: PolicyData,
    pub oracle: PolicyTree,
}

fn plant_rule(spec: &GeneratorSpec, feature: usize, rng: &mut ChaCha8Rng) -> SplitRule {
    match spec.features[feature] {
        SynthFeature::Continuous => SplitRule::Threshold {
            feature,
            value: 0.3 + 0.4 * rng.random::<f64>(),
        },
        SynthFeature::OrderedDiscrete { levels } => SplitRule::Threshold {
            feature,
            value: rng.random_range(0..levels - 1) as f64 + 0.5,
        },
        SynthFeature::Categorical { categories } => {
            // Roughly half the categories on each side, never empty or full.
            let mut left = BTreeSet::new();
            for c in 0..categories {
                if rng.random::<bool>() {
                    left.insert(c);
                }
            }
            if left.is_empty() {
                left.insert(rng.random_range(0..categories));
            }
            if left.len() == categories as usize {
                let drop = rng.random_range(0..categories);
                left.remove(&drop);
            }
            SplitRule::CategorySet {
                feature,
                left_categories: left,
            }
        }
    }
}

fn plant_tree(
    spec: &GeneratorSpec,
    depth: usize,
    leaf_counter: &mut usize,
    rng: &mut ChaCha8Rng,
) -> Node {
    if depth == 0 {
        let treatment = *leaf_counter % spec.treatments;
        *leaf_counter += 1;
        return Node::Leaf {
            treatment,
            n_train: 0,
            train_share: 0.0,
        };
    }
    let feature = rng.random_range(0..spec.features.len());
    let rule = plant_rule(spec, feature, rng);
    Node::Split {
        rule,
        left: Box::new(plant_tree(spec, depth - 1, leaf_counter, rng)),
        right: Box::new(plant_tree(spec, depth - 1, leaf_counter, rng)),
    }
}

fn route(node: &Node, features: &[Vec<f64>], row: usize) -> usize {
    match node {
        Node::Leaf { treatment, .. } => *treatment,
        Node::Split { rule, left, right } => {
            let goes_left = match rule {
                SplitRule::Threshold { feature, value } => features[*feature][row] <= *value,
                SplitRule::CategorySet {
                    feature,
                    left_categories,
                } => left_categories.contains(&(features[*feature][row] as u32)),
            };
            route(if goes_left { left } else { right }, features, row)
        }
    }
}

fn fill_leaf_stats(node: &mut Node, assignments: &[usize], features: &[Vec<f64>], n: usize) {
    fn count(node: &mut Node, rows: Vec<usize>, features: &[Vec<f64>], total: usize) {
        match node {
            Node::Leaf {
                n_train,
                train_share,
                ..
            } => {
                *n_train = rows.len();
                *train_share = rows.len() as f64 / total as f64;
            }
            Node::Split { rule, left, right } => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| match rule {
                    SplitRule::Threshold { feature, value } => features[*feature][i] <= *value,
                    SplitRule::CategorySet {
                        feature,
                        left_categories,
                    } => left_categories.contains(&(features[*feature][i] as u32)),
                });
                count(left, l, features, total);
                count(right, r, features, total);
            }
        }
    }
    debug_assert_eq!(assignments.len(), n);
    count(node, (0..n).collect(), features, n);
}

/// Generates a population with a planted depth-`planted_depth` policy and
/// returns it together with the planted tree. Deterministic in `seed`.
pub fn generate(spec: &GeneratorSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let d = spec.treatments;

    let feature_specs: Vec<FeatureSpec> = spec
        .features
        .iter()
        .enumerate()
        .map(|(f, kind)| match *kind {
            SynthFeature::Continuous => {
                FeatureSpec::numeric(format!("x{f}"), FeatureKind::Continuous)
            }
            SynthFeature::OrderedDiscrete { .. } => {
                FeatureSpec::numeric(format!("x{f}"), FeatureKind::OrderedDiscrete)
            }
            SynthFeature::Categorical { categories } => FeatureSpec::categorical(
                format!("x{f}"),
                (0..categories).map(|c| format!("c{c}")).collect(),
            ),
        })
        .collect();

    let mut features: Vec<Vec<f64>> = Vec::with_capacity(spec.features.len());
    for kind in &spec.features {
        let col = (0..n)
            .map(|_| match *kind {
                SynthFeature::Continuous => rng.random::<f64>(),
                SynthFeature::OrderedDiscrete { levels } => {
                    rng.random_range(0..levels) as f64
                }
                SynthFeature::Categorical { categories } => {
                    rng.random_range(0..categories) as f64
                }
            })
            .collect();
        features.push(col);
    }

    let mut leaf_counter = 0usize;
    let mut planted = plant_tree(spec, spec.planted_depth, &mut leaf_counter, &mut rng);

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let planted_assignment: Vec<usize> = (0..n).map(|i| route(&planted, &features, i)).collect();
    let mut scores = Vec::with_capacity(n * d);
    for (i, &planted_t) in planted_assignment.iter().enumerate() {
        let base: f64 = normal.sample(&mut rng);
        let _ = i;
        for j in 0..d {
            let bonus = if j == planted_t { spec.signal } else { 0.0 };
            let noise = if spec.noise_sd > 0.0 {
                spec.noise_sd * normal.sample(&mut rng)
            } else {
                0.0
            };
            scores.push(base + bonus + noise);
        }
    }

    // Observed allocation: an unrelated uniform draw, with its realized score
    // as the observed outcome.
    let observed: Vec<usize> = (0..n).map(|_| rng.random_range(0..d)).collect();
    let outcomes: Vec<f64> = observed
        .iter()
        .enumerate()
        .map(|(i, &t)| scores[i * d + t])
        .collect();

    fill_leaf_stats(&mut planted, &planted_assignment, &features, n);
    let oracle_welfare: f64 = planted_assignment
        .iter()
        .enumerate()
        .map(|(i, &t)| scores[i * d + t])
        .sum();

    let treatment_labels: Vec<String> = (0..d).map(|j| format!("t{j}")).collect();
    let data = PolicyData::new(
        feature_specs.clone(),
        treatment_labels.clone(),
        features,
        scores,
        Some(observed),
        Some(outcomes),
        (0..n).map(|i| i.to_string()).collect(),
    )
    .map_err(|e| SynthError::BadSpec(e.to_string()))?;

    let oracle = PolicyTree {
        format_version: TREE_FORMAT_VERSION,
        depth: spec.planted_depth,
        stage: spec.planted_depth.to_string(),
        treatment_labels,
        feature_specs,
        train: TrainStats {
            n,
            welfare_total: oracle_welfare,
            welfare_mean: oracle_welfare / n as f64,
        },
        config: SearchConfig::new(spec.planted_depth),
        root: planted,
    };
    Ok(SynthOutput { data, oracle })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{allocate_best_score, allocate_random, evaluate};
    use crate::search::{search, SearchConfig};

    fn base_spec() -> GeneratorSpec {
        GeneratorSpec {
            n: 800,
            treatments: 2,
            features: vec![
                SynthFeature::Continuous,
                SynthFeature::Continuous,
                SynthFeature::Categorical { categories: 4 },
            ],
            planted_depth: 2,
            signal: 1.0,
            noise_sd: 0.0,
            seed: 42,
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate(&base_spec()).unwrap();
        let b = generate(&base_spec()).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.oracle, b.oracle);
    }

    #[test]
    fn zero_signal_zero_noise_makes_all_policies_equal() {
        let spec = GeneratorSpec {
            signal: 0.0,
            ..base_spec()
        };
        let out = generate(&spec).unwrap();
        let best = allocate_best_score(&out.data);
        let random = allocate_random(out.data.n(), &[0.5, 0.5], 3).unwrap();
        let report = evaluate(&[best, random], &out.data).unwrap();
        assert!((report.rows[0].welfare_mean - report.rows[1].welfare_mean).abs() < 1e-12);
    }

    #[test]
    fn noiseless_planted_rule_is_recovered_exactly() {
        let out = generate(&base_spec()).unwrap();
        let cfg = SearchConfig {
            min_leaf_size: Some(1),
            exact_mode: true,
            gain_epsilon: 0.0,
            ..SearchConfig::new(2)
        };
        let result = search(&out.data, &cfg).unwrap();
        let trained = result.tree.assign(&out.data).unwrap().treatments;
        let oracle = out.oracle.assign(&out.data).unwrap().treatments;
        assert_eq!(trained, oracle);
    }

    #[test]
    fn oracle_dominates_when_noiseless() {
        let out = generate(&base_spec()).unwrap();
        let oracle_alloc = out.oracle.assign(&out.data).unwrap().treatments;
        let best = allocate_best_score(&out.data);
        let mut oracle_welfare = 0.0;
        let mut best_welfare = 0.0;
        for (i, (&oracle_t, &best_t)) in oracle_alloc.iter().zip(&best.assignments).enumerate() {
            oracle_welfare += out.data.score(i, oracle_t);
            best_welfare += out.data.score(i, best_t);
        }
        assert!((oracle_welfare - best_welfare).abs() < 1e-9);
        assert_eq!(out.oracle.train.welfare_total, oracle_welfare);
    }

    #[test]
    fn trained_tree_captures_most_of_the_gain() {
        let spec = GeneratorSpec {
            n: 2000,
            noise_sd: 0.5,
            seed: 9,
            ..base_spec()
        };
        let out = generate(&spec).unwrap();
        let result = search(&out.data, &SearchConfig::new(2)).unwrap();
        let trained = result.tree.assign(&out.data).unwrap();
        let oracle = out.oracle.assign(&out.data).unwrap();
        let random = allocate_random(out.data.n(), &[0.5, 0.5], 17).unwrap();
        let welfare = |assignment: &[usize]| -> f64 {
            assignment
                .iter()
                .enumerate()
                .map(|(i, &t)| out.data.score(i, t))
                .sum::<f64>()
                / out.data.n() as f64
        };
        let w_tree = welfare(&trained.treatments);
        let w_oracle = welfare(&oracle.treatments);
        let w_random = welfare(&random.assignments);
        assert!(w_oracle > w_random);
        let ratio = (w_tree - w_random) / (w_oracle - w_random);
        assert!(ratio >= 0.95, "gain ratio {ratio}");
    }

    #[test]
    fn bad_specs_rejected() {
        let mut spec = base_spec();
        spec.treatments = 1;
        assert!(matches!(generate(&spec), Err(SynthError::BadSpec(_))));
        let mut spec = base_spec();
        spec.noise_sd = -1.0;
        assert!(matches!(generate(&spec), Err(SynthError::BadSpec(_))));
    }
}
