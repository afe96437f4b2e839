//! Shared helpers for integration tests: an independent brute-force tree
//! enumerator used as the optimality oracle, and random instance builders.
//!
//! The enumerator deliberately shares no code with the search engine: it
//! derives its own midpoints and category subsets and partitions row index
//! vectors directly.
#![allow(dead_code)] // each test binary uses a different subset of these helpers

use poltree::{FeatureKind, FeatureSpec, PolicyData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Highest welfare attainable by any tree with at most `depth` split levels
/// on the given rows, with every leaf holding at least `min_leaf` rows.
pub fn enumerate_best(data: &PolicyData, rows: &[usize], depth: usize, min_leaf: usize) -> f64 {
    let d = data.d();
    let mut best = {
        let mut column_sums = vec![0.0f64; d];
        for &i in rows {
            for (j, s) in column_sums.iter_mut().enumerate() {
                *s += data.score(i, j);
            }
        }
        column_sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    };
    if depth == 0 {
        return best;
    }
    for f in 0..data.p() {
        let col = data.feature(f);
        match data.specs()[f].kind {
            FeatureKind::Categorical => {
                let mut present: Vec<u32> = rows.iter().map(|&i| col[i] as u32).collect();
                present.sort_unstable();
                present.dedup();
                let c = present.len();
                if c < 2 {
                    continue;
                }
                // Subsets containing the lowest present category cover every
                // partition once (complement symmetry).
                for mask in 0u64..(1 << (c - 1)) - 1 {
                    let left_set: Vec<u32> = std::iter::once(present[0])
                        .chain(
                            present[1..]
                                .iter()
                                .enumerate()
                                .filter(|(b, _)| mask & (1 << b) != 0)
                                .map(|(_, &cat)| cat),
                        )
                        .collect();
                    let (left, right): (Vec<usize>, Vec<usize>) = rows
                        .iter()
                        .partition(|&&i| left_set.contains(&(col[i] as u32)));
                    if left.len() < min_leaf || right.len() < min_leaf {
                        continue;
                    }
                    let reward = enumerate_best(data, &left, depth - 1, min_leaf)
                        + enumerate_best(data, &right, depth - 1, min_leaf);
                    if reward > best {
                        best = reward;
                    }
                }
            }
            _ => {
                let mut values: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
                values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                values.dedup();
                for w in values.windows(2) {
                    let threshold = (w[0] + w[1]) / 2.0;
                    let (left, right): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&i| col[i] <= threshold);
                    if left.len() < min_leaf || right.len() < min_leaf {
                        continue;
                    }
                    let reward = enumerate_best(data, &left, depth - 1, min_leaf)
                        + enumerate_best(data, &right, depth - 1, min_leaf);
                    if reward > best {
                        best = reward;
                    }
                }
            }
        }
    }
    best
}

/// Sum over rows of the row-wise maximum score: an upper bound for any policy.
pub fn per_row_max_bound(data: &PolicyData) -> f64 {
    (0..data.n())
        .map(|i| {
            (0..data.d())
                .map(|j| data.score(i, j))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

/// Small random instance with one continuous, one ordered (5 levels) and one
/// categorical (4 categories) feature, i.i.d. uniform scores.
pub fn mixed_instance(n: usize, d: usize, seed: u64) -> PolicyData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let continuous: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let ordered: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
    let categorical: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
    let scores: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    PolicyData::new(
        vec![
            FeatureSpec::numeric("x_cont", FeatureKind::Continuous),
            FeatureSpec::numeric("x_ord", FeatureKind::OrderedDiscrete),
            FeatureSpec::categorical(
                "x_cat",
                (0..4).map(|c| format!("c{c}")).collect(),
            ),
        ],
        (0..d).map(|j| format!("t{j}")).collect(),
        vec![continuous, ordered, categorical],
        scores,
        None,
        None,
        (0..n).map(|i| i.to_string()).collect(),
    )
    .unwrap()
}

pub fn all_rows(data: &PolicyData) -> Vec<usize> {
    (0..data.n()).collect()
}

pub fn relative_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
