//! Split-candidate generation with level-dependent approximation.
//!
//! The budget of candidate values per feature halves at every level above the
//! bottom of the tree: a node whose subtree has `l` remaining split levels
//! gets `max(2, floor(A / 2^(l-1)))` thresholds, so a depth-4 tree evaluates
//! A/8 thresholds at the root, then A/4, A/2 and A toward the leaves. The same
//! halving applies to the categorical combination budget (floor of 1).

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::FeatureSpec;
use crate::search::SearchConfig;

/// Candidate-threshold budget at `level_from_bottom` (1 = bottom split level),
/// or `None` in exact mode (every midpoint is a candidate).
pub(crate) fn threshold_budget(config: &SearchConfig, level_from_bottom: usize) -> Option<usize> {
    if config.exact_mode {
        return None;
    }
    let halvings = level_from_bottom.saturating_sub(1);
    let scaled = config
        .approx_points
        .checked_shr(halvings.min(63) as u32)
        .unwrap_or(0);
    Some(scaled.max(2))
}

pub(crate) fn category_budget(config: &SearchConfig, level_from_bottom: usize) -> usize {
    let halvings = level_from_bottom.saturating_sub(1);
    let scaled = config
        .cat_combinations
        .checked_shr(halvings.min(63) as u32)
        .unwrap_or(0);
    scaled.max(1)
}

/// Candidate thresholds for a numeric feature: midpoints between adjacent
/// distinct observed values. When the budget `k` at this level is smaller than
/// the number of midpoints, `k` midpoints at equally spaced rank positions are
/// kept (quantile spacing). Returns an empty list when fewer than two distinct
/// values remain (the feature is unsplittable here). No returned threshold
/// equals an observed value.
pub fn candidate_thresholds(
    values: &[f64],
    level_from_bottom: usize,
    config: &SearchConfig,
) -> Vec<f64> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
    distinct.dedup();
    thresholds_from_sorted_distinct(&distinct, level_from_bottom, config)
}

/// As [`candidate_thresholds`] but over already sorted, deduplicated values.
pub(crate) fn thresholds_from_sorted_distinct(
    distinct: &[f64],
    level_from_bottom: usize,
    config: &SearchConfig,
) -> Vec<f64> {
    let mut out = Vec::new();
    thresholds_into(distinct, level_from_bottom, config, &mut Vec::new(), &mut out);
    out
}

/// Buffer-reusing form for the search hot path; `mids` is scratch, the
/// candidates land in `out`.
pub(crate) fn thresholds_into(
    distinct: &[f64],
    level_from_bottom: usize,
    config: &SearchConfig,
    mids: &mut Vec<f64>,
    out: &mut Vec<f64>,
) {
    out.clear();
    if distinct.len() < 2 {
        return;
    }
    // Adjacent representable floats can collapse the midpoint onto an
    // endpoint; such pairs yield no candidate.
    mids.clear();
    for w in distinct.windows(2) {
        let m = w[0] / 2.0 + w[1] / 2.0;
        if m > w[0] && m < w[1] {
            mids.push(m);
        }
    }
    match threshold_budget(config, level_from_bottom) {
        Some(k) if mids.len() > k => {
            let m = mids.len();
            out.extend((1..=k).map(|i| mids[i * m / (k + 1)]));
        }
        _ => out.extend_from_slice(mids),
    }
}

/// Stable 64-bit mixing (splitmix64 steps) so categorical subset sampling is
/// reproducible independent of hasher internals or thread schedule.
fn mix(mut h: u64, v: u64) -> u64 {
    h = h.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(v);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn subset_seed(
    config: &SearchConfig,
    feature: &FeatureSpec,
    present: &BTreeSet<u32>,
    level_from_bottom: usize,
) -> u64 {
    let mut h = mix(config.seed, level_from_bottom as u64);
    for b in feature.name.as_bytes() {
        h = mix(h, *b as u64);
    }
    for &c in present {
        h = mix(h, c as u64);
    }
    h
}

/// Candidate category splits for a categorical feature, given the categories
/// present in the node. The lowest present category is pinned to the left set
/// to break complement symmetry. All `2^(c-1) - 1` subsets are enumerated when
/// they fit the level budget (or in exact mode up to c = 20); otherwise the
/// budget is filled with distinct subsets sampled uniformly (seeded). The
/// result is sorted, smallest set first.
pub fn candidate_category_splits(
    feature: &FeatureSpec,
    present: &BTreeSet<u32>,
    level_from_bottom: usize,
    config: &SearchConfig,
) -> Vec<BTreeSet<u32>> {
    let c = present.len();
    if c < 2 {
        return Vec::new();
    }
    let cats: Vec<u32> = present.iter().copied().collect();
    let pinned = cats[0];
    let rest = &cats[1..];
    let budget = category_budget(config, level_from_bottom);
    let total = if c > 63 {
        u64::MAX
    } else {
        (1u64 << (c - 1)) - 1
    };

    let mut subsets: Vec<BTreeSet<u32>>;
    if total <= budget as u64 || (config.exact_mode && c <= 20) {
        subsets = Vec::with_capacity(total as usize);
        for mask in 0..total {
            let mut set = BTreeSet::from([pinned]);
            for (bit, &cat) in rest.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    set.insert(cat);
                }
            }
            subsets.push(set);
        }
    } else {
        let mut rng =
            ChaCha8Rng::seed_from_u64(subset_seed(config, feature, present, level_from_bottom));
        let mut seen: HashSet<BTreeSet<u32>> = HashSet::with_capacity(budget);
        subsets = Vec::with_capacity(budget);
        // `total > budget`, so the rejection loop always finds enough distinct
        // subsets; the attempt cap is a hard stop against pathological inputs.
        let mut attempts = 0u64;
        let max_attempts = 64 * budget as u64 + 1024;
        while subsets.len() < budget && attempts < max_attempts {
            attempts += 1;
            let mut set = BTreeSet::from([pinned]);
            for &cat in rest {
                if rng.random::<bool>() {
                    set.insert(cat);
                }
            }
            if set.len() == c {
                continue;
            }
            if seen.insert(set.clone()) {
                subsets.push(set);
            }
        }
    }
    subsets.sort();
    subsets
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSpec;

    fn cfg(approx: usize, exact: bool) -> SearchConfig {
        SearchConfig {
            approx_points: approx,
            exact_mode: exact,
            ..SearchConfig::new(2)
        }
    }

    #[test]
    fn exact_mode_returns_all_midpoints() {
        let t = candidate_thresholds(&[1.0, 2.0, 3.0], 1, &cfg(100, true));
        assert_eq!(t, [1.5, 2.5]);
    }

    #[test]
    fn budget_caps_and_halves_per_level() {
        let values: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let config = cfg(100, false);
        assert_eq!(candidate_thresholds(&values, 1, &config).len(), 100);
        assert_eq!(candidate_thresholds(&values, 2, &config).len(), 50);
        assert_eq!(candidate_thresholds(&values, 3, &config).len(), 25);
        assert_eq!(candidate_thresholds(&values, 4, &config).len(), 12);
        // Guard: never fewer than two candidates.
        assert_eq!(candidate_thresholds(&values, 10, &config).len(), 2);
    }

    #[test]
    fn thresholds_never_equal_observed_values_and_are_sorted() {
        let values: Vec<f64> = (0..500).map(|i| (i as f64).sqrt()).collect();
        for level in 1..=4 {
            let t = candidate_thresholds(&values, level, &cfg(64, false));
            assert!(t.windows(2).all(|w| w[0] < w[1]));
            for cand in &t {
                assert!(!values.contains(cand));
            }
        }
    }

    #[test]
    fn degenerate_values_yield_no_candidates() {
        assert!(candidate_thresholds(&[2.0, 2.0, 2.0], 1, &cfg(10, false)).is_empty());
        assert!(candidate_thresholds(&[2.0], 1, &cfg(10, false)).is_empty());
    }

    #[test]
    fn three_categories_enumerate_three_splits() {
        let spec = FeatureSpec::categorical(
            "g",
            vec!["a".into(), "b".into(), "c".into()],
        );
        let present = BTreeSet::from([0, 1, 2]);
        let splits = candidate_category_splits(&spec, &present, 1, &cfg(100, false));
        assert_eq!(
            splits,
            vec![
                BTreeSet::from([0]),
                BTreeSet::from([0, 1]),
                BTreeSet::from([0, 2]),
            ]
        );
    }

    #[test]
    fn two_categories_single_split() {
        let spec = FeatureSpec::categorical("g", vec!["a".into(), "b".into()]);
        let present = BTreeSet::from([0, 1]);
        let splits = candidate_category_splits(&spec, &present, 1, &cfg(100, false));
        assert_eq!(splits, vec![BTreeSet::from([0])]);
    }

    #[test]
    fn sampling_fills_budget_deterministically() {
        let labels: Vec<String> = (0..12).map(|i| format!("c{i}")).collect();
        let spec = FeatureSpec::categorical("g", labels);
        let present: BTreeSet<u32> = (0..12).collect();
        let config = cfg(100, false);
        let a = candidate_category_splits(&spec, &present, 1, &config);
        let b = candidate_category_splits(&spec, &present, 1, &config);
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
        let unique: HashSet<_> = a.iter().collect();
        assert_eq!(unique.len(), 100);
        for set in &a {
            assert!(set.contains(&0), "lowest category pinned left");
            assert!(set.len() < 12, "strict subset");
        }
        let other = SearchConfig {
            seed: 99,
            ..config.clone()
        };
        assert_ne!(a, candidate_category_splits(&spec, &present, 1, &other));
    }

    #[test]
    fn category_budget_halves_per_level() {
        let labels: Vec<String> = (0..12).map(|i| format!("c{i}")).collect();
        let spec = FeatureSpec::categorical("g", labels);
        let present: BTreeSet<u32> = (0..12).collect();
        let config = cfg(100, false);
        assert_eq!(candidate_category_splits(&spec, &present, 2, &config).len(), 50);
        assert_eq!(candidate_category_splits(&spec, &present, 3, &config).len(), 25);
    }

    #[test]
    fn exact_mode_enumerates_within_feasible_size() {
        let labels: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
        let spec = FeatureSpec::categorical("g", labels);
        let present: BTreeSet<u32> = (0..6).collect();
        let config = SearchConfig {
            cat_combinations: 4,
            ..cfg(100, true)
        };
        // 2^5 - 1 = 31 despite the tiny budget.
        assert_eq!(candidate_category_splits(&spec, &present, 1, &config).len(), 31);
    }
}
