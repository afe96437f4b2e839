//! Sequentially-optimal ("X+Y") trees.
//!
//! A first optimal tree of `config.depth` levels is trained, then each leaf's
//! row stratum (when it holds at least `2 * min_leaf_size` rows) is searched
//! again at the next entry of `extra_depths` and the resulting sub-tree is
//! grafted in place of the leaf. The composite is not globally optimal, but
//! each stage is, and the whole construction is far cheaper than a single
//! deeper optimal tree. Share constraints, when used, adjust the scores once
//! before the first stage; nothing is re-calibrated per stratum.

use std::time::Instant;

use rayon::prelude::*;

use crate::data::PolicyData;
use crate::search::{finish_tree, run_in_pool, solve_on_rows, SearchConfig, SearchError, SearchResult};
use crate::tree::Node;

/// Strata in left-to-right leaf order: the row positions routed to each leaf.
fn leaf_strata(root: &Node, data: &PolicyData, rows: &[u32]) -> Vec<Vec<u32>> {
    let mut strata = vec![Vec::new(); root.leaf_count()];
    for &r in rows {
        let mut node = root;
        let mut leaf_index = 0usize;
        loop {
            match node {
                Node::Leaf { .. } => {
                    strata[leaf_index].push(r);
                    break;
                }
                Node::Split { rule, left, right } => {
                    let goes_left = match rule {
                        crate::tree::SplitRule::Threshold { feature, value } => {
                            data.feature(*feature)[r as usize] <= *value
                        }
                        crate::tree::SplitRule::CategorySet {
                            feature,
                            left_categories,
                        } => left_categories
                            .contains(&(data.feature(*feature)[r as usize] as u32)),
                    };
                    if goes_left {
                        node = left;
                    } else {
                        leaf_index += left.leaf_count();
                        node = right;
                    }
                }
            }
        }
    }
    strata
}

/// Replaces leaves by the given sub-trees (None keeps the leaf), in
/// left-to-right leaf order.
fn graft(node: &mut Node, replacements: &mut std::vec::IntoIter<Option<Node>>) {
    match node {
        Node::Leaf { .. } => {
            if let Some(sub) = replacements.next().expect("one entry per leaf") {
                *node = sub;
            }
        }
        Node::Split { left, right, .. } => {
            graft(left, replacements);
            graft(right, replacements);
        }
    }
}

fn normalize_shares(node: &mut Node, total: usize) {
    match node {
        Node::Leaf {
            n_train,
            train_share,
            ..
        } => *train_share = *n_train as f64 / total as f64,
        Node::Split { left, right, .. } => {
            normalize_shares(left, total);
            normalize_shares(right, total);
        }
    }
}

/// Trains an optimal tree of `config.depth` levels, then refines its leaves
/// with one optimal sub-search per entry of `extra_depths`. With no extra
/// depths this is exactly [`crate::search::search`].
pub fn search_sequential(
    data: &PolicyData,
    extra_depths: &[usize],
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    if extra_depths.is_empty() {
        return crate::search::search(data, config);
    }
    if config.depth == 0 {
        return Err(SearchError::BadConfig(
            "the first stage of a sequential tree needs depth >= 1".into(),
        ));
    }
    if extra_depths.contains(&0) {
        return Err(SearchError::BadConfig("extra depths must be >= 1".into()));
    }
    config.validate()?;

    let started = Instant::now();
    let min_leaf = config.resolved_min_leaf(data.d());
    let all_rows: Vec<u32> = (0..data.n() as u32).collect();

    let (root, nodes_evaluated, no_splittable) = run_in_pool(config, || {
        let first = solve_on_rows(data, &all_rows, config)?;
        let mut root = first.root;
        let mut nodes = first.nodes_evaluated;
        for &extra in extra_depths {
            let stage_config = SearchConfig {
                depth: extra,
                ..config.clone()
            };
            let strata = leaf_strata(&root, data, &all_rows);
            let results: Vec<Option<(Node, u64)>> = strata
                .par_iter()
                .map(|stratum| {
                    if stratum.len() < 2 * min_leaf {
                        return Ok(None);
                    }
                    let sub = solve_on_rows(data, stratum, &stage_config)?;
                    Ok(Some((sub.root, sub.nodes_evaluated)))
                })
                .collect::<Result<_, SearchError>>()?;
            let mut replacements = Vec::with_capacity(results.len());
            for r in results {
                match r {
                    Some((sub_root, sub_nodes)) => {
                        nodes += sub_nodes;
                        replacements.push(Some(sub_root));
                    }
                    None => replacements.push(None),
                }
            }
            let mut iter = replacements.into_iter();
            graft(&mut root, &mut iter);
        }
        normalize_shares(&mut root, data.n());
        Ok::<_, SearchError>((root, nodes, first.no_splittable_feature))
    })?;

    let total_depth = config.depth + extra_depths.iter().sum::<usize>();
    let stage = {
        let mut s = config.depth.to_string();
        for e in extra_depths {
            s.push('+');
            s.push_str(&e.to_string());
        }
        s
    };
    let (tree, reward) = finish_tree(data, config, root, total_depth, stage);
    Ok(SearchResult {
        tree,
        reward,
        nodes_evaluated,
        wall_time: started.elapsed(),
        no_splittable_feature: no_splittable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureKind, FeatureSpec};
    use crate::search::search;

    fn quadrant_data() -> PolicyData {
        // Four quadrants on (x0, x1), 5 rows each. The optimal depth-2 policy
        // is separable: split x0, then x1 inside the left branch.
        let mut x0 = Vec::new();
        let mut x1 = Vec::new();
        let mut scores = Vec::new();
        let groups: [(f64, f64, [f64; 2]); 4] = [
            (0.25, 0.25, [1.0, 0.0]),
            (0.25, 0.75, [0.0, 1.2]),
            (0.75, 0.25, [1.0, 0.0]),
            (0.75, 0.75, [1.4, 0.0]),
        ];
        for (gx, gy, row_scores) in groups {
            for k in 0..5 {
                x0.push(gx + k as f64 * 1e-3);
                x1.push(gy + k as f64 * 1e-3);
                scores.extend_from_slice(&row_scores);
            }
        }
        PolicyData::new(
            vec![
                FeatureSpec::numeric("x0", FeatureKind::Continuous),
                FeatureSpec::numeric("x1", FeatureKind::Continuous),
            ],
            vec!["t0".into(), "t1".into()],
            vec![x0, x1],
            scores,
            None,
            None,
            (0..20).map(|i| i.to_string()).collect(),
        )
        .unwrap()
    }

    fn exact_cfg(depth: usize) -> SearchConfig {
        SearchConfig {
            min_leaf_size: Some(1),
            exact_mode: true,
            gain_epsilon: 0.0,
            ..SearchConfig::new(depth)
        }
    }

    #[test]
    fn no_extra_depths_equals_plain_search() {
        let data = quadrant_data();
        let cfg = exact_cfg(2);
        let plain = search(&data, &cfg).unwrap();
        let seq = search_sequential(&data, &[], &cfg).unwrap();
        assert_eq!(plain.tree, seq.tree);
        assert_eq!(plain.reward, seq.reward);
    }

    #[test]
    fn one_plus_one_recovers_separable_depth2_optimum() {
        let data = quadrant_data();
        let seq = search_sequential(&data, &[1], &exact_cfg(1)).unwrap();
        let optimal = search(&data, &exact_cfg(2)).unwrap();
        // Per-row maximum is attainable: 5*(1 + 1.2 + 1 + 1.4).
        assert!((optimal.reward - 23.0).abs() < 1e-12);
        assert!((seq.reward - optimal.reward).abs() < 1e-9);
        assert_eq!(seq.tree.stage, "1+1");
        assert_eq!(seq.tree.depth, 2);
    }

    #[test]
    fn composite_leaf_shares_sum_to_one() {
        let data = quadrant_data();
        let seq = search_sequential(&data, &[1, 1], &exact_cfg(1)).unwrap();
        fn share_sum(node: &Node) -> f64 {
            match node {
                Node::Leaf { train_share, .. } => *train_share,
                Node::Split { left, right, .. } => share_sum(left) + share_sum(right),
            }
        }
        assert!((share_sum(&seq.tree.root) - 1.0).abs() < 1e-12);
        assert_eq!(seq.tree.stage, "1+1+1");
    }

    #[test]
    fn small_strata_keep_their_leaf() {
        let data = quadrant_data();
        // min_leaf 8: each depth-1 stratum has 10 rows < 16, so no stratum is
        // refined and the composite equals the first stage.
        let cfg = SearchConfig {
            min_leaf_size: Some(8),
            exact_mode: true,
            gain_epsilon: 0.0,
            ..SearchConfig::new(1)
        };
        let seq = search_sequential(&data, &[1], &cfg).unwrap();
        let plain = search(&data, &cfg).unwrap();
        assert_eq!(seq.tree.root, plain.tree.root);
        assert_eq!(seq.tree.stage, "1+1");
    }

    #[test]
    fn sequential_is_deterministic() {
        let data = quadrant_data();
        let a = search_sequential(&data, &[1], &exact_cfg(1)).unwrap();
        let b = search_sequential(&data, &[1], &exact_cfg(1)).unwrap();
        assert_eq!(a.tree, b.tree);
    }

    #[test]
    fn zero_depth_stages_rejected() {
        let data = quadrant_data();
        assert!(matches!(
            search_sequential(&data, &[0], &exact_cfg(1)),
            Err(SearchError::BadConfig(_))
        ));
        assert!(matches!(
            search_sequential(&data, &[1], &exact_cfg(0)),
            Err(SearchError::BadConfig(_))
        ));
    }
}
