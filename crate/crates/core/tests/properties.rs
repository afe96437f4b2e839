//! Property tests for the data split, tree serialization, assignment and
//! rule rendering.

mod common;

use common::*;
use poltree::data::split_data;
use poltree::render::render_rules;
use poltree::{search, FeatureKind, PolicyData, PolicyTree, SearchConfig};
use proptest::prelude::*;

fn quick_tree(seed: u64, n: usize) -> (PolicyData, PolicyTree) {
    let data = mixed_instance(n, 2, seed);
    let cfg = SearchConfig {
        min_leaf_size: Some(2),
        approx_points: 12,
        seed,
        ..SearchConfig::new(2)
    };
    let tree = search(&data, &cfg).unwrap().tree;
    (data, tree)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn split_parts_partition_the_rows(n in 3usize..120, seed in 0u64..500) {
        let data = mixed_instance(n, 2, seed);
        let split = split_data(&data, [0.4, 0.4, 0.2], seed).unwrap();
        let mut ids: Vec<String> = split
            .train_forest
            .row_ids()
            .iter()
            .chain(split.train_policy.row_ids())
            .chain(split.predict.row_ids())
            .cloned()
            .collect();
        prop_assert_eq!(ids.len(), n);
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), n);
    }

    #[test]
    fn tree_json_round_trips(seed in 0u64..200) {
        let (_, tree) = quick_tree(seed, 40);
        let back = PolicyTree::from_json(&tree.to_json()).unwrap();
        prop_assert_eq!(tree, back);
    }

    #[test]
    fn assign_is_pointwise(seed in 0u64..200) {
        let (_, tree) = quick_tree(seed, 40);
        let probe = mixed_instance(30, 2, seed + 1000);
        let forward = tree.assign(&probe).unwrap().treatments;
        // Reversing the rows permutes the assignments identically.
        let reversed_rows: Vec<usize> = (0..probe.n()).rev().collect();
        let reversed = tree.assign(&probe.subset(&reversed_rows)).unwrap().treatments;
        let unreversed: Vec<usize> = reversed.into_iter().rev().collect();
        prop_assert_eq!(forward, unreversed);
    }

    #[test]
    fn rendered_rules_reproduce_assign(seed in 0u64..200) {
        let (_, tree) = quick_tree(seed, 50);
        let probe = mixed_instance(40, 2, seed + 2000);
        let text = render_rules(&tree, None).unwrap();
        let rules = parse_rules(&text);
        let assigned = tree.assign(&probe).unwrap().treatments;
        for (i, &treatment) in assigned.iter().enumerate() {
            let matching: Vec<&ParsedRule> =
                rules.iter().filter(|r| r.matches(&probe, i)).collect();
            prop_assert_eq!(matching.len(), 1, "row {} must match exactly one rule", i);
            prop_assert_eq!(&matching[0].treatment, &tree.treatment_labels[treatment]);
        }
    }
}

// --- A tiny independent parser for the rendered rule lines. ---

enum Cond {
    Le(usize, f64),
    Gt(usize, f64),
    In(usize, Vec<String>),
    NotIn(usize, Vec<String>),
}

struct ParsedRule {
    conditions: Vec<Cond>,
    treatment: String,
}

impl ParsedRule {
    fn matches(&self, data: &PolicyData, row: usize) -> bool {
        self.conditions.iter().all(|c| match c {
            Cond::Le(f, v) => data.feature(*f)[row] <= *v,
            Cond::Gt(f, v) => data.feature(*f)[row] > *v,
            Cond::In(f, labels) => {
                let cat = data.feature(*f)[row] as usize;
                labels.contains(&data.specs()[*f].categories[cat])
            }
            Cond::NotIn(f, labels) => {
                let cat = data.feature(*f)[row] as usize;
                !labels.contains(&data.specs()[*f].categories[cat])
            }
        })
    }
}

fn parse_rules(text: &str) -> Vec<ParsedRule> {
    let feature_index = |name: &str| -> usize {
        match name {
            "x_cont" => 0,
            "x_ord" => 1,
            "x_cat" => 2,
            other => panic!("unknown feature {other}"),
        }
    };
    text.lines()
        .map(|line| {
            let (conds, treatment) = line.split_once(" → ").expect("rule arrow");
            let conditions = if conds == "(all)" {
                Vec::new()
            } else {
                conds
                    .split(", ")
                    .map(|c| {
                        if let Some((name, rest)) = c.split_once(" not in: ") {
                            Cond::NotIn(
                                feature_index(name),
                                rest.split(' ').map(str::to_string).collect(),
                            )
                        } else if let Some((name, rest)) = c.split_once(" in: ") {
                            Cond::In(
                                feature_index(name),
                                rest.split(' ').map(str::to_string).collect(),
                            )
                        } else if let Some((name, v)) = c.split_once(" ≤ ") {
                            Cond::Le(feature_index(name), v.parse().unwrap())
                        } else if let Some((name, v)) = c.split_once(" > ") {
                            Cond::Gt(feature_index(name), v.parse().unwrap())
                        } else {
                            panic!("unparseable condition `{c}`");
                        }
                    })
                    .collect()
            };
            ParsedRule {
                conditions,
                treatment: treatment.to_string(),
            }
        })
        .collect()
}

#[test]
fn rendered_shares_reflect_data_routing() {
    let (data, tree) = quick_tree(5, 60);
    let text = render_rules(&tree, Some(&data)).unwrap();
    // Every line carries a share suffix and they sum to 100%.
    let mut total = 0.0f64;
    for line in text.lines() {
        let open = line.rfind('[').expect("share bracket");
        let share: f64 = line[open + 1..line.len() - 2].parse().unwrap();
        total += share;
    }
    assert!((total - 100.0).abs() < 0.1, "shares sum to {total}");
}

#[test]
fn ordered_discrete_splits_like_continuous_on_midpoints() {
    // An ordered feature with integer levels must produce half-integer
    // thresholds, never a threshold equal to an observed level.
    let data = mixed_instance(60, 2, 11);
    let cfg = SearchConfig {
        min_leaf_size: Some(1),
        exact_mode: true,
        gain_epsilon: 0.0,
        ..SearchConfig::new(2)
    };
    let tree = search(&data, &cfg).unwrap().tree;
    fn walk(node: &poltree::Node, data: &PolicyData) {
        if let poltree::Node::Split { rule, left, right } = node {
            if let poltree::SplitRule::Threshold { feature, value } = rule {
                if data.specs()[*feature].kind == FeatureKind::OrderedDiscrete {
                    assert_eq!(value.fract().abs(), 0.5, "threshold {value}");
                }
                assert!(!data.feature(*feature).contains(value));
            }
            walk(left, data);
            walk(right, data);
        }
    }
    walk(&tree.root, &data);
}
