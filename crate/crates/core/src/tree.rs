//! Policy-tree representation, application and JSON serialization.
//!
//! Split semantics: a `Threshold` sends `value <= threshold` left and
//! `value > threshold` right; a `CategorySet` sends rows whose category is in
//! `left_categories` left and everything else right. A category seen at
//! prediction time but unknown to the training specs routes right (the
//! "not in" branch) and increments a warning counter.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FeatureKind, FeatureSpec, PolicyData};
use crate::search::SearchConfig;

/// Current tree JSON schema version.
pub const TREE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("feature specs do not match the tree's training specs: {0}")]
    SpecMismatch(String),
    #[error("unsupported tree format version {0}")]
    SchemaVersionUnsupported(u32),
    #[error("malformed tree: {0}")]
    MalformedTree(String),
}

/// A binary split on one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    Threshold { feature: usize, value: f64 },
    CategorySet {
        feature: usize,
        left_categories: BTreeSet<u32>,
    },
}

impl SplitRule {
    pub fn feature(&self) -> usize {
        match self {
            SplitRule::Threshold { feature, .. } => *feature,
            SplitRule::CategorySet { feature, .. } => *feature,
        }
    }
}

/// Tree node: either a treatment leaf or an internal split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        treatment: usize,
        n_train: usize,
        train_share: f64,
    },
    Split {
        rule: SplitRule,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    fn max_depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.max_depth().max(right.max_depth()),
        }
    }
}

/// Welfare attained on the rows the tree was trained on, in the score units
/// used for training (cost-adjusted when share constraints were active).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub n: usize,
    pub welfare_total: f64,
    pub welfare_mean: f64,
}

/// A trained policy: the split/leaf structure plus everything needed to apply
/// and render it (training feature specs, treatment labels, search settings).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTree {
    pub format_version: u32,
    /// Maximum number of split levels on any root-to-leaf path.
    pub depth: usize,
    /// Stage structure, e.g. "2" for a plain depth-2 tree or "2+1" for a
    /// depth-2 tree refined by one depth-1 stage.
    pub stage: String,
    pub treatment_labels: Vec<String>,
    pub feature_specs: Vec<FeatureSpec>,
    pub train: TrainStats,
    pub config: SearchConfig,
    pub root: Node,
}

/// Result of applying a tree: one treatment index per row, plus the number of
/// rows that carried a category unseen at training time.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub treatments: Vec<usize>,
    pub unseen_categories: usize,
}

/// Per categorical feature, a map from the data's category index to the
/// training category index (None when the tree carries no categorical remap
/// for that feature).
type CategoryRemap = Vec<Option<Vec<Option<u32>>>>;

fn category_remap(
    tree_specs: &[FeatureSpec],
    data_specs: &[FeatureSpec],
) -> Result<CategoryRemap, TreeError> {
    if tree_specs.len() != data_specs.len() {
        return Err(TreeError::SpecMismatch(format!(
            "tree has {} features, data has {}",
            tree_specs.len(),
            data_specs.len()
        )));
    }
    let mut remap = Vec::with_capacity(tree_specs.len());
    for (t, d) in tree_specs.iter().zip(data_specs) {
        if t.name != d.name || t.kind != d.kind {
            return Err(TreeError::SpecMismatch(format!(
                "feature `{}` ({:?}) vs `{}` ({:?})",
                t.name, t.kind, d.name, d.kind
            )));
        }
        if t.kind == FeatureKind::Categorical {
            let map = d
                .categories
                .iter()
                .map(|label| {
                    t.categories
                        .iter()
                        .position(|c| c == label)
                        .map(|i| i as u32)
                })
                .collect();
            remap.push(Some(map));
        } else {
            remap.push(None);
        }
    }
    Ok(remap)
}

impl PolicyTree {
    /// Routes every row to a leaf and returns the leaf treatments. Categories
    /// are matched by label; the data must have the same feature names and
    /// kinds as the training specs.
    pub fn assign(&self, data: &PolicyData) -> Result<Assignment, TreeError> {
        let remap = category_remap(&self.feature_specs, data.specs())?;
        let mut treatments = Vec::with_capacity(data.n());
        let mut unseen = 0usize;
        for i in 0..data.n() {
            let mut node = &self.root;
            loop {
                match node {
                    Node::Leaf { treatment, .. } => {
                        treatments.push(*treatment);
                        break;
                    }
                    Node::Split { rule, left, right } => {
                        node = if goes_left(rule, data, i, &remap, &mut unseen) {
                            left
                        } else {
                            right
                        };
                    }
                }
            }
        }
        Ok(Assignment {
            treatments,
            unseen_categories: unseen,
        })
    }

    /// Per-leaf row counts in left-to-right leaf order.
    pub(crate) fn leaf_counts(&self, data: &PolicyData) -> Result<Vec<usize>, TreeError> {
        let remap = category_remap(&self.feature_specs, data.specs())?;
        let mut counts = vec![0usize; self.root.leaf_count()];
        let mut unseen = 0usize;
        for i in 0..data.n() {
            let mut node = &self.root;
            let mut leaf_index = 0usize;
            loop {
                match node {
                    Node::Leaf { .. } => {
                        counts[leaf_index] += 1;
                        break;
                    }
                    Node::Split { rule, left, right } => {
                        if goes_left(rule, data, i, &remap, &mut unseen) {
                            node = left;
                        } else {
                            leaf_index += left.leaf_count();
                            node = right;
                        }
                    }
                }
            }
        }
        Ok(counts)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("tree serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        #[derive(Deserialize)]
        struct VersionProbe {
            format_version: u32,
        }
        let probe: VersionProbe = serde_json::from_str(text)
            .map_err(|e| TreeError::MalformedTree(e.to_string()))?;
        if probe.format_version != TREE_FORMAT_VERSION {
            return Err(TreeError::SchemaVersionUnsupported(probe.format_version));
        }
        let tree: PolicyTree =
            serde_json::from_str(text).map_err(|e| TreeError::MalformedTree(e.to_string()))?;
        tree.validate()?;
        Ok(tree)
    }

    /// Structural validation: rules match feature kinds, category sets are
    /// non-empty strict subsets, leaf treatments are in range, and no path is
    /// longer than `depth`.
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.treatment_labels.len() < 2 {
            return Err(TreeError::MalformedTree(
                "fewer than two treatment labels".into(),
            ));
        }
        if self.root.max_depth() > self.depth {
            return Err(TreeError::MalformedTree(format!(
                "path of length {} exceeds depth {}",
                self.root.max_depth(),
                self.depth
            )));
        }
        self.validate_node(&self.root)
    }

    fn validate_node(&self, node: &Node) -> Result<(), TreeError> {
        match node {
            Node::Leaf { treatment, .. } => {
                if *treatment >= self.treatment_labels.len() {
                    return Err(TreeError::MalformedTree(format!(
                        "leaf treatment {} out of range",
                        treatment
                    )));
                }
                Ok(())
            }
            Node::Split { rule, left, right } => {
                let spec = self.feature_specs.get(rule.feature()).ok_or_else(|| {
                    TreeError::MalformedTree(format!("feature index {} out of range", rule.feature()))
                })?;
                match rule {
                    SplitRule::Threshold { value, .. } => {
                        if spec.kind == FeatureKind::Categorical {
                            return Err(TreeError::MalformedTree(format!(
                                "threshold split on categorical feature `{}`",
                                spec.name
                            )));
                        }
                        if !value.is_finite() {
                            return Err(TreeError::MalformedTree("non-finite threshold".into()));
                        }
                    }
                    SplitRule::CategorySet {
                        left_categories, ..
                    } => {
                        if spec.kind != FeatureKind::Categorical {
                            return Err(TreeError::MalformedTree(format!(
                                "category split on non-categorical feature `{}`",
                                spec.name
                            )));
                        }
                        if left_categories.is_empty()
                            || left_categories.len() >= spec.categories.len()
                        {
                            return Err(TreeError::MalformedTree(format!(
                                "category set on `{}` must be a non-empty strict subset",
                                spec.name
                            )));
                        }
                        if left_categories
                            .iter()
                            .any(|&c| c as usize >= spec.categories.len())
                        {
                            return Err(TreeError::MalformedTree(format!(
                                "category index out of range on `{}`",
                                spec.name
                            )));
                        }
                    }
                }
                self.validate_node(left)?;
                self.validate_node(right)
            }
        }
    }
}

fn goes_left(
    rule: &SplitRule,
    data: &PolicyData,
    row: usize,
    remap: &CategoryRemap,
    unseen: &mut usize,
) -> bool {
    match rule {
        SplitRule::Threshold { feature, value } => data.feature(*feature)[row] <= *value,
        SplitRule::CategorySet {
            feature,
            left_categories,
        } => {
            let raw = data.feature(*feature)[row] as usize;
            match remap[*feature].as_ref().and_then(|m| m[raw]) {
                Some(idx) => left_categories.contains(&idx),
                None => {
                    *unseen += 1;
                    false
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureKind;

    pub(crate) fn leaf(treatment: usize, n: usize, share: f64) -> Node {
        Node::Leaf {
            treatment,
            n_train: n,
            train_share: share,
        }
    }

    fn tree_with(root: Node, depth: usize, specs: Vec<FeatureSpec>) -> PolicyTree {
        PolicyTree {
            format_version: TREE_FORMAT_VERSION,
            depth,
            stage: depth.to_string(),
            treatment_labels: vec!["t0".into(), "t1".into()],
            feature_specs: specs,
            train: TrainStats {
                n: 4,
                welfare_total: 0.0,
                welfare_mean: 0.0,
            },
            config: SearchConfig::new(depth),
            root,
        }
    }

    fn numeric_data(values: Vec<f64>) -> PolicyData {
        let n = values.len();
        PolicyData::new(
            vec![FeatureSpec::numeric("x", FeatureKind::Continuous)],
            vec!["t0".into(), "t1".into()],
            vec![values],
            vec![0.0; 2 * n],
            None,
            None,
            (0..n).map(|i| i.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_leaf_assigns_everything() {
        let tree = tree_with(
            leaf(1, 4, 1.0),
            0,
            vec![FeatureSpec::numeric("x", FeatureKind::Continuous)],
        );
        let data = numeric_data(vec![1.0, 2.0, 3.0]);
        let out = tree.assign(&data).unwrap();
        assert_eq!(out.treatments, [1, 1, 1]);
        assert_eq!(out.unseen_categories, 0);
    }

    #[test]
    fn threshold_routes_le_left() {
        // value <= 65 goes left (treatment 1), value > 65 right (treatment 0).
        let tree = tree_with(
            Node::Split {
                rule: SplitRule::Threshold {
                    feature: 0,
                    value: 65.0,
                },
                left: Box::new(leaf(1, 2, 0.5)),
                right: Box::new(leaf(0, 2, 0.5)),
            },
            1,
            vec![FeatureSpec::numeric("x", FeatureKind::Continuous)],
        );
        let data = numeric_data(vec![60.0, 70.0, 65.0]);
        assert_eq!(tree.assign(&data).unwrap().treatments, [1, 0, 1]);
    }

    #[test]
    fn category_set_routes_by_membership() {
        let cats: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let tree = tree_with(
            Node::Split {
                rule: SplitRule::CategorySet {
                    feature: 0,
                    left_categories: BTreeSet::from([0, 2]),
                },
                left: Box::new(leaf(1, 2, 0.5)),
                right: Box::new(leaf(0, 2, 0.5)),
            },
            1,
            vec![FeatureSpec::categorical("g", cats.clone())],
        );
        let data = PolicyData::new(
            vec![FeatureSpec::categorical("g", cats)],
            vec!["t0".into(), "t1".into()],
            vec![vec![0.0, 1.0, 2.0, 3.0]],
            vec![0.0; 8],
            None,
            None,
            (0..4).map(|i| i.to_string()).collect(),
        )
        .unwrap();
        assert_eq!(tree.assign(&data).unwrap().treatments, [1, 0, 1, 0]);
    }

    #[test]
    fn unseen_category_routes_right_with_warning() {
        let tree = tree_with(
            Node::Split {
                rule: SplitRule::CategorySet {
                    feature: 0,
                    left_categories: BTreeSet::from([0]),
                },
                left: Box::new(leaf(1, 2, 0.5)),
                right: Box::new(leaf(0, 2, 0.5)),
            },
            1,
            vec![FeatureSpec::categorical("g", vec!["a".into(), "b".into()])],
        );
        // Prediction data interned its categories in a different order and
        // carries an extra label "z" unknown to the tree.
        let data = PolicyData::new(
            vec![FeatureSpec::categorical(
                "g",
                vec!["b".into(), "z".into(), "a".into()],
            )],
            vec!["t0".into(), "t1".into()],
            vec![vec![0.0, 1.0, 2.0]],
            vec![0.0; 6],
            None,
            None,
            (0..3).map(|i| i.to_string()).collect(),
        )
        .unwrap();
        let out = tree.assign(&data).unwrap();
        // "b" -> train idx 1 -> right; "z" -> unseen -> right; "a" -> train idx 0 -> left.
        assert_eq!(out.treatments, [0, 0, 1]);
        assert_eq!(out.unseen_categories, 1);
    }

    #[test]
    fn spec_mismatch_is_an_error() {
        let tree = tree_with(
            leaf(0, 1, 1.0),
            0,
            vec![FeatureSpec::numeric("x", FeatureKind::Continuous)],
        );
        let data = PolicyData::new(
            vec![FeatureSpec::numeric("y", FeatureKind::Continuous)],
            vec!["t0".into(), "t1".into()],
            vec![vec![1.0]],
            vec![0.0, 0.0],
            None,
            None,
            vec!["0".into()],
        )
        .unwrap();
        assert!(matches!(tree.assign(&data), Err(TreeError::SpecMismatch(_))));
    }

    #[test]
    fn json_round_trip_preserves_category_sets() {
        let cats: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let tree = tree_with(
            Node::Split {
                rule: SplitRule::CategorySet {
                    feature: 0,
                    left_categories: BTreeSet::from([0, 2]),
                },
                left: Box::new(Node::Split {
                    rule: SplitRule::CategorySet {
                        feature: 0,
                        left_categories: BTreeSet::from([2]),
                    },
                    left: Box::new(leaf(1, 1, 0.25)),
                    right: Box::new(leaf(0, 1, 0.25)),
                }),
                right: Box::new(leaf(0, 2, 0.5)),
            },
            2,
            vec![FeatureSpec::categorical("g", cats)],
        );
        let back = PolicyTree::from_json(&tree.to_json()).unwrap();
        assert_eq!(tree, back);
    }

    #[test]
    fn from_json_rejects_node_with_both_leaf_and_split() {
        let tree = tree_with(
            leaf(0, 4, 1.0),
            0,
            vec![FeatureSpec::numeric("x", FeatureKind::Continuous)],
        );
        let json = tree.to_json().replace(
            "\"root\": {",
            "\"root\": {\n    \"split\": {\"rule\": {\"threshold\": {\"feature\": 0, \"value\": 1.0}}, \"left\": {\"leaf\": {\"treatment\": 0, \"n_train\": 1, \"train_share\": 1.0}}, \"right\": {\"leaf\": {\"treatment\": 0, \"n_train\": 1, \"train_share\": 1.0}}},",
        );
        assert!(matches!(
            PolicyTree::from_json(&json),
            Err(TreeError::MalformedTree(_))
        ));
    }

    #[test]
    fn from_json_rejects_unknown_version() {
        let tree = tree_with(
            leaf(0, 4, 1.0),
            0,
            vec![FeatureSpec::numeric("x", FeatureKind::Continuous)],
        );
        let json = tree.to_json().replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(
            PolicyTree::from_json(&json),
            Err(TreeError::SchemaVersionUnsupported(9))
        ));
    }

    #[test]
    fn trees_and_data_are_shareable_across_threads() {
        fn check<T: Send + Sync>() {}
        check::<PolicyTree>();
        check::<PolicyData>();
    }

    #[test]
    fn validate_rejects_threshold_on_categorical() {
        let tree = tree_with(
            Node::Split {
                rule: SplitRule::Threshold {
                    feature: 0,
                    value: 0.5,
                },
                left: Box::new(leaf(0, 1, 0.5)),
                right: Box::new(leaf(1, 1, 0.5)),
            },
            1,
            vec![FeatureSpec::categorical("g", vec!["a".into(), "b".into()])],
        );
        assert!(matches!(tree.validate(), Err(TreeError::MalformedTree(_))));
    }
}
