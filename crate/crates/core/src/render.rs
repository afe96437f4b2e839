//! Plain-text rule listings and DOT export for policy trees.

use std::fmt::Write;

use crate::data::PolicyData;
use crate::tree::{Node, PolicyTree, SplitRule, TreeError};

fn condition(tree: &PolicyTree, rule: &SplitRule, left: bool) -> String {
    let spec = &tree.feature_specs[rule.feature()];
    match rule {
        SplitRule::Threshold { value, .. } => {
            if left {
                format!("{} ≤ {}", spec.name, value)
            } else {
                format!("{} > {}", spec.name, value)
            }
        }
        SplitRule::CategorySet {
            left_categories, ..
        } => {
            let labels: Vec<&str> = left_categories
                .iter()
                .map(|&c| spec.categories[c as usize].as_str())
                .collect();
            let op = if left { "in" } else { "not in" };
            format!("{} {}: {}", spec.name, op, labels.join(" "))
        }
    }
}

/// One line per leaf in left-to-right order: the conjunction of conditions on
/// the root-to-leaf path, then the assigned treatment label. When data is
/// supplied, the share of its rows routed to each leaf is appended.
pub fn render_rules(tree: &PolicyTree, data: Option<&PolicyData>) -> Result<String, TreeError> {
    let shares: Option<Vec<f64>> = match data {
        Some(d) if d.n() > 0 => Some(
            tree.leaf_counts(d)?
                .into_iter()
                .map(|c| c as f64 / d.n() as f64)
                .collect(),
        ),
        _ => None,
    };
    let mut out = String::new();
    let mut leaf_index = 0usize;
    let mut conditions: Vec<String> = Vec::new();
    render_node(tree, &tree.root, &mut conditions, &mut leaf_index, &shares, &mut out);
    Ok(out)
}

fn render_node(
    tree: &PolicyTree,
    node: &Node,
    conditions: &mut Vec<String>,
    leaf_index: &mut usize,
    shares: &Option<Vec<f64>>,
    out: &mut String,
) {
    match node {
        Node::Leaf { treatment, .. } => {
            let path = if conditions.is_empty() {
                "(all)".to_string()
            } else {
                conditions.join(", ")
            };
            write!(out, "{} → {}", path, tree.treatment_labels[*treatment]).unwrap();
            if let Some(shares) = shares {
                write!(out, " [{:.2}%]", shares[*leaf_index] * 100.0).unwrap();
            }
            out.push('\n');
            *leaf_index += 1;
        }
        Node::Split { rule, left, right } => {
            conditions.push(condition(tree, rule, true));
            render_node(tree, left, conditions, leaf_index, shares, out);
            conditions.pop();
            conditions.push(condition(tree, rule, false));
            render_node(tree, right, conditions, leaf_index, shares, out);
            conditions.pop();
        }
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// DOT digraph: internal nodes labeled with the split condition, leaves with
/// the treatment label and training share, edges labeled yes/no.
pub fn to_dot(tree: &PolicyTree) -> String {
    let mut out = String::from("digraph policy_tree {\n    node [shape=box];\n");
    let mut next_id = 0usize;
    dot_node(tree, &tree.root, &mut next_id, &mut out);
    out.push_str("}\n");
    out
}

fn dot_node(tree: &PolicyTree, node: &Node, next_id: &mut usize, out: &mut String) -> usize {
    let id = *next_id;
    *next_id += 1;
    match node {
        Node::Leaf {
            treatment,
            train_share,
            ..
        } => {
            writeln!(
                out,
                "    n{} [label=\"{}\\n{:.1}%\"];",
                id,
                dot_escape(&tree.treatment_labels[*treatment]),
                train_share * 100.0
            )
            .unwrap();
        }
        Node::Split { rule, left, right } => {
            writeln!(
                out,
                "    n{} [label=\"{}\"];",
                id,
                dot_escape(&condition(tree, rule, true))
            )
            .unwrap();
            let l = dot_node(tree, left, next_id, out);
            let r = dot_node(tree, right, next_id, out);
            writeln!(out, "    n{} -> n{} [label=\"yes\"];", id, l).unwrap();
            writeln!(out, "    n{} -> n{} [label=\"no\"];", id, r).unwrap();
        }
    }
    id
}
