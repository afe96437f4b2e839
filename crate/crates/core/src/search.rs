//! Exhaustive, depth-limited search for the welfare-maximizing policy tree.
//!
//! The solver recursively evaluates every candidate split (all features, all
//! candidate thresholds or category subsets at the node's level), solves both
//! sides one level shallower, and keeps the rule maximizing the summed reward.
//! A split is only kept when it beats the node's best single-treatment reward
//! by more than `gain_epsilon * (1 + |reward|)`.
//!
//! Engineering notes, none of which change the result:
//!
//! * per-feature sorted row orders are computed once at the root and filtered
//!   down through partitions, so no node ever re-sorts;
//! * depth-1 nodes are solved by a single prefix-sum sweep per feature instead
//!   of materializing partitions;
//! * deeper recursion is cut off early when the per-row-max upper bound of a
//!   subset cannot strictly beat the running incumbent (the incumbent is local
//!   to a node, so ties are still resolved by the documented order);
//! * top-level candidates are evaluated in parallel over preallocated
//!   per-worker workspaces and reduced in candidate order, which keeps the
//!   winner independent of the thread count;
//! * rewards within a relative [`TIE_EPSILON`] of each other count as tied
//!   and resolve to the earlier candidate (lowest feature index, then lowest
//!   threshold / lexicographically smallest category set). Two trees encoding
//!   the same assignment sum the same scores in different groupings, so exact
//!   ties surface as ulp-level float differences; without the margin the
//!   winner would depend on that noise.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{candidate_category_splits, thresholds_from_sorted_distinct, thresholds_into};
use crate::data::{FeatureKind, PolicyData};
use crate::tree::{Node, PolicyTree, SplitRule, TrainStats, TREE_FORMAT_VERSION};

/// Relative slack under which two candidate rewards count as equal.
pub const TIE_EPSILON: f64 = 1e-12;

#[inline]
fn tie_margin(x: f64) -> f64 {
    TIE_EPSILON * (1.0 + x.abs())
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("{n} rows is fewer than the minimum leaf size {min_leaf}")]
    TooFewRows { n: usize, min_leaf: usize },
    #[error("invalid search configuration: {0}")]
    BadConfig(String),
}

/// Search settings. `depth` counts split levels: 0 is a single leaf, 2 allows
/// up to four leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Number of split levels.
    pub depth: usize,
    /// Approximation budget: candidate thresholds per feature at the bottom
    /// level; halved for each level above it.
    pub approx_points: usize,
    /// Categorical combination budget at the bottom level, halved per level.
    pub cat_combinations: usize,
    /// Minimum training rows per leaf; `None` resolves to `max(5, 3 * d)`.
    pub min_leaf_size: Option<usize>,
    /// Evaluate every adjacent-value midpoint and enumerate all category
    /// subsets (up to 20 present categories) instead of the budgets above.
    pub exact_mode: bool,
    /// Relative no-gain pruning: a split must beat the leaf reward by more
    /// than `gain_epsilon * (1 + |leaf reward|)`.
    pub gain_epsilon: f64,
    /// Seed for categorical subset sampling.
    pub seed: u64,
    /// Worker threads for the top-level candidate loop; 0 uses the global
    /// default.
    pub threads: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            depth: 2,
            approx_points: 100,
            cat_combinations: 100,
            min_leaf_size: None,
            exact_mode: false,
            gain_epsilon: 1e-12,
            seed: 0,
            threads: 0,
        }
    }
}

impl SearchConfig {
    pub fn new(depth: usize) -> Self {
        SearchConfig {
            depth,
            ..SearchConfig::default()
        }
    }

    /// The minimum leaf size actually used for a dataset with `d` treatments.
    pub fn resolved_min_leaf(&self, d: usize) -> usize {
        self.min_leaf_size.unwrap_or_else(|| (3 * d).max(5))
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.approx_points < 2 {
            return Err(SearchError::BadConfig("approx_points must be >= 2".into()));
        }
        if self.cat_combinations < 1 {
            return Err(SearchError::BadConfig("cat_combinations must be >= 1".into()));
        }
        if self.min_leaf_size == Some(0) {
            return Err(SearchError::BadConfig("min_leaf_size must be >= 1".into()));
        }
        if !(self.gain_epsilon >= 0.0 && self.gain_epsilon.is_finite()) {
            return Err(SearchError::BadConfig(
                "gain_epsilon must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// A trained tree plus the training reward and search statistics.
#[derive(Debug)]
pub struct SearchResult {
    pub tree: PolicyTree,
    /// Total training welfare of the tree, recomputed by assigning every
    /// training row and summing its score (row order).
    pub reward: f64,
    /// Tree-search node evaluations, including base cases.
    pub nodes_evaluated: u64,
    pub wall_time: Duration,
    /// True when no feature offered any split candidate at the root.
    pub no_splittable_feature: bool,
}

/// The treatment with the highest score column sum, ties to the lowest index.
pub fn best_single_treatment(data: &PolicyData) -> (usize, f64) {
    let d = data.d();
    let mut sums = vec![0.0f64; d];
    for i in 0..data.n() {
        for (j, s) in sums.iter_mut().enumerate() {
            *s += data.score(i, j);
        }
    }
    argmax(&sums)
}

fn argmax(sums: &[f64]) -> (usize, f64) {
    let mut best = 0usize;
    let mut value = sums[0];
    for (j, &v) in sums.iter().enumerate().skip(1) {
        if v > value {
            best = j;
            value = v;
        }
    }
    (best, value)
}

/// Searches for the optimal tree of `config.depth` split levels over all rows.
pub fn search(data: &PolicyData, config: &SearchConfig) -> Result<SearchResult, SearchError> {
    let started = Instant::now();
    let rows: Vec<u32> = (0..data.n() as u32).collect();
    let raw = run_in_pool(config, || solve_on_rows(data, &rows, config))?;
    let (tree, reward) = finish_tree(
        data,
        config,
        raw.root,
        config.depth,
        config.depth.to_string(),
    );
    Ok(SearchResult {
        tree,
        reward,
        nodes_evaluated: raw.nodes_evaluated,
        wall_time: started.elapsed(),
        no_splittable_feature: raw.no_splittable_feature,
    })
}

pub(crate) fn run_in_pool<T: Send>(
    config: &SearchConfig,
    f: impl FnOnce() -> T + Send,
) -> T {
    if config.threads == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .expect("thread pool");
        pool.install(f)
    }
}

/// Wraps a solved root node into a [`PolicyTree`] and recomputes its training
/// welfare by assign-then-sum over the given data.
pub(crate) fn finish_tree(
    data: &PolicyData,
    config: &SearchConfig,
    root: Node,
    depth: usize,
    stage: String,
) -> (PolicyTree, f64) {
    let snapshot = SearchConfig {
        min_leaf_size: Some(config.resolved_min_leaf(data.d())),
        ..config.clone()
    };
    let mut tree = PolicyTree {
        format_version: TREE_FORMAT_VERSION,
        depth,
        stage,
        treatment_labels: data.treatment_labels().to_vec(),
        feature_specs: data.specs().to_vec(),
        train: TrainStats {
            n: data.n(),
            welfare_total: 0.0,
            welfare_mean: 0.0,
        },
        config: snapshot,
        root,
    };
    let assignment = tree
        .assign(data)
        .expect("training data matches its own tree specs");
    let mut total = 0.0f64;
    for (i, &t) in assignment.treatments.iter().enumerate() {
        total += data.score(i, t);
    }
    tree.train = TrainStats {
        n: data.n(),
        welfare_total: total,
        welfare_mean: total / data.n() as f64,
    };
    (tree, total)
}

pub(crate) struct RawSearch {
    pub root: Node,
    pub nodes_evaluated: u64,
    pub no_splittable_feature: bool,
}

/// Candidate split at the root level.
enum CandidateRule {
    Threshold(f64),
    Categories(BTreeSet<u32>),
}

struct RootCandidate {
    feature: usize,
    rule: CandidateRule,
}

impl RootCandidate {
    fn to_split_rule(&self) -> SplitRule {
        match &self.rule {
            CandidateRule::Threshold(value) => SplitRule::Threshold {
                feature: self.feature,
                value: *value,
            },
            CandidateRule::Categories(set) => SplitRule::CategorySet {
                feature: self.feature,
                left_categories: set.clone(),
            },
        }
    }
}

/// Runs the tree search over a row subset (ascending positions into `data`).
/// Leaf shares are relative to `rows.len()`.
pub(crate) fn solve_on_rows(
    data: &PolicyData,
    rows: &[u32],
    config: &SearchConfig,
) -> Result<RawSearch, SearchError> {
    config.validate()?;
    let min_leaf = config.resolved_min_leaf(data.d());
    if rows.len() < min_leaf {
        return Err(SearchError::TooFewRows {
            n: rows.len(),
            min_leaf,
        });
    }
    debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));

    let ctx = Ctx::new(data, config, rows.len());
    let root_set = ctx.node_set_from_rows(rows);
    let mut ws = Workspace::new(&ctx, config.depth);

    let (leaf_t, leaf_r) = best_leaf(&ctx, &root_set.rows, &mut ws.sums);
    let leaf_node = Node::Leaf {
        treatment: leaf_t,
        n_train: rows.len(),
        train_share: 1.0,
    };
    if config.depth == 0 {
        return Ok(RawSearch {
            root: leaf_node,
            nodes_evaluated: 1,
            no_splittable_feature: false,
        });
    }

    let candidates = root_candidates(&ctx, &root_set, config.depth);
    if candidates.is_empty() {
        return Ok(RawSearch {
            root: leaf_node,
            nodes_evaluated: 1,
            no_splittable_feature: true,
        });
    }

    let outcomes: Vec<(Option<(f64, Node)>, u64)> = candidates
        .par_iter()
        .map_init(
            || Workspace::new(&ctx, config.depth),
            |ws, cand| {
                ws.nodes = 0;
                let outcome = evaluate_root_candidate(&ctx, &root_set, cand, config.depth, ws);
                (outcome, ws.nodes)
            },
        )
        .collect();

    let mut nodes_evaluated = 1u64;
    let mut best: Option<(f64, usize)> = None;
    for (i, (outcome, nodes)) in outcomes.iter().enumerate() {
        nodes_evaluated += nodes;
        if let Some((sum, _)) = outcome {
            if best.is_none_or(|(b, _)| *sum > b + tie_margin(b)) {
                best = Some((*sum, i));
            }
        }
    }

    let threshold = {
        let with_gain = leaf_r + ctx.gain_epsilon * (1.0 + leaf_r.abs());
        with_gain + tie_margin(with_gain)
    };
    let root = match best {
        Some((sum, i)) if sum > threshold => {
            let mut outcomes = outcomes;
            outcomes.swap_remove(i).0.expect("winning candidate").1
        }
        _ => leaf_node,
    };
    Ok(RawSearch {
        root,
        nodes_evaluated,
        no_splittable_feature: false,
    })
}

fn root_candidates(ctx: &Ctx, set: &NodeSet, depth: usize) -> Vec<RootCandidate> {
    let mut out = Vec::new();
    let mut distinct: Vec<f64> = Vec::new();
    for f in 0..ctx.data.p() {
        match ctx.data.specs()[f].kind {
            FeatureKind::Categorical => {
                let present = present_categories(ctx, set, f);
                for set_ in
                    candidate_category_splits(&ctx.data.specs()[f], &present, depth, ctx.config)
                {
                    out.push(RootCandidate {
                        feature: f,
                        rule: CandidateRule::Categories(set_),
                    });
                }
            }
            _ => {
                collect_distinct(ctx, set, f, &mut distinct);
                for value in thresholds_from_sorted_distinct(&distinct, depth, ctx.config) {
                    out.push(RootCandidate {
                        feature: f,
                        rule: CandidateRule::Threshold(value),
                    });
                }
            }
        }
    }
    out
}

fn evaluate_root_candidate(
    ctx: &Ctx,
    set: &NodeSet,
    cand: &RootCandidate,
    depth: usize,
    ws: &mut Workspace,
) -> Option<(f64, Node)> {
    let mut scratch = std::mem::take(&mut ws.levels[depth]);
    partition(ctx, set, cand.feature, &cand.rule, &mut scratch.left, &mut scratch.right);
    let result = (|| {
        if scratch.left.rows.len() < ctx.min_leaf || scratch.right.rows.len() < ctx.min_leaf {
            return None;
        }
        let (rl, nl) = solve(ctx, &scratch.left, depth - 1, f64::NEG_INFINITY, ws)?;
        let (rr, nr) = solve(ctx, &scratch.right, depth - 1, f64::NEG_INFINITY, ws)?;
        Some((
            rl + rr,
            Node::Split {
                rule: cand.to_split_rule(),
                left: Box::new(nl),
                right: Box::new(nr),
            },
        ))
    })();
    ws.levels[depth] = scratch;
    result
}

// ---------------------------------------------------------------------------
// Internal solver machinery.

struct Ctx<'a> {
    data: &'a PolicyData,
    config: &'a SearchConfig,
    d: usize,
    min_leaf: usize,
    gain_epsilon: f64,
    root_n: usize,
    /// Per data row: max_j score, for upper bounds.
    rowmax: Vec<f64>,
    /// Numeric feature indices in ascending order.
    numeric_feats: Vec<usize>,
    /// feature index -> position within `NodeSet::sorted` (numeric only).
    numeric_pos: Vec<usize>,
    max_categories: usize,
}

impl<'a> Ctx<'a> {
    fn new(data: &'a PolicyData, config: &'a SearchConfig, root_n: usize) -> Self {
        let d = data.d();
        let mut rowmax = Vec::with_capacity(data.n());
        for i in 0..data.n() {
            let mut m = data.score(i, 0);
            for j in 1..d {
                m = m.max(data.score(i, j));
            }
            rowmax.push(m);
        }
        let mut numeric_feats = Vec::new();
        let mut numeric_pos = vec![usize::MAX; data.p()];
        for (f, spec) in data.specs().iter().enumerate() {
            if spec.kind.is_numeric() {
                numeric_pos[f] = numeric_feats.len();
                numeric_feats.push(f);
            }
        }
        let max_categories = data
            .specs()
            .iter()
            .map(|s| s.categories.len())
            .max()
            .unwrap_or(0);
        Ctx {
            data,
            config,
            d,
            min_leaf: config.resolved_min_leaf(d),
            gain_epsilon: config.gain_epsilon,
            root_n,
            rowmax,
            numeric_feats,
            numeric_pos,
            max_categories,
        }
    }

    fn node_set_from_rows(&self, rows: &[u32]) -> NodeSet {
        let rows = rows.to_vec();
        let mut sorted = Vec::with_capacity(self.numeric_feats.len());
        for &f in &self.numeric_feats {
            let col = self.data.feature(f);
            let mut order = rows.clone();
            order.sort_by(|&a, &b| {
                col[a as usize]
                    .partial_cmp(&col[b as usize])
                    .expect("finite feature values")
                    .then(a.cmp(&b))
            });
            sorted.push(order);
        }
        let rowmax_sum = rows.iter().map(|&r| self.rowmax[r as usize]).sum();
        NodeSet {
            rows,
            sorted,
            rowmax_sum,
        }
    }
}

#[derive(Default)]
struct NodeSet {
    /// Row positions in ascending order.
    rows: Vec<u32>,
    /// Rows sorted by each numeric feature (value, then row).
    sorted: Vec<Vec<u32>>,
    /// Upper bound: sum of per-row max scores.
    rowmax_sum: f64,
}

#[derive(Default)]
struct LevelScratch {
    left: NodeSet,
    right: NodeSet,
}

struct Workspace {
    /// Child buffers indexed by the parent's remaining depth.
    levels: Vec<LevelScratch>,
    sums: Vec<f64>,
    totals: Vec<f64>,
    acc: Vec<f64>,
    cat_counts: Vec<u32>,
    cat_sums: Vec<f64>,
    distinct: Vec<f64>,
    mids: Vec<f64>,
    cands: Vec<f64>,
    nodes: u64,
}

impl Workspace {
    fn new(ctx: &Ctx, depth: usize) -> Self {
        let d = ctx.d;
        Workspace {
            levels: (0..=depth).map(|_| LevelScratch::default()).collect(),
            sums: vec![0.0; d],
            totals: vec![0.0; d],
            acc: vec![0.0; d],
            cat_counts: vec![0; ctx.max_categories],
            cat_sums: vec![0.0; ctx.max_categories * d],
            distinct: Vec::new(),
            mids: Vec::new(),
            cands: Vec::new(),
            nodes: 0,
        }
    }
}

fn best_leaf(ctx: &Ctx, rows: &[u32], sums: &mut [f64]) -> (usize, f64) {
    sums.fill(0.0);
    let d = ctx.d;
    let scores = ctx.data.scores();
    for &r in rows {
        let base = r as usize * d;
        for (j, s) in sums.iter_mut().enumerate() {
            *s += scores[base + j];
        }
    }
    argmax(sums)
}

fn partition(
    ctx: &Ctx,
    parent: &NodeSet,
    feature: usize,
    rule: &CandidateRule,
    left: &mut NodeSet,
    right: &mut NodeSet,
) {
    let col = ctx.data.feature(feature);
    match rule {
        CandidateRule::Threshold(value) => {
            let value = *value;
            partition_with(ctx, parent, |r| col[r as usize] <= value, left, right)
        }
        CandidateRule::Categories(set) => {
            partition_with(ctx, parent, |r| set.contains(&(col[r as usize] as u32)), left, right)
        }
    }
}

fn partition_with(
    ctx: &Ctx,
    parent: &NodeSet,
    goes_left: impl Fn(u32) -> bool + Copy,
    left: &mut NodeSet,
    right: &mut NodeSet,
) {
    left.rows.clear();
    right.rows.clear();
    left.rowmax_sum = 0.0;
    right.rowmax_sum = 0.0;
    for &r in &parent.rows {
        if goes_left(r) {
            left.rows.push(r);
            left.rowmax_sum += ctx.rowmax[r as usize];
        } else {
            right.rows.push(r);
            right.rowmax_sum += ctx.rowmax[r as usize];
        }
    }
    left.sorted.resize_with(parent.sorted.len(), Vec::new);
    right.sorted.resize_with(parent.sorted.len(), Vec::new);
    for (k, order) in parent.sorted.iter().enumerate() {
        let lv = &mut left.sorted[k];
        let rv = &mut right.sorted[k];
        lv.clear();
        rv.clear();
        for &r in order {
            if goes_left(r) {
                lv.push(r);
            } else {
                rv.push(r);
            }
        }
    }
}

fn collect_distinct(ctx: &Ctx, set: &NodeSet, feature: usize, out: &mut Vec<f64>) {
    out.clear();
    let col = ctx.data.feature(feature);
    for &r in &set.sorted[ctx.numeric_pos[feature]] {
        let v = col[r as usize];
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
}

fn present_categories(ctx: &Ctx, set: &NodeSet, feature: usize) -> BTreeSet<u32> {
    let col = ctx.data.feature(feature);
    set.rows.iter().map(|&r| col[r as usize] as u32).collect()
}

/// Solves the subtree for `set` with `depth` remaining levels. Returns `None`
/// when the best achievable reward does not strictly exceed `beat` (the
/// caller then discards the candidate). Otherwise the returned reward is
/// exact.
fn solve(
    ctx: &Ctx,
    set: &NodeSet,
    depth: usize,
    beat: f64,
    ws: &mut Workspace,
) -> Option<(f64, Node)> {
    ws.nodes += 1;
    // Even the per-row-max bound cannot strictly exceed the caller's target.
    if set.rowmax_sum <= beat {
        return None;
    }
    let m = set.rows.len();
    let (leaf_t, leaf_r) = best_leaf(ctx, &set.rows, &mut ws.sums);
    let make_leaf = |r: f64| {
        (r > beat).then(|| {
            (
                r,
                Node::Leaf {
                    treatment: leaf_t,
                    n_train: m,
                    train_share: m as f64 / ctx.root_n as f64,
                },
            )
        })
    };
    if depth == 0 {
        return make_leaf(leaf_r);
    }
    let margin = ctx.gain_epsilon * (1.0 + leaf_r.abs());
    let incumbent = (leaf_r + margin).max(beat);
    if set.rowmax_sum <= incumbent || m < 2 * ctx.min_leaf {
        return make_leaf(leaf_r);
    }
    let best_split = if depth == 1 {
        solve_depth1(ctx, set, incumbent, ws)
    } else {
        solve_deeper(ctx, set, depth, incumbent, ws)
    };
    best_split.or_else(|| make_leaf(leaf_r))
}

/// Depth >= 2: materialize partitions and recurse, tightening the incumbent.
fn solve_deeper(
    ctx: &Ctx,
    set: &NodeSet,
    depth: usize,
    mut incumbent: f64,
    ws: &mut Workspace,
) -> Option<(f64, Node)> {
    let m = set.rows.len();
    let mut best: Option<(f64, Node)> = None;
    for f in 0..ctx.data.p() {
        if set.rowmax_sum <= incumbent {
            break;
        }
        match ctx.data.specs()[f].kind {
            FeatureKind::Categorical => {
                let present = present_categories(ctx, set, f);
                let col = ctx.data.feature(f);
                let mut counts = vec![0u32; ctx.data.specs()[f].categories.len()];
                for &r in &set.rows {
                    counts[col[r as usize] as usize] += 1;
                }
                let cands =
                    candidate_category_splits(&ctx.data.specs()[f], &present, depth, ctx.config);
                for subset in &cands {
                    let nl: u32 = subset.iter().map(|&c| counts[c as usize]).sum();
                    let nl = nl as usize;
                    if nl < ctx.min_leaf || m - nl < ctx.min_leaf {
                        continue;
                    }
                    if set.rowmax_sum <= incumbent {
                        break;
                    }
                    let rule = CandidateRule::Categories(subset.clone());
                    try_candidate(ctx, set, f, rule, depth, &mut incumbent, &mut best, ws);
                }
            }
            _ => {
                collect_distinct(ctx, set, f, &mut ws.distinct);
                let cands = thresholds_from_sorted_distinct(&ws.distinct, depth, ctx.config);
                if cands.is_empty() {
                    continue;
                }
                // Left-side row counts per candidate, from one sweep of the
                // sorted order.
                let sorted_f = &set.sorted[ctx.numeric_pos[f]];
                let col = ctx.data.feature(f);
                let mut n_left = Vec::with_capacity(cands.len());
                let mut ci = 0usize;
                for (i, &r) in sorted_f.iter().enumerate() {
                    let v = col[r as usize];
                    while ci < cands.len() && v > cands[ci] {
                        n_left.push(i);
                        ci += 1;
                    }
                    if ci == cands.len() {
                        break;
                    }
                }
                while ci < cands.len() {
                    n_left.push(m);
                    ci += 1;
                }
                for (t, &value) in cands.iter().enumerate() {
                    let nl = n_left[t];
                    if nl < ctx.min_leaf || m - nl < ctx.min_leaf {
                        continue;
                    }
                    if set.rowmax_sum <= incumbent {
                        break;
                    }
                    let rule = CandidateRule::Threshold(value);
                    try_candidate(ctx, set, f, rule, depth, &mut incumbent, &mut best, ws);
                }
            }
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn try_candidate(
    ctx: &Ctx,
    set: &NodeSet,
    feature: usize,
    rule: CandidateRule,
    depth: usize,
    incumbent: &mut f64,
    best: &mut Option<(f64, Node)>,
    ws: &mut Workspace,
) {
    let mut scratch = std::mem::take(&mut ws.levels[depth]);
    partition(ctx, set, feature, &rule, &mut scratch.left, &mut scratch.right);
    let result = (|| {
        let beat_left = *incumbent - scratch.right.rowmax_sum;
        let (rl, nl) = solve(ctx, &scratch.left, depth - 1, beat_left, ws)?;
        let beat_right = *incumbent - rl;
        let (rr, nr) = solve(ctx, &scratch.right, depth - 1, beat_right, ws)?;
        Some((rl + rr, nl, nr))
    })();
    ws.levels[depth] = scratch;
    if let Some((sum, nl, nr)) = result {
        if sum > *incumbent + tie_margin(*incumbent) {
            *incumbent = sum;
            let split_rule = match rule {
                CandidateRule::Threshold(value) => SplitRule::Threshold { feature, value },
                CandidateRule::Categories(set_) => SplitRule::CategorySet {
                    feature,
                    left_categories: set_,
                },
            };
            *best = Some((
                sum,
                Node::Split {
                    rule: split_rule,
                    left: Box::new(nl),
                    right: Box::new(nr),
                },
            ));
        }
    }
}

struct BestDepth1 {
    sum: f64,
    feature: usize,
    rule: CandidateRule,
    t_left: usize,
    t_right: usize,
    n_left: usize,
}

/// Depth 1: one prefix-sum sweep per numeric feature, per-category sums for
/// categorical features. No partitions are materialized.
fn solve_depth1(
    ctx: &Ctx,
    set: &NodeSet,
    mut incumbent: f64,
    ws: &mut Workspace,
) -> Option<(f64, Node)> {
    let m = set.rows.len();
    let d = ctx.d;
    ws.totals.copy_from_slice(&ws.sums);
    let mut best: Option<BestDepth1> = None;

    for f in 0..ctx.data.p() {
        if set.rowmax_sum <= incumbent {
            break;
        }
        match ctx.data.specs()[f].kind {
            FeatureKind::Categorical => {
                let spec = &ctx.data.specs()[f];
                let c = spec.categories.len();
                let col = ctx.data.feature(f);
                ws.cat_counts[..c].fill(0);
                ws.cat_sums[..c * d].fill(0.0);
                let scores = ctx.data.scores();
                for &r in &set.rows {
                    let cat = col[r as usize] as usize;
                    ws.cat_counts[cat] += 1;
                    let base = r as usize * d;
                    for j in 0..d {
                        ws.cat_sums[cat * d + j] += scores[base + j];
                    }
                }
                let present: BTreeSet<u32> = (0..c as u32)
                    .filter(|&cat| ws.cat_counts[cat as usize] > 0)
                    .collect();
                for subset in candidate_category_splits(spec, &present, 1, ctx.config) {
                    let nl: u32 = subset.iter().map(|&cat| ws.cat_counts[cat as usize]).sum();
                    let nl = nl as usize;
                    if nl < ctx.min_leaf || m - nl < ctx.min_leaf {
                        continue;
                    }
                    ws.acc.fill(0.0);
                    for &cat in &subset {
                        for j in 0..d {
                            ws.acc[j] += ws.cat_sums[cat as usize * d + j];
                        }
                    }
                    let (tl, bl) = argmax(&ws.acc);
                    let (tr, br) = {
                        let mut t = 0usize;
                        let mut v = ws.totals[0] - ws.acc[0];
                        for j in 1..d {
                            let x = ws.totals[j] - ws.acc[j];
                            if x > v {
                                t = j;
                                v = x;
                            }
                        }
                        (t, v)
                    };
                    let sum = bl + br;
                    if sum > incumbent + tie_margin(incumbent) {
                        incumbent = sum;
                        best = Some(BestDepth1 {
                            sum,
                            feature: f,
                            rule: CandidateRule::Categories(subset),
                            t_left: tl,
                            t_right: tr,
                            n_left: nl,
                        });
                    }
                }
            }
            _ => {
                collect_distinct(ctx, set, f, &mut ws.distinct);
                thresholds_into(&ws.distinct, 1, ctx.config, &mut ws.mids, &mut ws.cands);
                let cands = &ws.cands;
                if cands.is_empty() {
                    continue;
                }
                let sorted_f = &set.sorted[ctx.numeric_pos[f]];
                let col = ctx.data.feature(f);
                let scores = ctx.data.scores();
                ws.acc.fill(0.0);
                let mut ci = 0usize;
                for (count, &r) in sorted_f.iter().enumerate() {
                    let v = col[r as usize];
                    while ci < cands.len() && v > cands[ci] {
                        let nl = count;
                        let nr = m - count;
                        if nl >= ctx.min_leaf && nr >= ctx.min_leaf {
                            let (tl, bl) = argmax(&ws.acc);
                            let mut tr = 0usize;
                            let mut br = ws.totals[0] - ws.acc[0];
                            for j in 1..d {
                                let x = ws.totals[j] - ws.acc[j];
                                if x > br {
                                    tr = j;
                                    br = x;
                                }
                            }
                            let sum = bl + br;
                            if sum > incumbent + tie_margin(incumbent) {
                                incumbent = sum;
                                best = Some(BestDepth1 {
                                    sum,
                                    feature: f,
                                    rule: CandidateRule::Threshold(cands[ci]),
                                    t_left: tl,
                                    t_right: tr,
                                    n_left: nl,
                                });
                            }
                        }
                        ci += 1;
                    }
                    let base = r as usize * d;
                    for (j, a) in ws.acc.iter_mut().enumerate() {
                        *a += scores[base + j];
                    }
                }
            }
        }
    }

    best.map(|b| {
        let share = |n: usize| n as f64 / ctx.root_n as f64;
        let rule = match b.rule {
            CandidateRule::Threshold(value) => SplitRule::Threshold {
                feature: b.feature,
                value,
            },
            CandidateRule::Categories(set_) => SplitRule::CategorySet {
                feature: b.feature,
                left_categories: set_,
            },
        };
        (
            b.sum,
            Node::Split {
                rule,
                left: Box::new(Node::Leaf {
                    treatment: b.t_left,
                    n_train: b.n_left,
                    train_share: share(b.n_left),
                }),
                right: Box::new(Node::Leaf {
                    treatment: b.t_right,
                    n_train: m - b.n_left,
                    train_share: share(m - b.n_left),
                }),
            },
        )
    })
}
