//! Tabular input for policy learning: feature matrix, per-treatment policy
//! scores, and the train/policy/predict split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema names column `{0}` but the file has no such column")]
    MissingColumn(String),
    #[error("at least two score columns are required, got {0}")]
    NoTreatments(usize),
    #[error("no rows left after dropping rows with missing values ({dropped} dropped)")]
    EmptyAfterCleaning { dropped: usize },
    #[error("score column `{column}`, data row {row}: non-finite value `{value}`")]
    NonFiniteScore {
        column: String,
        row: usize,
        value: String,
    },
    #[error("proportions must be positive and sum to 1, got {0:?}")]
    BadProportions([f64; 3]),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// How a feature is interpreted when generating split candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    #[serde(alias = "ordered")]
    OrderedDiscrete,
    Categorical,
}

impl FeatureKind {
    pub fn is_numeric(self) -> bool {
        !matches!(self, FeatureKind::Categorical)
    }
}

/// Name, kind and (for categorical features) the declared category labels.
///
/// Category order is first appearance in the source file; values in the data
/// matrix are indices into `categories`. A categorical feature needs at least
/// two observed categories before it can ever be split; single-category
/// columns are accepted and simply never split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>, kind: FeatureKind) -> Self {
        FeatureSpec {
            name: name.into(),
            kind,
            categories: Vec::new(),
        }
    }

    pub fn categorical(name: impl Into<String>, categories: Vec<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical,
            categories,
        }
    }
}

/// Immutable dataset: n rows with p features, d ≥ 2 policy-score columns and
/// optional observed treatment/outcome. Features are stored column-major,
/// scores row-major. Categorical feature values are category indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyData {
    specs: Vec<FeatureSpec>,
    treatment_labels: Vec<String>,
    /// Column-major: `features[f][i]` is feature `f` of row `i`.
    features: Vec<Vec<f64>>,
    /// Row-major: `scores[i * d + j]` is the score of row `i` under treatment `j`.
    scores: Vec<f64>,
    observed_treatment: Option<Vec<usize>>,
    observed_outcome: Option<Vec<f64>>,
    row_ids: Vec<String>,
}

impl PolicyData {
    /// Builds and validates a dataset. Scores are row-major with stride
    /// `treatment_labels.len()`.
    pub fn new(
        specs: Vec<FeatureSpec>,
        treatment_labels: Vec<String>,
        features: Vec<Vec<f64>>,
        scores: Vec<f64>,
        observed_treatment: Option<Vec<usize>>,
        observed_outcome: Option<Vec<f64>>,
        row_ids: Vec<String>,
    ) -> Result<Self, DataError> {
        let n = row_ids.len();
        let d = treatment_labels.len();
        let p = specs.len();
        if n == 0 {
            return Err(DataError::Validation("dataset has no rows".into()));
        }
        if d < 2 {
            return Err(DataError::NoTreatments(d));
        }
        if p == 0 {
            return Err(DataError::Validation("at least one feature required".into()));
        }
        if features.len() != p {
            return Err(DataError::Validation(format!(
                "{} feature columns but {} specs",
                features.len(),
                p
            )));
        }
        let mut names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != p {
            return Err(DataError::Validation("duplicate feature names".into()));
        }
        for (spec, col) in specs.iter().zip(&features) {
            if col.len() != n {
                return Err(DataError::Validation(format!(
                    "feature `{}` has {} values for {} rows",
                    spec.name,
                    col.len(),
                    n
                )));
            }
            match spec.kind {
                FeatureKind::Categorical => {
                    if spec.categories.is_empty() {
                        return Err(DataError::Validation(format!(
                            "categorical feature `{}` declares no categories",
                            spec.name
                        )));
                    }
                    for (i, &v) in col.iter().enumerate() {
                        if v.fract() != 0.0 || v < 0.0 || (v as usize) >= spec.categories.len() {
                            return Err(DataError::Validation(format!(
                                "feature `{}`, row {}: {} is not a valid category index",
                                spec.name, i, v
                            )));
                        }
                    }
                }
                _ => {
                    if !spec.categories.is_empty() {
                        return Err(DataError::Validation(format!(
                            "non-categorical feature `{}` lists categories",
                            spec.name
                        )));
                    }
                    if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                        return Err(DataError::Validation(format!(
                            "feature `{}`, row {}: non-finite value",
                            spec.name, i
                        )));
                    }
                }
            }
        }
        if scores.len() != n * d {
            return Err(DataError::Validation(format!(
                "score matrix has {} entries, expected {}",
                scores.len(),
                n * d
            )));
        }
        if let Some(pos) = scores.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteScore {
                column: treatment_labels[pos % d].clone(),
                row: pos / d,
                value: scores[pos].to_string(),
            });
        }
        if let Some(t) = &observed_treatment {
            if t.len() != n {
                return Err(DataError::Validation("observed treatment length mismatch".into()));
            }
            if t.iter().any(|&v| v >= d) {
                return Err(DataError::Validation("observed treatment index out of range".into()));
            }
        }
        if let Some(o) = &observed_outcome {
            if o.len() != n {
                return Err(DataError::Validation("observed outcome length mismatch".into()));
            }
        }
        Ok(PolicyData {
            specs,
            treatment_labels,
            features,
            scores,
            observed_treatment,
            observed_outcome,
            row_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.row_ids.len()
    }

    pub fn d(&self) -> usize {
        self.treatment_labels.len()
    }

    pub fn p(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn treatment_labels(&self) -> &[String] {
        &self.treatment_labels
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn observed_treatment(&self) -> Option<&[usize]> {
        self.observed_treatment.as_deref()
    }

    pub fn observed_outcome(&self) -> Option<&[f64]> {
        self.observed_outcome.as_deref()
    }

    /// Score of row `i` under treatment `j`.
    #[inline]
    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.d() + j]
    }

    /// The full row-major score matrix (stride `d`).
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Feature column `f`.
    #[inline]
    pub fn feature(&self, f: usize) -> &[f64] {
        &self.features[f]
    }

    /// Same dataset with the score matrix replaced (e.g. cost-adjusted scores).
    pub fn with_scores(&self, scores: Vec<f64>) -> Result<Self, DataError> {
        PolicyData::new(
            self.specs.clone(),
            self.treatment_labels.clone(),
            self.features.clone(),
            scores,
            self.observed_treatment.clone(),
            self.observed_outcome.clone(),
            self.row_ids.clone(),
        )
    }

    /// Copies the given rows (by position) into a new dataset. Specs and
    /// treatment labels are preserved. The subset may be empty.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let d = self.d();
        let features = self
            .features
            .iter()
            .map(|col| rows.iter().map(|&i| col[i]).collect())
            .collect();
        let mut scores = Vec::with_capacity(rows.len() * d);
        for &i in rows {
            scores.extend_from_slice(&self.scores[i * d..(i + 1) * d]);
        }
        PolicyData {
            specs: self.specs.clone(),
            treatment_labels: self.treatment_labels.clone(),
            features,
            scores,
            observed_treatment: self
                .observed_treatment
                .as_ref()
                .map(|t| rows.iter().map(|&i| t[i]).collect()),
            observed_outcome: self
                .observed_outcome
                .as_ref()
                .map(|o| rows.iter().map(|&i| o[i]).collect()),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }
}

/// A three-way random partition of a dataset: one part for training the score
/// model, one for training the policy tree, one held out for prediction.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train_forest: PolicyData,
    pub train_policy: PolicyData,
    pub predict: PolicyData,
    pub seed: u64,
}

/// Partitions rows uniformly at random (positional shuffle, deterministic
/// given `seed`). Part sizes are `round(n * f)` for the first two fractions;
/// the last part takes the remainder. Rows keep their input order within each
/// part.
pub fn split_data(
    data: &PolicyData,
    proportions: [f64; 3],
    seed: u64,
) -> Result<DataSplit, DataError> {
    if proportions.iter().any(|&f| !f.is_finite() || f <= 0.0)
        || (proportions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(DataError::BadProportions(proportions));
    }
    let n = data.n();
    let sizes = split_sizes(n, proportions);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut parts = Vec::with_capacity(3);
    let mut offset = 0;
    for &size in &sizes {
        let mut rows: Vec<usize> = order[offset..offset + size].to_vec();
        rows.sort_unstable();
        parts.push(data.subset(&rows));
        offset += size;
    }
    let predict = parts.pop().expect("three parts");
    let train_policy = parts.pop().expect("three parts");
    let train_forest = parts.pop().expect("three parts");
    Ok(DataSplit {
        train_forest,
        train_policy,
        predict,
        seed,
    })
}

/// `round(n * f)` for the first two parts, remainder to the last.
pub fn split_sizes(n: usize, proportions: [f64; 3]) -> [usize; 3] {
    let r0 = (n as f64 * proportions[0]).round() as usize;
    let r1 = (n as f64 * proportions[1]).round() as usize;
    let r0 = r0.min(n);
    let r1 = r1.min(n - r0);
    [r0, r1, n - r0 - r1]
}
