//! CSV ingestion against a JSON schema sidecar, and the matching writer.
//!
//! Schema shape:
//!
//! ```json
//! {
//!   "scores": ["score_t0", "score_t1"],
//!   "features": {"age": "continuous", "region": "categorical", "grade": "ordered_discrete"},
//!   "treatment": "treatment",
//!   "outcome": "outcome",
//!   "id": "person_id"
//! }
//! ```
//!
//! Score columns must be mapped explicitly, one per treatment, in treatment
//! order; treatment labels are the score column names. Rows with a missing or
//! non-parseable cell in any mapped column are dropped and counted. A score
//! cell that parses to a non-finite number is an error rather than a drop.

use std::collections::HashMap;
use std::path::Path;

use indexmap::IndexMap;

use crate::data::{DataError, FeatureKind, FeatureSpec, PolicyData};

/// Column-role mapping for [`load_csv`].
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Schema {
    /// One score column per treatment; order defines treatment indices.
    pub scores: Vec<String>,
    /// Feature columns in matrix order.
    pub features: IndexMap<String, FeatureKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, DataError> {
        Schema::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schema serializes");
        s.push('\n');
        s
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.scores.len() < 2 {
            return Err(DataError::NoTreatments(self.scores.len()));
        }
        if self.features.is_empty() {
            return Err(DataError::InvalidSchema("no feature columns".into()));
        }
        let mut seen: Vec<&str> = self
            .scores
            .iter()
            .map(String::as_str)
            .chain(self.features.keys().map(String::as_str))
            .chain(self.treatment.as_deref())
            .chain(self.outcome.as_deref())
            .chain(self.id.as_deref())
            .collect();
        let total = seen.len();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != total {
            return Err(DataError::InvalidSchema(
                "a column is mapped to more than one role".into(),
            ));
        }
        Ok(())
    }
}

/// A loaded dataset plus the number of rows dropped for missing values.
#[derive(Debug)]
pub struct CsvLoad {
    pub data: PolicyData,
    pub dropped_rows: usize,
}

struct ColumnIndices {
    scores: Vec<usize>,
    features: Vec<(usize, FeatureKind)>,
    treatment: Option<usize>,
    outcome: Option<usize>,
    id: Option<usize>,
}

fn resolve_columns(headers: &csv::StringRecord, schema: &Schema) -> Result<ColumnIndices, DataError> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, name) in headers.iter().enumerate() {
        index.entry(name).or_insert(i);
    }
    let lookup = |name: &str| -> Result<usize, DataError> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    Ok(ColumnIndices {
        scores: schema
            .scores
            .iter()
            .map(|c| lookup(c))
            .collect::<Result<_, _>>()?,
        features: schema
            .features
            .iter()
            .map(|(c, &k)| lookup(c).map(|i| (i, k)))
            .collect::<Result<_, _>>()?,
        treatment: schema.treatment.as_deref().map(&lookup).transpose()?,
        outcome: schema.outcome.as_deref().map(&lookup).transpose()?,
        id: schema.id.as_deref().map(&lookup).transpose()?,
    })
}

/// Reads a UTF-8, RFC-4180 CSV with a header row into a validated
/// [`PolicyData`]. Categorical categories are interned in first-appearance
/// order over the retained rows. Generated row ids (when no id column is
/// mapped) are the 0-based source row numbers.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<CsvLoad, DataError> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new().from_path(path.as_ref())?;
    let cols = resolve_columns(reader.headers()?, schema)?;

    let d = cols.scores.len();
    let p = cols.features.len();
    let mut feature_cols: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut categories: Vec<IndexMap<String, u32>> = vec![IndexMap::new(); p];
    let mut scores: Vec<f64> = Vec::new();
    let mut observed_treatment: Vec<usize> = Vec::new();
    let mut observed_outcome: Vec<f64> = Vec::new();
    let mut row_ids: Vec<String> = Vec::new();
    let mut dropped = 0usize;

    // Staging for one row so that category interning only happens for rows
    // that survive the missing-value checks.
    let mut row_scores = vec![0.0f64; d];
    let mut row_numeric = vec![0.0f64; p];
    let mut row_labels: Vec<Option<String>> = vec![None; p];

    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |i: usize| record.get(i).unwrap_or("");
        let mut keep = true;

        for (j, &ci) in cols.scores.iter().enumerate() {
            let raw = cell(ci);
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => row_scores[j] = v,
                Ok(_) => {
                    return Err(DataError::NonFiniteScore {
                        column: schema.scores[j].clone(),
                        row: row_no,
                        value: raw.to_string(),
                    })
                }
                Err(_) => {
                    keep = false;
                    break;
                }
            }
        }
        if keep {
            for (f, &(ci, kind)) in cols.features.iter().enumerate() {
                let raw = cell(ci);
                match kind {
                    FeatureKind::Categorical => {
                        if raw.is_empty() {
                            keep = false;
                            break;
                        }
                        row_labels[f] = Some(raw.to_string());
                    }
                    _ => match raw.parse::<f64>() {
                        Ok(v) if v.is_finite() => row_numeric[f] = v,
                        _ => {
                            keep = false;
                            break;
                        }
                    },
                }
            }
        }
        let mut row_treatment = 0usize;
        if keep {
            if let Some(ci) = cols.treatment {
                match cell(ci).parse::<usize>() {
                    Ok(v) if v < d => row_treatment = v,
                    _ => keep = false,
                }
            }
        }
        let mut row_outcome = 0.0f64;
        if keep {
            if let Some(ci) = cols.outcome {
                match cell(ci).parse::<f64>() {
                    Ok(v) if v.is_finite() => row_outcome = v,
                    _ => keep = false,
                }
            }
        }
        if !keep {
            dropped += 1;
            continue;
        }

        scores.extend_from_slice(&row_scores);
        for (f, col) in feature_cols.iter_mut().enumerate() {
            if let Some(label) = row_labels[f].take() {
                let next = categories[f].len() as u32;
                let idx = *categories[f].entry(label).or_insert(next);
                col.push(idx as f64);
            } else {
                col.push(row_numeric[f]);
            }
        }
        if cols.treatment.is_some() {
            observed_treatment.push(row_treatment);
        }
        if cols.outcome.is_some() {
            observed_outcome.push(row_outcome);
        }
        row_ids.push(match cols.id {
            Some(ci) => cell(ci).to_string(),
            None => row_no.to_string(),
        });
    }

    if row_ids.is_empty() {
        return Err(DataError::EmptyAfterCleaning { dropped });
    }

    let specs = schema
        .features
        .iter()
        .enumerate()
        .map(|(f, (name, &kind))| match kind {
            FeatureKind::Categorical => FeatureSpec::categorical(
                name.clone(),
                categories[f].keys().cloned().collect(),
            ),
            _ => FeatureSpec::numeric(name.clone(), kind),
        })
        .collect();

    let data = PolicyData::new(
        specs,
        schema.scores.clone(),
        feature_cols,
        scores,
        cols.treatment.is_some().then_some(observed_treatment),
        cols.outcome.is_some().then_some(observed_outcome),
        row_ids,
    )?;
    Ok(CsvLoad {
        data,
        dropped_rows: dropped,
    })
}

fn reserved_name(base: &str, data: &PolicyData) -> String {
    let taken = |name: &str| {
        data.specs().iter().any(|s| s.name == name)
            || data.treatment_labels().iter().any(|l| l == name)
    };
    if taken(base) {
        format!("__{base}")
    } else {
        base.to_string()
    }
}

/// Schema describing the column layout produced by [`write_csv`]; feeding it
/// back to [`load_csv`] reproduces the dataset exactly.
pub fn schema_for(data: &PolicyData) -> Schema {
    Schema {
        scores: data.treatment_labels().to_vec(),
        features: data
            .specs()
            .iter()
            .map(|s| (s.name.clone(), s.kind))
            .collect(),
        treatment: data
            .observed_treatment()
            .map(|_| reserved_name("treatment", data)),
        outcome: data
            .observed_outcome()
            .map(|_| reserved_name("outcome", data)),
        id: Some(reserved_name("id", data)),
    }
}

/// Writes the dataset as CSV: id, features (categoricals as labels), score
/// columns named by treatment label, then observed treatment/outcome when
/// present. Numeric cells use the shortest representation that parses back to
/// the same value.
pub fn write_csv(data: &PolicyData, path: impl AsRef<Path>) -> Result<(), DataError> {
    let schema = schema_for(data);
    let mut writer = csv::Writer::from_path(path.as_ref())?;

    let mut header: Vec<String> = vec![schema.id.clone().expect("id column")];
    header.extend(schema.features.keys().cloned());
    header.extend(schema.scores.iter().cloned());
    if let Some(t) = &schema.treatment {
        header.push(t.clone());
    }
    if let Some(o) = &schema.outcome {
        header.push(o.clone());
    }
    writer.write_record(&header)?;

    let d = data.d();
    for i in 0..data.n() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        record.push(data.row_ids()[i].clone());
        for (f, spec) in data.specs().iter().enumerate() {
            let v = data.feature(f)[i];
            record.push(match spec.kind {
                FeatureKind::Categorical => spec.categories[v as usize].clone(),
                _ => v.to_string(),
            });
        }
        for j in 0..d {
            record.push(data.score(i, j).to_string());
        }
        if let Some(t) = data.observed_treatment() {
            record.push(t[i].to_string());
        }
        if let Some(o) = data.observed_outcome() {
            record.push(o[i].to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
