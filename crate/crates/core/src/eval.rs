//! Baseline allocators and welfare/treatment-share reports.
//!
//! Welfare of an allocation is the mean (and total) of each row's score at
//! its assigned treatment. Tree policies trained on cost-adjusted scores are
//! evaluated here against the original scores, so reported welfare stays in
//! outcome units.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PolicyData;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("allocation `{name}` has {got} assignments for {expected} rows")]
    LengthMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("shares must be non-negative and sum to 1, got {0:?}")]
    BadShares(Vec<f64>),
    #[error("allocation `{name}` assigns treatment {index} but only {d} exist")]
    BadTreatmentIndex { name: String, index: usize, d: usize },
}

/// Where an allocation came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationSource {
    Tree,
    BestScore,
    Random { seed: u64, shares: Vec<f64> },
    Observed,
}

/// A named assignment of every row to one treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub policy_name: String,
    pub assignments: Vec<usize>,
    pub source: AllocationSource,
}

/// Row-wise argmax with lowest-index tie break over a row-major matrix.
pub(crate) fn argmax_rows(scores: &[f64], n: usize, d: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = &scores[i * d..(i + 1) * d];
        let mut best = 0usize;
        let mut value = row[0];
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > value {
                best = j;
                value = v;
            }
        }
        out.push(best);
    }
    out
}

/// Assigns every row to the treatment with its highest score.
pub fn allocate_best_score(data: &PolicyData) -> Allocation {
    Allocation {
        policy_name: "best_score".into(),
        assignments: argmax_rows(data.scores(), data.n(), data.d()),
        source: AllocationSource::BestScore,
    }
}

/// I.i.d. draws from the given share distribution, deterministic in `seed`.
pub fn allocate_random(n: usize, shares: &[f64], seed: u64) -> Result<Allocation, EvalError> {
    if shares.iter().any(|&s| !s.is_finite() || s < 0.0)
        || (shares.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(EvalError::BadShares(shares.to_vec()));
    }
    let mut cumulative: Vec<f64> = Vec::with_capacity(shares.len());
    let mut acc = 0.0;
    for &s in shares {
        acc += s;
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assignments = (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>();
            cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(shares.len() - 1)
        })
        .collect();
    Ok(Allocation {
        policy_name: "random".into(),
        assignments,
        source: AllocationSource::Random {
            seed,
            shares: shares.to_vec(),
        },
    })
}

/// The observed treatment column as an allocation, when present.
pub fn allocate_observed(data: &PolicyData) -> Option<Allocation> {
    data.observed_treatment().map(|t| Allocation {
        policy_name: "observed".into(),
        assignments: t.to_vec(),
        source: AllocationSource::Observed,
    })
}

/// One report line: welfare and realized treatment shares of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy_name: String,
    pub welfare_mean: f64,
    pub welfare_total: f64,
    pub treatment_shares: Vec<f64>,
    pub n: usize,
}

/// Welfare and shares per policy, in the order the allocations were given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub treatment_labels: Vec<String>,
    pub rows: Vec<ReportRow>,
}

/// Evaluates each allocation against the data's score matrix.
pub fn evaluate(
    allocations: &[Allocation],
    data: &PolicyData,
) -> Result<EvaluationReport, EvalError> {
    let n = data.n();
    let d = data.d();
    let mut rows = Vec::with_capacity(allocations.len());
    for alloc in allocations {
        if alloc.assignments.len() != n {
            return Err(EvalError::LengthMismatch {
                name: alloc.policy_name.clone(),
                expected: n,
                got: alloc.assignments.len(),
            });
        }
        let mut total = 0.0f64;
        let mut counts = vec![0usize; d];
        for (i, &t) in alloc.assignments.iter().enumerate() {
            if t >= d {
                return Err(EvalError::BadTreatmentIndex {
                    name: alloc.policy_name.clone(),
                    index: t,
                    d,
                });
            }
            total += data.score(i, t);
            counts[t] += 1;
        }
        rows.push(ReportRow {
            policy_name: alloc.policy_name.clone(),
            welfare_mean: total / n as f64,
            welfare_total: total,
            treatment_shares: counts.iter().map(|&c| c as f64 / n as f64).collect(),
            n,
        });
    }
    Ok(EvaluationReport {
        treatment_labels: data.treatment_labels().to_vec(),
        rows,
    })
}

fn fmt_welfare(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_share(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// Aligned plain-text table: policy, welfare mean, one share column (percent)
/// per treatment, then n. The numbers are formatted exactly as in the CSV
/// emitter.
pub fn render_report_text(report: &EvaluationReport) -> String {
    let mut header: Vec<String> = vec!["policy".into(), "welfare_mean".into()];
    for label in &report.treatment_labels {
        header.push(format!("share% {label}"));
    }
    header.push("n".into());

    let mut table: Vec<Vec<String>> = vec![header];
    for row in &report.rows {
        let mut line = vec![row.policy_name.clone(), fmt_welfare(row.welfare_mean)];
        line.extend(row.treatment_shares.iter().map(|&s| fmt_share(s)));
        line.push(row.n.to_string());
        table.push(line);
    }
    let columns = table[0].len();
    let widths: Vec<usize> = (0..columns)
        .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap())
        .collect();
    let mut out = String::new();
    for row in &table {
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                out.push_str("  ");
            }
            if c == 0 {
                out.push_str(&format!("{:<width$}", cell, width = widths[c]));
            } else {
                out.push_str(&format!("{:>width$}", cell, width = widths[c]));
            }
        }
        // Trim the padding of the final column.
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    }
    out
}

/// CSV form: `policy,welfare_mean,share_0..share_{d-1},n` with shares in
/// percent, numbers formatted as in the text report.
pub fn render_report_csv(report: &EvaluationReport) -> String {
    let d = report.treatment_labels.len();
    let mut out = String::from("policy,welfare_mean");
    for j in 0..d {
        out.push_str(&format!(",share_{j}"));
    }
    out.push_str(",n\n");
    for row in &report.rows {
        out.push_str(&row.policy_name);
        out.push(',');
        out.push_str(&fmt_welfare(row.welfare_mean));
        for &s in &row.treatment_shares {
            out.push(',');
            out.push_str(&fmt_share(s));
        }
        out.push_str(&format!(",{}\n", row.n));
    }
    out
}
