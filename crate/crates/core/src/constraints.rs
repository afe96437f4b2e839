//! Maximum treatment-share constraints.
//!
//! A cap on the share of the population a treatment may receive is enforced
//! indirectly: treatment-specific costs (in outcome units) are subtracted
//! from the policy scores before training. Costs are calibrated against the
//! best-score allocation: whenever a treatment's share exceeds its cap, its
//! cost grows proportionally to the violation, scaled by the standard
//! deviation of the score matrix. Only relative costs matter, so the vector
//! is renormalized to a zero minimum after every step. The calibration
//! schedule, a monotone proportional-step loop, under-shoots rather than
//! over-shoots caps; hitting the iteration cap is reported, not an error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PolicyData;
use crate::eval::argmax_rows;

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("max shares sum to {0}, below 1: some rows could not be assigned anywhere")]
    Infeasible(f64),
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0}")]
    BadShares(String),
}

/// Per-treatment share caps with the calibration tolerance and iteration cap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShareConstraint {
    /// Maximum share per treatment, each in (0, 1]; must sum to at least 1.
    pub max_shares: Vec<f64>,
    /// A share within `tolerance` above its cap counts as satisfied.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl ShareConstraint {
    pub fn new(max_shares: Vec<f64>) -> Self {
        ShareConstraint {
            max_shares,
            tolerance: 0.005,
            max_iterations: 200,
        }
    }

    fn validate(&self, d: usize) -> Result<(), ConstraintError> {
        if self.max_shares.len() != d {
            return Err(ConstraintError::DimensionMismatch {
                expected: d,
                got: self.max_shares.len(),
            });
        }
        if self
            .max_shares
            .iter()
            .any(|&s| !(s > 0.0 && s <= 1.0) || !s.is_finite())
        {
            return Err(ConstraintError::BadShares(
                "each max share must lie in (0, 1]".into(),
            ));
        }
        let total: f64 = self.max_shares.iter().sum();
        if total < 1.0 - 1e-9 {
            return Err(ConstraintError::Infeasible(total));
        }
        Ok(())
    }
}

/// Calibrated treatment costs, the shares they achieve under the best-score
/// allocation, and whether calibration converged within the iteration cap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostVector {
    /// Non-negative, with at least one zero entry (only differences matter).
    pub costs: Vec<f64>,
    pub iterations_used: usize,
    pub achieved_shares: Vec<f64>,
    pub converged: bool,
}

fn best_score_shares(scores: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut counts = vec![0usize; d];
    for t in argmax_rows(scores, n, d) {
        counts[t] += 1;
    }
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

/// Finds treatment costs whose subtraction brings the best-score allocation
/// within the share caps (up to the tolerance).
pub fn adjust_costs_for_shares(
    data: &PolicyData,
    constraint: &ShareConstraint,
) -> Result<CostVector, ConstraintError> {
    let n = data.n();
    let d = data.d();
    constraint.validate(d)?;

    // Step scale: standard deviation of the full score matrix.
    let scores = data.scores();
    let count = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / count;
    let sd = (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / count).sqrt();

    let mut costs = vec![0.0f64; d];
    let mut adjusted = scores.to_vec();
    let mut iterations = 0usize;
    while iterations < constraint.max_iterations {
        iterations += 1;
        let shares = best_score_shares(&adjusted, n, d);
        let satisfied = shares
            .iter()
            .zip(&constraint.max_shares)
            .all(|(&s, &cap)| s <= cap + constraint.tolerance);
        if satisfied {
            return Ok(CostVector {
                costs,
                iterations_used: iterations,
                achieved_shares: shares,
                converged: true,
            });
        }
        for j in 0..d {
            let excess = shares[j] - constraint.max_shares[j];
            if excess > constraint.tolerance {
                costs[j] += sd * excess;
            }
        }
        let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        for c in costs.iter_mut() {
            *c -= min;
        }
        for i in 0..n {
            for j in 0..d {
                adjusted[i * d + j] = scores[i * d + j] - costs[j];
            }
        }
    }
    let shares = best_score_shares(&adjusted, n, d);
    Ok(CostVector {
        costs,
        iterations_used: iterations,
        achieved_shares: shares,
        converged: false,
    })
}

/// Subtracts `costs[j]` from every score in column `j`. Pure; the input is a
/// row-major matrix with stride `costs.len()`.
pub fn apply_costs(scores: &[f64], costs: &CostVector) -> Result<Vec<f64>, ConstraintError> {
    let d = costs.costs.len();
    if d == 0 || !scores.len().is_multiple_of(d) {
        return Err(ConstraintError::DimensionMismatch {
            expected: d,
            got: scores.len(),
        });
    }
    Ok(scores
        .iter()
        .enumerate()
        .map(|(k, &s)| s - costs.costs[k % d])
        .collect())
}
