//! Inverse-validation-error weighting: each member's weight is proportional
//! to the reciprocal of its validation error, so more accurate members
//! dominate the combined prediction. Because the weights are convex, the
//! ensemble's error is bounded by the weighted mean of member errors, which
//! in turn never exceeds the worst member's error.

use crate::error::{Error, Result};

/// One validation error per ensemble member; all must be finite and > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(Vec<f64>);

impl ValidationErrors {
    pub fn new(errors: Vec<f64>) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::InvalidInput("need at least one member error".into()));
        }
        if let Some(e) = errors.iter().find(|e| !e.is_finite() || **e <= 0.0) {
            return Err(Error::DegenerateInput(format!(
                "validation errors must be finite and positive, got {e}"
            )));
        }
        Ok(ValidationErrors(errors))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Convex member weights: nonnegative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights(Vec<f64>);

impl EnsembleWeights {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Weight each member by the reciprocal of its validation error,
/// normalized so the weights sum to one.
pub fn compute_weights(errors: &ValidationErrors) -> EnsembleWeights {
    let inv: Vec<f64> = errors.values().iter().map(|e| 1.0 / e).collect();
    let total: f64 = inv.iter().sum();
    EnsembleWeights(inv.into_iter().map(|v| v / total).collect())
}

/// Combine per-member prediction vectors into one weighted prediction per
/// sample. `member_predictions[i]` holds member i's predictions for all
/// samples; all members must cover the same samples.
pub fn combine_predictions(
    member_predictions: &[Vec<f64>],
    weights: &EnsembleWeights,
) -> Result<Vec<f64>> {
    if member_predictions.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} prediction vectors but {} weights",
            member_predictions.len(),
            weights.len()
        )));
    }
    let n = member_predictions
        .first()
        .map(|p| p.len())
        .ok_or_else(|| Error::InvalidInput("no member predictions".into()))?;
    if member_predictions.iter().any(|p| p.len() != n) {
        return Err(Error::Shape("member prediction lengths differ".into()));
    }
    let mut out = vec![0.0; n];
    for (preds, &w) in member_predictions.iter().zip(weights.values()) {
        for (slot, &p) in out.iter_mut().zip(preds) {
            *slot += w * p;
        }
    }
    Ok(out)
}
