//! Regression metrics and the k-fold cross-validation harness.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Dataset;

/// Point metrics for one prediction/actual pairing. `r2` is `None` when the
/// actuals are constant (zero total variance); `adjusted_r2` additionally
/// requires `n > k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub adjusted_r2: Option<f64>,
    pub n: usize,
    pub k: usize,
}

/// Adjusted coefficient of determination for `n` samples and `k` predictors:
/// `1 - (1 - r2) * (n - 1) / (n - k - 1)`.
pub fn adjusted_r2(r2: f64, n: usize, k: usize) -> Result<f64> {
    if n <= k + 1 {
        return Err(Error::Evaluation(format!(
            "adjusted r2 needs n > k + 1 (n = {n}, k = {k})"
        )));
    }
    Ok(1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n as f64 - k as f64 - 1.0))
}

/// Compute MAE, RMSE, r2, and adjusted r2 (with `k` predictors) for paired
/// predictions and actuals.
pub fn compute_metrics(predicted: &[f64], actual: &[f64], k: usize) -> Result<MetricsReport> {
    let n = actual.len();
    if n == 0 || predicted.len() != n {
        return Err(Error::Evaluation(format!(
            "{} predictions for {} actuals",
            predicted.len(),
            n
        )));
    }
    if predicted.iter().chain(actual).any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("metrics need finite values".into()));
    }
    let nf = n as f64;
    let mae = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (a - p).abs())
        .sum::<f64>()
        / nf;
    let sse = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (a - p) * (a - p))
        .sum::<f64>();
    let rmse = (sse / nf).sqrt();
    let mean = actual.iter().sum::<f64>() / nf;
    let sst = actual.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>();
    let r2 = if sst > 0.0 { Some(1.0 - sse / sst) } else { None };
    let adjusted = match r2 {
        Some(v) if n > k + 1 => Some(adjusted_r2(v, n, k)?),
        _ => None,
    };
    Ok(MetricsReport {
        mae,
        rmse,
        r2,
        adjusted_r2: adjusted,
        n,
        k,
    })
}

/// Difference between training and test r2; large positive values indicate
/// overfitting.
pub fn r2_gap(train_r2: f64, test_r2: f64) -> f64 {
    train_r2 - test_r2
}

/// Partition `0..n` into `folds` disjoint index sets after a seeded shuffle.
/// The first `n % folds` folds receive one extra index.
pub fn kfold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n {
        return Err(Error::Evaluation(format!(
            "need 2 <= folds <= n (folds = {folds}, n = {n})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut cursor = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        out.push(order[cursor..cursor + size].to_vec());
        cursor += size;
    }
    Ok(out)
}

/// Per-fold r2 values with their mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub fold_r2: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Run k-fold cross-validation. For each fold, `fit_predict` receives the
/// training portion and the held-out inputs and returns held-out predictions;
/// the fold's r2 is scored against the held-out actuals. `k_predictors` only
/// feeds the degrees-of-freedom bookkeeping of the per-fold metrics.
pub fn kfold_cross_validate<F>(
    inputs: &[Vec<f64>],
    targets: &[f64],
    folds: usize,
    seed: u64,
    k_predictors: usize,
    mut fit_predict: F,
) -> Result<CvReport>
where
    F: FnMut(&Dataset, &[Vec<f64>]) -> Result<Vec<f64>>,
{
    if inputs.len() != targets.len() {
        return Err(Error::Evaluation(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let fold_sets = kfold_indices(targets.len(), folds, seed)?;
    let mut fold_r2 = Vec::with_capacity(folds);
    for (f, held_out) in fold_sets.iter().enumerate() {
        let held: std::collections::HashSet<usize> = held_out.iter().copied().collect();
        let mut train_x = Vec::with_capacity(inputs.len() - held_out.len());
        let mut train_y = Vec::with_capacity(train_x.capacity());
        for i in 0..inputs.len() {
            if !held.contains(&i) {
                train_x.push(inputs[i].clone());
                train_y.push(targets[i]);
            }
        }
        let val_x: Vec<Vec<f64>> = held_out.iter().map(|&i| inputs[i].clone()).collect();
        let val_y: Vec<f64> = held_out.iter().map(|&i| targets[i]).collect();
        let train = Dataset::new(train_x, train_y)?;
        let pred = fit_predict(&train, &val_x)?;
        let metrics = compute_metrics(&pred, &val_y, k_predictors)?;
        let r2 = metrics.r2.ok_or_else(|| {
            Error::DegenerateInput(format!("fold {f} has a constant held-out target"))
        })?;
        fold_r2.push(r2);
    }
    let nf = fold_r2.len() as f64;
    let mean = fold_r2.iter().sum::<f64>() / nf;
    let var = fold_r2.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / nf;
    Ok(CvReport {
        fold_r2,
        mean,
        std: var.sqrt(),
    })
}
