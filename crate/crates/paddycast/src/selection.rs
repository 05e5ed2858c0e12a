//! Multi-stage feature selection: scaling, splitting, outlier removal,
//! variance and significance filters, pairwise correlation and chi-square
//! redundancy checks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::features::FeatureTable;

/// Per-column min/max observed on the fit rows.
#[derive(Debug, Clone)]
pub struct ScalerParams {
    names: Vec<String>,
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl ScalerParams {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn range(&self, col: usize) -> (f64, f64) {
        (self.mins[col], self.maxs[col])
    }
}

/// Fit a min-max scaler on `fit_rows` and map every numerical column by
/// `(x - min) / (max - min)`. Constant columns map to 0; values outside the
/// fit range map outside [0, 1] (no clipping). Missing entries stay missing.
pub fn minmax_fit_transform(
    table: &FeatureTable,
    fit_rows: &[usize],
) -> Result<(FeatureTable, ScalerParams)> {
    if fit_rows.is_empty() {
        return Err(Error::InvalidInput("fit rows must be nonempty".into()));
    }
    let mut out = table.clone();
    let mut mins = Vec::with_capacity(table.n_cols());
    let mut maxs = Vec::with_capacity(table.n_cols());
    for c in 0..table.n_cols() {
        let vals = table.column_values(c, fit_rows);
        let (min, max) = if vals.is_empty() {
            (0.0, 0.0)
        } else {
            (
                vals.iter().copied().fold(f64::INFINITY, f64::min),
                vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            )
        };
        mins.push(min);
        maxs.push(max);
        let range = max - min;
        for r in 0..table.n_rows() {
            if let Some(v) = table.get(r, c) {
                let scaled = if range == 0.0 { 0.0 } else { (v - min) / range };
                out.set(r, c, Some(scaled));
            }
        }
    }
    Ok((
        out,
        ScalerParams {
            names: table.names().to_vec(),
            mins,
            maxs,
        },
    ))
}

/// Seeded 3:1 shuffle split: `|test| = round(n/4)`, deterministic for a
/// fixed seed, disjoint index sets covering all rows.
pub fn train_test_split(n_rows: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_rows < 4 {
        return Err(Error::InvalidInput(format!(
            "need at least 4 rows to split 3:1, got {n_rows}"
        )));
    }
    let mut idx: Vec<usize> = (0..n_rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_test = (n_rows as f64 / 4.0).round() as usize;
    let test = idx[..n_test].to_vec();
    let train = idx[n_test..].to_vec();
    Ok((train, test))
}

/// Pearson chi-square independence test on the contingency table of two
/// categorical columns. Levels with zero marginal are dropped before testing.
/// Returns (statistic, upper-tail p-value with (r-1)(c-1) degrees of freedom).
pub fn chi2_independence(a: &[usize], b: &[usize]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidInput(
            "chi-square inputs must be nonempty and equal length".into(),
        ));
    }
    let levels = |xs: &[usize]| -> Vec<usize> {
        let mut v: Vec<usize> = xs.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    let la = levels(a);
    let lb = levels(b);
    let r = la.len();
    let c = lb.len();
    let mut counts = vec![0.0f64; r * c];
    for (&x, &y) in a.iter().zip(b) {
        let i = la.binary_search(&x).unwrap();
        let j = lb.binary_search(&y).unwrap();
        counts[i * c + j] += 1.0;
    }
    let n = a.len() as f64;
    let row_m: Vec<f64> = (0..r).map(|i| counts[i * c..(i + 1) * c].iter().sum()).collect();
    let col_m: Vec<f64> = (0..c).map(|j| (0..r).map(|i| counts[i * c + j]).sum()).collect();
    let mut stat = 0.0;
    for i in 0..r {
        for j in 0..c {
            let expected = row_m[i] * col_m[j] / n;
            if expected > 0.0 {
                let d = counts[i * c + j] - expected;
                stat += d * d / expected;
            }
        }
    }
    let df = (r.saturating_sub(1)) * (c.saturating_sub(1));
    let p = if df == 0 || stat <= 0.0 {
        1.0
    } else {
        let dist = ChiSquared::new(df as f64)
            .map_err(|e| Error::Selection(format!("chi-square df: {e}")))?;
        1.0 - dist.cdf(stat)
    };
    Ok((stat, p))
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Two-sided p-value of the t-test on a Pearson correlation with n-2 df.
pub fn correlation_p_value(r: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidInput("correlation test needs n >= 3".into()));
    }
    let r = r.clamp(-0.9999999999, 0.9999999999);
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Selection(format!("t distribution: {e}")))?;
    Ok(2.0 * (1.0 - dist.cdf(t.abs())))
}

/// Thresholds for the selection stages. Unstated in the source protocol;
/// these are conventional defaults, all overridable.
#[derive(Debug, Clone, Copy)]
pub struct SelectionConfig {
    /// IQR multiplier for target outlier rows.
    pub iqr_factor: f64,
    /// Minimum post-scaling variance to survive the variance filter.
    pub variance_min: f64,
    /// Features with target-association p >= this are dropped.
    pub significance_p: f64,
    /// Pairwise |r| above this marks redundancy.
    pub corr_max: f64,
    /// Cramer's V above this (with a significant chi-square) marks
    /// categorical redundancy.
    pub cramers_v_max: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            iqr_factor: 1.5,
            variance_min: 1e-4,
            significance_p: 0.05,
            corr_max: 0.9,
            cramers_v_max: 0.9,
        }
    }
}

/// Why a feature was dropped, and at which stage.
#[derive(Debug, Clone)]
pub struct DroppedFeature {
    pub name: String,
    pub stage: &'static str,
    pub reason: String,
}

/// Full audit of a selection run.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub surviving: Vec<String>,
    pub dropped: Vec<DroppedFeature>,
    /// Rows kept after target-outlier removal (indices into the input rows).
    pub kept_rows: Vec<usize>,
    pub outlier_rows: Vec<usize>,
    /// (feature, Pearson r with target, p-value).
    pub target_correlations: Vec<(String, f64, f64)>,
    /// (feature a, feature b, chi-square statistic, p-value) for tested
    /// categorical pairs.
    pub pair_chi2: Vec<(String, String, f64, f64)>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // linear interpolation between closest ranks
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Run the selection stages in order: (1) IQR outlier-row removal on the
/// target, (2) variance filter, (3) target-significance filter, (4) pairwise
/// correlation filter keeping the member with higher |target correlation|,
/// (5) chi-square redundancy filter among categoricals.
///
/// The table is expected to be imputed and scaled; `rows` selects the rows
/// (normally the training split) the stages may look at.
pub fn selection_pipeline(
    table: &FeatureTable,
    rows: &[usize],
    config: &SelectionConfig,
) -> Result<SelectionReport> {
    if rows.len() < 8 {
        return Err(Error::Selection(format!(
            "selection needs at least 8 rows, got {}",
            rows.len()
        )));
    }
    let mut dropped: Vec<DroppedFeature> = Vec::new();

    // Stage 1: target outlier rows via the IQR rule.
    let mut target_sorted: Vec<f64> = rows.iter().map(|&r| table.target()[r]).collect();
    target_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = quantile(&target_sorted, 0.25);
    let q3 = quantile(&target_sorted, 0.75);
    let iqr = q3 - q1;
    let lo = q1 - config.iqr_factor * iqr;
    let hi = q3 + config.iqr_factor * iqr;
    let (kept_rows, outlier_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .copied()
        .partition(|&r| (lo..=hi).contains(&table.target()[r]));
    let target: Vec<f64> = kept_rows.iter().map(|&r| table.target()[r]).collect();

    let mut alive: Vec<usize> = (0..table.n_cols()).collect();

    // Stage 2: variance filter.
    alive.retain(|&c| {
        let vals = table.column_values(c, &kept_rows);
        let var = if vals.is_empty() {
            0.0
        } else {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64
        };
        if var < config.variance_min {
            dropped.push(DroppedFeature {
                name: table.names()[c].clone(),
                stage: "variance",
                reason: format!("variance {var:.3e} < {:.3e}", config.variance_min),
            });
            false
        } else {
            true
        }
    });

    // Stage 3: target-significance filter.
    let mut target_correlations = Vec::new();
    let mut corr_by_col = std::collections::BTreeMap::new();
    let mut survivors = Vec::new();
    for &c in &alive {
        // Columns may carry missing entries only if imputation was skipped;
        // correlate over rows where the value is present.
        let pairs: Vec<(f64, f64)> = kept_rows
            .iter()
            .zip(&target)
            .filter_map(|(&r, &t)| table.get(r, c).map(|v| (v, t)))
            .collect();
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let r = pearson(&xs, &ys);
        let p = correlation_p_value(r, xs.len())?;
        target_correlations.push((table.names()[c].clone(), r, p));
        corr_by_col.insert(c, r);
        if p >= config.significance_p {
            dropped.push(DroppedFeature {
                name: table.names()[c].clone(),
                stage: "significance",
                reason: format!("target-association p {p:.4} >= {:.4}", config.significance_p),
            });
        } else {
            survivors.push(c);
        }
    }
    alive = survivors;

    // Stage 4: pairwise correlation filter. Greedy pass in order of
    // decreasing |target correlation| (ties broken by name) so the stronger
    // member of a redundant pair survives.
    alive.sort_by(|&a, &b| {
        let ca = corr_by_col[&a].abs();
        let cb = corr_by_col[&b].abs();
        cb.partial_cmp(&ca)
            .unwrap()
            .then_with(|| table.names()[a].cmp(&table.names()[b]))
    });
    let mut kept_cols: Vec<usize> = Vec::new();
    for &c in &alive {
        let x = table.column_values(c, &kept_rows);
        let mut redundant_with = None;
        for &k in &kept_cols {
            let y = table.column_values(k, &kept_rows);
            if x.len() == y.len() && pearson(&x, &y).abs() > config.corr_max {
                redundant_with = Some(k);
                break;
            }
        }
        match redundant_with {
            Some(k) => dropped.push(DroppedFeature {
                name: table.names()[c].clone(),
                stage: "correlation",
                reason: format!(
                    "|r| > {} with {}",
                    config.corr_max,
                    table.names()[k]
                ),
            }),
            None => kept_cols.push(c),
        }
    }
    alive = kept_cols;

    // Stage 5: chi-square redundancy among surviving categoricals.
    let cat_cols: Vec<usize> = alive
        .iter()
        .copied()
        .filter(|&c| table.is_categorical(c))
        .collect();
    let mut pair_chi2 = Vec::new();
    let mut cat_dropped = std::collections::BTreeSet::new();
    let discretize = |c: usize| -> Vec<usize> {
        table
            .column_values(c, &kept_rows)
            .iter()
            .map(|v| (v * 1e6).round() as i64 as usize)
            .collect()
    };
    for i in 0..cat_cols.len() {
        for j in i + 1..cat_cols.len() {
            let (a, b) = (cat_cols[i], cat_cols[j]);
            if cat_dropped.contains(&a) || cat_dropped.contains(&b) {
                continue;
            }
            let (stat, p) = chi2_independence(&discretize(a), &discretize(b))?;
            pair_chi2.push((table.names()[a].clone(), table.names()[b].clone(), stat, p));
            let v = (stat / kept_rows.len() as f64).sqrt(); // Cramer's V for 2-level columns
            if p < config.significance_p && v > config.cramers_v_max {
                // drop the member with the weaker target association
                let weaker = if corr_by_col[&a].abs() < corr_by_col[&b].abs() {
                    a
                } else {
                    b
                };
                cat_dropped.insert(weaker);
                dropped.push(DroppedFeature {
                    name: table.names()[weaker].clone(),
                    stage: "chi2",
                    reason: format!("Cramer's V {v:.3} with p {p:.3e}"),
                });
            }
        }
    }
    alive.retain(|c| !cat_dropped.contains(c));

    if alive.is_empty() {
        return Err(Error::Selection(
            "all features dropped; thresholds too aggressive for this table".into(),
        ));
    }

    // Restore the table's column order for the survivors.
    alive.sort_unstable();
    Ok(SelectionReport {
        surviving: alive.iter().map(|&c| table.names()[c].clone()).collect(),
        dropped,
        kept_rows,
        outlier_rows,
        target_correlations,
        pair_chi2,
    })
}

/// The fixed 15-feature set reported by the reference selection run:
/// 11 numerical and 4 categorical predictors.
pub fn fixed_selected_features() -> [&'static str; 15] {
    [
        "Season_Enc",
        "Dist_ChauPhu",
        "Dist_ChauThanh",
        "Dist_ThoaiSon",
        "Yield_kg",
        "Rainfall_growth_max",
        "Rainfall_growth_sum",
        "Rainfall_maturity_max",
        "VV_mean",
        "B08_max",
        "RGVI_mean",
        "kNDVI_mean",
        "GCC_mean",
        "LST_mean",
        "MET_solrad_mean",
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureTable;
    use rand::Rng;

    fn table_from_columns(cols: Vec<(&str, bool, Vec<f64>)>, target: Vec<f64>) -> FeatureTable {
        let names = cols.iter().map(|c| c.0.to_string()).collect();
        let cats = cols.iter().map(|c| c.1).collect();
        let mut t = FeatureTable::new(names, cats, "y".into()).unwrap();
        let n = target.len();
        for r in 0..n {
            let row: Vec<Option<f64>> = cols.iter().map(|c| Some(c.2[r])).collect();
            t.push_row(&row, target[r]).unwrap();
        }
        t
    }

    #[test]
    fn minmax_hand_values() {
        let t = table_from_columns(
            vec![("a", false, vec![0.0, 5.0, 10.0])],
            vec![1.0, 2.0, 3.0],
        );
        let (scaled, params) = minmax_fit_transform(&t, &[0, 1, 2]).unwrap();
        assert_eq!(scaled.get(0, 0), Some(0.0));
        assert_eq!(scaled.get(1, 0), Some(0.5));
        assert_eq!(scaled.get(2, 0), Some(1.0));
        assert_eq!(params.range(0), (0.0, 10.0));
    }

    #[test]
    fn minmax_constant_column_maps_to_zero() {
        let t = table_from_columns(vec![("a", false, vec![3.0, 3.0, 3.0])], vec![1.0, 2.0, 3.0]);
        let (scaled, _) = minmax_fit_transform(&t, &[0, 1, 2]).unwrap();
        for r in 0..3 {
            assert_eq!(scaled.get(r, 0), Some(0.0));
        }
    }

    #[test]
    fn minmax_no_clipping_outside_fit_range() {
        let t = table_from_columns(vec![("a", false, vec![0.0, 10.0, 20.0])], vec![1.0; 3]);
        let (scaled, _) = minmax_fit_transform(&t, &[0, 1]).unwrap();
        assert_eq!(scaled.get(2, 0), Some(2.0));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (train, test) = train_test_split(557, 7).unwrap();
        assert_eq!(train.len(), 418);
        assert_eq!(test.len(), 139);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..557).collect::<Vec<_>>());
        let (t2, s2) = train_test_split(557, 7).unwrap();
        assert_eq!(train, t2);
        assert_eq!(test, s2);

        let (train, test) = train_test_split(4, 0).unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!(test.len(), 1);
    }

    #[test]
    fn chi2_exact_independence() {
        // 2x2 counts [[25,25],[25,25]]
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (x, y, count) in [(0, 0, 25), (0, 1, 25), (1, 0, 25), (1, 1, 25)] {
            for _ in 0..count {
                a.push(x);
                b.push(y);
            }
        }
        let (stat, p) = chi2_independence(&a, &b).unwrap();
        assert!(stat.abs() < 1e-12);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi2_perfect_dependence() {
        // counts [[50,0],[0,50]] -> statistic n = 100, df 1
        let a: Vec<usize> = (0..100).map(|i| i / 50).collect();
        let b = a.clone();
        let (stat, p) = chi2_independence(&a, &b).unwrap();
        assert!((stat - 100.0).abs() < 1e-9);
        assert!(p < 1e-12);
    }

    #[test]
    fn chi2_permutation_invariant() {
        let a = vec![0, 0, 1, 1, 2, 2, 0, 1, 2, 0];
        let b = vec![1, 0, 1, 1, 0, 1, 0, 0, 1, 1];
        let (s1, _) = chi2_independence(&a, &b).unwrap();
        // swap the roles and relabel levels
        let a2: Vec<usize> = a.iter().map(|&x| 2 - x).collect();
        let (s2, _) = chi2_independence(&b, &a2).unwrap();
        assert!((s1 - s2).abs() < 1e-9);
    }

    #[test]
    fn pipeline_drops_constant_and_duplicate_keeps_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 500;
        let signal: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let dup = signal.clone();
        let noise: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let constant = vec![0.4; n];
        let target: Vec<f64> = signal
            .iter()
            .map(|s| 3.0 * s + 0.1 * rng.gen::<f64>())
            .collect();
        let t = table_from_columns(
            vec![
                ("signal", false, signal),
                ("dup", false, dup),
                ("noise", false, noise),
                ("constant", false, constant),
            ],
            target,
        );
        let rows: Vec<usize> = (0..n).collect();
        let report = selection_pipeline(&t, &rows, &SelectionConfig::default()).unwrap();
        assert!(!report.surviving.contains(&"constant".to_string()));
        assert!(!report.surviving.contains(&"noise".to_string()));
        // exactly one of the identical pair survives; the tie on target
        // correlation is broken by name, keeping "dup"
        assert!(report.surviving.contains(&"dup".to_string()));
        assert!(!report.surviving.contains(&"signal".to_string()));
        // partition property
        assert_eq!(report.surviving.len() + report.dropped.len(), 4);
    }

    #[test]
    fn pipeline_monotone_in_correlation_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 300;
        let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 0.05 * rng.gen::<f64>()).collect();
        let target: Vec<f64> = a.iter().map(|v| 2.0 * v + 0.2 * rng.gen::<f64>()).collect();
        let t = table_from_columns(vec![("a", false, a), ("b", false, b)], target);
        let rows: Vec<usize> = (0..n).collect();
        let tight = selection_pipeline(
            &t,
            &rows,
            &SelectionConfig {
                corr_max: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        let loose = selection_pipeline(
            &t,
            &rows,
            &SelectionConfig {
                corr_max: 0.9999,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(loose.surviving.len() >= tight.surviving.len());
    }

    #[test]
    fn fixed_set_matches_reference() {
        let f = fixed_selected_features();
        assert_eq!(f.len(), 15);
        assert!(f.contains(&"VV_mean"));
        assert!(f.contains(&"B08_max"));
        assert!(!f.iter().any(|n| n.ends_with("_var")));
        // all 15 exist in the engineered table (with Yield_kg passthrough)
        let cols = crate::features::table_column_names();
        for name in f {
            assert!(cols.iter().any(|c| c == name), "{name} not a table column");
        }
        // 4 categoricals
        let cats = f
            .iter()
            .filter(|n| crate::features::CATEGORICAL_FEATURE_NAMES.contains(&n.as_ref()))
            .count();
        assert_eq!(cats, 4);
    }

    #[test]
    fn noise_column_p_value_behaviour() {
        // pure-noise column vs target over n=500: p should be large most of
        // the time; a strongly correlated column gives p ~ 0.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 500;
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 2.0 + 0.01 * rng.gen::<f64>()).collect();
        let r = pearson(&x, &y);
        assert!(correlation_p_value(r, n).unwrap() < 1e-10);
        let noise: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let r = pearson(&noise, &y);
        assert!(correlation_p_value(r, n).unwrap() > 0.001);
    }
}
