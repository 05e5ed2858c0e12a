//! The four ensemble member architectures and a linear elastic-net baseline.
//!
//! Every member maps a selected feature vector to one yield-rate value. The
//! members differ only in topology; they share the training loop, loss, and
//! seeding machinery in [`crate::nn`].

use crate::error::{Error, Result};
use crate::nn::{
    fit, Activation, Dataset, FitLoss, LayerSpec, ModelSpec, NodeSpec, TrainConfig, TrainedModel,
};

/// Reconstruction weight for the autoencoder member's joint loss.
pub const AE_RECONSTRUCTION_WEIGHT: f64 = 0.5;

/// The ensemble members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemberId {
    Dense,
    Ae,
    Mlp,
    Cnn,
}

impl MemberId {
    pub const ALL: [MemberId; 4] = [MemberId::Dense, MemberId::Ae, MemberId::Mlp, MemberId::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            MemberId::Dense => "Dense",
            MemberId::Ae => "AE",
            MemberId::Mlp => "MLP",
            MemberId::Cnn => "CNN",
        }
    }

    pub fn parse(s: &str) -> Result<MemberId> {
        match s {
            "Dense" => Ok(MemberId::Dense),
            "AE" => Ok(MemberId::Ae),
            "MLP" => Ok(MemberId::Mlp),
            "CNN" => Ok(MemberId::Cnn),
            _ => Err(Error::InvalidInput(format!("unknown member '{s}'"))),
        }
    }
}

/// Build the network topology for one member over `n_features` inputs.
pub fn build_member(id: MemberId, n_features: usize) -> Result<ModelSpec> {
    if n_features == 0 {
        return Err(Error::InvalidInput("member needs at least one feature".into()));
    }
    let spec = match id {
        MemberId::Mlp => ModelSpec::sequential(
            n_features,
            vec![
                LayerSpec::Dense { units: 64 },
                LayerSpec::Activation(Activation::Relu),
                LayerSpec::Dense { units: 32 },
                LayerSpec::Activation(Activation::Relu),
                LayerSpec::Dense { units: 1 },
            ],
        ),
        MemberId::Cnn => {
            if n_features < 5 {
                return Err(Error::InvalidInput(format!(
                    "CNN member needs >= 5 features, got {n_features}"
                )));
            }
            ModelSpec::sequential(
                n_features,
                vec![
                    LayerSpec::Conv1d {
                        filters: 16,
                        kernel: 3,
                        stride: 1,
                    },
                    LayerSpec::Activation(Activation::Relu),
                    LayerSpec::Conv1d {
                        filters: 8,
                        kernel: 3,
                        stride: 1,
                    },
                    LayerSpec::Activation(Activation::Relu),
                    LayerSpec::Flatten,
                    LayerSpec::Dense { units: 1 },
                ],
            )
        }
        MemberId::Dense => {
            // two 32-unit blocks, each re-concatenated with the raw input
            let nodes = vec![
                NodeSpec {
                    layer: LayerSpec::Dense { units: 32 },
                    inputs: vec![0],
                }, // 1
                NodeSpec {
                    layer: LayerSpec::Activation(Activation::Relu),
                    inputs: vec![1],
                }, // 2
                NodeSpec {
                    layer: LayerSpec::Concat,
                    inputs: vec![0, 2],
                }, // 3: n + 32
                NodeSpec {
                    layer: LayerSpec::Dense { units: 32 },
                    inputs: vec![3],
                }, // 4
                NodeSpec {
                    layer: LayerSpec::Activation(Activation::Relu),
                    inputs: vec![4],
                }, // 5
                NodeSpec {
                    layer: LayerSpec::Concat,
                    inputs: vec![0, 5],
                }, // 6: n + 32
                NodeSpec {
                    layer: LayerSpec::Dense { units: 1 },
                    inputs: vec![6],
                }, // 7
            ];
            ModelSpec {
                input_dim: n_features,
                nodes,
                output: 7,
                aux_output: None,
            }
        }
        MemberId::Ae => {
            let nodes = vec![
                NodeSpec {
                    layer: LayerSpec::Dense { units: 8 },
                    inputs: vec![0],
                }, // 1: encoder
                NodeSpec {
                    layer: LayerSpec::Activation(Activation::Silu),
                    inputs: vec![1],
                }, // 2: bottleneck
                NodeSpec {
                    layer: LayerSpec::Dense { units: n_features },
                    inputs: vec![2],
                }, // 3: linear decoder
                NodeSpec {
                    layer: LayerSpec::Dense { units: 1 },
                    inputs: vec![2],
                }, // 4: regression head
            ];
            ModelSpec {
                input_dim: n_features,
                nodes,
                output: 4,
                aux_output: Some(3),
            }
        }
    };
    spec.infer_shapes()?;
    Ok(spec)
}

fn mean_absolute_error(pred: &[f64], actual: &[f64]) -> f64 {
    pred.iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / pred.len() as f64
}

/// Train one member and return it with its validation mean absolute error.
/// A zero validation error is legal (perfectly fit validation set) and is
/// returned as-is; downstream weighting rejects it explicitly.
pub fn fit_member(
    id: MemberId,
    train: &Dataset,
    validation: &Dataset,
    config: &TrainConfig,
) -> Result<(TrainedModel, f64)> {
    if validation.is_empty() {
        return Err(Error::InvalidInput("validation set is empty".into()));
    }
    let n_features = train
        .inputs
        .first()
        .map(|x| x.len())
        .ok_or_else(|| Error::InvalidInput("training set is empty".into()))?;
    let spec = build_member(id, n_features)?;
    let mut config = *config;
    if id == MemberId::Ae {
        config.loss = FitLoss::with_reconstruction(config.loss.primary, AE_RECONSTRUCTION_WEIGHT);
    }
    let trained = fit(spec, train, Some(validation), &config)?;
    let pred = trained.predict_batch(&validation.inputs)?;
    let e = mean_absolute_error(&pred, &validation.targets);
    Ok((trained, e))
}

/// Fitted elastic-net coefficients. `l1_mix` is the lasso/ridge mixing
/// parameter in [0, 1]; `penalty` is the overall regularization strength.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticNetParams {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub l1_mix: f64,
    pub penalty: f64,
}

impl ElasticNetParams {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "expected {} features, got {}",
                self.weights.len(),
                x.len()
            )));
        }
        Ok(self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Coordinate-descent elastic net minimizing
/// `1/(2n) * sum (y - Xw - b)^2 + penalty * (l1_mix * |w|_1 + (1 - l1_mix)/2 * |w|_2^2)`.
/// Converges when no coefficient moves by more than `tol` in a sweep.
pub fn fit_elasticnet(
    x: &[Vec<f64>],
    y: &[f64],
    l1_mix: f64,
    penalty: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ElasticNetParams> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} targets",
            x.len(),
            y.len()
        )));
    }
    let p = x[0].len();
    if p == 0 || x.iter().any(|r| r.len() != p) {
        return Err(Error::Shape("feature rows must be nonempty and rectangular".into()));
    }
    if !(0.0..=1.0).contains(&l1_mix) {
        return Err(Error::InvalidInput(format!("l1_mix {l1_mix} not in [0, 1]")));
    }
    if !penalty.is_finite() || penalty < 0.0 {
        return Err(Error::InvalidInput(format!("penalty {penalty} must be >= 0")));
    }
    if tol <= 0.0 || max_iter == 0 {
        return Err(Error::InvalidInput("tol must be > 0 and max_iter >= 1".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("elastic net data must be finite".into()));
    }

    let n = x.len() as f64;
    // per-feature second moments; a zero column keeps its coefficient at 0
    let sq: Vec<f64> = (0..p)
        .map(|j| x.iter().map(|r| r[j] * r[j]).sum::<f64>() / n)
        .collect();

    let mut w = vec![0.0; p];
    let mut b = y.iter().sum::<f64>() / n;
    let mut residual: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(r, &yi)| yi - b - r.iter().zip(&w).map(|(v, wj)| v * wj).sum::<f64>())
        .collect();

    for _ in 0..max_iter {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            let denom = sq[j] + penalty * (1.0 - l1_mix);
            if denom == 0.0 {
                continue;
            }
            let old = w[j];
            // partial residual correlation with column j
            let rho = x
                .iter()
                .zip(&residual)
                .map(|(r, &res)| r[j] * (res + r[j] * old))
                .sum::<f64>()
                / n;
            let new = soft_threshold(rho, penalty * l1_mix) / denom;
            if new != old {
                for (r, res) in x.iter().zip(residual.iter_mut()) {
                    *res += r[j] * (old - new);
                }
                w[j] = new;
                max_delta = max_delta.max((new - old).abs());
            }
        }
        // re-center the intercept
        let shift = residual.iter().sum::<f64>() / n;
        if shift != 0.0 {
            b += shift;
            for res in &mut residual {
                *res -= shift;
            }
            max_delta = max_delta.max(shift.abs());
        }
        if max_delta < tol {
            return Ok(ElasticNetParams {
                weights: w,
                intercept: b,
                l1_mix,
                penalty,
            });
        }
    }
    Err(Error::Training {
        epoch: max_iter,
        msg: format!("elastic net did not converge within {max_iter} sweeps"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradient_check, LossKind, Model};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_parameter_count() {
        let spec = build_member(MemberId::Mlp, 15).unwrap();
        let model = Model::init(spec, 0).unwrap();
        assert_eq!(model.param_count(), 3137);
    }

    #[test]
    fn cnn_shapes_over_15_features() {
        let spec = build_member(MemberId::Cnn, 15).unwrap();
        let shapes = spec.infer_shapes().unwrap();
        assert_eq!(shapes[1], vec![16, 13]);
        assert_eq!(shapes[3], vec![8, 11]);
        assert_eq!(shapes[5], vec![88]);
        assert_eq!(shapes[6], vec![1]);
    }

    #[test]
    fn dense_blocks_reconcatenate_the_input() {
        let n = 15;
        let spec = build_member(MemberId::Dense, n).unwrap();
        let shapes = spec.infer_shapes().unwrap();
        assert_eq!(shapes[3], vec![n + 32]);
        assert_eq!(shapes[6], vec![n + 32]);
        assert_eq!(shapes[7], vec![1]);
    }

    #[test]
    fn ae_has_bottleneck_and_reconstruction_head() {
        let spec = build_member(MemberId::Ae, 15).unwrap();
        let shapes = spec.infer_shapes().unwrap();
        assert_eq!(shapes[2], vec![8]);
        assert_eq!(shapes[spec.aux_output.unwrap()], vec![15]);
        assert_eq!(shapes[spec.output], vec![1]);
    }

    #[test]
    fn ae_joint_gradient_matches_finite_differences() {
        let spec = build_member(MemberId::Ae, 5).unwrap();
        let model = Model::init(spec, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inputs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let targets = vec![0.4, -0.2, 1.1];
        let loss = FitLoss::with_reconstruction(LossKind::Mse, AE_RECONSTRUCTION_WEIGHT);
        let err = gradient_check(&model, &loss, &inputs, &targets).unwrap();
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn all_members_train_on_linear_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..6).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let targets: Vec<f64> = rows.iter().map(|r| r[0] + 0.5 * r[3] - 0.2).collect();
        let train = Dataset::new(rows[..60].to_vec(), targets[..60].to_vec()).unwrap();
        let val = Dataset::new(rows[60..].to_vec(), targets[60..].to_vec()).unwrap();
        let config = TrainConfig {
            epochs: 60,
            seed: 8,
            ..Default::default()
        };
        for id in MemberId::ALL {
            let (trained, e) = fit_member(id, &train, &val, &config).unwrap();
            assert!(e.is_finite() && e >= 0.0, "{}: e = {e}", id.name());
            // beats predicting the training mean
            let mean = train.targets.iter().sum::<f64>() / train.len() as f64;
            let naive = val
                .targets
                .iter()
                .map(|t| (t - mean).abs())
                .sum::<f64>()
                / val.len() as f64;
            assert!(e < naive, "{}: e {e} vs naive {naive}", id.name());
            assert_eq!(trained.model.input_dim(), 6);
        }
    }

    #[test]
    fn fit_member_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..5).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let targets: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
        let train = Dataset::new(rows[..30].to_vec(), targets[..30].to_vec()).unwrap();
        let val = Dataset::new(rows[30..].to_vec(), targets[30..].to_vec()).unwrap();
        let config = TrainConfig {
            epochs: 15,
            seed: 99,
            ..Default::default()
        };
        let (a, ea) = fit_member(MemberId::Mlp, &train, &val, &config).unwrap();
        let (b, eb) = fit_member(MemberId::Mlp, &train, &val, &config).unwrap();
        assert_eq!(a.model.get_params(), b.model.get_params());
        assert_eq!(ea, eb);
    }

    fn random_regression(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coefs: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 1.5 + r.iter().zip(&coefs).map(|(v, c)| v * c).sum::<f64>())
            .collect();
        (rows, y)
    }

    /// Solve A v = rhs by Gaussian elimination with partial pivoting.
    fn solve(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
        let n = rhs.len();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            rhs.swap(col, pivot);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                rhs[row] -= f * rhs[col];
            }
        }
        let mut v = vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = rhs[row];
            for k in row + 1..n {
                acc -= a[row][k] * v[k];
            }
            v[row] = acc / a[row][row];
        }
        v
    }

    #[test]
    fn zero_penalty_matches_least_squares() {
        let (rows, y) = random_regression(21, 60, 4);
        let fitted = fit_elasticnet(&rows, &y, 0.5, 0.0, 1e-12, 100_000).unwrap();
        // normal equations on [1 | X]
        let p = 5;
        let mut xtx = vec![vec![0.0; p]; p];
        let mut xty = vec![0.0; p];
        for (r, &yi) in rows.iter().zip(&y) {
            let aug: Vec<f64> = std::iter::once(1.0).chain(r.iter().copied()).collect();
            for i in 0..p {
                xty[i] += aug[i] * yi;
                for j in 0..p {
                    xtx[i][j] += aug[i] * aug[j];
                }
            }
        }
        let beta = solve(xtx, xty);
        assert!((fitted.intercept - beta[0]).abs() < 1e-6);
        for j in 0..4 {
            assert!(
                (fitted.weights[j] - beta[j + 1]).abs() < 1e-6,
                "w[{j}] = {} vs {}",
                fitted.weights[j],
                beta[j + 1]
            );
        }
    }

    #[test]
    fn pure_ridge_matches_closed_form() {
        let (rows, y) = random_regression(22, 50, 3);
        let penalty = 0.3;
        let fitted = fit_elasticnet(&rows, &y, 0.0, penalty, 1e-12, 100_000).unwrap();
        // closed form on centered data: (Xc'Xc/n + penalty*I) w = Xc'yc/n
        let n = rows.len() as f64;
        let xbar: Vec<f64> = (0..3)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let ybar = y.iter().sum::<f64>() / n;
        let mut a = vec![vec![0.0; 3]; 3];
        let mut rhs = vec![0.0; 3];
        for (r, &yi) in rows.iter().zip(&y) {
            for i in 0..3 {
                rhs[i] += (r[i] - xbar[i]) * (yi - ybar) / n;
                for j in 0..3 {
                    a[i][j] += (r[i] - xbar[i]) * (r[j] - xbar[j]) / n;
                }
            }
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += penalty;
        }
        let w = solve(a, rhs);
        for j in 0..3 {
            assert!(
                (fitted.weights[j] - w[j]).abs() < 1e-6,
                "w[{j}] = {} vs {}",
                fitted.weights[j],
                w[j]
            );
        }
        let b = ybar - w.iter().zip(&xbar).map(|(wj, xj)| wj * xj).sum::<f64>();
        assert!((fitted.intercept - b).abs() < 1e-6);
    }

    #[test]
    fn huge_penalty_shrinks_to_the_mean() {
        let (rows, y) = random_regression(23, 40, 3);
        let fitted = fit_elasticnet(&rows, &y, 0.7, 1e9, 1e-12, 10_000).unwrap();
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        assert!(fitted.weights.iter().all(|w| w.abs() < 1e-9));
        assert!((fitted.intercept - ybar).abs() < 1e-9);
    }

    #[test]
    fn elasticnet_rejects_bad_arguments() {
        let rows = vec![vec![1.0], vec![2.0]];
        let y = vec![1.0, 2.0];
        assert!(fit_elasticnet(&rows, &y, 1.5, 0.1, 1e-8, 100).is_err());
        assert!(fit_elasticnet(&rows, &y, 0.5, -0.1, 1e-8, 100).is_err());
        assert!(fit_elasticnet(&rows, &y[..1].to_vec(), 0.5, 0.1, 1e-8, 100).is_err());
        assert!(fit_elasticnet(&[], &[], 0.5, 0.1, 1e-8, 100).is_err());
    }

    #[test]
    fn member_names_roundtrip() {
        for id in MemberId::ALL {
            assert_eq!(MemberId::parse(id.name()).unwrap(), id);
        }
        assert!(MemberId::parse("GRU").is_err());
    }
}
