//! Losses, optimizers, the training loop, and the finite-difference
//! gradient check.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::Model;

/// Regression losses, averaged over output components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Mse,
    Mae,
    Huber(f64),
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        if let LossKind::Huber(delta) = self {
            if !delta.is_finite() || *delta <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "huber delta must be > 0, got {delta}"
                )));
            }
        }
        Ok(())
    }

    pub fn value(&self, pred: &[f64], target: &[f64]) -> f64 {
        let n = pred.len() as f64;
        pred.iter()
            .zip(target)
            .map(|(p, t)| {
                let r = p - t;
                match self {
                    LossKind::Mse => r * r,
                    LossKind::Mae => r.abs(),
                    LossKind::Huber(delta) => {
                        if r.abs() <= *delta {
                            0.5 * r * r
                        } else {
                            delta * (r.abs() - 0.5 * delta)
                        }
                    }
                }
            })
            .sum::<f64>()
            / n
    }

    pub fn gradient(&self, pred: &[f64], target: &[f64]) -> Vec<f64> {
        let n = pred.len() as f64;
        pred.iter()
            .zip(target)
            .map(|(p, t)| {
                let r = p - t;
                let g = match self {
                    LossKind::Mse => 2.0 * r,
                    LossKind::Mae => r.signum(),
                    LossKind::Huber(delta) => {
                        if r.abs() <= *delta {
                            r
                        } else {
                            delta * r.signum()
                        }
                    }
                };
                g / n
            })
            .collect()
    }

    /// True when the loss is non-differentiable within `tol` of the residual
    /// for some component (MAE at zero residual, Huber at |r| = delta).
    pub fn near_kink(&self, pred: &[f64], target: &[f64], tol: f64) -> bool {
        pred.iter().zip(target).any(|(p, t)| {
            let r = (p - t).abs();
            match self {
                LossKind::Mse => false,
                LossKind::Mae => r < tol,
                LossKind::Huber(delta) => (r - delta).abs() < tol,
            }
        })
    }
}

/// Composite training loss: the primary loss on the output head plus an
/// optional weighted reconstruction MSE on the auxiliary head against the
/// network input.
#[derive(Debug, Clone, Copy)]
pub struct FitLoss {
    pub primary: LossKind,
    pub reconstruction_weight: f64,
}

impl FitLoss {
    pub fn new(primary: LossKind) -> Self {
        FitLoss {
            primary,
            reconstruction_weight: 0.0,
        }
    }

    pub fn with_reconstruction(primary: LossKind, weight: f64) -> Self {
        FitLoss {
            primary,
            reconstruction_weight: weight,
        }
    }
}

/// Gradient-descent update rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    fn lr(&self) -> f64 {
        match self {
            Optimizer::Sgd { lr, .. } => *lr,
            Optimizer::Adam { lr, .. } => *lr,
        }
    }
}

#[derive(Debug)]
struct OptimizerState {
    velocity: Vec<f64>,
    second: Vec<f64>,
    step: usize,
}

impl OptimizerState {
    fn new(n: usize) -> Self {
        OptimizerState {
            velocity: vec![0.0; n],
            second: vec![0.0; n],
            step: 0,
        }
    }

    fn apply(&mut self, optimizer: &Optimizer, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        match optimizer {
            Optimizer::Sgd { lr, momentum } => {
                for i in 0..params.len() {
                    self.velocity[i] = momentum * self.velocity[i] + grads[i];
                    params[i] -= lr * self.velocity[i];
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    self.velocity[i] = beta1 * self.velocity[i] + (1.0 - beta1) * grads[i];
                    self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * grads[i] * grads[i];
                    let m_hat = self.velocity[i] / bc1;
                    let v_hat = self.second[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Training knobs. Defaults: Adam(1e-3, 0.9, 0.999, 1e-8), 200 epochs,
/// batch 32, patience 20 on validation loss.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub patience: usize,
    pub loss: FitLoss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Adam {
                lr: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            epochs: 200,
            batch_size: 32,
            seed: 0,
            patience: 20,
            loss: FitLoss::new(LossKind::Mse),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be >= 1".into()));
        }
        if self.optimizer.lr() <= 0.0 {
            return Err(Error::InvalidInput("learning rate must be > 0".into()));
        }
        self.loss.primary.validate()
    }
}

/// Feature rows plus scalar targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if inputs.iter().flatten().any(|v| !v.is_finite())
            || targets.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("dataset contains non-finite values".into()));
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Fitted parameters plus the per-epoch loss trajectories.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

impl TrainedModel {
    pub fn predict(&self, input: &[f64]) -> Result<f64> {
        self.model.predict_scalar(input)
    }

    pub fn predict_batch(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        inputs.iter().map(|x| self.model.predict_scalar(x)).collect()
    }
}

/// Total loss and flat parameter gradient for one sample.
fn sample_loss_and_grad(
    model: &Model,
    loss: &FitLoss,
    input: &[f64],
    target: f64,
    param_grads: Option<&mut [f64]>,
) -> Result<f64> {
    let acts = model.forward_all(input)?;
    let out_id = model.output_node();
    let pred = &acts[out_id];
    let target_vec = [target];
    let mut total = loss.primary.value(pred, &target_vec);
    let mut seeds = vec![(out_id, loss.primary.gradient(pred, &target_vec))];
    if let Some(aux_id) = model.aux_node() {
        if loss.reconstruction_weight > 0.0 {
            let recon = &acts[aux_id];
            total += loss.reconstruction_weight * LossKind::Mse.value(recon, input);
            let mut g = LossKind::Mse.gradient(recon, input);
            for v in &mut g {
                *v *= loss.reconstruction_weight;
            }
            seeds.push((aux_id, g));
        }
    }
    if let Some(grads) = param_grads {
        model.backward(&acts, &seeds, grads);
    }
    Ok(total)
}

fn mean_loss(model: &Model, loss: &FitLoss, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for (x, &y) in data.inputs.iter().zip(&data.targets) {
        total += sample_loss_and_grad(model, loss, x, y, None)?;
    }
    Ok(total / data.len() as f64)
}

/// Train a model specification on a dataset. Bit-reproducible for a fixed
/// seed on one execution unit: batch order comes from the seeded stream and
/// parameters start from the same seed. With a validation set, training
/// early-stops after `patience` epochs without improvement and restores the
/// best parameters.
pub fn fit(
    spec: super::ModelSpec,
    train: &Dataset,
    validation: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let mut model = Model::init(spec, config.seed)?;
    let n_params = model.param_count();
    let mut state = OptimizerState::new(n_params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e3779b97f4a7c15));
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut val_loss = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = vec![0.0; n_params];
            let mut batch_total = 0.0;
            for &i in batch {
                batch_total += sample_loss_and_grad(
                    &model,
                    &config.loss,
                    &train.inputs[i],
                    train.targets[i],
                    Some(&mut grads),
                )?;
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                *g *= scale;
            }
            let mut params = model.get_params();
            state.apply(&config.optimizer, &mut params, &grads);
            model.set_params(&params)?;
            epoch_total += batch_total;
        }
        let epoch_loss = epoch_total / train.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                msg: format!("training loss diverged to {epoch_loss}"),
            });
        }
        train_loss.push(epoch_loss);

        if let Some(val) = validation {
            let v = mean_loss(&model, &config.loss, val)?;
            if !v.is_finite() {
                return Err(Error::Training {
                    epoch,
                    msg: format!("validation loss diverged to {v}"),
                });
            }
            val_loss.push(v);
            match &best {
                Some((bv, _)) if v >= *bv => {
                    since_best += 1;
                    if since_best > config.patience {
                        break;
                    }
                }
                _ => {
                    best = Some((v, model.get_params()));
                    since_best = 0;
                }
            }
        }
    }

    if let Some((_, params)) = best {
        model.set_params(&params)?;
    }
    Ok(TrainedModel {
        model,
        train_loss,
        val_loss,
    })
}

/// Compare analytic parameter gradients against central finite differences
/// (step 1e-5) over a batch, returning the maximum relative error across all
/// parameters. Samples sitting within 1e-4 of a loss kink (MAE at zero
/// residual, Huber at |r| = delta) are excluded from the check.
pub fn gradient_check(
    model: &Model,
    loss: &FitLoss,
    inputs: &[Vec<f64>],
    targets: &[f64],
) -> Result<f64> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::InvalidInput(
            "gradient check needs a nonempty batch".into(),
        ));
    }
    let kink_tol = 1e-4;
    let mut usable: Vec<usize> = Vec::new();
    for (i, (x, &y)) in inputs.iter().zip(targets).enumerate() {
        let pred = model.forward_all(x)?[model.output_node()].clone();
        if !loss.primary.near_kink(&pred, &[y], kink_tol) {
            usable.push(i);
        }
    }
    if usable.is_empty() {
        return Err(Error::DegenerateInput(
            "all batch samples sit at loss kinks".into(),
        ));
    }

    let n_params = model.param_count();
    let mut analytic = vec![0.0; n_params];
    for &i in &usable {
        sample_loss_and_grad(model, loss, &inputs[i], targets[i], Some(&mut analytic))?;
    }

    let batch_loss = |m: &Model| -> Result<f64> {
        let mut total = 0.0;
        for &i in &usable {
            total += sample_loss_and_grad(m, loss, &inputs[i], targets[i], None)?;
        }
        Ok(total)
    };

    let h = 1e-5;
    let base = model.get_params();
    let mut probe = model.clone();
    let mut max_rel = 0.0f64;
    for j in 0..n_params {
        let mut params = base.clone();
        params[j] = base[j] + h;
        probe.set_params(&params)?;
        let plus = batch_loss(&probe)?;
        params[j] = base[j] - h;
        probe.set_params(&params)?;
        let minus = batch_loss(&probe)?;
        let numeric = (plus - minus) / (2.0 * h);
        let denom = analytic[j].abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max((analytic[j] - numeric).abs() / denom);
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec, Model, ModelSpec};
    use rand::Rng;

    fn linear_spec(dim: usize) -> ModelSpec {
        ModelSpec::sequential(dim, vec![LayerSpec::Dense { units: 1 }])
    }

    #[test]
    fn linear_mse_gradient_is_exact() {
        let model = Model::init(linear_spec(3), 1).unwrap();
        let inputs = vec![vec![0.3, -0.7, 1.1], vec![0.9, 0.2, -0.4]];
        let targets = vec![0.5, -1.2];
        let err = gradient_check(&model, &FitLoss::new(LossKind::Mse), &inputs, &targets).unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn mae_kink_samples_are_excluded() {
        let mut model = Model::init(linear_spec(2), 0).unwrap();
        model.set_params(&[1.0, 1.0, 0.0]).unwrap();
        // first sample: pred = 2.0 = target (kink); second is off-kink
        let inputs = vec![vec![1.0, 1.0], vec![1.0, 2.0]];
        let targets = vec![2.0, 1.0];
        let err = gradient_check(&model, &FitLoss::new(LossKind::Mae), &inputs, &targets).unwrap();
        assert!(err < 1e-7, "relative error {err}");
        // a batch made only of kink points is degenerate
        let res = gradient_check(
            &model,
            &FitLoss::new(LossKind::Mae),
            &inputs[..1].to_vec(),
            &targets[..1].to_vec(),
        );
        assert!(res.is_err());
    }

    #[test]
    fn fit_recovers_linear_slope() {
        // y = 2x, full-batch sgd on a linear model
        let inputs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 20.0 - 1.0]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| 2.0 * x[0]).collect();
        let data = Dataset::new(inputs, targets).unwrap();
        let config = TrainConfig {
            optimizer: Optimizer::Sgd {
                lr: 0.5,
                momentum: 0.0,
            },
            epochs: 400,
            batch_size: data.len(),
            seed: 3,
            patience: usize::MAX,
            loss: FitLoss::new(LossKind::Mse),
        };
        let trained = fit(linear_spec(1), &data, None, &config).unwrap();
        let params = trained.model.get_params();
        assert!((params[0] - 2.0).abs() < 1e-3, "slope {}", params[0]);
        assert!(params[1].abs() < 1e-3, "intercept {}", params[1]);
    }

    #[test]
    fn convex_full_batch_loss_nonincreasing() {
        let inputs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| 3.0 * x[0] - 1.0).collect();
        let data = Dataset::new(inputs, targets).unwrap();
        let config = TrainConfig {
            optimizer: Optimizer::Sgd {
                lr: 0.05,
                momentum: 0.0,
            },
            epochs: 50,
            batch_size: data.len(),
            seed: 1,
            patience: usize::MAX,
            loss: FitLoss::new(LossKind::Mse),
        };
        let trained = fit(linear_spec(1), &data, None, &config).unwrap();
        for w in trained.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_epochs_disallowed() {
        let data = Dataset::new(vec![vec![0.0]], vec![0.0]).unwrap();
        let config = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(fit(linear_spec(1), &data, None, &config).is_err());
    }

    #[test]
    fn same_seed_identical_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let inputs: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..4).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let targets: Vec<f64> = inputs.iter().map(|x| x.iter().sum()).collect();
        let data = Dataset::new(inputs, targets).unwrap();
        let spec = ModelSpec::sequential(
            4,
            vec![
                LayerSpec::Dense { units: 8 },
                LayerSpec::Activation(Activation::Relu),
                LayerSpec::Dense { units: 1 },
            ],
        );
        let config = TrainConfig {
            epochs: 10,
            seed: 21,
            ..Default::default()
        };
        let a = fit(spec.clone(), &data, None, &config).unwrap();
        let b = fit(spec, &data, None, &config).unwrap();
        assert_eq!(a.model.get_params(), b.model.get_params());
        assert_eq!(a.train_loss, b.train_loss);
    }

    #[test]
    fn divergence_reports_epoch() {
        let inputs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 100.0]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| x[0] * 50.0).collect();
        let data = Dataset::new(inputs, targets).unwrap();
        let config = TrainConfig {
            optimizer: Optimizer::Sgd {
                lr: 10.0,
                momentum: 0.0,
            },
            epochs: 200,
            batch_size: data.len(),
            seed: 0,
            patience: usize::MAX,
            loss: FitLoss::new(LossKind::Mse),
        };
        match fit(linear_spec(1), &data, None, &config) {
            Err(Error::Training { .. }) => {}
            other => panic!("expected divergence error, got {other:?}"),
        }
    }

    #[test]
    fn huber_gradient_matches_finite_differences() {
        let model = Model::init(
            ModelSpec::sequential(
                3,
                vec![
                    LayerSpec::Dense { units: 4 },
                    LayerSpec::Activation(Activation::Silu),
                    LayerSpec::Dense { units: 1 },
                ],
            ),
            7,
        )
        .unwrap();
        let inputs = vec![vec![0.2, -0.5, 0.8], vec![-1.0, 0.4, 0.1]];
        let targets = vec![2.0, -3.0];
        let err = gradient_check(
            &model,
            &FitLoss::new(LossKind::Huber(1.0)),
            &inputs,
            &targets,
        )
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }
}
