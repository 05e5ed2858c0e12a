//! Fit the four members on synthetic data and combine them with
//! inverse-validation-error weights.

use paddycast::ensemble::{combine_predictions, compute_weights, ValidationErrors};
use paddycast::evaluation::compute_metrics;
use paddycast::nn::{Dataset, TrainConfig};
use paddycast::regressors::{fit_member, MemberId};
use rand::{Rng, SeedableRng};

fn main() -> paddycast::Result<()> {
    // y = 3*x0 - 2*x1 + x2 with a little noise, standardized-ish inputs
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let make = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..15).map(|_| rng.gen_range(0.0..1.0)).collect();
            let noise: f64 = rng.gen_range(-0.05..0.05);
            ys.push(3.0 * x[0] - 2.0 * x[1] + x[2] + noise);
            xs.push(x);
        }
        (xs, ys)
    };
    let (train_x, train_y) = make(&mut rng, 300);
    let (val_x, val_y) = make(&mut rng, 60);
    let (test_x, test_y) = make(&mut rng, 60);
    let train = Dataset::new(train_x, train_y)?;
    let val = Dataset::new(val_x, val_y)?;

    let config = TrainConfig {
        epochs: 120,
        ..Default::default()
    };
    let mut errors = Vec::new();
    let mut preds = Vec::new();
    for (i, id) in MemberId::ALL.into_iter().enumerate() {
        let tc = TrainConfig {
            seed: i as u64,
            ..config.clone()
        };
        let (trained, e) = fit_member(id, &train, &val, &tc)?;
        println!("{:<6} validation MAE {e:.4}", id.name());
        errors.push(e);
        preds.push(trained.predict_batch(&test_x)?);
    }

    let weights = compute_weights(&ValidationErrors::new(errors)?);
    for (id, w) in MemberId::ALL.iter().zip(weights.values()) {
        println!("weight[{}] = {w:.4}", id.name());
    }

    let combined = combine_predictions(&preds, &weights)?;
    let m = compute_metrics(&combined, &test_y, 15)?;
    println!(
        "ensemble test: MAE {:.4}  RMSE {:.4}  R2 {:.4}",
        m.mae,
        m.rmse,
        m.r2.unwrap()
    );
    Ok(())
}
