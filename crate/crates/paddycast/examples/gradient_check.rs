//! Verify the backpropagation of every member architecture against central
//! finite differences.

use paddycast::nn::{gradient_check, FitLoss, LossKind, Model};
use paddycast::regressors::{build_member, MemberId, AE_RECONSTRUCTION_WEIGHT};
use rand::{Rng, SeedableRng};

fn main() -> paddycast::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let n_features = 15;
    let inputs: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..n_features).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let targets: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();

    for id in MemberId::ALL {
        let spec = build_member(id, n_features)?;
        let model = Model::init(spec, 3)?;
        for kind in [LossKind::Mse, LossKind::Mae, LossKind::Huber(1.0)] {
            let loss = if id == MemberId::Ae {
                FitLoss::with_reconstruction(kind, AE_RECONSTRUCTION_WEIGHT)
            } else {
                FitLoss::new(kind)
            };
            let err = gradient_check(&model, &loss, &inputs, &targets)?;
            println!("{:<6} {:?}: max relative error {err:.3e}", id.name(), kind);
        }
    }
    Ok(())
}
