//! Save a trained model to the binary container format and load it back.

use paddycast::nn::serialize::{self, ModelContainer, ModelMeta};
use paddycast::nn::{Dataset, TrainConfig};
use paddycast::regressors::{fit_member, MemberId};

fn main() -> paddycast::Result<()> {
    let train = Dataset::new(
        (0..64)
            .map(|i| (0..15).map(|j| ((i * 7 + j) % 10) as f64 / 10.0).collect())
            .collect(),
        (0..64).map(|i| (i % 10) as f64 / 10.0).collect(),
    )?;
    let val = Dataset::new(train.inputs[..16].to_vec(), train.targets[..16].to_vec())?;
    let config = TrainConfig {
        epochs: 20,
        ..Default::default()
    };
    let (trained, _) = fit_member(MemberId::Mlp, &train, &val, &config)?;

    let path = std::env::temp_dir().join("paddycast-demo-model.rcns");
    let meta = ModelMeta {
        config_hash: "demo".into(),
        seed: config.seed,
    };
    serialize::save(&path, &ModelContainer::Neural(trained.model.clone()), &meta)?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());

    let (loaded, meta2) = serialize::load(&path)?;
    let x = &train.inputs[0];
    let before = trained.model.predict_scalar(x)?;
    let after = match &loaded {
        ModelContainer::Neural(m) => m.predict_scalar(x)?,
        _ => unreachable!(),
    };
    println!("seed {}, prediction before {before:.6}, after {after:.6}", meta2.seed);
    assert_eq!(before, after);
    std::fs::remove_file(&path)?;
    Ok(())
}
