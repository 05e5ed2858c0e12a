//! Run the full staged pipeline — synthetic data through the summary report —
//! in a temporary directory.

use paddycast::pipeline::{run_pipeline, summary_path, PipelineConfig};
use paddycast::synth::noise_floor_mae;

fn main() -> paddycast::Result<()> {
    let dir = std::env::temp_dir().join(format!("paddycast-demo-{}", std::process::id()));
    let data_dir = dir.join("data");
    let out_dir = dir.join("out");

    let config = PipelineConfig {
        seed: 1,
        ..Default::default()
    };
    println!("config hash {}", config.hash());
    let outcome = run_pipeline(&config, &data_dir, &out_dir)?;

    println!(
        "ensemble: MAE {:.2} (noise floor {:.2}), RMSE {:.2}, R2 {:.4}",
        outcome.ensemble.test.mae,
        noise_floor_mae(config.noise_std),
        outcome.ensemble.test.rmse,
        outcome.ensemble.test.r2.unwrap()
    );
    for (name, err, weight) in &outcome.weights {
        println!("  {name:<6} weight {weight:.4} (validation error {err:.2})");
    }

    println!("\n{}", std::fs::read_to_string(summary_path(&out_dir))?);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
