//! Build the engineered feature table from a small synthetic dataset.

use paddycast::features::assemble_feature_table;
use paddycast::synth::{generate_synthetic_dataset, SyntheticSpec};

fn main() -> paddycast::Result<()> {
    let spec = SyntheticSpec {
        records: 25,
        ..Default::default()
    };
    let data = generate_synthetic_dataset(&spec, 42)?;
    let table = assemble_feature_table(&data.records, &data.bundles, spec.max_cloud)?;

    println!(
        "{} rows x {} predictor columns, target = {}",
        table.n_rows(),
        table.n_cols(),
        table.target_name()
    );

    // first row, first dozen columns
    for (c, name) in table.names().iter().take(12).enumerate() {
        match table.get(0, c) {
            Some(v) => println!("{name:<22} {v:.4}"),
            None => println!("{name:<22} missing"),
        }
    }
    println!("...");
    println!("target[0] = {:.2} kg/ha", table.target()[0]);
    Ok(())
}
