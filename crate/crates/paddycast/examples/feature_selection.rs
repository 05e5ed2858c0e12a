//! Run the multi-stage feature selection on a synthetic table and show what
//! each stage dropped.

use paddycast::features::assemble_feature_table;
use paddycast::selection::{
    fixed_selected_features, minmax_fit_transform, selection_pipeline, train_test_split,
    SelectionConfig,
};
use paddycast::synth::{generate_synthetic_dataset, SyntheticSpec};

fn main() -> paddycast::Result<()> {
    let spec = SyntheticSpec {
        records: 200,
        ..Default::default()
    };
    let data = generate_synthetic_dataset(&spec, 7)?;
    let table = assemble_feature_table(&data.records, &data.bundles, spec.max_cloud)?;

    let (train, _test) = train_test_split(table.n_rows(), 7)?;
    // the statistical filters assume imputed, scaled columns; the synthetic
    // generator produces complete rows, so scaling is the only prerequisite
    let (scaled, _params) = minmax_fit_transform(&table, &train)?;
    let report = selection_pipeline(&scaled, &train, &SelectionConfig::default())?;

    println!(
        "kept {} of {} training rows, {} of {} features survive",
        report.kept_rows.len(),
        train.len(),
        report.surviving.len(),
        table.n_cols()
    );
    let mut by_stage = std::collections::BTreeMap::new();
    for d in &report.dropped {
        *by_stage.entry(d.stage).or_insert(0usize) += 1;
    }
    for (stage, n) in by_stage {
        println!("  dropped at {stage}: {n}");
    }

    println!("\nstrongest surviving correlations with yield:");
    let mut corr = report.target_correlations.clone();
    corr.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap());
    for (name, r, p) in corr.iter().take(10) {
        println!("  {name:<24} r = {r:+.3}  p = {p:.2e}");
    }

    println!("\nfixed production feature set:");
    for name in fixed_selected_features() {
        println!("  {name}");
    }
    Ok(())
}
