use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use paddycast::pipeline::{self, stage_exit_code, PipelineConfig};
use paddycast::Result;

/// Rice yield estimation pipeline: synthetic data, feature extraction,
/// feature selection, ensemble training, and evaluation.
#[derive(Parser)]
#[command(name = "paddycast", version, about)]
struct Cli {
    /// Key=value config file; command-line flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory holding the raw dataset
    #[arg(long, global = true, default_value = "data")]
    data_dir: PathBuf,

    /// Directory for pipeline artifacts
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Feature selection mode (overrides the config file)
    #[arg(long, global = true, value_parser = ["paper_fixed", "run_pipeline"])]
    mode: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset into the data directory
    Synth,
    /// Extract the engineered feature table from the data directory
    Extract,
    /// Split rows and choose the modeling features
    Select,
    /// Fit the ensemble members and the linear baseline
    Train,
    /// Score members, ensemble, and baseline on the held-out test rows
    Evaluate,
    /// Predict yields for every plot in the data directory
    Predict,
    /// Produce the combined summary table
    Report,
    /// Run every stage end to end
    Run,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut map = match &cli.config {
        Some(path) => paddycast::io::read_config_file(path)?,
        None => BTreeMap::new(),
    };
    if let Some(seed) = cli.seed {
        map.insert("seed".into(), seed.to_string());
    }
    if let Some(mode) = &cli.mode {
        map.insert("mode".into(), mode.clone());
    }
    PipelineConfig::from_map(&map)
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let data_dir = cli.data_dir.as_path();
    let out_dir = cli.out_dir.as_path();
    match cli.command {
        Command::Synth => pipeline::stage_synth(&config, data_dir)?,
        Command::Extract => pipeline::stage_extract(&config, data_dir, out_dir)?,
        Command::Select => pipeline::stage_select(&config, out_dir)?,
        Command::Train => pipeline::stage_train(&config, out_dir)?,
        Command::Evaluate => {
            let outcome = pipeline::stage_evaluate(&config, data_dir, out_dir)?;
            print_outcome(&outcome);
        }
        Command::Predict => pipeline::stage_predict(&config, data_dir, out_dir)?,
        Command::Report => pipeline::stage_report(out_dir)?,
        Command::Run => {
            let outcome = pipeline::run_pipeline(&config, data_dir, out_dir)?;
            println!("mode: {}", config.mode.name());
            print_outcome(&outcome);
        }
    }
    Ok(())
}

fn print_outcome(outcome: &pipeline::EvaluationOutcome) {
    let fmt_opt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.4}"),
        None => "-".into(),
    };
    println!("{:<12} {:>10} {:>10} {:>8} {:>8}", "model", "mae", "rmse", "r2", "adj_r2");
    for s in outcome.scores.iter().chain([&outcome.ensemble]) {
        println!(
            "{:<12} {:>10.2} {:>10.2} {:>8} {:>8}",
            s.name,
            s.test.mae,
            s.test.rmse,
            fmt_opt(s.test.r2),
            fmt_opt(s.test.adjusted_r2),
        );
    }
    for (name, err, weight) in &outcome.weights {
        println!("weight[{name}] = {weight:.4} (validation error {err:.4})");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.stage().map(stage_exit_code).unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}
