//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 1 config error, 2 data error, 3 training failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use annosim::error::Error;
use annosim::experiment::{
    self, load_config, run_ablation, run_experiment, AblationAxis, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "annosim", version, about = "Multi-annotator learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (seed, mode) combination from a config file.
    Run {
        /// Experiment config (JSON or TOML).
        config: PathBuf,
        /// Replace the config's seed list, comma-separated.
        #[arg(long, value_name = "SEEDS")]
        seed_override: Option<String>,
        /// Replace the config's output directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Sweep one knob across values, one full run per value per seed.
    Ablate {
        config: PathBuf,
        /// similarity_metric, threshold, or confidence_variant.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        #[arg(long, value_name = "SEEDS")]
        seed_override: Option<String>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Print dataset diagnostics without touching the file.
    Validate {
        file: PathBuf,
        /// Emit JSON instead of the human-readable table.
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic dataset from a generator-spec JSON file.
    Generate {
        spec: PathBuf,
        /// Output dataset path (.csv or .json); a ground-truth sidecar is
        /// written next to it.
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        Error::Parse { .. } | Error::Validation(_) | Error::Io(_) | Error::Json(_) => 2,
        Error::Numeric(_) => 3,
    }
}

fn apply_overrides(
    config: &mut ExperimentConfig,
    seed_override: Option<&str>,
    out: Option<PathBuf>,
) -> Result<(), Error> {
    if let Some(raw) = seed_override {
        let seeds: Result<Vec<u64>, _> =
            raw.split(',').map(|s| s.trim().parse::<u64>()).collect();
        config.seeds =
            seeds.map_err(|_| Error::Config(format!("bad --seed-override value {raw:?}")))?;
        if config.seeds.is_empty() {
            return Err(Error::Config("--seed-override produced no seeds".into()));
        }
    }
    if let Some(dir) = out {
        config.output_dir = dir;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, seed_override, out } => {
            let mut config = load_config(&config)?;
            apply_overrides(&mut config, seed_override.as_deref(), out)?;
            let summary = run_experiment(&config)?;
            println!(
                "{} runs complete, artifacts in {}",
                summary.reports.len(),
                summary.output_dir.display()
            );
            print!("{}", summary.table.to_accuracy_csv());
            Ok(())
        }
        Command::Ablate { config, axis, values, seed_override, out } => {
            let mut config = load_config(&config)?;
            apply_overrides(&mut config, seed_override.as_deref(), out)?;
            let axis: AblationAxis = axis.parse()?;
            let values: Vec<String> =
                values.split(',').map(|v| v.trim().to_string()).collect();
            let rows = run_ablation(&config, axis, &values)?;
            println!("value,mean_accuracy");
            for row in rows {
                println!("{},{:.4}", row.value, row.mean_accuracy);
            }
            Ok(())
        }
        Command::Validate { file, json } => {
            let diagnostics = experiment::validate_dataset(&file)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&diagnostics)?);
            } else {
                print!("{diagnostics}");
            }
            Ok(())
        }
        Command::Generate { spec, out } => {
            experiment::generate_to_file(&spec, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}
