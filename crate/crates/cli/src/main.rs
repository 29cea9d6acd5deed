//! `zofc` — run and inspect ZO/FO hybrid continual-learning experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure. The `ZOFC_OUT_DIR` environment variable redirects all output
//! files into one directory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use zofc_cli::commands;
use zofc_cli::config::ExperimentConfig;
use zofc_cli::error::{CliError, CliResult};
use zofc_core::oracles::{FlopsModel, Regime};

#[derive(Parser)]
#[command(
    name = "zofc",
    version,
    about = "ZO/FO hybrid continual-learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment from a JSON config and write its report.
    Run(RunArgs),
    /// Probe a saved checkpoint's old-task loss flatness; emits CSV.
    Probe(ProbeArgs),
    /// Print the analytical per-batch FLOP breakdown for a training regime.
    Flops(FlopsArgs),
    /// Run the full 7-variant method grid off one base config.
    Grid(GridArgs),
    /// Validate a binary feature-dataset file.
    ValidateData(ValidateDataArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the method variant by grid name (e.g. `zofc`, `prototype`).
    #[arg(long)]
    variant: Option<String>,
    /// Override the report output path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Override the checkpoint-artifact output path.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Checkpoint artifact written by `run --checkpoint`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Probe radii, comma-separated.
    #[arg(long = "rho", value_delimiter = ',', required = true)]
    rhos: Vec<f64>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum RegimeArg {
    Fo,
    Zo,
    ZofcEarly,
    ZofcLate,
}

impl From<RegimeArg> for Regime {
    fn from(arg: RegimeArg) -> Regime {
        match arg {
            RegimeArg::Fo => Regime::Fo,
            RegimeArg::Zo => Regime::Zo,
            RegimeArg::ZofcEarly => Regime::ZofcEarly,
            RegimeArg::ZofcLate => Regime::ZofcLate,
        }
    }
}

#[derive(Args)]
struct FlopsArgs {
    #[arg(long, value_enum)]
    regime: RegimeArg,
    /// ZO query budget Q.
    #[arg(long, default_value_t = 4)]
    queries: u64,
    /// Batch size B.
    #[arg(long)]
    batch: Option<u64>,
    /// Feature width D.
    #[arg(long)]
    hidden: Option<u64>,
    /// Number of classes C.
    #[arg(long)]
    classes: Option<u64>,
    /// Adapter rank r.
    #[arg(long)]
    rank: Option<u64>,
    /// Number of adapted blocks.
    #[arg(long)]
    adapter_blocks: Option<u64>,
}

#[derive(Args)]
struct GridArgs {
    /// Base experiment config; its variant field is ignored.
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving one report per variant.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ValidateDataArgs {
    /// Feature file to check.
    path: PathBuf,
}

fn load_run_config(args: &RunArgs) -> CliResult<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(name) = &args.variant {
        config.variant = commands::variant_by_name(name)?;
    }
    if let Some(report) = &args.report {
        config.output.report = Some(report.clone());
    }
    if let Some(checkpoint) = &args.checkpoint {
        config.output.checkpoint = Some(checkpoint.clone());
    }
    config.validate()?;
    Ok(config)
}

fn real_main(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(args) => {
            let config = load_run_config(&args)?;
            let report = commands::cmd_run(&config)?;
            if config.output.report.is_none() {
                println!("{}", report.to_json()?);
            } else {
                let last = report
                    .per_task_metrics
                    .last()
                    .expect("a run always has at least one task");
                println!(
                    "run complete: {} tasks, avg {:.2}, last {:.2}, fgt {}",
                    report.stats.tasks,
                    last.avg,
                    last.last,
                    last.fgt.map_or("n/a".to_string(), |f| format!("{f:.2}")),
                );
            }
            Ok(())
        }
        Command::Probe(args) => {
            let csv = commands::cmd_probe(&args.checkpoint, &args.rhos)?;
            match &args.out {
                Some(path) => {
                    std::fs::write(path, &csv).map_err(|e| CliError::io_config(path, e))?
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Flops(args) => {
            let mut model = FlopsModel::reference(args.queries);
            if let Some(batch) = args.batch {
                model.batch = batch;
            }
            if let Some(hidden) = args.hidden {
                model.hidden = hidden;
            }
            if let Some(classes) = args.classes {
                model.classes = classes;
            }
            if let Some(rank) = args.rank {
                model.rank = rank;
            }
            if let Some(blocks) = args.adapter_blocks {
                model.adapter_blocks = blocks;
            }
            let cost = commands::cmd_flops(&model, args.regime.into())?;
            let json = serde_json::to_string_pretty(&cost)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            println!("{json}");
            Ok(())
        }
        Command::Grid(args) => {
            let config = ExperimentConfig::load(&args.config)?;
            let written = commands::cmd_grid(&config, &args.out_dir)?;
            for (name, path) in written {
                println!("{name}: {}", path.display());
            }
            Ok(())
        }
        Command::ValidateData(args) => {
            let summary = commands::cmd_validate_data(&args.path)?;
            println!("{summary}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
