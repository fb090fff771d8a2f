use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qttf_cli::{commands, Config, Report};

/// Simulate and analyze two-way time transfer over entangled photon pairs.
#[derive(Debug, Parser)]
#[command(name = "qttf", version)]
struct Cli {
    /// TOML file merged over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base preset; overrides the `preset` key of the config file.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of blocks to simulate.
    #[arg(long, global = true)]
    blocks: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "QTTF_OUT_DIR", default_value = "qttf-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print closed-form predictions.
    Predict,
    /// Write four tag files.
    Simulate,
    /// Analyze tag files written by `simulate`.
    Analyze {
        /// Directory holding D1.qttf to D4.qttf; defaults to the output directory.
        #[arg(long)]
        tags: Option<PathBuf>,
    },
    /// Repeat the analysis over transmission lengths.
    ScanLength {
        /// Comma-separated lengths; defaults to `scan.lengths_km`.
        #[arg(long, value_delimiter = ',')]
        lengths_km: Vec<f64>,
    },
    /// Run a preset end to end and check it against expectations.
    Reproduce {
        /// Preset name; same as `--preset`.
        name: Option<String>,
    },
}

fn load(cli: &Cli, preset: Option<&str>) -> anyhow::Result<Config> {
    let mut config = Config::load(cli.config.as_deref(), preset.or(cli.preset.as_deref()))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(blocks) = cli.blocks {
        if blocks == 0 {
            anyhow::bail!("--blocks must be at least 1");
        }
        config.simulation.n_blocks = blocks;
    }
    Ok(config)
}

fn execute(cli: &Cli) -> anyhow::Result<Report> {
    match &cli.command {
        Command::Predict => {
            let mut report = commands::predict(&load(cli, None)?)?;
            report.write(&cli.out)?;
            Ok(report)
        }
        Command::Simulate => commands::simulate(&load(cli, None)?, &cli.out),
        Command::Analyze { tags } => {
            let tags = tags.clone().unwrap_or_else(|| cli.out.clone());
            commands::analyze(&load(cli, None)?, &tags, &cli.out)
        }
        Command::ScanLength { lengths_km } => {
            let config = load(cli, None)?;
            let lengths = if lengths_km.is_empty() {
                config.scan.lengths_km.clone()
            } else {
                lengths_km.clone()
            };
            Ok(commands::scan_length(&config, &lengths, Some(&cli.out))?.1)
        }
        Command::Reproduce { name } => {
            commands::reproduce(&load(cli, name.as_deref())?, Some(&cli.out))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            print!("{}", report.summary());
            if report.degraded {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
