mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::CliError;
use crate::config::{Format, Overrides};

#[derive(Parser)]
#[command(name = "adjshadow", version, about = "CLVs, shadowing directions and sensitivities of chaotic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, replacing `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed, replacing `trajectory.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single output format, replacing `output.formats`.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Lyapunov exponents and covariant Lyapunov vectors.
    Clv,
    /// Tangent and adjoint shadowing directions with their property checks.
    Shadow,
    /// Sensitivities for the configured methods, with a comparison table.
    Sens,
    /// The full property suite.
    Verify,
    /// Finite-difference sensitivity only.
    Fd,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = config::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let over = Overrides {
        out: cli.out,
        seed: cli.seed,
        format: cli.format.map(|f| match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }),
    };
    let exp = config::resolve(cfg, &over).map_err(CliError::Config)?;
    match cli.command {
        Command::Clv => commands::clv(&exp),
        Command::Shadow => commands::shadow(&exp),
        Command::Sens => commands::sens(&exp),
        Command::Verify => commands::verify(&exp),
        Command::Fd => commands::fd(&exp),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e.message().replace('\n', " "));
            ExitCode::from(e.exit_status())
        }
    }
}
