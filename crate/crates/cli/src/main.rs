use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use ocpuu_cli::experiment::write_histories;
use ocpuu_cli::{export_matrices, run_solve_experiment, run_spectrum_experiment, validate_config, ExperimentConfig};

const EXIT_RUNTIME: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "ocpuu", version, about = "Collocated optimal control experiments from JSON configs")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a config, fill defaults and print it with the sweep size.
    Validate { config: PathBuf },
    /// Run preconditioned MINRES at every sweep point.
    Solve {
        config: PathBuf,
        /// Exit with status 3 if any point did not converge.
        #[arg(long)]
        strict: bool,
        /// Leave the time column empty so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
        /// CSV destination, overriding the config.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compute extremal eigenvalues of the preconditioned operator at every sweep point.
    Spectrum {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write the system operator, preconditioner and right-hand side as Matrix Market files.
    ExportMatrix {
        config: PathBuf,
        /// Largest operator dimension to export.
        #[arg(long)]
        cap: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    let raw = match fs::read_to_string(path) {
        Ok(raw) => raw,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Err(ExitCode::from(EXIT_INVALID));
        }
    };
    validate_config(&raw).map_err(|d| {
        eprintln!("error: {}: {d}", path.display());
        ExitCode::from(EXIT_INVALID)
    })
}

fn emit(csv: &str, output: Option<&Path>) -> anyhow::Result<()> {
    match output {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, ExitCode> {
    let runtime = |e: anyhow::Error| {
        eprintln!("error: {e:#}");
        ExitCode::from(EXIT_RUNTIME)
    };
    match cli.command {
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            eprintln!("{}: valid, {} sweep point(s)", config.display(), cfg.num_points());
        }
        Command::Solve {
            config,
            strict,
            no_timing,
            output,
        } => {
            let cfg = load(&config)?;
            let output = output.or_else(|| cfg.output.as_ref().map(PathBuf::from));
            let outcome = run_solve_experiment(&cfg, !no_timing).map_err(runtime)?;
            emit(&outcome.table.to_csv(), output.as_deref()).map_err(runtime)?;
            if let Some(path) = &output {
                write_histories(path, &outcome.reports).map_err(runtime)?;
            }
            if strict && !outcome.all_converged() {
                eprintln!("error: MINRES did not converge at every sweep point");
                return Err(ExitCode::from(EXIT_NOT_CONVERGED));
            }
        }
        Command::Spectrum { config, output } => {
            let cfg = load(&config)?;
            let output = output.or_else(|| cfg.output.as_ref().map(PathBuf::from));
            let table = run_spectrum_experiment(&cfg).map_err(runtime)?;
            emit(&table.to_csv(), output.as_deref()).map_err(runtime)?;
        }
        Command::ExportMatrix { config, cap, out_dir } => {
            let cfg = load(&config)?;
            for path in export_matrices(&cfg, cap, &out_dir).map_err(runtime)? {
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    run(cli).unwrap_or_else(|code| code)
}
