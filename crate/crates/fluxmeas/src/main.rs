use std::path::PathBuf;
use std::process;

use clap::{error::ErrorKind, Parser, Subcommand, ValueEnum};

use fluxmeas::cli::{execute, Scenario};
use fluxmeas::config::RunConfig;
use fluxmeas::report::OutputFormat;

/// Simulator for switchable projective readout of a flux qubit through an
/// rf-SQUID two-level system.
#[derive(Parser)]
#[command(name = "fluxmeas", version, disable_help_subcommand = true)]
struct Cli {
    /// TOML configuration file; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Write the report to this file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,

    /// Overrides run.seed from the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Dressed levels, conditional transition frequencies, branch overlap.
    Spectrum,
    /// Conditional pi-pulse trajectory with flip and residual summary.
    Pulse,
    /// Noise realization, spectral density, and ensemble T2 estimate.
    Noise,
    /// rf-SQUID eigenstructure and localized-pair characterization.
    Squid,
    /// Switching-histogram statistics and repetition counts.
    Histogram,
    /// Full prepare, entangle, project, and estimate sequence.
    Protocol,
}

impl Command {
    fn scenario(&self) -> Scenario {
        match self {
            Command::Spectrum => Scenario::Spectrum,
            Command::Pulse => Scenario::Pulse,
            Command::Noise => Scenario::Noise,
            Command::Squid => Scenario::Squid,
            Command::Histogram => Scenario::Histogram,
            Command::Protocol => Scenario::Protocol,
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            // Usage problems are configuration errors, exit code 1.
            eprint!("{e}");
            process::exit(1);
        }
    };
    process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        },
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }

    let report = match execute(cli.command.scenario(), &cfg) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };

    let format = OutputFormat::from(cli.format);
    match &cli.out {
        Some(path) => {
            if let Err(e) = report.write(path, format) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return 1;
            }
        }
        None => {
            use std::io::Write;
            let text = report.render(format);
            if let Err(e) = std::io::stdout().lock().write_all(text.as_bytes()) {
                // A closed pipe (e.g. `fluxmeas squid | head`) is not an error.
                if e.kind() == std::io::ErrorKind::BrokenPipe {
                    return 0;
                }
                eprintln!("error: cannot write to stdout: {e}");
                return 1;
            }
        }
    }
    0
}
