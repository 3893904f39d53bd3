//! `resest`: audits, median-solver demos, simulations and bound reports for
//! resilient distributed state estimation scenarios.

mod commands;
mod sidecar;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Failure classes, each with a stable exit code.
#[derive(Debug)]
pub enum CliError {
    /// An assumption audit failed (exit 1).
    Audit(String),
    /// Unreadable, malformed or inconsistent input (exit 2).
    Input(String),
    /// The integration diverged (exit 3).
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Audit(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Audit(m) | CliError::Input(m) | CliError::Numerical(m) => m,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "resest",
    version,
    about = "Resilient distributed state estimation under sparse sensor attacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TopologyPreset {
    Ring,
    Complete,
    Path,
}

#[derive(Debug, Args)]
pub struct OutDir {
    /// Directory for CSV logs and JSON sidecars.
    #[arg(long, env = "RESEST_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the four standing assumptions and print the indicator table.
    /// Exits 1 if any check fails.
    Audit {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
    },
    /// Run the distributed median solver on scalar values.
    Median(MedianArgs),
    /// Simulate a scenario, writing `<name>.csv` and `<name>.json`.
    Simulate {
        scenario: String,
        #[command(flatten)]
        out: OutDir,
        /// Simulate even if the assumption audit fails.
        #[arg(long)]
        force: bool,
    },
    /// Print algebraic connectivity, steady-state bounds and plug-and-play gains.
    Bounds {
        scenario: String,
        /// Largest network size the plug-and-play gains must cover.
        #[arg(long, requires = "sbar")]
        nbar: Option<usize>,
        /// Target steady-state error for the plug-and-play gains.
        #[arg(long, requires = "nbar")]
        sbar: Option<f64>,
    },
    /// Run a scenario over a grid of gains in parallel.
    Sweep(SweepArgs),
    /// Run the bundled three-inertia scenario with and without the attack
    /// and compare truth, agent 1's own reconstruction and the resilient
    /// estimates.
    Reproduce {
        #[command(flatten)]
        out: OutDir,
    },
    /// List the bundled scenarios, or print one.
    Scenarios {
        /// Print this scenario's JSON.
        name: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct MedianArgs {
    /// Values, comma separated. Defaults to 0, 1, ..., n-1.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub z: Option<Vec<f64>>,
    /// Indicators (0 or 1), comma separated. Defaults to all ones.
    #[arg(long, value_delimiter = ',')]
    pub s: Option<Vec<u8>>,
    /// Number of agents when neither --z nor --s is given.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value_t = TopologyPreset::Ring)]
    pub topology: TopologyPreset,
    /// Integration horizon; long enough for the transient by default.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Initial states, comma separated. Defaults to zeros.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Option<Vec<f64>>,
    /// Write the trajectory CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep every k-th step in the CSV.
    #[arg(long, default_value_t = 10)]
    pub decimation: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub scenario: String,
    /// Coupling gains to try, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub gamma: Vec<f64>,
    /// Correction gains to try; defaults to the scenario's value.
    #[arg(long, value_delimiter = ',')]
    pub kappa: Option<Vec<f64>>,
    /// Use `kappa = product / gamma` instead of a kappa grid.
    #[arg(long, conflicts_with = "kappa")]
    pub product: Option<f64>,
    /// Report the smallest gamma whose tail error is at most this.
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long)]
    pub force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Audit { scenario } => commands::audit(&scenario),
        Command::Median(args) => commands::median(&args),
        Command::Simulate { scenario, out, force } => commands::simulate(&scenario, &out.out_dir, force),
        Command::Bounds { scenario, nbar, sbar } => commands::bounds(&scenario, nbar.zip(sbar)),
        Command::Sweep(args) => commands::sweep(&args),
        Command::Reproduce { out } => commands::reproduce(&out.out_dir),
        Command::Scenarios { name } => commands::scenarios(name.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
