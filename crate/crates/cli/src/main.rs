//! `vibroline` command-line tool.

mod commands;
mod config;
mod error;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "vibroline", version, about = "Defect photoluminescence lineshapes from harmonic lattice data")]
struct Cli {
    /// key = value settings file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files (default: current directory).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Phonon energies at a list of wavevectors.
    Phonons(PhononsArgs),
    /// Emission lineshape and Huang-Rhys summary.
    Lineshape(LineshapeArgs),
    /// Lineshapes keeping only modes up to each cutoff energy.
    Partial(PartialArgs),
    /// Fit force constants to displacement-force snapshots.
    FitIfc(FitIfcArgs),
    /// Single-activation-energy fit of temperature data.
    Arrhenius(ArrheniusArgs),
    /// Unfold supercell modes onto a primitive-cell path.
    Unfold(UnfoldArgs),
}

#[derive(Args)]
pub struct PhononsArgs {
    #[arg(long)]
    pub structure: Option<PathBuf>,
    #[arg(long)]
    pub fc: Option<PathBuf>,
    /// File of reduced wavevectors, one `qx qy qz` per line.
    #[arg(long)]
    pub qpoints: Option<PathBuf>,
    /// Use the force constants as given, without the acoustic sum rule.
    #[arg(long)]
    pub no_asr: bool,
    /// Also write phonons_eigenvectors.csv.
    #[arg(long)]
    pub eigenvectors: bool,
}

#[derive(Args)]
pub struct LineshapeArgs {
    #[arg(long)]
    pub ground: Option<PathBuf>,
    #[arg(long)]
    pub excited: Option<PathBuf>,
    #[arg(long)]
    pub fc: Option<PathBuf>,
    /// Zero-phonon line energy, meV.
    #[arg(long)]
    pub zpl: Option<f64>,
    /// Gaussian broadening of the spectral density, meV.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Energy grid spacing, meV.
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Lorentzian ZPL half-width, meV.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub window_min: Option<f64>,
    #[arg(long)]
    pub window_max: Option<f64>,
    /// Skip the cubic photon-energy prefactor.
    #[arg(long)]
    pub no_cubic: bool,
    #[arg(long)]
    pub no_asr: bool,
}

#[derive(Args)]
pub struct PartialArgs {
    #[command(flatten)]
    pub common: LineshapeArgs,
    /// Comma-separated phonon cutoff energies, meV.
    #[arg(long)]
    pub cutoffs: Option<String>,
}

#[derive(Args)]
pub struct FitIfcArgs {
    #[arg(long)]
    pub structure: Option<PathBuf>,
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    /// Pair cutoff, Å.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Scale-relative ridge weight.
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Run recursive feature elimination.
    #[arg(long)]
    pub rfe: bool,
    /// Smallest fraction of pair blocks to keep.
    #[arg(long)]
    pub rfe_target: Option<f64>,
    /// Allowed rise of the validation RMSE, meV/Å.
    #[arg(long)]
    pub rfe_tolerance: Option<f64>,
}

#[derive(Args)]
pub struct ArrheniusArgs {
    /// CSV with header T_K,value[,sigma].
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub guess_amplitude: Option<f64>,
    #[arg(long)]
    pub guess_c: Option<f64>,
    /// Initial activation energy, meV.
    #[arg(long)]
    pub guess_ea: Option<f64>,
}

#[derive(Args)]
pub struct UnfoldArgs {
    #[arg(long)]
    pub fc: Option<PathBuf>,
    #[arg(long)]
    pub supercell: Option<PathBuf>,
    /// File with the three primitive lattice rows, Å.
    #[arg(long)]
    pub primitive: Option<PathBuf>,
    /// Reduced primitive-cell wavevectors, one per line.
    #[arg(long)]
    pub path: Option<PathBuf>,
    #[arg(long)]
    pub no_asr: bool,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("VIBROLINE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("VIBROLINE_THREADS must be a non-negative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot configure {n} worker threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let schema = match &cli.command {
        Command::Phonons(_) => commands::PHONONS_KEYS,
        Command::Lineshape(_) => commands::LINESHAPE_KEYS,
        Command::Partial(_) => commands::PARTIAL_KEYS,
        Command::FitIfc(_) => commands::FIT_IFC_KEYS,
        Command::Arrhenius(_) => commands::ARRHENIUS_KEYS,
        Command::Unfold(_) => commands::UNFOLD_KEYS,
    };
    let config = RunConfig::load(cli.config.as_deref(), schema)?;
    let out = commands::output_dir(cli.output_dir, &config)?;
    match &cli.command {
        Command::Phonons(a) => commands::phonons(a, &config, &out),
        Command::Lineshape(a) => commands::lineshape_cmd(a, &config, &out),
        Command::Partial(a) => commands::partial_cmd(a, &config, &out),
        Command::FitIfc(a) => commands::fit_ifc(a, &config, &out),
        Command::Arrhenius(a) => commands::arrhenius(a, &config, &out),
        Command::Unfold(a) => commands::unfold(a, &config, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            eprintln!("{}", CliError::usage(first.trim_start_matches("error: ")));
            let _ = e.print();
            return ExitCode::from(error::EXIT_INPUT as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code as u8)
        }
    }
}
