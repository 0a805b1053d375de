//! `wavegraph`: command-line front end for graph validation, spectra,
//! statistics, length spectra, localization, coupler design and ingestion.

mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use output::Failure;

/// Wavelength window used when none is given, in micrometres.
pub const DEFAULT_LAMBDA_WINDOW: (f64, f64) = (1.48, 1.57);

#[derive(Parser, Serialize)]
#[command(
    name = "wavegraph",
    version,
    about = "Wave-graph simulator for photonic waveguide networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output directory for CSV and JSON artifacts.
    #[arg(long, global = true, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,

    /// Seed for synthetic generators; recorded in every artifact.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Omit the wall-clock timestamp from artifact headers.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub no_timestamp: bool,

    /// JSON file of default options; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Check a graph file and report its structure.
    Validate(GraphArgs),
    /// Perron-Frobenius spectrum and mixing classification.
    Classical(ClassicalArgs),
    /// Closed-graph roots or open-graph poles.
    Spectrum(SpectrumArgs),
    /// Unfolded level statistics against the random-matrix references.
    Stats(StatsArgs),
    /// Fourier transform of a transmission sweep against optical length.
    LengthSpectrum(LengthArgs),
    /// Periodic orbits up to a length cutoff.
    Orbits(OrbitArgs),
    /// Shannon entropy and participation ratio of bond intensities.
    Localize(LocalizeArgs),
    /// Directional-coupler splitting across the band.
    Coupler(CouplerArgs),
    /// Normalize a measured sweep and fit its resonance dips.
    Ingest(IngestArgs),
    /// Effective index from an interference-fringe frequency.
    Neff(NeffArgs),
}

#[derive(Args, Serialize, Clone, Default)]
pub struct GraphArgs {
    /// Graph JSON file, or `btg` / `fg` for the built-in graphs.
    #[arg(long, value_name = "FILE")]
    pub graph: Option<String>,
    #[arg(long)]
    pub n_eff: Option<f64>,
    #[arg(long)]
    pub n_g: Option<f64>,
    #[arg(long, value_enum)]
    pub dispersion: Option<DispersionArg>,
    /// Set every coupler to this cross-coupling.
    #[arg(long)]
    pub coupling: Option<f64>,
    /// Choose a constant index so the Weyl count in the window equals N.
    #[arg(long, value_name = "N")]
    pub calibrate_count: Option<usize>,
}

#[derive(Args, Serialize, Clone, Default)]
pub struct CouplerSource {
    /// Index-difference table (`lambda_nm`, `delta_neff`); design point when absent.
    #[arg(long, value_name = "FILE")]
    pub coupler_table: Option<PathBuf>,
    /// Coupler length in micrometres.
    #[arg(long)]
    pub l_dc: Option<f64>,
}

#[derive(Args, Serialize)]
pub struct ClassicalArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Also report the gap across the wavelength window with C(lambda) couplers.
    #[arg(long)]
    pub gap_sweep: bool,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub coupler: CouplerSource,
    /// Wavelength step of the gap sweep.
    #[arg(long, default_value_t = 5.0)]
    pub step_nm: f64,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DispersionArg {
    Constant,
    Linear,
}

#[derive(Args, Serialize, Clone, Default)]
pub struct WindowArgs {
    /// Wavelength window in micrometres.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_negative_numbers = true)]
    pub lambda_window: Option<Vec<f64>>,
    /// Lower wavenumber bound in 1/um; overrides the wavelength window.
    #[arg(long, requires = "kmax")]
    pub kmin: Option<f64>,
    #[arg(long, requires = "kmin")]
    pub kmax: Option<f64>,
}

#[derive(Args, Serialize)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Solve for resonance poles of the graph with its bus coupler attached.
    #[arg(long, conflicts_with = "closed")]
    pub open: bool,
    /// Solve for real roots of the closed graph (default).
    #[arg(long)]
    pub closed: bool,
    #[arg(long, default_value_t = 10.0)]
    pub grid_per_spacing: f64,
    /// Cross-coupling of the bus coupler used to open the graph.
    #[arg(long, default_value_t = 0.5)]
    pub bus_coupling: f64,
    /// Also sample the open-graph transmission at this many wavenumbers.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Poisson,
    Goe,
}

#[derive(Args, Serialize)]
pub struct StatsArgs {
    /// Levels file: a `level` column (already unfolded) or a `k` column.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Solve the graph given by `--graph` and analyse its roots.
    #[arg(long, conflicts_with = "input")]
    pub from_graph: bool,
    /// Generate a synthetic level sequence from `--seed`.
    #[arg(long, value_enum, conflicts_with_all = ["input", "from_graph"])]
    pub synthetic: Option<SyntheticKind>,
    /// Number of synthetic levels (matrix size for GOE).
    #[arg(long, default_value_t = 10_000)]
    pub levels: usize,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, default_value_t = 10.0)]
    pub grid_per_spacing: f64,
    /// Histogram bin width; Freedman-Diaconis when absent.
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Window lengths for the number variance and rigidity.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    pub l_values: Vec<f64>,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
    Rect,
}

#[derive(Args, Serialize)]
pub struct LengthArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Sweep as `lambda_nm`, `transmission` (optional `reference`) or `k_um_inv`, `T2`.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    // C(lambda) from this table unless `--coupling` fixes every coupler.
    #[command(flatten)]
    pub coupler: CouplerSource,
    #[arg(long, default_value_t = 16_384)]
    pub samples: usize,
    #[arg(long, value_enum, default_value = "hann")]
    pub taper: WindowKind,
    #[arg(long, default_value_t = 0.5)]
    pub bus_coupling: f64,
    /// Normalized magnitude above which peaks are reported.
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
    /// Geometric length cutoff for orbit matching, in micrometres.
    #[arg(long, default_value_t = 2000.0)]
    pub l_max: f64,
}

#[derive(Args, Serialize)]
pub struct OrbitArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Geometric length cutoff in micrometres.
    #[arg(long, default_value_t = 1000.0)]
    pub l_max: f64,
}

#[derive(Args, Serialize)]
pub struct LocalizeArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Bond intensities: long (`bond_id`, `intensity`, optional `source`, `mode`)
    /// or wide (one row per mode, one column per bond).
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Input intensities are third-harmonic signals.
    #[arg(long, requires = "input")]
    pub thg: bool,
    #[arg(long, default_value_t = 10.0)]
    pub grid_per_spacing: f64,
}

#[derive(Args, Serialize)]
pub struct CouplerArgs {
    #[command(flatten)]
    pub coupler: CouplerSource,
    /// Wavelength window in micrometres; the table band when absent.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub lambda_window: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    pub step_nm: f64,
    /// Measured port powers (`lambda_nm`, `p13`, `p14`) to fit.
    #[arg(long, value_name = "FILE")]
    pub measured: Option<PathBuf>,
    /// Spline curvature penalty; cross-validated when absent.
    #[arg(long)]
    pub smoothing: Option<f64>,
}

#[derive(Args, Serialize)]
pub struct IngestArgs {
    /// Raw sweep (`lambda_nm`, `transmission`, optional `reference`).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Separate reference sweep to divide by.
    #[arg(long, value_name = "FILE")]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = wavegraph::measured::DEFAULT_PROMINENCE)]
    pub prominence: f64,
    #[arg(long, default_value_t = wavegraph::measured::DEFAULT_MIN_DEPTH)]
    pub min_depth: f64,
}

#[derive(Args, Serialize)]
pub struct NeffArgs {
    /// Fringe spatial frequency in 1/um.
    #[arg(long)]
    pub r0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub sigma_r0: f64,
    /// Wavelength in micrometres.
    #[arg(long)]
    pub lambda: f64,
}

fn configure_threads() {
    let Ok(v) = std::env::var("WAVEGRAPH_THREADS") else {
        return;
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
        _ => eprintln!("warning: ignoring WAVEGRAPH_THREADS={v}"),
    }
}

fn run(argv: Vec<OsString>) -> Result<(), Failure> {
    let argv = config::expand(argv)?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return Err(Failure::Usage(e.exit_code()));
        }
    };
    configure_threads();
    commands::dispatch(&cli)
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.code())
        }
    }
}
