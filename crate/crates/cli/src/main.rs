//! `stem`: ChIP-Seq peak calling with a matched filter, a Control-based
//! background model and Monte Carlo p-values.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Config;

#[derive(Parser, Debug)]
#[command(name = "stem", version, about = "ChIP-Seq peak caller")]
struct Cli {
    /// key = value file; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only log warnings and errors
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the strand shift and peak shape from IP tags
    Align(AlignArgs),
    /// Build a Monte Carlo survival table for a kernel
    Table(TableArgs),
    /// Call peaks
    Call(CallArgs),
    /// Spike-in experiment: realized FDR and power
    Simulate(SimulateArgs),
    /// P-value diagnostics from a peak table
    Diagnose(DiagnoseArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct AlignArgs {
    /// IP tags: chrom, start, end, strand (tab separated)
    #[arg(long)]
    ip: Option<PathBuf>,
    /// Chromosome sizes: chrom, length
    #[arg(long)]
    sizes: Option<PathBuf>,
    /// Chromosome used for alignment (default: the longest)
    #[arg(long)]
    chrom: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tentative_shift: Option<u64>,
    #[arg(long)]
    prelim_sigma: Option<f64>,
    #[arg(long)]
    n_peaks: Option<usize>,
    #[arg(long)]
    profile_window: Option<usize>,
    #[arg(long)]
    kernel_width: Option<usize>,
    #[arg(long)]
    knot_spacing: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TableArgs {
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Existing table (call only)
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    n_lambda: Option<usize>,
    #[arg(long)]
    n_u: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    min_sim_length: Option<u64>,
    /// Minimum number of simulated local maxima per rate
    #[arg(long)]
    min_sim_maxima: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CallArgs {
    #[arg(long)]
    ip: Option<PathBuf>,
    #[arg(long)]
    control: Option<PathBuf>,
    #[arg(long)]
    sizes: Option<PathBuf>,
    /// Peak shape; estimated from the IP tags when absent
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Strand shift; estimated from the IP tags when absent
    #[arg(long)]
    shift: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// FDR level
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    genome_length: Option<f64>,
    #[arg(long)]
    window_small: Option<u64>,
    #[arg(long)]
    window_large: Option<u64>,
    /// Also run the Control sample against itself
    #[arg(long)]
    empirical_null: bool,
    #[arg(long)]
    diagnostics_points: Option<usize>,
    #[command(flatten)]
    align: CallAlignArgs,
    #[command(flatten)]
    table: CallTableArgs,
}

#[derive(Args, Debug, Clone)]
pub struct CallAlignArgs {
    #[arg(long)]
    chrom: Option<String>,
    #[arg(long)]
    tentative_shift: Option<u64>,
    #[arg(long)]
    prelim_sigma: Option<f64>,
    #[arg(long)]
    n_peaks: Option<usize>,
    #[arg(long)]
    profile_window: Option<usize>,
    #[arg(long)]
    kernel_width: Option<usize>,
    #[arg(long)]
    knot_spacing: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct CallTableArgs {
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    n_lambda: Option<usize>,
    #[arg(long)]
    n_u: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    min_sim_length: Option<u64>,
    /// Minimum number of simulated local maxima per rate
    #[arg(long)]
    min_sim_maxima: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl From<CallAlignArgs> for AlignArgs {
    fn from(a: CallAlignArgs) -> Self {
        AlignArgs {
            chrom: a.chrom,
            tentative_shift: a.tentative_shift,
            prelim_sigma: a.prelim_sigma,
            n_peaks: a.n_peaks,
            profile_window: a.profile_window,
            kernel_width: a.kernel_width,
            knot_spacing: a.knot_spacing,
            ..AlignArgs::default()
        }
    }
}

impl From<CallTableArgs> for TableArgs {
    fn from(t: CallTableArgs) -> Self {
        TableArgs {
            table: t.table,
            n_lambda: t.n_lambda,
            n_u: t.n_u,
            margin: t.margin,
            min_sim_length: t.min_sim_length,
            min_sim_maxima: t.min_sim_maxima,
            seed: t.seed,
            ..TableArgs::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[arg(long)]
    length: Option<u64>,
    #[arg(long)]
    n_spikes: Option<usize>,
    /// Comma-separated S values
    #[arg(long)]
    snr: Option<String>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Control template counts (chrom, position, count)
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    template_chrom: Option<String>,
    /// Spike shape (default: built-in shape of --kernel-width)
    #[arg(long)]
    kernel: Option<PathBuf>,
    #[arg(long)]
    kernel_width: Option<usize>,
    /// Spike area in units of mean(lambda0) (default: kernel length)
    #[arg(long)]
    area_scale: Option<f64>,
    #[arg(long)]
    n_lambda: Option<usize>,
    #[arg(long)]
    n_u: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DiagnoseArgs {
    /// Peak table written by `call`
    #[arg(long)]
    peaks: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
    /// Peak table from a Control-against-Control run
    #[arg(long)]
    null_peaks: Option<PathBuf>,
    #[arg(long)]
    diagnostics_points: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Align(a) => commands::align(&cfg, a),
        Command::Table(t) => commands::table(&cfg, t),
        Command::Call(c) => commands::call(&cfg, c),
        Command::Simulate(s) => commands::simulate(&cfg, s),
        Command::Diagnose(d) => commands::diagnose(&cfg, d),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
