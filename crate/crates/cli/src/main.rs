//! `photonmetrics`: simulate single-photon source experiments and analyze
//! time-tag files.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 fit failure.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;

#[derive(Parser)]
#[command(name = "photonmetrics", version, about)]
struct Cli {
    /// Worker threads for simulation and correlation (default: all cores).
    #[arg(long, global = true, env = "PHOTONMETRICS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct PeakArgs {
    /// Histogram bin width, ps.
    #[arg(long = "bin", default_value_t = 100)]
    pub bin_width: u64,
    /// Peak integration window, ps.
    #[arg(long, default_value_t = 3000)]
    pub window: u64,
    /// Peak spacing, ps.
    #[arg(long, default_value_t = 25_000)]
    pub spacing: u64,
    /// Peaks integrated on each side of zero delay.
    #[arg(long)]
    pub n_side: Option<usize>,
    /// Center each window on the local centroid instead of the nominal delay.
    #[arg(long)]
    pub recenter: bool,
    /// Start channel of the delay `t_b - t_a`.
    #[arg(long, default_value_t = 0)]
    pub ch_a: u8,
    /// Stop channel of the delay `t_b - t_a`.
    #[arg(long, default_value_t = 1)]
    pub ch_b: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a run and write a binary tag file plus a manifest sidecar.
    Simulate {
        /// Config file (dotted key = value).
        #[arg(short, long, required_unless_present = "profile")]
        config: Option<PathBuf>,
        /// Start from a preset instead of (or before) the config file.
        #[arg(long)]
        profile: Option<String>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of excitation pulses; accepts `1e8`.
        #[arg(long)]
        pulses: Option<String>,
        /// Also write the stream as `channel,t_ps` CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// g²(0) from an HBT tag file.
    G2 {
        #[arg(short, long)]
        input: PathBuf,
        #[command(flatten)]
        peaks: PeakArgs,
        /// Report path (default: stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Correlation histogram CSV.
        #[arg(long)]
        hist: Option<PathBuf>,
    },
    /// Two-photon interference visibility from parallel and orthogonal runs.
    Hom {
        #[arg(long)]
        parallel: PathBuf,
        #[arg(long)]
        orthogonal: PathBuf,
        #[command(flatten)]
        peaks: PeakArgs,
        /// g²(0) value to also report the corrected indistinguishability.
        #[arg(long, requires = "g2_sigma")]
        g2: Option<f64>,
        #[arg(long)]
        g2_sigma: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Histogram CSV prefix; writes `<prefix>_parallel.csv` and `<prefix>_orthogonal.csv`.
        #[arg(long)]
        hist: Option<PathBuf>,
    },
    /// Blinking strength and time from peak areas at long delays.
    Blinking {
        #[arg(short, long)]
        input: PathBuf,
        #[command(flatten)]
        peaks: PeakArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        hist: Option<PathBuf>,
    },
    /// Lifetime from arrival times folded on the excitation clock.
    Lifetime {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: u8,
        /// Excitation period, ps.
        #[arg(long, default_value_t = 12_500)]
        sync_period: u64,
        #[arg(long = "bin", default_value_t = 20)]
        bin_width: u64,
        /// Histogram `(t - offset) mod period`; negative values move the rising edge right.
        #[arg(long, default_value_t = -2000, allow_hyphen_values = true)]
        offset: i64,
        /// Gaussian instrument response width, ps.
        #[arg(long, conflicts_with = "irf")]
        irf_sigma: Option<f64>,
        /// Tag file of a reference laser measurement to use as the response.
        #[arg(long)]
        irf: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        hist: Option<PathBuf>,
    },
    /// Simulate HBT and both HOM settings, then report g², V and M_s.
    Characterize {
        #[arg(short, long, required_unless_present = "profile")]
        config: Option<PathBuf>,
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        pulses: Option<String>,
        #[command(flatten)]
        peaks: PeakArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Directory for the three correlation histograms.
        #[arg(long)]
        hist_dir: Option<PathBuf>,
    },
    /// Setup transmission and corrected efficiency from a loss budget CSV.
    Budget {
        #[arg(short, long)]
        budget: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate { config, profile, output, seed, pulses, csv } => {
            commands::simulate(config.as_deref(), profile.as_deref(), &output, seed, pulses.as_deref(), csv.as_deref())
        }
        Command::G2 { input, peaks, output, hist } => {
            commands::g2(&input, &peaks, output.as_deref(), hist.as_deref())
        }
        Command::Hom { parallel, orthogonal, peaks, g2, g2_sigma, output, hist } => {
            let g2 = g2.zip(g2_sigma);
            commands::hom(&parallel, &orthogonal, &peaks, g2, output.as_deref(), hist.as_deref())
        }
        Command::Blinking { input, peaks, output, hist } => {
            commands::blinking(&input, &peaks, output.as_deref(), hist.as_deref())
        }
        Command::Lifetime { input, channel, sync_period, bin_width, offset, irf_sigma, irf, output, hist } => {
            let settings = report::LifetimeSettings {
                channel,
                sync_period_ps: sync_period,
                bin_width_ps: bin_width,
                offset_ps: offset,
                irf_sigma_ps: irf_sigma,
                irf_file: irf.as_ref().map(|p| p.display().to_string()),
            };
            commands::lifetime(&input, settings, output.as_deref(), hist.as_deref())
        }
        Command::Characterize { config, profile, seed, pulses, peaks, output, hist_dir } => {
            commands::characterize(
                config.as_deref(),
                profile.as_deref(),
                seed,
                pulses.as_deref(),
                &peaks,
                output.as_deref(),
                hist_dir.as_deref(),
            )
        }
        Command::Budget { budget, output } => commands::budget(&budget, output.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
