//! Command-line pipeline over the `rigid-frames` library.
//!
//! PDB → frames → canonical frames → view pairs → flow-matching targets and
//! losses, plus an IGSO(3) sampler and a record verifier. Frames and pairs
//! travel as JSONL; tabular outputs are CSV.

pub mod commands;
pub mod error;
pub mod io;
pub mod records;
pub mod verify;

use std::ffi::OsString;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::CliError;

/// Environment variable that takes precedence over `--threads`.
pub const THREADS_ENV: &str = "RIGID_FRAMES_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "rigid-frames",
    version,
    about = "Rigid residue frames for protein backbones"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 or unset uses all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Interval between paired MD snapshots, ns.
    #[arg(long, global = true, default_value_t = rigid_frames::views::DEFAULT_DELTA_NS)]
    pub delta_ns: f64,
    /// Spacing of MD pair start times, ns [default: delta].
    #[arg(long, global = true)]
    pub stride_ns: Option<f64>,
    /// Translation noise scale, Å.
    #[arg(long, global = true, default_value_t = rigid_frames::views::DEFAULT_SIGMA)]
    pub sigma: f64,
    /// IGSO(3) rotation noise scale.
    #[arg(long, global = true, default_value_t = rigid_frames::views::DEFAULT_EPSILON)]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Args)]
pub struct InOut {
    /// Input path, `-` for stdin.
    pub input: String,
    /// Output path, `-` for stdout.
    #[arg(short, long, default_value = "-")]
    pub output: String,
}

#[derive(Debug, Clone, Args)]
pub struct TauArgs {
    /// Comma-separated τ values [default: 0.05, 0.15, …, 0.95].
    #[arg(long, value_delimiter = ',', conflicts_with = "random_taus")]
    pub taus: Option<Vec<f64>>,
    /// Draw this many τ values uniformly from [0, 1) using --seed.
    #[arg(long)]
    pub random_taus: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Forward,
    Backward,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Residue frames of every chain in a PDB file.
    Frames(InOut),
    /// Center frame records and rotate them into their principal axes.
    Canonicalize(InOut),
    /// Phase-I pairs: canonical frames and their per-residue perturbation.
    Perturb(InOut),
    /// Phase-II pairs from a multi-model PDB, a directory of PDB files or several PDB files.
    Mdpairs {
        /// Trajectory inputs.
        #[arg(required = true)]
        inputs: Vec<String>,
        #[arg(short, long, default_value = "-")]
        output: String,
        /// Snapshot spacing when models carry no `t=` time stamp, ns.
        #[arg(long, default_value_t = 1.0)]
        dt_ns: f64,
        /// Source name recorded in the pairs [default: first input's file stem].
        #[arg(long)]
        id: Option<String>,
    },
    /// Flow-matching target velocities of every pair.
    Fmtarget {
        #[command(flatten)]
        io: InOut,
        #[command(flatten)]
        taus: TauArgs,
        #[arg(long, value_enum, default_value_t = DirectionArg::Forward)]
        direction: DirectionArg,
    },
    /// Flow-matching losses of a predictor on every pair, as CSV.
    Fmloss {
        #[command(flatten)]
        io: InOut,
        #[command(flatten)]
        taus: TauArgs,
        /// `zero`, `oracle` or the path of a table written by `fit`.
        #[arg(long, default_value = "zero")]
        predictor: String,
    },
    /// Euler rollout of a predictor from g0 of every pair.
    Integrate {
        #[command(flatten)]
        io: InOut,
        /// `zero`, `oracle` or the path of a table written by `fit`.
        #[arg(long, default_value = "oracle")]
        predictor: String,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
    },
    /// Fit a tabular velocity predictor to one pair by gradient descent.
    Fit {
        #[command(flatten)]
        io: InOut,
        #[command(flatten)]
        taus: TauArgs,
        #[arg(long, default_value_t = rigid_frames::flowmatch::DEFAULT_FIT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = rigid_frames::flowmatch::DEFAULT_FIT_LR)]
        lr: f64,
        /// Index of the pair to fit.
        #[arg(long, default_value_t = 0)]
        pair: usize,
    },
    /// Rotation angles of IGSO(3) draws around the identity, as CSV.
    SampleIgso3 {
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(short, long, default_value = "-")]
        output: String,
    },
    /// Check every record against the format invariants.
    Verify {
        /// Input path, `-` for stdin.
        input: String,
    },
}

impl GlobalArgs {
    fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::usage(format!(
                    "--{name} must be finite and > 0, got {v}"
                )))
            }
        };
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(CliError::usage(format!(
                "--sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        positive("epsilon", self.epsilon)?;
        positive("delta-ns", self.delta_ns)?;
        if let Some(stride) = self.stride_ns {
            positive("stride-ns", stride)?;
        }
        Ok(())
    }

    pub fn stride(&self) -> f64 {
        self.stride_ns.unwrap_or(self.delta_ns)
    }
}

/// Thread count from the environment, then `--threads`; 0 means all cores.
fn thread_count(flag: Option<usize>) -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(value) => value.trim().parse().map_err(|_| {
            CliError::usage(format!(
                "{THREADS_ENV} must be a non-negative integer, got {value:?}"
            ))
        }),
        Err(_) => Ok(flag.unwrap_or(0)),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

/// Runs a parsed command inside a thread pool of the requested size.
pub fn execute(cli: Cli) -> Result<u8, CliError> {
    cli.global.validate()?;
    let threads = thread_count(cli.global.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| commands::dispatch(&cli.global, &cli.command))
}
