//! Command pipeline behind the `affctl` binary.

pub mod bundled;
mod commands;
pub mod error;
pub mod output;
pub mod system_file;
pub mod verify;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{exit, CliError, CliResult};
pub use output::RunReport;
pub use system_file::{Diagnostic, SystemFile};

#[derive(Debug, Parser)]
#[command(name = "affctl", version, about = "Analysis of affine control systems")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// System definition (TOML).
    #[arg(long, global = true)]
    pub system: Option<PathBuf>,
    /// Output directory for the report and artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `[sampling] seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Record wall time in the report (otherwise `null`).
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Boxes per axis, e.g. `128,128`.
    #[arg(long)]
    pub subdivisions: Option<String>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub pts_per_box: Option<usize>,
    /// Control grid levels per axis, replacing `[sampling] controls`.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Rounds of 2x refinement around the result.
    #[arg(long, default_value_t = 0)]
    pub refine: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanKind {
    Mixed,
    BangBang,
    RandomLevel,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Exact trajectory under a piecewise-constant control.
    Simulate {
        /// Segments `v1,..,vm@duration` separated by `;`.
        #[arg(long, allow_hyphen_values = true)]
        control: String,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
        #[arg(long)]
        sample_step: Option<f64>,
    },
    /// Monodromy matrix, multipliers and exponents of a periodic control.
    Floquet {
        #[arg(long, allow_hyphen_values = true)]
        control: String,
    },
    /// Periodic-solution classification of a periodic control.
    Periodic {
        #[arg(long, allow_hyphen_values = true)]
        control: String,
    },
    /// Sampled search for periodic controls with a unit multiplier.
    Hypscan {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, value_enum, default_value_t = ScanKind::Mixed)]
        kind: ScanKind,
        #[arg(long, default_value_t = 0.5)]
        period_min: f64,
        #[arg(long, default_value_t = 3.0)]
        period_max: f64,
        #[arg(long, default_value_t = 4)]
        segments_max: usize,
        /// Controls scanned before the random samples; repeatable.
        #[arg(long, allow_hyphen_values = true)]
        extra: Vec<String>,
    },
    /// Periodic solutions along the path from one control to another.
    Continue {
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        #[arg(long, allow_hyphen_values = true)]
        to: String,
        #[arg(long, default_value_t = 101)]
        steps: usize,
        #[arg(long, default_value_t = 40)]
        refine_depth: usize,
    },
    /// Box approximation of the control set around a point.
    Controlset {
        #[command(flatten)]
        grid: GridArgs,
        /// Seed point; defaults to the equilibrium at u = 0.
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
    },
    /// Box approximations of the chain control sets in the window.
    Chainsets {
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Directions at infinity of a control set and chain components on the
    /// projective compactification.
    Infinity {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        /// Defaults to 0.8 times the window radius.
        #[arg(long)]
        norm_floor: Option<f64>,
        /// Skip the projective chain-component computation.
        #[arg(long)]
        no_chain: bool,
        #[arg(long, default_value_t = affctl_core::projective::DEFAULT_SPHERE_CELLS)]
        cells: usize,
        #[arg(long, default_value_t = affctl_core::projective::DEFAULT_SPHERE_CELLS)]
        hom_cells: usize,
        #[arg(long, default_value_t = 1.0)]
        proj_dt: f64,
        #[arg(long, default_value_t = 16)]
        proj_pts: usize,
        /// Chain jump radius on the sphere grid; defaults to a tenth of a box.
        #[arg(long)]
        jump: Option<f64>,
        /// Continuation path whose blow-up records join the directions.
        #[arg(long, allow_hyphen_values = true, requires = "to")]
        from: Option<String>,
        #[arg(long, allow_hyphen_values = true, requires = "from")]
        to: Option<String>,
    },
    /// Runs the bundled scenario for a worked example.
    VerifyExample {
        #[arg(value_parser = ["5.9", "7.12", "7.13", "7.14"])]
        example: String,
    },
}

/// What a finished command leaves behind.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: RunReport,
    /// Lines for standard output.
    pub lines: Vec<String>,
    /// Failed checks of `verify-example`.
    pub failed_checks: usize,
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.global.threads {
            if n == 0 {
                return Err(CliError::Usage("--threads must be positive".into()));
            }
            builder = builder.num_threads(n);
        }
        builder
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?
    };
    pool.install(|| commands::dispatch(cli))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            if outcome.failed_checks > 0 {
                eprintln!("error: {} check(s) failed", outcome.failed_checks);
                return exit::VERIFY_FAILED;
            }
            exit::OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
