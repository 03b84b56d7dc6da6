mod commands;
mod input;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wds_sir::io::Format;

/// Feasible demand regions of tree-shaped water networks.
///
/// `<INPUT>` is a network file (`.toml`), an INP file (`.inp`) or the name
/// of a bundled network (`system1`, `system2`).
#[derive(Debug, Parser)]
#[command(name = "wds-sir", version)]
pub struct Cli {
    /// Machine-readable JSON on standard output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Leave wall-clock timings out of all output.
    #[arg(long, global = true)]
    pub no_timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Region {
    /// Variable node ids, overriding the file's `[sir]` block.
    #[arg(long, value_delimiter = ',')]
    pub vars: Option<Vec<String>>,
    /// Expansion rounds, overriding the file's `[sir]` block.
    #[arg(long)]
    pub rounds: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a network.
    Validate { input: String },
    /// Choose pump statuses at the nominal demands.
    Ops { input: String },
    /// Build the inner polytope sequence.
    Sir {
        input: String,
        #[command(flatten)]
        region: Region,
        /// Run directory for the artifacts.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Feasibility verdict and polytope membership of one demand vector.
    Check {
        input: String,
        /// Demands (L/s) of the variable nodes, in order.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        demand: Vec<f64>,
        #[command(flatten)]
        region: Region,
    },
    /// Brute-force feasibility screen on a regular grid.
    Grid {
        input: String,
        /// Points per axis.
        #[arg(long)]
        k: Option<usize>,
        /// Per-axis ranges `lo:hi`, comma separated.
        #[arg(long, value_delimiter = ',', value_parser = parse_range)]
        ranges: Option<Vec<(f64, f64)>>,
        #[command(flatten)]
        region: Region,
        /// Run directory to store `grid.json` in.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random convexity test on feasible pairs.
    Probe {
        input: String,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', value_parser = parse_range)]
        ranges: Option<Vec<(f64, f64)>>,
        #[command(flatten)]
        region: Region,
    },
    /// Render an artifact of a run directory.
    Export {
        run_dir: PathBuf,
        #[arg(long, value_enum)]
        what: What,
        #[arg(long, value_parser = parse_format)]
        format: Format,
        /// Polytope index for `--what polytope`; the last one by default.
        #[arg(long)]
        index: Option<usize>,
        /// Output file; standard output by default.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum What {
    Sequence,
    Polytope,
    Timing,
    Grid,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got '{s}'"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number '{t}'"));
    let (lo, hi) = (num(lo)?, num(hi)?);
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(format!("empty range '{s}'"));
    }
    Ok((lo, hi))
}

fn parse_format(s: &str) -> Result<Format, String> {
    Format::parse(s).ok_or_else(|| format!("unknown format '{s}' (json, csv, off, svg)"))
}

/// Why a command stopped short of success.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments; exit 2.
    Usage(String),
    /// Findings already reported on standard output; exit 1.
    Finding,
    /// Any other failure; exit 1.
    Error(String),
}

impl From<wds_sir::Error> for Failure {
    fn from(e: wds_sir::Error) -> Self {
        Self::Error(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Finding) => ExitCode::from(1),
        Err(Failure::Error(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
