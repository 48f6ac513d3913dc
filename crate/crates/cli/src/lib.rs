//! Command-line front end for `ssp-core`.
//!
//! Exit codes: 0 success, 1 a verification or cross-check failed, 2 the
//! command line or an input file could not be parsed, 3 the input parsed but
//! is not a valid instance or request.

pub mod codec;
pub mod commands;
pub mod presets;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Failed(_) => 1,
        }
    }
}

impl From<ssp_core::Error> for CliError {
    fn from(e: ssp_core::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "ssp", version, about = "Stochastic shortest path planning, bounds and learning")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Convergence tolerance (sup norm between iterates).
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

/// Instance source: a JSON file or a bundled preset.
#[derive(Debug, Clone, Args)]
pub struct Source {
    /// Instance file.
    pub file: Option<PathBuf>,
    /// Bundled instance (one-state, chain, multi-action, benchmark, trap, ex1, slow, oscillation, witness, sup-table).
    #[arg(long, conflicts_with = "file")]
    pub preset: Option<String>,
}

/// Replace the file's confidence set with a uniform ball around its rows.
#[derive(Debug, Clone, Args)]
pub struct ConfidenceOverride {
    /// Divergence: l1, sup, kl, reverse-kl, chi2, var-linf.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlanMethod {
    Vi,
    Pi,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal values and policy by value/policy iteration, with the duality gap.
    Plan {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = PlanMethod::Both)]
        method: PlanMethod,
    },
    /// Extended value iteration over the instance's confidence set.
    Evi {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        confidence: ConfidenceOverride,
    },
    /// Exact, grid-oracle and closed-form bonus values at one (s, a, x).
    Bounds {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        confidence: ConfidenceOverride,
        /// Centre row given directly instead of an instance, e.g. 0.5,0.1.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["file", "preset"])]
        row: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        state: usize,
        /// Action position within the state.
        #[arg(long, default_value_t = 0)]
        action: usize,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x: Vec<f64>,
        /// Grid-oracle steps per unit of probability.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Iterate the clamped bound operator; optionally export the trace or an arrow field.
    Dagger {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        confidence: ConfidenceOverride,
        /// Figure grid: fig2, fig3, fig4, fig5, oscillation.
        #[arg(long, conflicts_with_all = ["file", "preset"])]
        figure: Option<String>,
        #[arg(long, default_value = "l1-dagger")]
        variant: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long)]
        trace: bool,
        /// lo:hi:steps
        #[arg(long, allow_hyphen_values = true)]
        arrow_field: Option<String>,
        /// cost: c + max(tail, 0); zero: max(c + tail, 0).
        #[arg(long, default_value = "cost")]
        floor: String,
    },
    /// Piece-by-piece analysis of a two-state single-policy instance.
    TwoState {
        /// ex1, slow, oscillation or witness.
        #[arg(long, conflicts_with_all = ["p", "eps", "c"])]
        preset: Option<String>,
        /// p11,p12,p21,p22
        #[arg(long, value_delimiter = ',')]
        p: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        c: Option<Vec<f64>>,
    },
    /// Solve the dagger program by region enumeration and cross-check it.
    Program {
        #[command(flatten)]
        source: Source,
        /// Run the random two-state conjecture harness on this many instances instead.
        #[arg(long, conflicts_with_all = ["file", "preset"])]
        conjecture: Option<usize>,
        #[arg(long, default_value_t = 2000)]
        resolution: usize,
    },
    /// Simulate the optimistic learner or the greedy baseline.
    Learn {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        /// Run the greedy baseline with this exploration probability.
        #[arg(long)]
        greedy: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 10.0)]
        b_star: f64,
        /// l1, zero or const:<value>.
        #[arg(long, default_value = "l1")]
        schedule: String,
        /// exact or a bound variant name.
        #[arg(long, default_value = "exact")]
        planner: String,
        #[arg(long, default_value = "star")]
        modification: String,
        #[arg(long, default_value = "l1")]
        kind: String,
    },
    /// Run the invariant and oracle suite on the bundled corpus.
    Verify,
}

/// Result of a command: the artifact and whether a check inside it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub body: String,
    pub failed: bool,
}

impl Output {
    pub fn ok(body: String) -> Self {
        Output { body, failed: false }
    }
}

/// Parse `argv`, run the command and write its artifact. Returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    return 0;
                }
                _ => 2,
            };
            let _ = write!(stderr, "{}", e.render());
            return code;
        }
    };
    let result = commands::execute(&cli).and_then(|out| {
        match &cli.global.out {
            Some(path) => std::fs::write(path, &out.body)
                .map_err(|e| CliError::Validation(format!("--out {}: {e}", path.display())))?,
            None => stdout.write_all(out.body.as_bytes()).map_err(|e| CliError::Failed(format!("stdout: {e}")))?,
        }
        Ok(out)
    });
    match result {
        Ok(out) if out.failed => {
            let _ = writeln!(stderr, "one or more checks failed");
            1
        }
        Ok(_) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
