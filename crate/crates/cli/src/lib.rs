//! Command-line front end for the `urom` solver.
//!
//! Each subcommand lives in its own module and exposes a library entry point
//! next to its `execute` function, so tests can drive runs without spawning
//! the binary.

pub mod check;
pub mod gcb;
pub mod solve;
pub mod sweep;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use urom::benchmarks::{from_document, parse_instance, BenchmarkInstance};
use urom::problem::ProblemDocument;
use urom::solver::SolverConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_MAX_ITERS: i32 = 2;
pub const EXIT_INNER_FAILURE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "urom", version, about = "Universal reduced-operator method for composite variational inequalities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one solve and write trace.csv and summary.json.
    Solve(solve::SolveArgs),
    /// Solve over a decreasing list of targets and fit the iteration exponent.
    Sweep(sweep::SweepArgs),
    /// Estimate the curvature profile of an instance and check its smoothings.
    Gcb(gcb::GcbArgs),
    /// Run the invariant suites and print a pass/fail table.
    Check(check::CheckArgs),
}

/// Problem selection shared by the commands that need one.
#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Instance spec, e.g. `power_potential:n=10,nu=0.5,set=ball:D=2`.
    #[arg(required_unless_present = "config")]
    pub instance: Option<String>,
    /// JSON problem document `{space, set, oracle}` used instead of a spec.
    #[arg(long, conflicts_with = "instance")]
    pub config: Option<PathBuf>,
}

impl ProblemArgs {
    pub fn from_spec(spec: &str) -> Self {
        Self { instance: Some(spec.into()), config: None }
    }

    /// Name echoed into outputs.
    pub fn label(&self) -> String {
        match (&self.instance, &self.config) {
            (Some(spec), _) => spec.clone(),
            (None, Some(path)) => path.display().to_string(),
            (None, None) => String::new(),
        }
    }

    pub fn load(&self) -> Result<BenchmarkInstance> {
        if let Some(spec) = &self.instance {
            return parse_instance(spec).map_err(|e| Usage(e.to_string()).into());
        }
        let path = self.config.as_ref().ok_or_else(|| Usage("an instance spec or --config is required".into()))?;
        let text = fs::read_to_string(path).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
        let doc: ProblemDocument =
            serde_json::from_str(&text).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
        from_document(&doc).map_err(|e| Usage(e.to_string()).into())
    }
}

/// Initial regularization: a number or `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum M0 {
    Auto,
    Value(f64),
}

impl std::str::FromStr for M0 {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Self::Value(v)),
            _ => Err(format!("expected a positive number or `auto`, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Order of the Taylor model (1 or 2).
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    /// Target for the reduced operator norm; `0` disables the test.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Target for the accuracy certificate; `0` disables the test.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Initial regularization `M0`, or `auto`.
    #[arg(long, default_value = "auto")]
    pub m0: M0,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record wall time per iteration in the trace.
    #[arg(long)]
    pub timing: bool,
}

impl Default for SolverArgs {
    fn default() -> Self {
        Self { p: 1, delta: None, eps: None, m0: M0::Auto, max_iters: 10_000, seed: 0, timing: false }
    }
}

impl SolverArgs {
    /// With only `--eps` the δ test is off; with neither flag δ defaults to 1e-4.
    pub fn config(&self) -> Result<SolverConfig> {
        let defaults = SolverConfig::default();
        let (delta, epsilon) = match (self.delta, self.eps) {
            (None, None) => (defaults.delta, 0.0),
            (Some(d), None) => (d, 0.0),
            (None, Some(e)) => (0.0, e),
            (Some(d), Some(e)) => (d, e),
        };
        for (name, v) in [("delta", delta), ("eps", epsilon)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Usage(format!("--{name} must be a finite non-negative number")).into());
            }
        }
        if delta == 0.0 && epsilon == 0.0 {
            return Err(Usage("--delta and --eps cannot both be zero".into()).into());
        }
        if !(1..=2).contains(&self.p) {
            return Err(Usage(format!("--p must be 1 or 2, got {}", self.p)).into());
        }
        Ok(SolverConfig {
            p: self.p,
            delta,
            epsilon,
            m0: match self.m0 {
                M0::Auto => None,
                M0::Value(v) => Some(v),
            },
            max_outer_iters: self.max_iters,
            seed: self.seed,
            timing: self.timing,
            ..defaults
        })
    }
}

/// Error that maps to the usage exit code.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Exit code for an error escaping a command.
pub fn error_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<urom::Error>() {
        Some(
            urom::Error::Spec(_)
            | urom::Error::InvalidParameter(_)
            | urom::Error::Unsupported(_)
            | urom::Error::DimensionMismatch { .. }
            | urom::Error::UnboundedSet(_)
            | urom::Error::OrderTooHigh { .. },
        ) => EXIT_USAGE,
        _ => EXIT_CHECK_FAILED,
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(args) => solve::execute(&args),
        Command::Sweep(args) => sweep::execute(&args),
        Command::Gcb(args) => gcb::execute(&args),
        Command::Check(args) => check::execute(&args),
    }
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(dir, name, &text)
}

/// Seconds since the Unix epoch; only ever written to summary.json.
pub(crate) fn timestamp() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}
