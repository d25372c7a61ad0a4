//! Command-line front end: `run <config.json>`, `list-problems`, `check`.
//!
//! Exit codes: 0 success, 1 I/O failure or failed check, 2 invalid
//! arguments or config, 3 at least one cell failed (reports still written).

pub mod checks;
mod config;

pub use config::{ConfigError, DirectionConfig, OutputConfig, RunConfig, RunPlan, Selection, SolverConfig};

use crate::problems::Registry;
use crate::stability::{self, SlopeOutcome, StabilityReport};
use clap::{Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CELL_ERROR: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "implicit-stability", version, about = "Error propagation into tangents and adjoints of implicit functions")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the stability sweep described by a JSON config.
    Run { config: PathBuf },
    /// List the registered problems.
    ListProblems,
    /// Run the invariant suite and report pass/fail per invariant.
    Check {
        #[arg(long, hide = true, default_value_t = 1.0, allow_hyphen_values = true)]
        tolerance_scale: f64,
    },
}

pub fn cmd_run(config_path: &Path, quiet: bool) -> i32 {
    let config = match RunConfig::load(config_path) {
        Ok(c) => c,
        Err(e @ ConfigError::Read { .. }) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let base = config_path.parent().unwrap_or(Path::new("."));
    let plan = match config.plan(base) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    if !quiet {
        println!("running {} cells", plan.cells.len());
    }
    let report = StabilityReport::from_outcomes(stability::run_cells(plan.cells));
    if let Err(e) = report
        .write_csv(&plan.output.csv_path)
        .and_then(|_| report.write_json(&plan.output.json_path))
    {
        eprintln!("error: writing reports: {e}");
        return EXIT_FAILURE;
    }

    for row in report.rows.iter().filter(|r| r.message.is_some()) {
        eprintln!(
            "{}: {}/{} eps={:e} {}: {}",
            row.status.as_str(),
            row.problem,
            row.quantity,
            row.epsilon,
            row.direction,
            row.message.as_deref().unwrap_or_default()
        );
    }
    if !quiet {
        summarize(&report, &plan.output);
    }
    if report.error_count() > 0 {
        EXIT_CELL_ERROR
    } else {
        EXIT_OK
    }
}

fn summarize(report: &StabilityReport, output: &OutputConfig) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{} rows ({} errors), wrote {} and {}",
        report.rows.len(),
        report.error_count(),
        output.csv_path.display(),
        output.json_path.display()
    );
    for s in &report.slopes {
        let what = match s.outcome {
            SlopeOutcome::Fitted { slope, .. } => format!("slope {slope:.4}"),
            SlopeOutcome::Degenerate => "degenerate".to_string(),
            SlopeOutcome::InsufficientData { usable } => format!("insufficient data ({usable} usable rows)"),
        };
        let _ = writeln!(out, "  {:<16} {:<18} {:<28} {what}", s.problem, s.quantity, s.direction);
    }
}

pub fn cmd_list() -> i32 {
    let registry = Registry::builtin();
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{:<16} {:<18} {:>3} {:>3}  description", "name", "kind", "n", "m");
    for spec in registry.iter() {
        let (n, m) = spec.dims();
        let _ = writeln!(
            out,
            "{:<16} {:<18} {:>3} {:>3}  {}",
            spec.name,
            spec.kind.as_str(),
            n,
            m,
            spec.description
        );
    }
    EXIT_OK
}

pub fn cmd_check(tolerance_scale: f64, quiet: bool) -> i32 {
    let outcomes = checks::run_checks(tolerance_scale);
    let mut out = std::io::stdout().lock();
    for c in &outcomes {
        if !quiet || !c.passed {
            let _ = writeln!(out, "{} {:<30} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    if !quiet {
        let _ = writeln!(out, "{} of {} invariants passed", outcomes.len() - failed, outcomes.len());
    }
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

/// Parses arguments and runs the selected command on a pool of the
/// requested size; returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return EXIT_INVALID;
        }
        Some(n) => builder = builder.num_threads(n),
        None => {}
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_FAILURE;
        }
    };
    pool.install(|| match &cli.command {
        Command::Run { config } => cmd_run(config, cli.quiet),
        Command::ListProblems => cmd_list(),
        Command::Check { tolerance_scale } => cmd_check(*tolerance_scale, cli.quiet),
    })
}
