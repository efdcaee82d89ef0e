//! Thin command-line wrapper: `compute`, `verify`, and `explain` over job
//! files.  All substance lives in the library; this binary parses
//! arguments, calls the corresponding operation, echoes the manifest and
//! timing to stderr, and maps errors to exit codes: 0 on success, 1 when
//! a verification check fails, 2 for validation problems, 3 for poles and
//! failed evaluation preconditions.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use bethe_vectors::job::{self, JobError, TOOL_VERSION};

#[derive(Parser)]
#[command(
    name = "bethe",
    version = TOOL_VERSION,
    about = "Exact nested Bethe vectors on tensor products of evaluation modules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the coordinates of a job's weight-function value.
    Compute {
        /// Path to the job file (JSON).
        job: PathBuf,
        /// Path of the result file to write.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a verification suite and write its report.
    Verify {
        /// Suite name: r-matrix, rtt, section5, identities, cross-validate, or all.
        #[arg(long)]
        suite: String,
        /// Random seed for the grid points.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Grid size: small or full.
        #[arg(long, default_value = "small")]
        scale: String,
        /// Path of the report file to write.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write the monomial expansion of a trace-method job.
    Explain {
        /// Path to the job file (JSON).
        job: PathBuf,
        /// Path of the expansion file to write.
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let outcome: Result<ExitCode, JobError> = match &cli.command {
        Command::Compute { job, output } => job::cmd_compute(job, output).map(|manifest| {
            eprintln!(
                "computed {} by {} (tool {}) in {:.2?}",
                manifest.fingerprint,
                manifest.method,
                manifest.tool_version,
                started.elapsed()
            );
            ExitCode::SUCCESS
        }),
        Command::Verify {
            suite,
            seed,
            scale,
            output,
        } => job::cmd_verify(suite, *seed, scale, output).map(|entries| {
            let failures = entries
                .iter()
                .filter(|e| e.verdict == bethe_vectors::Verdict::Fail)
                .count();
            eprintln!(
                "suite {suite} (seed {seed}, scale {scale}, tool {TOOL_VERSION}): {} entries, {failures} failures in {:.2?}",
                entries.len(),
                started.elapsed()
            );
            if failures > 0 {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }),
        Command::Explain { job, output } => job::cmd_explain(job, output).map(|manifest| {
            eprintln!(
                "explained {} (tool {}) in {:.2?}",
                manifest.fingerprint,
                manifest.tool_version,
                started.elapsed()
            );
            ExitCode::SUCCESS
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
