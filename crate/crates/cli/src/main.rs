//! `satlaw` command-line front end.
//!
//! Exit codes: 0 ok, 2 configuration or input error, 3 fit or solver
//! failure, 4 infeasible allocation, 5 I/O. Failures print a JSON object
//! on stderr.

mod commands;
mod inputs;
mod output;

use std::process::ExitCode;

use clap::Parser;
use satlaw::error::{AllocError, EvalError, FitError, FormError, GridError, VerifyError};

#[derive(Debug, Parser)]
#[command(name = "satlaw", version, about = "Fit, evaluate and allocate with saturating scaling laws")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SATLAW_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.workers.filter(|&n| n > 0) {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = classify(&err);
            let chain: Vec<String> = err.chain().map(|e| e.to_string()).collect();
            let body = serde_json::json!({
                "error": { "kind": kind, "code": code, "message": err.to_string(), "chain": chain }
            });
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}

/// Maps an error chain to an exit code and a short kind label.
fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<AllocError>() {
            return match e {
                AllocError::Infeasible(_) | AllocError::NoInteriorMinimum(_) => (4, "infeasible"),
                AllocError::NoConvergence { .. } => (3, "solver"),
                AllocError::InvalidInput(_) => (2, "config"),
            };
        }
        if let Some(e) = cause.downcast_ref::<FitError>() {
            return match e {
                FitError::Config(_) | FitError::Form(_) => (2, "config"),
                FitError::NoConvergence { .. } => (3, "fit"),
            };
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::Fit(FitError::NoConvergence { .. }) | EvalError::BootstrapFailure { .. } => (3, "fit"),
                _ => (2, "config"),
            };
        }
        if let Some(e) = cause.downcast_ref::<GridError>() {
            return match e {
                GridError::Io(_) => (5, "io"),
                _ => (2, "config"),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (5, "io");
        }
        if cause.downcast_ref::<FormError>().is_some()
            || cause.downcast_ref::<VerifyError>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
        {
            return (2, "config");
        }
    }
    (2, "config")
}
