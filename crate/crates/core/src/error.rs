use thiserror::Error;

use crate::alloc::Infeasibility;

/// Which side of the open interval `(e, l0)` a loss value fell on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    /// At or below the irreducible floor `e`.
    Floor,
    /// At or above the uninformed baseline `l0`.
    Ceiling,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("unknown form id `{0}`; valid ids: {1}")]
    UnknownForm(String, String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("loss {loss} outside ({e}, {l0}): violates the {bound:?} bound")]
    OutOfRange { loss: f64, e: f64, l0: f64, bound: Bound },
    #[error("implicit solve failed: {0}")]
    SolverFailure(String),
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("grid is empty")]
    Empty,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("replicate group at (n={n}, d={d}, t={t}) mixes loss kinds")]
    MixedLossKind { n: f64, d: f64, t: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no restart converged ({} attempted)", .restarts.len())]
    NoConvergence { restarts: Vec<crate::fit::RestartStat> },
    #[error(transparent)]
    Form(#[from] FormError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid split: {0}")]
    Split(String),
    #[error("metric inputs: {0}")]
    Metric(String),
    #[error("bootstrap: {failed} of {total} resample fits failed")]
    BootstrapFailure { failed: usize, total: usize },
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Error)]
pub enum AllocError {
    #[error("infeasible target: {0}")]
    Infeasible(Infeasibility),
    #[error("invalid allocation input: {0}")]
    InvalidInput(String),
    #[error("no interior minimum: {0}")]
    NoInteriorMinimum(String),
    #[error("solver did not converge after {iterations} iterations (foc residual {residual:e}, last iterate n={n:e} d={d:e} t={t:e})")]
    NoConvergence { iterations: usize, residual: f64, n: f64, d: f64, t: f64 },
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
}
