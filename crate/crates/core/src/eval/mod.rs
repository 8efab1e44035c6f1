//! Holdout protocols, log-space metrics and bootstrap intervals.
//!
//! High-axis splits hold out whole groups of rows sharing an axis value,
//! taking groups from the top until at least `fraction` of the rows are
//! held out. K-fold splits are uniform-random partitions.
//!
//! ```
//! use satlaw::eval::{mbe_log, rmse_log};
//! let e = std::f64::consts::E;
//! assert!((rmse_log(&[e], &[1.0]).unwrap() - 1.0).abs() < 1e-15);
//! assert!((mbe_log(&[e], &[1.0]).unwrap() - 1.0).abs() < 1e-15);
//! ```

mod bootstrap;
mod evaluate;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::fit::restart_rng;
use crate::forms::Axis;
use crate::gridio::Grid;

pub use bootstrap::{bootstrap, quantile, BootstrapReport, Interval};
pub use evaluate::{evaluate, CellStatus, EvalCell, EvalOptions, EvalReport, Residual};

/// Train and holdout row indices into a grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    HighAxis,
    Kfold,
    InSample,
}

/// One evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub kind: SplitKind,
    #[serde(default = "default_axis")]
    pub axis: Axis,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_axis() -> Axis {
    Axis::C
}
fn default_fraction() -> f64 {
    0.10
}
fn default_k() -> usize {
    5
}

impl SplitSpec {
    pub fn high(axis: Axis) -> Self {
        SplitSpec { kind: SplitKind::HighAxis, axis, fraction: 0.10, k: 5, seed: 0 }
    }
    pub fn kfold(k: usize, seed: u64) -> Self {
        SplitSpec { kind: SplitKind::Kfold, axis: Axis::C, fraction: 0.10, k, seed }
    }
    pub fn in_sample() -> Self {
        SplitSpec { kind: SplitKind::InSample, axis: Axis::C, fraction: 0.10, k: 5, seed: 0 }
    }

    /// Short label such as `high-c`, `kfold-5` or `in-sample`.
    pub fn label(&self) -> String {
        match self.kind {
            SplitKind::HighAxis => format!("high-{}", self.axis),
            SplitKind::Kfold => format!("kfold-{}", self.k),
            SplitKind::InSample => "in-sample".into(),
        }
    }

    /// Parses `high-c`, `high-d`, `high-n`, `high-t`, `kfold` / `kfold-K` or `in-sample`.
    pub fn parse(s: &str, seed: u64) -> Result<Self, EvalError> {
        if let Some(ax) = s.strip_prefix("high-") {
            let axis = ax.parse::<Axis>().map_err(|e| EvalError::Split(e.to_string()))?;
            return Ok(SplitSpec::high(axis));
        }
        if s == "kfold" {
            return Ok(SplitSpec::kfold(5, seed));
        }
        if let Some(k) = s.strip_prefix("kfold-") {
            let k = k.parse::<usize>().map_err(|_| EvalError::Split(format!("bad fold count in `{s}`")))?;
            return Ok(SplitSpec::kfold(k, seed));
        }
        if s == "in-sample" {
            return Ok(SplitSpec::in_sample());
        }
        Err(EvalError::Split(format!("unknown protocol `{s}` (expected high-<axis>, kfold[-K] or in-sample)")))
    }
}

/// Holds out the largest-`axis` groups until they cover `fraction` of rows.
///
/// The group that crosses the threshold is included, so the holdout can
/// exceed the target share. No group is ever split.
pub fn split_high_axis(grid: &Grid, axis: Axis, fraction: f64, k: f64) -> Result<Split, EvalError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EvalError::Split(format!("fraction {fraction} must lie in (0, 1]")));
    }
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, r) in grid.records().iter().enumerate() {
        let v = r.point().axis_value(axis, k);
        groups.entry(v.to_bits()).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(EvalError::Split(format!("need at least 2 distinct {axis} groups, found {}", groups.len())));
    }
    // Positive floats order like their bit patterns.
    let target = fraction * grid.len() as f64;
    let mut holdout = Vec::new();
    let mut train = Vec::new();
    for (_, rows) in groups.into_iter().rev() {
        if (holdout.len() as f64) < target {
            holdout.extend(rows);
        } else {
            train.extend(rows);
        }
    }
    if train.is_empty() {
        return Err(EvalError::Split(format!("fraction {fraction} leaves no training rows")));
    }
    holdout.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, holdout })
}

/// Uniform-random partition of `len` rows into `k` near-equal folds.
pub fn split_kfold(len: usize, k: usize, seed: u64) -> Result<Vec<Split>, EvalError> {
    if k < 2 {
        return Err(EvalError::Split(format!("k = {k} must be >= 2")));
    }
    if len < k {
        return Err(EvalError::Split(format!("{len} rows cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut restart_rng(seed, 0));
    let mut folds = vec![Vec::new(); k];
    for (pos, &i) in order.iter().enumerate() {
        folds[pos % k].push(i);
    }
    Ok(folds
        .into_iter()
        .map(|mut holdout| {
            holdout.sort_unstable();
            let train = (0..len).filter(|i| holdout.binary_search(i).is_err()).collect();
            Split { train, holdout }
        })
        .collect())
}

fn log_residuals(preds: &[f64], obs: &[f64]) -> Result<Vec<f64>, EvalError> {
    if preds.len() != obs.len() {
        return Err(EvalError::Metric(format!("{} predictions for {} observations", preds.len(), obs.len())));
    }
    if preds.is_empty() {
        return Err(EvalError::Metric("no points to score".into()));
    }
    preds
        .iter()
        .zip(obs)
        .map(|(&p, &o)| {
            if p > 0.0 && o > 0.0 && p.is_finite() && o.is_finite() {
                Ok(p.ln() - o.ln())
            } else {
                Err(EvalError::Metric(format!("non-positive value (prediction {p}, observation {o})")))
            }
        })
        .collect()
}

/// `sqrt(mean((ln p - ln o)^2))`
pub fn rmse_log(preds: &[f64], obs: &[f64]) -> Result<f64, EvalError> {
    let r = log_residuals(preds, obs)?;
    Ok((r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt())
}

/// `mean(ln p - ln o)`
pub fn mbe_log(preds: &[f64], obs: &[f64]) -> Result<f64, EvalError> {
    let r = log_residuals(preds, obs)?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}
