use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mbe_log, rmse_log};
use crate::error::EvalError;
use crate::fit::{restart_rng, warm_refit, FitConfig, FitResult};
use crate::forms::predict;
use crate::gridio::Grid;

/// Spread of one bootstrapped quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub std: f64,
    pub q025: f64,
    pub q975: f64,
}

impl Interval {
    fn from_samples(mut v: Vec<f64>) -> Interval {
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        Interval { mean, std, q025: quantile(&v, 0.025), q975: quantile(&v, 0.975) }
    }

    pub fn width(&self) -> f64 {
        self.q975 - self.q025
    }
}

/// Linear-interpolation quantile of already sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub resamples: usize,
    pub failed: usize,
    pub params: BTreeMap<String, Interval>,
    /// Derived metrics such as holdout `rmse_log` and `mbe_log`.
    pub metrics: BTreeMap<String, Interval>,
}

/// Row-resampling bootstrap around a point estimate.
///
/// Each of `b` resamples draws `|train|` rows with replacement and refits
/// from `point` with a single warm-started minimization. When `holdout` is
/// given, its log RMSE and MBE are bootstrapped too.
pub fn bootstrap(
    point: &FitResult,
    train: &Grid,
    holdout: Option<&Grid>,
    cfg: &FitConfig,
    b: usize,
    seed: u64,
) -> Result<BootstrapReport, EvalError> {
    if b == 0 {
        return Err(EvalError::Split("bootstrap needs at least one resample".into()));
    }
    let n = train.len();
    let fits: Vec<Option<FitResult>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = restart_rng(seed, i);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            warm_refit(&train.subset(&rows), &point.params, cfg).ok()
        })
        .collect();
    let ok: Vec<&FitResult> = fits.iter().flatten().collect();
    let failed = b - ok.len();
    if failed * 2 > b || ok.is_empty() {
        return Err(EvalError::BootstrapFailure { failed, total: b });
    }
    let names = point.form().param_names();
    let params = names
        .iter()
        .enumerate()
        .map(|(j, name)| (name.to_string(), Interval::from_samples(ok.iter().map(|f| f.params.values[j]).collect())))
        .collect();
    let mut metrics = BTreeMap::new();
    if let Some(h) = holdout {
        let obs: Vec<f64> = h.losses().collect();
        let mut rm = Vec::with_capacity(ok.len());
        let mut mb = Vec::with_capacity(ok.len());
        for f in &ok {
            let preds: Option<Vec<f64>> = h.points().map(|p| predict(&f.params, &p, &f.context).ok()).collect();
            if let Some(preds) = preds {
                rm.push(rmse_log(&preds, &obs)?);
                mb.push(mbe_log(&preds, &obs)?);
            }
        }
        if !rm.is_empty() {
            metrics.insert("rmse_log".to_string(), Interval::from_samples(rm));
            metrics.insert("mbe_log".to_string(), Interval::from_samples(mb));
        }
    }
    Ok(BootstrapReport { resamples: b, failed, params, metrics })
}
