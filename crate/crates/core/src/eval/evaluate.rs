use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bootstrap, mbe_log, rmse_log, split_high_axis, split_kfold, Split, SplitKind, SplitSpec};
use crate::error::EvalError;
use crate::fit::{fit, FitConfig};
use crate::forms::{predict, FormId, FormParams};
use crate::gridio::Grid;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Bootstrap resamples for the holdout RMSE of single-split protocols.
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub n: f64,
    pub d: f64,
    pub t: f64,
    pub observed: f64,
    pub predicted: f64,
    /// `ln predicted - ln observed`
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// Result of one form under one protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub form: FormId,
    pub protocol: String,
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub rmse_log: Option<f64>,
    pub mbe_log: Option<f64>,
    pub train_size: usize,
    pub holdout_size: usize,
    /// Bootstrap std of the holdout RMSE, or the cross-fold std for k-fold.
    pub boot_std: Option<f64>,
    /// Fitted parameters; the last fold's for k-fold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<FormParams>,
    pub residuals: Vec<Residual>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub grid: String,
    pub cells: Vec<EvalCell>,
}

impl EvalReport {
    pub fn cell(&self, form: FormId, protocol: &str) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.form == form && c.protocol == protocol)
    }

    /// One row per form, protocol and metric.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["form", "protocol", "metric", "value"])?;
        for c in &self.cells {
            let metrics = [
                ("rmse_log", c.rmse_log),
                ("mbe_log", c.mbe_log),
                ("boot_std", c.boot_std),
                ("holdout_size", Some(c.holdout_size as f64)),
                ("train_size", Some(c.train_size as f64)),
            ];
            for (m, v) in metrics {
                let v = v.map(|v| v.to_string()).unwrap_or_default();
                w.write_record([c.form.as_str(), &c.protocol, m, &v])?;
            }
            if c.status == CellStatus::Failed {
                w.write_record([c.form.as_str(), &c.protocol, "status", "failed"])?;
            }
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
    }

    /// One row per form and protocol:
    /// `form, protocol, status, rmse_log, mbe_log, n_train, n_holdout, boot_std`.
    pub fn to_table_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["form", "protocol", "status", "rmse_log", "mbe_log", "n_train", "n_holdout", "boot_std"])?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for c in &self.cells {
            let status = match c.status {
                CellStatus::Ok => "ok",
                CellStatus::Failed => "failed",
            };
            w.write_record([
                c.form.as_str().to_string(),
                c.protocol.clone(),
                status.to_string(),
                opt(c.rmse_log),
                opt(c.mbe_log),
                c.train_size.to_string(),
                c.holdout_size.to_string(),
                opt(c.boot_std),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
    }

    /// Observed-versus-predicted rows for every cell.
    pub fn residuals_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["form", "protocol", "n", "d", "t", "observed", "predicted", "residual"])?;
        for c in &self.cells {
            for r in &c.residuals {
                w.write_record([
                    c.form.as_str().to_string(),
                    c.protocol.clone(),
                    r.n.to_string(),
                    r.d.to_string(),
                    r.t.to_string(),
                    r.observed.to_string(),
                    r.predicted.to_string(),
                    r.residual.to_string(),
                ])?;
            }
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
    }
}

struct Scored {
    rmse: f64,
    mbe: f64,
    residuals: Vec<Residual>,
}

fn score(params: &FormParams, grid: &Grid, cfg: &FitConfig) -> Result<Scored, EvalError> {
    let ctx = cfg.context(grid.l0());
    let mut preds = Vec::with_capacity(grid.len());
    for p in grid.points() {
        preds.push(predict(params, &p, &ctx).map_err(|e| EvalError::Fit(e.into()))?);
    }
    let obs: Vec<f64> = grid.losses().collect();
    let residuals = grid
        .records()
        .iter()
        .zip(&preds)
        .map(|(r, &p)| Residual { n: r.n, d: r.d, t: r.t, observed: r.loss, predicted: p, residual: p.ln() - r.loss.ln() })
        .collect();
    Ok(Scored { rmse: rmse_log(&preds, &obs)?, mbe: mbe_log(&preds, &obs)?, residuals })
}

fn failed(form: FormId, protocol: String, train: usize, holdout: usize, err: EvalError) -> EvalCell {
    EvalCell {
        form,
        protocol,
        status: CellStatus::Failed,
        error: Some(err.to_string()),
        rmse_log: None,
        mbe_log: None,
        train_size: train,
        holdout_size: holdout,
        boot_std: None,
        params: None,
        residuals: Vec::new(),
    }
}

fn single_split(
    form: FormId,
    grid: &Grid,
    split: &Split,
    label: String,
    cfg: &FitConfig,
    opts: &EvalOptions,
) -> EvalCell {
    let train = grid.subset(&split.train);
    let hold = grid.subset(&split.holdout);
    let run = || -> Result<EvalCell, EvalError> {
        let fitted = fit(form, &train, cfg)?;
        let s = score(&fitted.params, &hold, cfg)?;
        let boot_std = match opts.bootstrap {
            Some(b) => bootstrap(&fitted, &train, Some(&hold), cfg, b, cfg.seed)?.metrics.get("rmse_log").map(|i| i.std),
            None => None,
        };
        Ok(EvalCell {
            form,
            protocol: label.clone(),
            status: CellStatus::Ok,
            error: None,
            rmse_log: Some(s.rmse),
            mbe_log: Some(s.mbe),
            train_size: train.len(),
            holdout_size: hold.len(),
            boot_std,
            params: Some(fitted.params),
            residuals: s.residuals,
        })
    };
    run().unwrap_or_else(|e| failed(form, label.clone(), train.len(), hold.len(), e))
}

fn kfold_cell(form: FormId, grid: &Grid, spec: &SplitSpec, cfg: &FitConfig) -> EvalCell {
    let label = spec.label();
    let folds = match split_kfold(grid.len(), spec.k, spec.seed) {
        Ok(f) => f,
        Err(e) => return failed(form, label, 0, 0, e),
    };
    let mut rmses = Vec::new();
    let mut mbes = Vec::new();
    let mut residuals = Vec::new();
    let mut last = None;
    for split in &folds {
        let train = grid.subset(&split.train);
        let hold = grid.subset(&split.holdout);
        let fitted = match fit(form, &train, cfg) {
            Ok(f) => f,
            Err(e) => return failed(form, label, grid.len(), grid.len(), e.into()),
        };
        match score(&fitted.params, &hold, cfg) {
            Ok(s) => {
                rmses.push(s.rmse);
                mbes.push(s.mbe);
                residuals.extend(s.residuals);
            }
            Err(e) => return failed(form, label, grid.len(), grid.len(), e),
        }
        last = Some(fitted.params);
    }
    let k = rmses.len() as f64;
    let mean = rmses.iter().sum::<f64>() / k;
    let std = (rmses.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0)).sqrt();
    EvalCell {
        form,
        protocol: label,
        status: CellStatus::Ok,
        error: None,
        rmse_log: Some(mean),
        mbe_log: Some(mbes.iter().sum::<f64>() / k),
        train_size: grid.len() - grid.len() / spec.k,
        holdout_size: grid.len(),
        boot_std: Some(std),
        params: last,
        residuals,
    }
}

/// Fits and scores every form under every protocol.
///
/// A failing cell is reported with [`CellStatus::Failed`] and does not
/// stop the others.
pub fn evaluate(forms: &[FormId], grid: &Grid, protocols: &[SplitSpec], cfg: &FitConfig, opts: &EvalOptions) -> EvalReport {
    let work: Vec<(FormId, SplitSpec)> =
        forms.iter().flat_map(|&f| protocols.iter().map(move |&p| (f, p))).collect();
    let cells = work
        .par_iter()
        .map(|(form, spec)| match spec.kind {
            SplitKind::Kfold => kfold_cell(*form, grid, spec, cfg),
            SplitKind::InSample => {
                let all: Vec<usize> = (0..grid.len()).collect();
                single_split(*form, grid, &Split { train: all.clone(), holdout: all }, spec.label(), cfg, opts)
            }
            SplitKind::HighAxis => match split_high_axis(grid, spec.axis, spec.fraction, cfg.k) {
                Ok(split) => single_split(*form, grid, &split, spec.label(), cfg, opts),
                Err(e) => failed(*form, spec.label(), 0, 0, e),
            },
        })
        .collect();
    EvalReport { grid: grid.name().to_string(), cells }
}
