use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use satlaw::error::{FitError, FormError};
use satlaw::fit::{FitConfig, FitResult};
use satlaw::forms::{FormId, FormParams, OursParams};
use satlaw::gridio::{baseline_l0, load_grid, AggregateMode, Grid, LoadOptions, LossKind, Preprocess, Schema};

use crate::output::Manifest;

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Grid as CSV (columns n, d, t or epochs, loss) or as grid JSON.
    #[arg(long)]
    pub grid: PathBuf,
    /// TOML map from logical fields to CSV headers.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Uninformed-baseline loss; derived from the loss kind when omitted.
    #[arg(long)]
    pub l0: Option<f64>,
    #[arg(long, default_value = "cross-entropy")]
    pub loss_kind: String,
    /// Number of outcomes for cross-entropy (l0 = ln K).
    #[arg(long)]
    pub k_outcomes: Option<f64>,
    /// Dataset name; defaults to the file stem.
    #[arg(long)]
    pub name: Option<String>,
    /// Replicate aggregation: mean, min or none.
    #[arg(long, default_value = "mean")]
    pub aggregate: String,
    /// Keep d above t instead of capping unique data at the examples seen.
    #[arg(long)]
    pub no_cap: bool,
    #[arg(long, default_value_t = 0.01)]
    pub clip_margin: f64,
}

impl GridArgs {
    pub fn load(&self, manifest: &mut Manifest) -> Result<Grid> {
        manifest.input(&self.grid)?;
        if self.grid.extension().is_some_and(|e| e == "json") {
            return Ok(Grid::read_json(&self.grid)?);
        }
        let schema = match &self.schema {
            Some(p) => {
                manifest.input(p)?;
                Schema::from_toml(&read(p)?)?
            }
            None => Schema::default(),
        };
        let kind: LossKind = self.loss_kind.parse()?;
        let l0 = baseline_l0(kind, self.k_outcomes, self.l0)?;
        let name = self
            .name
            .clone()
            .unwrap_or_else(|| self.grid.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        let aggregate = match self.aggregate.as_str() {
            "none" => None,
            s => Some(s.parse::<AggregateMode>()?),
        };
        let mut opts = LoadOptions::new(name, l0, kind);
        opts.preprocess = Preprocess { aggregate, cap_unique_data: !self.no_cap, clip_margin: self.clip_margin };
        let (grid, _) = load_grid(&self.grid, &schema, &opts)?;
        Ok(grid)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// FitConfig TOML; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random restarts (default depends on the form).
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub huber_tau: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Enable the loss-floor hinge prior (saturating forms only).
    #[arg(long)]
    pub e_hinge: bool,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub lambda_per_row: Option<f64>,
    /// FLOPs per parameter-example.
    #[arg(long)]
    pub k: Option<f64>,
}

impl FitArgs {
    pub fn config(&self, manifest: &mut Manifest) -> Result<FitConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                manifest.input(p)?;
                FitConfig::from_toml(&read(p)?)?
            }
            None => FitConfig::default(),
        };
        if let Some(r) = self.restarts {
            cfg.restarts = Some(r);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.huber_tau {
            cfg.huber_tau = t;
        }
        if let Some(m) = self.max_iters {
            cfg.max_iters = m;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if self.e_hinge || self.kappa.is_some() || self.lambda_per_row.is_some() {
            let mut h = cfg.e_hinge.unwrap_or_default();
            if let Some(k) = self.kappa {
                h.kappa = k;
            }
            if let Some(l) = self.lambda_per_row {
                h.lambda_per_row = l;
            }
            cfg.e_hinge = Some(h);
        }
        cfg.validate()?;
        manifest.seed = Some(cfg.seed);
        manifest.config_hash = Some(cfg.hash());
        Ok(cfg)
    }
}

pub fn parse_form(s: &str) -> Result<FormId> {
    Ok(s.parse::<FormId>()?)
}

pub fn parse_forms(s: &str) -> Result<Vec<FormId>> {
    s.split(',').map(|f| parse_form(f.trim())).collect()
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Parameters from a fit result, a bare `{form, params}` object, or either
/// wrapped in a manifest block. Returns the stored `l0` when present.
pub fn load_params(path: &Path, manifest: &mut Manifest) -> Result<(FormParams, Option<f64>)> {
    manifest.input(path)?;
    let mut v: serde_json::Value = serde_json::from_str(&read(path)?)?;
    if let Some(inner) = v.get_mut("result") {
        v = inner.take();
    }
    if v.get("context").is_some() {
        let fit: FitResult = serde_json::from_value(v)?;
        return Ok((fit.params, Some(fit.context.l0)));
    }
    let l0 = v.get("l0").and_then(|x| x.as_f64());
    if let Some(obj) = v.as_object_mut() {
        obj.remove("l0");
    }
    Ok((serde_json::from_value(v)?, l0))
}

pub fn resolve_l0(stored: Option<f64>, flag: Option<f64>) -> Result<f64> {
    match flag.or(stored) {
        Some(l0) => Ok(l0),
        None => bail!(FitError::Config("no l0 stored with the parameters; pass --l0".into())),
    }
}

/// Saturating-law parameters with the rational wrapper.
pub fn ours_params(p: &FormParams) -> Result<OursParams> {
    if !matches!(p.form, FormId::Ours | FormId::OursNoOverfit) {
        bail!(FormError::InvalidParams(format!(
            "this command needs `ours` or `ours-no-overfit` parameters, got `{}`",
            p.form
        )));
    }
    Ok(OursParams::try_from(p)?)
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| anyhow::Error::new(FitError::Config(format!("cannot parse `{x}` as a number"))))
        })
        .collect()
}
