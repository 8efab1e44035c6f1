//! Robust multistart fitting of any registered form to a grid.
//!
//! The objective is the Huber penalty on log residuals
//! `ln predict - ln loss`, optionally plus a one-sided hinge on the loss
//! floor for wrapper forms. Each restart draws a starting point, maps it to
//! unconstrained coordinates and runs BFGS with exact forward-mode
//! gradients. Restarts that do not converge are discarded and the lowest
//! objective wins.
//!
//! Restart `i` always draws from the stream `(seed, i)`, so results do not
//! depend on how many worker threads run them.

mod bfgs;
mod init;
mod objective;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::FitError;
use crate::forms::{from_unconstrained, to_unconstrained, Axis, EvalContext, FormId, FormParams};
use crate::gridio::{Grid, DEFAULT_CLIP_MARGIN};

pub use bfgs::{minimize, BfgsOptions, BfgsOutcome};
pub use init::{restart_rng, sample_init, InitRanges};
pub use objective::{e_hinge_penalty, huber};

use objective::{Hinge, Problem};

/// Restarts used when the configuration leaves the count unset.
pub fn default_restarts(form: FormId) -> usize {
    if form == FormId::Farseer {
        200
    } else {
        30
    }
}

/// Settings of the loss-floor hinge prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EHinge {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Hinge weight per training row.
    #[serde(default = "default_lambda_per_row")]
    pub lambda_per_row: f64,
}

fn default_kappa() -> f64 {
    1.5
}
fn default_lambda_per_row() -> f64 {
    0.25
}

impl Default for EHinge {
    fn default() -> Self {
        EHinge { kappa: 1.5, lambda_per_row: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// `None` uses [`default_restarts`].
    pub restarts: Option<usize>,
    pub huber_tau: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub init: InitRanges,
    pub e_hinge: Option<EHinge>,
    pub farseer_anchor: Option<Vec<f64>>,
    pub m4_axis: Axis,
    pub bnsl_axis: Axis,
    /// FLOPs per parameter-example when compute is derived.
    pub k: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: None,
            huber_tau: 0.05,
            max_iters: 500,
            grad_tol: 1e-8,
            seed: 0,
            init: InitRanges::default(),
            e_hinge: None,
            farseer_anchor: None,
            m4_axis: Axis::D,
            bnsl_axis: Axis::C,
            k: 6.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.restarts == Some(0) {
            return Err(FitError::Config("restarts must be >= 1".into()));
        }
        if !(self.huber_tau > 0.0 && self.huber_tau.is_finite()) {
            return Err(FitError::Config(format!("huber_tau = {} must be > 0", self.huber_tau)));
        }
        if !(self.grad_tol > 0.0) || self.max_iters == 0 {
            return Err(FitError::Config("grad_tol must be > 0 and max_iters >= 1".into()));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(FitError::Config(format!("k = {} must be > 0", self.k)));
        }
        if let Some(h) = self.e_hinge {
            if !(h.kappa > 1.0 && h.lambda_per_row >= 0.0 && h.lambda_per_row.is_finite()) {
                return Err(FitError::Config(format!(
                    "hinge needs kappa > 1 and lambda_per_row >= 0 (kappa = {}, lambda_per_row = {})",
                    h.kappa, h.lambda_per_row
                )));
            }
        }
        Ok(())
    }

    pub fn context(&self, l0: f64) -> EvalContext {
        EvalContext { l0, m4_axis: self.m4_axis, bnsl_axis: self.bnsl_axis, k: self.k }
    }

    pub fn from_toml(s: &str) -> Result<FitConfig, FitError> {
        let cfg: FitConfig = toml::from_str(s).map_err(|e| FitError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn bfgs(&self) -> BfgsOptions {
        BfgsOptions { max_iters: self.max_iters, grad_tol: self.grad_tol, ..BfgsOptions::default() }
    }
}

/// Outcome of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartStat {
    pub index: usize,
    pub converged: bool,
    /// `None` when the restart never reached a finite objective.
    pub objective: Option<f64>,
    pub iterations: usize,
    pub grad_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub params: FormParams,
    pub objective: f64,
    pub restarts: Vec<RestartStat>,
    pub clipped_rows: usize,
    pub seed: u64,
    pub grid: String,
    pub config_hash: String,
    pub context: EvalContext,
}

impl FitResult {
    pub fn form(&self) -> FormId {
        self.params.form
    }

    pub fn converged_restarts(&self) -> usize {
        self.restarts.iter().filter(|r| r.converged).count()
    }
}

fn problem(form: FormId, grid: &Grid, cfg: &FitConfig) -> Result<Problem, FitError> {
    cfg.validate()?;
    let hinge = match cfg.e_hinge {
        None => None,
        Some(_) if !form.is_wrapper_form() => {
            return Err(FitError::Config(format!(
                "the loss-floor hinge applies only to saturating-wrapper forms, not {form}"
            )))
        }
        Some(h) => Some(Hinge {
            index: form.floor_index().expect("wrapper forms have a floor"),
            m: grid.losses().fold(f64::INFINITY, f64::min),
            kappa: h.kappa,
            lambda: h.lambda_per_row * grid.len() as f64,
        }),
    };
    Ok(Problem {
        form,
        ctx: cfg.context(grid.l0()),
        points: grid.points().collect(),
        log_losses: grid.losses().map(f64::ln).collect(),
        tau: cfg.huber_tau,
        hinge,
    })
}

/// Objective value at constrained parameters.
pub fn objective(params: &FormParams, grid: &Grid, cfg: &FitConfig) -> Result<f64, FitError> {
    params.validate()?;
    let p = problem(params.form, grid, cfg)?;
    p.value(&params.values).ok_or_else(|| {
        FitError::Form(crate::error::FormError::InvalidParams(format!(
            "{} produced a non-positive or non-finite prediction on grid {}",
            params.form,
            grid.name()
        )))
    })
}

/// Objective and its exact gradient in unconstrained coordinates.
/// Returns an infinite value outside the form's domain.
pub fn objective_gradient(form: FormId, x: &[f64], grid: &Grid, cfg: &FitConfig) -> Result<(f64, Vec<f64>), FitError> {
    check_len(form, x)?;
    Ok(problem(form, grid, cfg)?.value_grad(x))
}

/// Objective in unconstrained coordinates, evaluated in plain `f64`.
pub fn objective_unconstrained(form: FormId, x: &[f64], grid: &Grid, cfg: &FitConfig) -> Result<f64, FitError> {
    check_len(form, x)?;
    Ok(problem(form, grid, cfg)?.value_unconstrained(x))
}

fn check_len(form: FormId, x: &[f64]) -> Result<(), FitError> {
    if x.len() != form.n_params() {
        return Err(FitError::Config(format!("{form} takes {} coordinates, got {}", form.n_params(), x.len())));
    }
    Ok(())
}

struct RunOutcome {
    stat: RestartStat,
    params: Option<FormParams>,
}

fn run_from(p: &Problem, index: usize, x0: &[f64], opts: &BfgsOptions) -> RunOutcome {
    let out = minimize(|x| p.value_grad(x), x0, opts);
    let params = from_unconstrained(p.form, &out.x).ok();
    let objective = out.f.is_finite().then_some(out.f);
    let converged = out.converged && params.is_some() && objective.is_some();
    RunOutcome {
        stat: RestartStat {
            index,
            converged,
            objective,
            iterations: out.iterations,
            grad_norm: out.grad_norm.is_finite().then_some(out.grad_norm),
        },
        params: if converged { params } else { None },
    }
}

fn finish(
    p: &Problem,
    grid: &Grid,
    cfg: &FitConfig,
    runs: Vec<RunOutcome>,
) -> Result<FitResult, FitError> {
    let best = runs
        .iter()
        .filter_map(|r| r.params.as_ref().map(|fp| (r.stat.objective.unwrap_or(f64::INFINITY), r.stat.index, fp)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, _, fp)| fp.clone());
    let restarts: Vec<RestartStat> = runs.into_iter().map(|r| r.stat).collect();
    let params = best.ok_or_else(|| FitError::NoConvergence { restarts: restarts.clone() })?;
    let objective = p.value(&params.values).unwrap_or(f64::INFINITY);
    let ceiling = grid.l0() - DEFAULT_CLIP_MARGIN;
    Ok(FitResult {
        params,
        objective,
        restarts,
        clipped_rows: grid.losses().filter(|&l| l >= ceiling - 1e-12).count(),
        seed: cfg.seed,
        grid: grid.name().to_string(),
        config_hash: cfg.hash(),
        context: p.ctx,
    })
}

/// Multistart fit of `form` to `grid`.
pub fn fit(form: FormId, grid: &Grid, cfg: &FitConfig) -> Result<FitResult, FitError> {
    let p = problem(form, grid, cfg)?;
    let n = cfg.restarts.unwrap_or_else(|| default_restarts(form));
    // Surface anchor/config errors before spawning work.
    sample_init(form, &mut restart_rng(cfg.seed, 0), &cfg.init, cfg.farseer_anchor.as_deref(), grid.l0())?;
    let opts = cfg.bfgs();
    let runs: Vec<RunOutcome> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = restart_rng(cfg.seed, i);
            let start = sample_init(form, &mut rng, &cfg.init, cfg.farseer_anchor.as_deref(), grid.l0())
                .expect("validated above");
            match FormParams::new(form, start).and_then(|fp| to_unconstrained(&fp)) {
                Ok(x0) => run_from(&p, i, &x0, &opts),
                Err(_) => RunOutcome {
                    stat: RestartStat { index: i, converged: false, objective: None, iterations: 0, grad_norm: None },
                    params: None,
                },
            }
        })
        .collect();
    finish(&p, grid, cfg, runs)
}

/// Single minimization started from `start`.
pub fn warm_refit(grid: &Grid, start: &FormParams, cfg: &FitConfig) -> Result<FitResult, FitError> {
    if start.values.iter().any(|v| !v.is_finite()) {
        return Err(FitError::Config("warm start contains non-finite values".into()));
    }
    let p = problem(start.form, grid, cfg)?;
    let x0 = to_unconstrained(start)?;
    let run = run_from(&p, 0, &x0, &cfg.bfgs());
    finish(&p, grid, cfg, vec![run])
}
