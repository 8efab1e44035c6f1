use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use serde::Serialize;

use satlaw::alloc::{frontier_csv, pareto_frontier, solve_budget, solve_target, PriceModel};
use satlaw::error::FitError;
use satlaw::eval::{bootstrap, evaluate, BootstrapReport, EvalOptions, EvalReport, SplitSpec};
use satlaw::fit::{fit, FitResult};
use satlaw::forms::{predict, EvalContext, Point};
use satlaw::verify::{check_limits, isoflop_curves, synth_grid, SynthDesign};

use crate::inputs::{load_params, ours_params, parse_form, parse_forms, parse_list, read, resolve_l0, FitArgs, GridArgs};
use crate::output::{write_csv, write_json, write_text, Manifest};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one form to a grid.
    Fit(FitCmd),
    /// Compare forms under holdout protocols.
    Eval(EvalCmd),
    /// Predict losses from fitted parameters.
    Predict(PredictCmd),
    /// Solve a budget or target-loss allocation.
    Allocate(AllocateCmd),
    /// Least loss at each of several budgets.
    Frontier(FrontierCmd),
    /// Generate a synthetic grid from known parameters.
    Synth(SynthCmd),
    /// Audit boundary behavior; optionally emit isoFLOP curves.
    Verify(VerifyCmd),
    /// Render an evaluation report as Markdown tables.
    Report(ReportCmd),
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fit(c) => c.run(),
        Command::Eval(c) => c.run(),
        Command::Predict(c) => c.run(),
        Command::Allocate(c) => c.run(),
        Command::Frontier(c) => c.run(),
        Command::Synth(c) => c.run(),
        Command::Verify(c) => c.run(),
        Command::Report(c) => c.run(),
    }
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "ours")]
    form: String,
    #[command(flatten)]
    fit: FitArgs,
    /// Bootstrap resamples (0 disables).
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    /// Output path; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitOutput {
    #[serde(flatten)]
    fit: FitResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<BootstrapReport>,
}

impl FitCmd {
    fn run(self) -> Result<()> {
        let mut m = Manifest::new("fit");
        let form = parse_form(&self.form)?;
        let cfg = self.fit.config(&mut m)?;
        let grid = self.grid.load(&mut m)?;
        let result = fit(form, &grid, &cfg)?;
        let boot = match self.bootstrap {
            0 => None,
            b => Some(bootstrap(&result, &grid, None, &cfg, b, cfg.seed)?),
        };
        write_json(self.out.as_deref(), &m, &FitOutput { fit: result, bootstrap: boot })
    }
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    #[command(flatten)]
    grid: GridArgs,
    /// Comma-separated form ids.
    #[arg(long, default_value = "ours,chinchilla")]
    forms: String,
    /// Comma-separated protocols: high-c, high-d, high-n, high-t, kfold[-K], in-sample.
    #[arg(long, default_value = "high-c,high-d,kfold,in-sample")]
    protocols: String,
    #[command(flatten)]
    fit: FitArgs,
    /// Bootstrap resamples for holdout RMSE (0 disables).
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    /// Directory for report.json, report.csv, metrics.csv and residuals.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

impl EvalCmd {
    fn run(self) -> Result<()> {
        let mut m = Manifest::new("eval");
        let forms = parse_forms(&self.forms)?;
        let cfg = self.fit.config(&mut m)?;
        let protocols: Vec<SplitSpec> =
            self.protocols.split(',').map(|p| SplitSpec::parse(p.trim(), cfg.seed)).collect::<Result<_, _>>()?;
        let grid = self.grid.load(&mut m)?;
        let opts = EvalOptions { bootstrap: (self.bootstrap > 0).then_some(self.bootstrap) };
        let report = evaluate(&forms, &grid, &protocols, &cfg, &opts);
        let dir = &self.out_dir;
        write_json(Some(&dir.join("report.json")), &m, &report)?;
        write_csv(Some(&dir.join("report.csv")), &m, &report.to_table_csv()?)?;
        write_csv(Some(&dir.join("metrics.csv")), &m, &report.to_csv()?)?;
        write_csv(Some(&dir.join("residuals.csv")), &m, &report.residuals_csv()?)
    }
}

#[derive(Debug, Args)]
pub struct PredictCmd {
    /// Fit result or `{form, params}` JSON.
    #[arg(long)]
    params: PathBuf,
    /// Overrides the stored uninformed-baseline loss.
    #[arg(long)]
    l0: Option<f64>,
    /// CSV of points (n, d, and t or epochs).
    #[arg(long, conflicts_with_all = ["n", "d", "t"])]
    points: Option<PathBuf>,
    #[arg(long, requires = "d")]
    n: Option<f64>,
    #[arg(long, requires = "n")]
    d: Option<f64>,
    /// Defaults to d (one epoch).
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl PredictCmd {
    fn run(self) -> Result<()> {
        let mut m = Manifest::new("predict");
        let (params, stored) = load_params(&self.params, &mut m)?;
        let ctx = EvalContext::new(resolve_l0(stored, self.l0)?);
        let points: Vec<Point> = match (&self.points, self.n, self.d) {
            (Some(path), _, _) => {
                m.input(path)?;
                read_points(&read(path)?)?
            }
            (None, Some(n), Some(d)) => vec![Point::new(n, d, self.t.unwrap_or(d))?],
            _ => bail!(FitError::Config("pass --points or --n and --d".into())),
        };
        let mut rows = String::from("n,d,t,loss\n");
        for pt in &points {
            let l = predict(&params, pt, &ctx)?;
            rows.push_str(&format!("{},{},{},{}\n", pt.n, pt.d, pt.t, l));
        }
        write_csv(self.out.as_deref(), &m, &rows)
    }
}

/// Points from CSV with columns `n`, `d` and optionally `t` or `epochs`.
fn read_points(text: &str) -> Result<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(n_col), Some(d_col)) = (col("n"), col("d")) else {
        bail!(FitError::Config("points CSV needs `n` and `d` columns".into()));
    };
    let (t_col, e_col) = (col("t"), col("epochs"));
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            let s = row.get(i).unwrap_or("");
            s.parse::<f64>().map_err(|_| FitError::Config(format!("cannot parse `{s}` as a number")).into())
        };
        let (n, d) = (num(n_col)?, num(d_col)?);
        let t = match (t_col, e_col) {
            (Some(i), _) => num(i)?,
            (None, Some(i)) => num(i)? * d,
            (None, None) => d,
        };
        out.push(Point::new(n, d, t)?);
    }
    Ok(out)
}

#[derive(Debug, Args)]
struct PriceArgs {
    /// Dollars per unique example.
    #[arg(long)]
    rho_d: f64,
    /// Dollars per FLOP.
    #[arg(long, default_value_t = 1.0)]
    rho_c: f64,
    /// FLOPs per parameter-example.
    #[arg(long, default_value_t = 6.0)]
    k: f64,
}

impl PriceArgs {
    fn model(&self) -> PriceModel {
        PriceModel { rho_d: self.rho_d, rho_c: self.rho_c, k: self.k }
    }
}

#[derive(Debug, Args)]
pub struct AllocateCmd {
    /// Fit result or `{form, params}` JSON of the saturating law.
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    l0: Option<f64>,
    #[command(flatten)]
    prices: PriceArgs,
    /// Least loss at this budget.
    #[arg(long, conflicts_with_all = ["target_loss", "frontier"])]
    budget: Option<f64>,
    /// Least cost reaching this loss.
    #[arg(long, conflicts_with = "frontier")]
    target_loss: Option<f64>,
    /// Comma-separated ascending budgets; writes a frontier CSV.
    #[arg(long)]
    frontier: Option<String>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl AllocateCmd {
    fn run(self) -> Result<()> {
        let mut m = Manifest::new("allocate");
        let (params, stored) = load_params(&self.params, &mut m)?;
        let l0 = resolve_l0(stored, self.l0)?;
        let p = ours_params(&params)?;
        let prices = self.prices.model();
        match (self.budget, self.target_loss, &self.frontier) {
            (Some(b), None, None) => write_json(self.out.as_deref(), &m, &solve_budget(&p, l0, &prices, b)?),
            (None, Some(t), None) => write_json(self.out.as_deref(), &m, &solve_target(&p, l0, &prices, t)?),
            (None, None, Some(list)) => {
                let pts = pareto_frontier(&p, l0, &prices, &parse_list(list)?)?;
                write_csv(self.out.as_deref(), &m, &frontier_csv(&pts)?)
            }
            _ => bail!(FitError::Config("pass exactly one of --budget, --target-loss, --frontier".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct FrontierCmd {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    l0: Option<f64>,
    #[command(flatten)]
    prices: PriceArgs,
    /// Comma-separated ascending budgets.
    #[arg(long)]
    budgets: String,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl FrontierCmd {
    fn run(self) -> Result<()> {
        let mut m = Manifest::new("frontier");
        let (params, stored) = load_params(&self.params, &mut m)?;
        let l0 = resolve_l0(stored, self.l0)?;
        let pts = pareto_frontier(&ours_params(&params)?, l0, &self.prices.model(), &parse_list(&self.budgets)?)?;
        write_csv(self.out.as_deref(), &m, &frontier_csv(&pts)?)
    }
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    /// `{form, params}` JSON of the saturating law.
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    l0: Option<f64>,
    /// Design TOML: `n`, `d`, `epochs` lists, optional `sigma` and `seed`.
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl SynthCmd {
    fn run(self) -> Result<()> {
        let mut m = Manifest::new("synth");
        let (params, stored) = load_params(&self.params, &mut m)?;
        let l0 = resolve_l0(stored, self.l0)?;
        m.input(&self.design)?;
        let mut design: SynthDesign =
            toml::from_str(&read(&self.design)?).map_err(|e| FitError::Config(format!("design: {e}")))?;
        if let Some(s) = self.sigma {
            design.sigma = s;
        }
        if let Some(s) = self.seed {
            design.seed = s;
        }
        m.seed = Some(design.seed);
        let grid = synth_grid(&ours_params(&params)?, l0, &design)?;
        let mut rows = String::from("n,d,t,loss\n");
        for r in grid.records() {
            rows.push_str(&format!("{},{},{},{}\n", r.n, r.d, r.t, r.loss));
        }
        write_csv(self.out.as_deref(), &m, &rows)
    }
}

#[derive(Debug, Args)]
pub struct VerifyCmd {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    l0: Option<f64>,
    /// Writes the limit report as JSON here; the Markdown table goes to stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Emit isoFLOP curves (saturating-law parameters only).
    #[arg(long, requires_all = ["compute", "unique_data", "isoflop_out"])]
    isoflop: bool,
    /// Comma-separated compute values for the curves.
    #[arg(long)]
    compute: Option<String>,
    /// Unique data held fixed along the curves.
    #[arg(long)]
    unique_data: Option<f64>,
    #[arg(long, default_value_t = 6.0)]
    k: f64,
    #[arg(long, default_value_t = 61)]
    samples: usize,
    #[arg(long)]
    isoflop_out: Option<PathBuf>,
}

impl VerifyCmd {
    fn run(self) -> Result<()> {
        let mut m = Manifest::new("verify");
        let (params, stored) = load_params(&self.params, &mut m)?;
        let l0 = resolve_l0(stored, self.l0)?;
        let report = check_limits(&params, &EvalContext::new(l0));
        write_text(None, &report.to_markdown())?;
        if let Some(out) = &self.out {
            write_json(Some(out), &m, &report)?;
        }
        if self.isoflop {
            let cs = parse_list(self.compute.as_deref().unwrap_or_default())?;
            let d = self.unique_data.unwrap_or_default();
            let table = isoflop_curves(&ours_params(&params)?, l0, &cs, d, self.k, self.samples)?;
            write_csv(self.isoflop_out.as_deref(), &m, &table.to_csv()?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct ReportCmd {
    /// report.json written by `eval`.
    #[arg(long)]
    eval: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl ReportCmd {
    fn run(self) -> Result<()> {
        let mut m = Manifest::new("report");
        m.input(&self.eval)?;
        let mut v: serde_json::Value = serde_json::from_str(&read(&self.eval)?)?;
        if let Some(inner) = v.get_mut("result") {
            v = inner.take();
        }
        let report: EvalReport = serde_json::from_value(v)?;
        write_text(self.out.as_deref(), &markdown(&report))
    }
}

/// Form-by-protocol tables of holdout RMSE and MBE.
fn markdown(report: &EvalReport) -> String {
    let mut protocols: Vec<&str> = Vec::new();
    let mut forms: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), (Option<f64>, Option<f64>, Option<f64>)> = BTreeMap::new();
    for c in &report.cells {
        if !protocols.contains(&c.protocol.as_str()) {
            protocols.push(&c.protocol);
        }
        if !forms.contains(&c.form.to_string()) {
            forms.push(c.form.to_string());
        }
        cells.insert((c.form.to_string(), c.protocol.clone()), (c.rmse_log, c.mbe_log, c.boot_std));
    }
    let mut s = format!("# Evaluation: {}\n", report.grid);
    for (title, pick) in [("log RMSE", 0usize), ("log MBE", 1)] {
        s.push_str(&format!("\n## {title}\n\n| form |"));
        for p in &protocols {
            s.push_str(&format!(" {p} |"));
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(protocols.len()));
        s.push('\n');
        for f in &forms {
            s.push_str(&format!("| {f} |"));
            for p in &protocols {
                let cell = match cells.get(&(f.clone(), p.to_string())) {
                    Some(&(r, b, sd)) => match (if pick == 0 { r } else { b }, sd) {
                        (Some(v), Some(sd)) if pick == 0 => format!("{v:.4} ± {sd:.4}"),
                        (Some(v), _) => format!("{v:+.4}"),
                        (None, _) => "failed".into(),
                    },
                    None => "".into(),
                };
                s.push_str(&format!(" {cell} |"));
            }
            s.push('\n');
        }
    }
    s
}
