//! Structural checks and synthetic data.
//!
//! * [`check_limits`] audits the six boundary rows (collapse to `l0` when
//!   any resource vanishes or data stays finite, approach to the floor when
//!   everything grows along a valid path).
//! * [`chinchilla_map`] and [`recovery_gap`] relate the saturating law to
//!   the additive Chinchilla form in the small-difficulty, single-epoch regime.
//! * [`synth_grid`] generates grids from known parameters, the oracle for
//!   fitting tests.
//! * [`isoflop_curves`] emits fixed-compute and infinite-compute curves as
//!   plot-ready rows.
//!
//! Capacity and overfitting trade off along `n` at fixed data: the overfitting
//! term is what gives each isoFLOP curve its U shape and the t -> infinity
//! envelope its interior minimum.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::alloc::{nopt_asymptotic, nopt_finite};
use crate::error::VerifyError;
use crate::forms::{predict, EvalContext, FormId, FormParams, OursParams, Point};
use crate::gridio::{Grid, LossKind, Preprocess, RunRecord};

/// Stand-in for 0 and infinity in limit audits.
pub const LIMIT_SCALE: f64 = 1e12;
/// Per-row tolerance relative to `l0 - floor`.
pub const LIMIT_TOL: f64 = 1e-6;
const FINITE: f64 = 1.0;
const MAX_PATH_EXPONENT: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expected {
    L0,
    Floor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub row: u8,
    pub limit: String,
    pub expected: Expected,
    pub expected_value: f64,
    pub loss: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub form: FormId,
    pub rows: Vec<LimitRow>,
}

impl LimitReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Pass flags of rows 1 through 6.
    pub fn pattern(&self) -> [bool; 6] {
        std::array::from_fn(|i| self.rows[i].pass)
    }

    /// Markdown table of the rows.
    pub fn to_markdown(&self) -> String {
        let mut s = format!("| # | limit | expected | loss | deviation | pass |\n|---|---|---|---|---|---|\n");
        for r in &self.rows {
            s.push_str(&format!(
                "| {} | {} | {} = {:.6} | {:.6} | {:.3e} | {} |\n",
                r.row,
                r.limit,
                match r.expected {
                    Expected::L0 => "l0",
                    Expected::Floor => "floor",
                },
                r.expected_value,
                r.loss,
                r.deviation,
                if r.pass { "pass" } else { "FAIL" }
            ));
        }
        s
    }
}

/// Evaluates the six boundary rows at coordinates `1e-12` and `1e12`.
///
/// Finite coordinates are held at 1. Row 6 follows `n = s`, `t = s^2`,
/// `d = s^max(1, 2 gamma/delta)`, along which the overfitting term vanishes
/// for the saturating forms. Forms without a floor parameter are measured
/// against 0 on row 6.
///
/// ```
/// use satlaw::forms::{EvalContext, OursParams};
/// use satlaw::verify::check_limits;
/// let p = OursParams { e: 1.8, a: 4.0, alpha: 0.8, b: 5.0, beta: 0.9, c: 2.0, gamma: 1.0, delta: 1.0 };
/// let report = check_limits(&p.into(), &EvalContext::new(32000f64.ln()));
/// assert!(report.all_pass());
/// ```
pub fn check_limits(params: &FormParams, ctx: &EvalContext) -> LimitReport {
    let l0 = ctx.l0;
    let floor = params.floor().unwrap_or(0.0);
    let tolerance = (l0 - floor).abs() * LIMIT_TOL;
    let (lo, hi) = (1.0 / LIMIT_SCALE, LIMIT_SCALE);
    let path = match (params.get("gamma"), params.get("delta")) {
        (Some(g), Some(d)) if d > 0.0 => (2.0 * g / d).clamp(1.0, MAX_PATH_EXPONENT),
        (Some(_), Some(_)) => MAX_PATH_EXPONENT,
        _ => 1.0,
    };
    let rows: [(&str, Expected, Point); 6] = [
        ("n -> 0; d, t finite", Expected::L0, Point { n: lo, d: FINITE, t: FINITE, c: None }),
        ("d -> 0; n, t finite", Expected::L0, Point { n: FINITE, d: lo, t: FINITE, c: None }),
        ("t -> 0; n, d finite", Expected::L0, Point { n: FINITE, d: FINITE, t: lo, c: None }),
        ("n -> inf; d, t finite", Expected::L0, Point { n: hi, d: FINITE, t: FINITE, c: None }),
        ("n, t -> inf; d finite", Expected::L0, Point { n: hi, d: FINITE, t: hi, c: None }),
        ("n, d, t -> inf jointly", Expected::Floor, Point { n: hi, d: hi.powf(path), t: hi * hi, c: None }),
    ];
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, (limit, expected, pt))| {
            let expected_value = match expected {
                Expected::L0 => l0,
                Expected::Floor => floor,
            };
            let loss = predict(params, &pt, ctx).unwrap_or(f64::NAN);
            let deviation = if loss.is_finite() { (loss - expected_value).abs() } else { f64::INFINITY };
            LimitRow {
                row: i as u8 + 1,
                limit: limit.to_string(),
                expected,
                expected_value,
                loss,
                deviation,
                tolerance,
                pass: deviation < tolerance,
            }
        })
        .collect();
    LimitReport { form: params.form, rows }
}

/// Saturating-law coefficients matching additive ones: `a = A/(l0-e)`, `b = B/(l0-e)`.
///
/// ```
/// let (a, b) = satlaw::verify::chinchilla_map(406.0, 411.0, 1.0, 10.13).unwrap();
/// assert!((a - 44.47).abs() < 0.01 && (b - 45.02).abs() < 0.01);
/// ```
pub fn chinchilla_map(big_a: f64, big_b: f64, e: f64, l0: f64) -> Result<(f64, f64), VerifyError> {
    if !(l0 > e) || !(big_a >= 0.0 && big_b >= 0.0) {
        return Err(VerifyError::InvalidInput(format!(
            "need l0 > e and A, B >= 0 (l0 = {l0}, e = {e}, A = {big_a}, B = {big_b})"
        )));
    }
    Ok((big_a / (l0 - e), big_b / (l0 - e)))
}

/// Additive form with `A = (l0-e) a`, `B = (l0-e) b` and the same exponents.
pub fn chinchilla_equivalent(p: &OursParams, l0: f64) -> Result<FormParams, VerifyError> {
    p.validate_against(l0)?;
    let s = l0 - p.e;
    Ok(FormParams::new(FormId::Chinchilla, vec![p.e, s * p.a, s * p.b, p.alpha, p.beta])?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryGap {
    /// `|saturating - additive|` with the overfitting term dropped.
    pub gap: f64,
    /// `(l0 - e) h^2`
    pub bound: f64,
    /// Difficulty without the overfitting term.
    pub h: f64,
    /// Overfitting term at the point.
    pub overfit: f64,
    /// Small difficulty and negligible overfitting: the bound is claimed.
    pub applicable: bool,
}

impl RecoveryGap {
    /// `None` when the bound is not claimed.
    pub fn holds(&self) -> Option<bool> {
        self.applicable.then(|| self.gap <= self.bound * (1.0 + 1e-6))
    }
}

/// Gap between the saturating law and its additive equivalent at a
/// single-epoch point (`t = d`).
///
/// The bound is claimed only when `h <= 0.1` and the overfitting term is at
/// most `1e-3 h`.
pub fn recovery_gap(p: &OursParams, l0: f64, pt: &Point) -> Result<RecoveryGap, VerifyError> {
    if pt.t != pt.d {
        return Err(VerifyError::InvalidInput(format!("recovery needs t = d, got d = {}, t = {}", pt.d, pt.t)));
    }
    let ctx = EvalContext::new(l0);
    let no_overfit = OursParams { c: 0.0, ..*p };
    let ours = predict(&no_overfit.into(), pt, &ctx)?;
    let additive = predict(&chinchilla_equivalent(p, l0)?, pt, &ctx)?;
    let h = crate::forms::difficulty(&no_overfit, pt)?.value;
    let overfit = if p.c == 0.0 { 0.0 } else { (p.c.ln() + p.gamma * pt.n.ln() - p.delta * pt.d.ln()).exp() };
    Ok(RecoveryGap {
        gap: (ours - additive).abs(),
        bound: (l0 - p.e) * h * h,
        h,
        overfit,
        applicable: h <= 0.1 && overfit <= 1e-3 * h,
    })
}

/// Lattice of synthetic runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDesign {
    pub n: Vec<f64>,
    pub d: Vec<f64>,
    /// Epoch multipliers `t / d`.
    pub epochs: Vec<f64>,
    /// Standard deviation of multiplicative log-normal noise.
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SynthDesign {
    pub fn validate(&self) -> Result<(), VerifyError> {
        for (name, v) in [("n", &self.n), ("d", &self.d), ("epochs", &self.epochs)] {
            if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(VerifyError::InvalidInput(format!("design `{name}` must be non-empty, finite and positive")));
            }
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(VerifyError::InvalidInput(format!("sigma = {} must be >= 0", self.sigma)));
        }
        Ok(())
    }

    /// `count` log-spaced values from `lo` to `hi` inclusive.
    pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
        log_space(lo, hi, count)
    }

    /// Same design with each axis extended by one value at `factor` times its maximum.
    pub fn extended(&self, factor: f64) -> SynthDesign {
        let ext = |v: &[f64]| {
            let mut v = v.to_vec();
            v.push(v.iter().copied().fold(f64::MIN, f64::max) * factor);
            v
        };
        SynthDesign { n: ext(&self.n), d: ext(&self.d), epochs: ext(&self.epochs), ..self.clone() }
    }

    pub fn cells(&self) -> usize {
        self.n.len() * self.d.len() * self.epochs.len()
    }
}

fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Runs on the design's `(n, d, t = epochs * d)` lattice with
/// `loss = prediction * exp(eps)`, `eps ~ Normal(0, sigma^2)`, then the
/// usual preprocessing (unique-data cap, clipping at `l0 - 0.01`).
///
/// ```
/// use satlaw::forms::OursParams;
/// use satlaw::verify::{synth_grid, SynthDesign};
/// let p = OursParams { e: 1.0, a: 10.0, alpha: 0.3, b: 10.0, beta: 0.3, c: 5.0, gamma: 0.4, delta: 0.5 };
/// let design = SynthDesign { n: vec![1e6, 1e7], d: vec![1e8], epochs: vec![1.0, 4.0], sigma: 0.0, seed: 0 };
/// assert_eq!(synth_grid(&p, 5.0, &design).unwrap().len(), 4);
/// ```
pub fn synth_grid(p: &OursParams, l0: f64, design: &SynthDesign) -> Result<Grid, VerifyError> {
    design.validate()?;
    p.validate_against(l0)?;
    let params: FormParams = (*p).into();
    let ctx = EvalContext::new(l0);
    let noise = Normal::new(0.0, design.sigma).map_err(|e| VerifyError::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha20Rng::seed_from_u64(design.seed);
    let mut records = Vec::with_capacity(design.cells());
    for &n in &design.n {
        for &d in &design.d {
            for &m in &design.epochs {
                let t = m * d;
                let pred = predict(&params, &Point::new(n, d, t)?, &ctx)?;
                let loss = if design.sigma == 0.0 { pred } else { pred * noise.sample(&mut rng).exp() };
                records.push(RunRecord::new(n, d, t, loss));
            }
        }
    }
    let (grid, _) = Grid::from_records("synthetic", l0, LossKind::CrossEntropy, records, &Preprocess::default())?;
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Curve {
    /// Fixed compute, `t = C / (k n)`.
    Isoflop,
    /// `t -> infinity` at fixed `d`.
    InfiniteCompute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoflopRow {
    pub curve: Curve,
    /// Compute of the curve; `None` on the infinite-compute curve.
    pub c: Option<f64>,
    pub n: f64,
    pub t: f64,
    pub loss: f64,
    /// Minimum of its curve.
    pub envelope: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoflopTable {
    pub d: f64,
    pub rows: Vec<IsoflopRow>,
}

impl IsoflopTable {
    /// Per-compute minima, in the order of the input compute values.
    pub fn envelope(&self) -> Vec<IsoflopRow> {
        self.rows.iter().filter(|r| r.envelope && r.curve == Curve::Isoflop).copied().collect()
    }

    /// Minimum of the infinite-compute curve.
    pub fn infinite_minimum(&self) -> Option<IsoflopRow> {
        self.rows.iter().find(|r| r.envelope && r.curve == Curve::InfiniteCompute).copied()
    }

    /// Rows of the fixed-compute curve at `c`.
    pub fn curve(&self, c: f64) -> Vec<IsoflopRow> {
        self.rows.iter().filter(|r| r.c == Some(c)).copied().collect()
    }

    /// CSV with columns `curve, c, n, t, loss, envelope`.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["curve", "c", "n", "t", "loss", "envelope"])?;
        for r in &self.rows {
            let curve = match r.curve {
                Curve::Isoflop => "isoflop",
                Curve::InfiniteCompute => "infinite-compute",
            };
            let c = r.c.map(|c| c.to_string()).unwrap_or_default();
            w.write_record([curve.to_string(), c, r.n.to_string(), r.t.to_string(), r.loss.to_string(), r.envelope.to_string()])?;
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
    }
}

/// Loss along isoFLOP curves at fixed unique data `d`.
///
/// Each curve samples `n_samples` log-spaced sizes over six decades centred
/// on its minimizer. The infinite-compute curve spans all of them plus six
/// decades around its own minimizer when one exists.
pub fn isoflop_curves(
    p: &OursParams,
    l0: f64,
    c_values: &[f64],
    d: f64,
    k: f64,
    n_samples: usize,
) -> Result<IsoflopTable, VerifyError> {
    p.validate_against(l0)?;
    if n_samples < 3 || !(d > 0.0 && d.is_finite() && k > 0.0 && k.is_finite()) {
        return Err(VerifyError::InvalidInput("isoflop curves need n_samples >= 3 and d, k > 0".into()));
    }
    if c_values.is_empty() || c_values.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(VerifyError::InvalidInput("compute values must be finite and positive".into()));
    }
    let params: FormParams = (*p).into();
    let ctx = EvalContext { k, ..EvalContext::new(l0) };
    let mut rows = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mark_min = |rows: &mut [IsoflopRow]| {
        if let Some(i) = (0..rows.len()).min_by(|&a, &b| rows[a].loss.total_cmp(&rows[b].loss)) {
            rows[i].envelope = true;
        }
    };
    for &c in c_values {
        let center = nopt_finite(p, c, d, k)?;
        let mut curve = Vec::with_capacity(n_samples);
        for n in log_space(center * 1e-3, center * 1e3, n_samples) {
            let t = c / (k * n);
            let loss = predict(&params, &Point::new(n, d, t)?, &ctx)?;
            curve.push(IsoflopRow { curve: Curve::Isoflop, c: Some(c), n, t, loss, envelope: false });
        }
        mark_min(&mut curve);
        lo = lo.min(center * 1e-3);
        hi = hi.max(center * 1e3);
        rows.extend(curve);
    }
    if let Ok(center) = nopt_asymptotic(p, d) {
        lo = lo.min(center * 1e-3);
        hi = hi.max(center * 1e3);
    }
    let mut inf = Vec::with_capacity(n_samples);
    for n in log_space(lo, hi, n_samples) {
        let loss = predict(&params, &Point::new(n, d, f64::MAX)?, &ctx)?;
        inf.push(IsoflopRow { curve: Curve::InfiniteCompute, c: None, n, t: f64::INFINITY, loss, envelope: false });
    }
    mark_min(&mut inf);
    rows.extend(inf);
    Ok(IsoflopTable { d, rows })
}
