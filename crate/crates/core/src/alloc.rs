//! Cost-aware allocation under the saturating law.
//!
//! Dollar cost is `rho_d * d + rho_c * k * n * t`. Minimizing loss is the
//! same as minimizing the difficulty `h`, which is a sum of exponentials of
//! linear functions of `(ln n, ln d, ln t)` and therefore convex there. Both
//! programs are solved in log coordinates by eliminating one variable
//! through the active constraint and running a damped 2-D Newton method:
//!
//! * P2 ([`solve_budget`]): least loss at a fixed budget.
//! * P1 ([`solve_target`]): least cost reaching a target loss.
//!
//! Degenerate axes are resolved by convention. With free data (`rho_d = 0`)
//! the overfitting term is driven away and `d` is reported at the smallest
//! value making it at most `1e-12 h`. Without a data-dependent overfitting
//! term (`c = 0` or `delta = 0`) unique data buys nothing, so `d` is tied to
//! `t` (single-epoch training).
//!
//! ```
//! use satlaw::alloc::{nopt_chinchilla, PriceModel, solve_budget};
//! use satlaw::forms::OursParams;
//! let p = OursParams { e: 0.0, a: 1.0, alpha: 0.5, b: 1.0, beta: 0.5, c: 0.0, gamma: 0.0, delta: 0.0 };
//! let prices = PriceModel { rho_d: 0.0, rho_c: 1.0, k: 1.0 };
//! let r = solve_budget(&p, 3.0, &prices, 1e6).unwrap();
//! assert!((r.n_star - 1e3).abs() < 1e-6);
//! assert!((nopt_chinchilla(&p, 100.0, 1.0).unwrap() - 10.0).abs() < 1e-12);
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::AllocError;
use crate::forms::OursParams;
use crate::scalar::Scalar;

/// Overfitting term relative to the rest of `h` at which free data is
/// considered to have removed it.
pub const OVERFIT_KILL: f64 = 1e-12;

/// Largest FOC residual accepted at a reported optimum.
pub const FOC_TOL: f64 = 1e-6;

const MAX_NEWTON: usize = 200;
const MAX_LOG_STEP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceModel {
    /// Dollars per unique example.
    pub rho_d: f64,
    /// Dollars per FLOP.
    pub rho_c: f64,
    /// FLOPs per parameter-example.
    pub k: f64,
}

impl PriceModel {
    pub fn validate(&self) -> Result<(), AllocError> {
        if !(self.rho_d >= 0.0 && self.rho_d.is_finite()) {
            return Err(AllocError::InvalidInput(format!("rho_d = {} must be finite and >= 0", self.rho_d)));
        }
        if !(self.rho_c > 0.0 && self.rho_c.is_finite() && self.k > 0.0 && self.k.is_finite()) {
            return Err(AllocError::InvalidInput(format!(
                "rho_c = {} and k = {} must be finite and > 0",
                self.rho_c, self.k
            )));
        }
        Ok(())
    }

    pub fn cost(&self, n: f64, d: f64, t: f64) -> f64 {
        self.rho_d * d + self.rho_c * self.k * n * t
    }
}

/// Why a target loss cannot be used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Infeasibility {
    /// The target is at or below the irreducible loss.
    BelowFloor { target: f64, e: f64 },
    /// The target is at or above the uninformed baseline; any model reaches it.
    Trivial { target: f64, l0: f64 },
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasibility::BelowFloor { target, e } => {
                write!(f, "target loss {target} is at or below the irreducible loss e = {e}")
            }
            Infeasibility::Trivial { target, l0 } => {
                write!(f, "target loss {target} is at or above the uninformed baseline l0 = {l0}")
            }
        }
    }
}

/// Difficulty needed to reach `l_target`: `(l_target - e) / (l0 - l_target)`.
pub fn target_difficulty(l_target: f64, e: f64, l0: f64) -> Result<f64, Infeasibility> {
    if !(l_target > e) {
        return Err(Infeasibility::BelowFloor { target: l_target, e });
    }
    if !(l_target < l0) {
        return Err(Infeasibility::Trivial { target: l_target, l0 });
    }
    Ok((l_target - e) / (l0 - l_target))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Program {
    /// Least cost at a target loss.
    P1,
    /// Least loss at a budget.
    P2,
}

/// How a degenerate unique-data axis was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degeneracy {
    /// Free data: `d` set where the overfitting term becomes negligible.
    FreeData,
    /// No data-dependent overfitting term: `d` tied to `t`.
    NoOverfit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub program: Program,
    pub n_star: f64,
    pub d_star: f64,
    pub t_star: f64,
    pub loss: f64,
    pub cost: f64,
    pub h: f64,
    /// `t_star / d_star`
    pub epochs: f64,
    /// `rho_d d_star / cost`
    pub data_share: f64,
    pub foc_residual: f64,
    /// Budget multiplier `lambda` for P2, loss multiplier `mu = 1/lambda` for P1.
    pub multiplier: f64,
    pub degenerate: Option<Degeneracy>,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

fn check_params(p: &OursParams, l0: f64) -> Result<(), AllocError> {
    p.validate_against(l0).map_err(|e| AllocError::InvalidInput(e.to_string()))?;
    if !(p.a > 0.0 && p.b > 0.0 && p.alpha > 0.0 && p.beta > 0.0) {
        return Err(AllocError::InvalidInput("allocation needs a, b, alpha, beta > 0".into()));
    }
    Ok(())
}

fn d_degenerate(p: &OursParams) -> bool {
    p.c == 0.0 || p.delta == 0.0
}

/// Difficulty terms at log coordinates.
#[derive(Debug, Clone, Copy)]
struct Terms {
    cap: f64,
    train: f64,
    over: f64,
}

impl Terms {
    fn at(p: &OursParams, u: f64, v: f64, w: f64) -> Terms {
        Terms {
            cap: p.a * (-p.alpha * u).exp(),
            train: p.b * (-p.beta * w).exp(),
            over: if p.c == 0.0 { 0.0 } else { p.c * (p.gamma * u - p.delta * v).exp() },
        }
    }
    fn h(&self) -> f64 {
        self.cap + self.train + self.over
    }
}

fn wrap(p: &OursParams, l0: f64, h: f64) -> f64 {
    p.e + (l0 - p.e) * h / (1.0 + h)
}

/// Relative FOC mismatch: the n condition and the t/d balance.
fn foc_residual(p: &OursParams, prices: &PriceModel, tm: &Terms, n: f64, d: f64, t: f64, deg: Option<Degeneracy>) -> f64 {
    let compute = prices.rho_c * prices.k * n * t;
    // T's share of the marginal value of n: 1 unless d = t also pays for data.
    let tied = if deg == Some(Degeneracy::NoOverfit) { compute / (compute + prices.rho_d * d) } else { 1.0 };
    // n condition alpha P = beta T + gamma Q, relative to the size of its terms
    // (beta T can sit far below the rounding of alpha P - gamma Q).
    let cap = p.alpha * tm.cap;
    let mut res = ((cap - p.gamma * tm.over - p.beta * tm.train * tied) / cap).abs();
    if deg.is_none() {
        // Equal marginal value per dollar of t and d.
        let rt = p.beta * tm.train / compute;
        let rd = p.delta * tm.over / (prices.rho_d * d);
        res = res.max(((rd - rt) / rt).abs());
    }
    res
}

#[allow(clippy::too_many_arguments)]
fn finish(
    program: Program,
    p: &OursParams,
    l0: f64,
    prices: &PriceModel,
    n: f64,
    d: f64,
    t: f64,
    deg: Option<Degeneracy>,
    iterations: usize,
) -> Result<AllocationResult, AllocError> {
    let tm = Terms::at(p, n.ln(), d.ln(), t.ln());
    let h = tm.h();
    let cost = prices.cost(n, d, t);
    let foc = foc_residual(p, prices, &tm, n, d, t, deg);
    if !(foc <= FOC_TOL) || !h.is_finite() {
        return Err(AllocError::NoConvergence { iterations, residual: foc, n, d, t });
    }
    let paid_t = prices.rho_c * prices.k * n + if deg == Some(Degeneracy::NoOverfit) { prices.rho_d } else { 0.0 };
    // dL/dT / (marginal dollar cost of T) = -lambda
    let lambda = (l0 - p.e) / (1.0 + h).powi(2) * p.beta * tm.train / t / paid_t;
    let multiplier = match program {
        Program::P2 => lambda,
        Program::P1 => 1.0 / lambda,
    };
    Ok(AllocationResult {
        program,
        n_star: n,
        d_star: d,
        t_star: t,
        loss: wrap(p, l0, h),
        cost,
        h,
        epochs: t / d,
        data_share: prices.rho_d * d / cost,
        foc_residual: foc,
        multiplier,
        degenerate: deg,
        iterations,
        warnings: if deg.is_none() && d > t {
            vec![format!("d = {d:e} exceeds t = {t:e}; unique data beyond the examples seen lies outside the capped regime fits are calibrated on")]
        } else {
            Vec::new()
        },
    })
}

/// Smallest `d` with `c n^gamma / d^delta <= OVERFIT_KILL * rest`.
fn kill_d(p: &OursParams, n: f64, rest: f64) -> f64 {
    ((p.c.ln() + p.gamma * n.ln() - (OVERFIT_KILL * rest).ln()) / p.delta).exp()
}

/// Newton step below this size in log coordinates counts as converged.
const STEP_TOL: f64 = 1e-12;

/// Largest per-coordinate Newton step `|g_i / H_ii|`, a scale-free
/// progress measure when `f` itself no longer resolves the change.
fn diag_step(g: &[f64], hdiag: &[f64]) -> f64 {
    g.iter().zip(hdiag).fold(0.0f64, |m, (g, h)| m.max(g.abs() / h.abs().max(f64::MIN_POSITIVE)))
}

/// Damped Newton on a convex function of two variables.
///
/// `eval` returns `(f, grad, hessian)` or `None` outside the domain. A step
/// is accepted on a strict Armijo decrease or when it halves
/// [`diag_step`]; the latter keeps progress going in regimes where one
/// coordinate moves `f` by less than its rounding.
fn newton2<F>(mut eval: F, mut x: [f64; 2]) -> Result<([f64; 2], usize), [f64; 2]>
where
    F: FnMut([f64; 2]) -> Option<(f64, [f64; 2], [[f64; 3]; 1])>,
{
    let (mut f, mut g, mut hs) = eval(x).ok_or(x)?;
    for it in 0..MAX_NEWTON {
        let [hxx, hxy, hyy] = hs[0];
        let det = hxx * hyy - hxy * hxy;
        let newton = hxx > 0.0 && det > 0.0;
        let mut dir = if newton {
            [-(hyy * g[0] - hxy * g[1]) / det, -(hxx * g[1] - hxy * g[0]) / det]
        } else {
            [-g[0], -g[1]]
        };
        let mut slope = g[0] * dir[0] + g[1] * dir[1];
        if !(slope < 0.0) {
            dir = [-g[0], -g[1]];
            slope = -(g[0] * g[0] + g[1] * g[1]);
        }
        if slope == 0.0 || (newton && dir[0].abs().max(dir[1].abs()) < STEP_TOL) {
            return Ok((x, it));
        }
        let progress = diag_step(&g, &[hxx, hyy]);
        let big = dir[0].abs().max(dir[1].abs());
        let mut step = if big > MAX_LOG_STEP { MAX_LOG_STEP / big } else { 1.0 };
        let mut accepted = None;
        for _ in 0..80 {
            let xt = [x[0] + step * dir[0], x[1] + step * dir[1]];
            if let Some(r) = eval(xt) {
                let armijo = r.0 < f && r.0 <= f + 1e-4 * step * slope;
                if armijo || diag_step(&r.1, &[r.2[0][0], r.2[0][2]]) < 0.5 * progress {
                    accepted = Some((xt, r));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((xt, r)) if xt != x => {
                x = xt;
                (f, g, hs) = r;
            }
            _ => return Ok((x, it)),
        }
    }
    Err(x)
}

/// Damped Newton on a convex function of one variable, with the same
/// acceptance rules as [`newton2`].
fn newton1<F>(mut eval: F, mut x: f64) -> Result<(f64, usize), f64>
where
    F: FnMut(f64) -> (f64, f64, f64),
{
    let (mut f, mut g, mut h) = eval(x);
    for it in 0..MAX_NEWTON {
        let newton = h > 0.0;
        let dir = if newton { -g / h } else { -g };
        let slope = g * dir;
        if !(slope < 0.0) || (newton && dir.abs() < STEP_TOL) {
            return Ok((x, it));
        }
        let progress = diag_step(&[g], &[h]);
        let mut step = if dir.abs() > MAX_LOG_STEP { MAX_LOG_STEP / dir.abs() } else { 1.0 };
        let mut accepted = None;
        for _ in 0..80 {
            let xt = x + step * dir;
            let r = eval(xt);
            if r.0.is_finite() {
                let armijo = r.0 < f && r.0 <= f + 1e-4 * step * slope;
                if armijo || diag_step(&[r.1], &[r.2]) < 0.5 * progress {
                    accepted = Some((xt, r));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((xt, r)) if xt != x => {
                x = xt;
                (f, g, h) = r;
            }
            _ => return Ok((x, it)),
        }
    }
    Err(x)
}

/// Least loss reachable with `budget` dollars (P2).
pub fn solve_budget(p: &OursParams, l0: f64, prices: &PriceModel, budget: f64) -> Result<AllocationResult, AllocError> {
    solve_budget_from(p, l0, prices, budget, None)
}

/// [`solve_budget`] started from a feasible `(n, d)` instead of the default
/// equal-dollar split. Degenerate cases ignore the start.
pub fn solve_budget_from(
    p: &OursParams,
    l0: f64,
    prices: &PriceModel,
    budget: f64,
    start: Option<(f64, f64)>,
) -> Result<AllocationResult, AllocError> {
    check_params(p, l0)?;
    prices.validate()?;
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(AllocError::InvalidInput(format!("budget {budget} must be finite and > 0")));
    }
    let kc = prices.rho_c * prices.k;
    if d_degenerate(p) {
        return budget_tied(p, l0, prices, budget);
    }
    if prices.rho_d == 0.0 {
        let flops = budget / prices.rho_c;
        let n = nopt_chinchilla(p, flops, prices.k)?;
        let t = flops / (prices.k * n);
        let rest = Terms::at(p, n.ln(), 0.0, t.ln());
        let d = kill_d(p, n, rest.cap + rest.train);
        return finish(Program::P2, p, l0, prices, n, d, t, Some(Degeneracy::FreeData), 0);
    }
    let (rd, b) = (prices.rho_d, budget);
    let ln_kc = kc.ln();
    // Coordinates: u = ln n and z = logit of the data share of the budget,
    // so both spends are products and never differences.
    let x0 = match start {
        Some((n, d)) => {
            if !(n > 0.0 && d > 0.0 && rd * d < b) {
                return Err(AllocError::InvalidInput(format!("start (n = {n}, d = {d}) is not strictly inside the budget")));
            }
            [n.ln(), (rd * d).ln() - (b - rd * d).ln()]
        }
        None => [0.5 * ((b / 2.0).ln() - ln_kc), 0.0],
    };
    let (ln_data, ln_flops) = (b.ln() - rd.ln(), b.ln() - ln_kc);
    let ndt = |[u, z]: [f64; 2]| {
        let v = ln_data - (-z).softplus();
        let w = ln_flops - z.softplus() - u;
        (u, v, w, 1.0 / (1.0 + (-z).exp()))
    };
    let eval = |x: [f64; 2]| {
        let (u, v, w, sh) = ndt(x);
        let tm = Terms::at(p, u, v, w);
        let (al, be, ga, de) = (p.alpha, p.beta, p.gamma, p.delta);
        let cs = 1.0 - sh;
        let f = tm.h();
        let fu = -al * tm.cap + be * tm.train + ga * tm.over;
        let fz = be * sh * tm.train - de * cs * tm.over;
        let fuu = al * al * tm.cap + be * be * tm.train + ga * ga * tm.over;
        let fuz = be * be * sh * tm.train - ga * de * cs * tm.over;
        let fzz = be * sh * (cs + be * sh) * tm.train + de * cs * (sh + de * cs) * tm.over;
        f.is_finite().then_some((f, [fu, fz], [[fuu, fuz, fzz]]))
    };
    let (x, it) = match newton2(eval, x0) {
        Ok(r) => r,
        Err(x) => (x, MAX_NEWTON),
    };
    let (u, v, w, _) = ndt(x);
    polished(Program::P2, p, l0, prices, [u, v, w], it, Along::Cost(b))
}

/// P2 with `d = t`: one variable, `t = B / (rho_d + rho_c k n)`.
fn budget_tied(p: &OursParams, l0: f64, prices: &PriceModel, budget: f64) -> Result<AllocationResult, AllocError> {
    let kc = prices.rho_c * prices.k;
    let rd = prices.rho_d;
    let tied = |u: f64| {
        let per_t = rd + kc * u.exp();
        let w = budget.ln() - per_t.ln();
        let tm = Terms::at(p, u, w, w);
        let s = kc * u.exp() / per_t;
        let (al, be, ga, de) = (p.alpha, p.beta, p.gamma, p.delta);
        // d = t, so the overfitting term moves with w as well: exponent gamma u - delta w.
        let f = tm.h();
        let fu = -al * tm.cap + be * s * tm.train + (ga + de * s) * tm.over;
        let fuu = al * al * tm.cap
            + be * tm.train * (be * s * s + s * (1.0 - s))
            + tm.over * ((ga + de * s).powi(2) + de * s * (1.0 - s));
        (f, fu, fuu)
    };
    let u0 = 0.5 * (budget / kc).ln().min((budget / rd.max(f64::MIN_POSITIVE)).ln());
    let (u, it) = newton1(tied, u0).map_err(|u| {
        let t = budget / (rd + kc * u.exp());
        AllocError::NoConvergence { iterations: MAX_NEWTON, residual: f64::NAN, n: u.exp(), d: t, t }
    })?;
    let n = u.exp();
    let t = budget / (rd + kc * n);
    finish(Program::P2, p, l0, prices, n, t, t, Some(Degeneracy::NoOverfit), it)
}

/// Least cost reaching `l_target` (P1).
pub fn solve_target(p: &OursParams, l0: f64, prices: &PriceModel, l_target: f64) -> Result<AllocationResult, AllocError> {
    check_params(p, l0)?;
    prices.validate()?;
    let h_star = target_difficulty(l_target, p.e, l0).map_err(AllocError::Infeasible)?;
    let mut res = if d_degenerate(p) || prices.rho_d == 0.0 {
        target_by_bisection(p, l0, prices, h_star)?
    } else {
        target_newton(p, l0, prices, h_star)?
    };
    if res.cost < 1e-12 * prices.rho_c * prices.k || h_star > 1e6 {
        res.warnings.push(format!(
            "target {l_target} is within rounding of the uninformed baseline; the allocation is near zero"
        ));
    }
    Ok(res)
}

fn target_newton(p: &OursParams, l0: f64, prices: &PriceModel, h_star: f64) -> Result<AllocationResult, AllocError> {
    let (rd, kc) = (prices.rho_d, prices.rho_c * prices.k);
    let (al, be, ga, de) = (p.alpha, p.beta, p.gamma, p.delta);
    let lh = h_star.ln();
    // Coordinates: softmax logits (y1, y2, 0) of the shares of h* taken by
    // the capacity, overfitting and training terms. Every term is then a
    // product, so none is recovered by cancellation.
    let ndt = |[y1, y2]: [f64; 2]| {
        let m = y1.max(y2).max(0.0);
        let lse = m + ((y1 - m).exp() + (y2 - m).exp() + (-m).exp()).ln();
        let l = [y1 - lse, y2 - lse, -lse];
        let u = (p.a.ln() - lh - l[0]) / al;
        let v = (p.c.ln() + ga * u - lh - l[1]) / de;
        let w = (p.b.ln() - lh - l[2]) / be;
        (u, v, w, l.map(f64::exp))
    };
    // d(ln spend)/d(log-share) for the data and compute spends.
    let dd = [-ga / (al * de), -1.0 / de, 0.0];
    let dk = [-1.0 / al, 0.0, -1.0 / be];
    let eval = |y: [f64; 2]| {
        let (u, v, w, pi) = ndt(y);
        let data = rd * v.exp();
        let flops = kc * (u + w).exp();
        let f = data + flops;
        if !f.is_finite() {
            return None;
        }
        let gl: [f64; 3] = std::array::from_fn(|i| data * dd[i] + flops * dk[i]);
        let hl = |i: usize, m: usize| data * dd[i] * dd[m] + flops * dk[i] * dk[m];
        // d l_i / d y_j = [i == j] - pi_j
        let jac = |i: usize, j: usize| if i == j { 1.0 - pi[j] } else { -pi[j] };
        let sum_g: f64 = gl.iter().sum();
        let grad = [0, 1].map(|j| (0..3).map(|i| gl[i] * jac(i, j)).sum::<f64>());
        let hess = |j: usize, k: usize| {
            let mut acc = 0.0;
            for i in 0..3 {
                for m in 0..3 {
                    acc += jac(i, j) * hl(i, m) * jac(m, k);
                }
            }
            acc - sum_g * (if j == k { pi[j] } else { 0.0 } - pi[j] * pi[k])
        };
        Some((f, grad, [[hess(0, 0), hess(0, 1), hess(1, 1)]]))
    };
    let (y, it) = match newton2(eval, [0.0, 0.0]) {
        Ok(r) => r,
        Err(y) => (y, MAX_NEWTON),
    };
    let (u, v, w, _) = ndt(y);
    polished(Program::P1, p, l0, prices, [u, v, w], it, Along::Difficulty(h_star))
}

/// Quantity pinned while walking the frontier.
#[derive(Debug, Clone, Copy)]
enum Along {
    Cost(f64),
    Difficulty(f64),
}

/// Accepts the Newton point when it meets the FOC tolerance, otherwise
/// re-solves from the stationarity conditions.
///
/// When one spend dwarfs the other, the smaller one moves the objective by
/// less than its rounding and Newton stalls short of the tolerance. The
/// frontier solve below is exact to rounding in every regime.
#[allow(clippy::too_many_arguments)]
fn polished(
    program: Program,
    p: &OursParams,
    l0: f64,
    prices: &PriceModel,
    [u, v, w]: [f64; 3],
    iterations: usize,
    along: Along,
) -> Result<AllocationResult, AllocError> {
    if iterations < MAX_NEWTON {
        if let Ok(r) = finish(program, p, l0, prices, u.exp(), v.exp(), w.exp(), None, iterations) {
            return Ok(r);
        }
    }
    let tm = Terms::at(p, u, v, w);
    let flops = prices.rho_c * prices.k * (u + w).exp();
    let guess = (flops / (p.beta * tm.train)).ln();
    let (u, v, w) = frontier_point(p, prices, along, if guess.is_finite() { guess } else { 0.0 })?;
    finish(program, p, l0, prices, u.exp(), v.exp(), w.exp(), None, iterations)
}

/// Stationary allocation at difficulty price `mu` (dollars per unit of h),
/// in log coordinates.
///
/// Stationarity gives `K = mu beta T` and `D = mu delta Q` for the compute
/// and data spends, which fix `w` and `v` given `u`; the `n` condition
/// `alpha P = beta T + gamma Q` is then increasing in `u` and bisected.
fn stationary_at(p: &OursParams, prices: &PriceModel, ln_mu: f64) -> (f64, f64, f64) {
    let (al, be, ga, de) = (p.alpha, p.beta, p.gamma, p.delta);
    let ln_kc = (prices.rho_c * prices.k).ln();
    let w_of = |u: f64| (ln_mu + be.ln() + p.b.ln() - ln_kc - u) / (1.0 + be);
    let v_of = |u: f64| (ln_mu + de.ln() + p.c.ln() + ga * u - prices.rho_d.ln()) / (1.0 + de);
    let g = |u: f64| {
        let lt = be.ln() + p.b.ln() - be * w_of(u);
        let lq = ga.ln() + p.c.ln() + ga * u - de * v_of(u);
        let m = lt.max(lq);
        m + ((lt - m).exp() + (lq - m).exp()).ln() - (al * p.a).ln() + al * u
    };
    let u = bisect_increasing(g, 0.0);
    (u, v_of(u), w_of(u))
}

/// Root of an increasing function, found by doubling out from `x0` and
/// bisecting to rounding.
fn bisect_increasing(f: impl Fn(f64) -> f64, x0: f64) -> f64 {
    let (mut lo, mut hi) = (x0 - 1.0, x0 + 1.0);
    let mut span = 2.0;
    while f(lo) > 0.0 && span < 1e4 {
        lo -= span;
        span *= 2.0;
    }
    span = 2.0;
    while f(hi) < 0.0 && span < 1e4 {
        hi += span;
        span *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Point of the cost/difficulty frontier with the given budget or difficulty.
fn frontier_point(p: &OursParams, prices: &PriceModel, along: Along, guess: f64) -> Result<(f64, f64, f64), AllocError> {
    let kc = prices.rho_c * prices.k;
    // Increasing in ln mu: log cost above the budget, or log of h* over h.
    let gap = |ln_mu: f64| {
        let (u, v, w) = stationary_at(p, prices, ln_mu);
        match along {
            Along::Cost(b) => {
                let (lk, ld) = (kc.ln() + u + w, prices.rho_d.ln() + v);
                let m = lk.max(ld);
                m + ((lk - m).exp() + (ld - m).exp()).ln() - b.ln()
            }
            Along::Difficulty(h_star) => h_star.ln() - Terms::at(p, u, v, w).h().ln(),
        }
    };
    let ln_mu = bisect_increasing(gap, guess);
    let (u, v, w) = stationary_at(p, prices, ln_mu);
    if [u, v, w].iter().all(|x| x.is_finite()) {
        Ok((u, v, w))
    } else {
        Err(AllocError::NoConvergence { iterations: MAX_NEWTON, residual: f64::NAN, n: u.exp(), d: v.exp(), t: w.exp() })
    }
}

/// P1 for degenerate axes: bisect `ln B` until P2 reaches `h*`.
fn target_by_bisection(p: &OursParams, l0: f64, prices: &PriceModel, h_star: f64) -> Result<AllocationResult, AllocError> {
    let h_at = |lb: f64| solve_budget(p, l0, prices, lb.exp()).map(|r| r.h);
    let mut hi = 0.0f64;
    let mut steps = 0;
    while h_at(hi)? > h_star {
        hi += 8.0;
        steps += 1;
        if steps > 200 {
            return Err(AllocError::NoInteriorMinimum(format!("no budget up to e^{hi} reaches h* = {h_star}")));
        }
    }
    let mut lo = hi - 8.0;
    while h_at(lo)? <= h_star {
        lo -= 8.0;
        if lo < -1000.0 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h_at(mid)? > h_star {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    let mut r = solve_budget(p, l0, prices, hi.exp())?;
    r.program = Program::P1;
    r.multiplier = 1.0 / r.multiplier;
    Ok(r)
}

/// One point of a cost/loss frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub budget: f64,
    pub allocation: AllocationResult,
}

/// P2 at each budget; budgets must be positive and ascending.
pub fn pareto_frontier(
    p: &OursParams,
    l0: f64,
    prices: &PriceModel,
    budgets: &[f64],
) -> Result<Vec<FrontierPoint>, AllocError> {
    if budgets.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(AllocError::InvalidInput("budgets must be strictly ascending".into()));
    }
    budgets
        .iter()
        .map(|&b| solve_budget(p, l0, prices, b).map(|allocation| FrontierPoint { budget: b, allocation }))
        .collect()
}

/// Frontier as CSV: `budget, loss, n, d, t, epochs, data_share`.
pub fn frontier_csv(points: &[FrontierPoint]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["budget", "loss", "n", "d", "t", "epochs", "data_share"])?;
    for pt in points {
        let a = &pt.allocation;
        w.write_record(
            [pt.budget, a.loss, a.n_star, a.d_star, a.t_star, a.epochs, a.data_share].map(|v| v.to_string()),
        )?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
}

/// Minimizer of `h` over `n` as `t -> infinity` at fixed `d`:
/// `(alpha a d^delta / (gamma c))^(1/(alpha+gamma))`.
pub fn nopt_asymptotic(p: &OursParams, d: f64) -> Result<f64, AllocError> {
    if !(p.c > 0.0 && p.gamma > 0.0) {
        return Err(AllocError::NoInteriorMinimum(
            "without an overfitting term (c, gamma > 0) h decreases in n forever".into(),
        ));
    }
    if !(p.a > 0.0 && p.alpha > 0.0 && d > 0.0) {
        return Err(AllocError::InvalidInput("nopt_asymptotic needs a, alpha, d > 0".into()));
    }
    Ok(((p.alpha * p.a).ln() + p.delta * d.ln() - (p.gamma * p.c).ln()) / (p.alpha + p.gamma)).map(f64::exp)
}

/// Compute-optimal size without overfitting:
/// `(alpha a C^beta / (beta b k^beta))^(1/(alpha+beta))`.
pub fn nopt_chinchilla(p: &OursParams, c_flops: f64, k: f64) -> Result<f64, AllocError> {
    if !(p.a > 0.0 && p.b > 0.0 && p.alpha > 0.0 && p.beta > 0.0 && c_flops > 0.0 && k > 0.0) {
        return Err(AllocError::InvalidInput("nopt_chinchilla needs a, b, alpha, beta, C, k > 0".into()));
    }
    let ln = (p.alpha * p.a).ln() + p.beta * c_flops.ln() - (p.beta * p.b).ln() - p.beta * k.ln();
    Ok((ln / (p.alpha + p.beta)).exp())
}

/// Minimizer of `h(n | C, d)` with `t = C / (k n)`: the root of
/// `beta b k^beta n^(alpha+beta) / C^beta + gamma c n^(alpha+gamma) / d^delta = alpha a`.
pub fn nopt_finite(p: &OursParams, c_flops: f64, d: f64, k: f64) -> Result<f64, AllocError> {
    if !(p.a > 0.0 && p.b > 0.0 && p.alpha > 0.0 && p.beta > 0.0 && c_flops > 0.0 && k > 0.0 && d > 0.0) {
        return Err(AllocError::InvalidInput("nopt_finite needs a, b, alpha, beta, C, d, k > 0".into()));
    }
    let l1 = (p.beta * p.b).ln() + p.beta * (k.ln() - c_flops.ln());
    let (e1, e2) = (p.alpha + p.beta, p.alpha + p.gamma);
    let l2 = if p.c > 0.0 && p.gamma >= 0.0 { (p.gamma * p.c).ln() - p.delta * d.ln() } else { f64::NEG_INFINITY };
    let target = (p.alpha * p.a).ln();
    // G(x) = ln(e^{l1 + e1 x} + e^{l2 + e2 x}) - ln(alpha a), increasing in x = ln n.
    let g = |x: f64| {
        let (t1, t2) = (l1 + e1 * x, l2 + e2 * x);
        let m = t1.max(t2);
        m + ((t1 - m).exp() + (t2 - m).exp()).ln() - target
    };
    // Each term alone bounds the root from above.
    let mut hi = (target - l1) / e1;
    if l2.is_finite() && e2 > 0.0 {
        hi = hi.min((target - l2) / e2);
    }
    let mut lo = hi - 1.0;
    let mut guard = 0;
    while g(lo) > 0.0 {
        lo -= 2.0 * (hi - lo);
        guard += 1;
        if guard > 200 {
            return Err(AllocError::NoConvergence { iterations: guard, residual: g(lo), n: lo.exp(), d, t: f64::NAN });
        }
    }
    if g(hi) < 0.0 {
        hi += 1.0;
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * mid.abs().max(1.0) {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
