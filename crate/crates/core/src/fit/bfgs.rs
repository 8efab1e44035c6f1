//! Dense BFGS with a strong-Wolfe line search.

/// Stopping and line-search settings.
#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iters: usize,
    /// Converged when the gradient max-norm falls below this.
    pub grad_tol: f64,
    /// Largest coordinate change allowed in one step.
    pub max_step: f64,
    pub c1: f64,
    pub c2: f64,
    /// Gradient max-norm, relative to `max(1, |f|)`, accepted when the line
    /// search can no longer make progress at machine precision.
    pub stall_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iters: 500, grad_tol: 1e-8, max_step: 5.0, c1: 1e-4, c2: 0.9, stall_tol: 1e-5 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

struct Trial {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    d: f64,
}

/// Minimizes `fg`, which returns the objective and its gradient. A
/// non-finite objective marks a point as outside the domain.
pub fn minimize<F>(mut fg: F, x0: &[f64], opts: &BfgsOptions) -> BfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let p = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = fg(&x);
    if !f.is_finite() || !all_finite(&g) {
        return BfgsOutcome { x, f: f64::INFINITY, grad_norm: f64::INFINITY, iterations: 0, converged: false };
    }
    let mut h = identity(p);
    let mut fresh = true;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let gn = inf_norm(&g);
        if gn < opts.grad_tol {
            return BfgsOutcome { x, f, grad_norm: gn, iterations, converged: true };
        }
        iterations += 1;
        let mut dir: Vec<f64> = (0..p).map(|i| -(0..p).map(|j| h[i][j] * g[j]).sum::<f64>()).collect();
        let mut d0 = dot(&g, &dir);
        if !(d0 < 0.0) || !all_finite(&dir) {
            h = identity(p);
            fresh = true;
            dir = g.iter().map(|v| -v).collect();
            d0 = dot(&g, &dir);
        }
        let trial = line_search(&mut fg, &x, f, &dir, d0, opts);
        let trial = match trial {
            Some(t) => t,
            None if !fresh => {
                h = identity(p);
                fresh = true;
                continue;
            }
            None => {
                let converged = gn < opts.stall_tol * f.abs().max(1.0);
                return BfgsOutcome { x, f, grad_norm: gn, iterations, converged };
            }
        };
        let s: Vec<f64> = dir.iter().map(|v| trial.alpha * v).collect();
        let y: Vec<f64> = trial.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let x_new: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + b).collect();
        let no_progress = x_new == x;
        x = x_new;
        f = trial.f;
        g = trial.g;
        if no_progress {
            let gn = inf_norm(&g);
            let converged = gn < opts.grad_tol || gn < opts.stall_tol * f.abs().max(1.0);
            return BfgsOutcome { x, f, grad_norm: gn, iterations, converged };
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if fresh {
                let scale = sy / dot(&y, &y);
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = scale;
                }
            }
            update_inverse(&mut h, &s, &y, sy);
            fresh = false;
        }
    }
    let gn = inf_norm(&g);
    BfgsOutcome { x, f, grad_norm: gn, iterations, converged: gn < opts.grad_tol }
}

fn identity(p: usize) -> Vec<Vec<f64>> {
    (0..p).map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`
fn update_inverse(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let p = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..p).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..p {
        for j in 0..p {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

fn line_search<F>(fg: &mut F, x: &[f64], f0: f64, dir: &[f64], d0: f64, opts: &BfgsOptions) -> Option<Trial>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let alpha_max = opts.max_step / inf_norm(dir).max(f64::MIN_POSITIVE);
    let mut eval = |alpha: f64| -> Trial {
        let xt: Vec<f64> = x.iter().zip(dir).map(|(a, b)| a + alpha * b).collect();
        let (f, g) = fg(&xt);
        if !f.is_finite() || !all_finite(&g) {
            return Trial { alpha, f: f64::INFINITY, g, d: f64::NAN };
        }
        let d = dot(&g, dir);
        Trial { alpha, f, g, d }
    };
    let armijo = |t: &Trial| t.f <= f0 + opts.c1 * t.alpha * d0;
    let curvature = |t: &Trial| t.d.abs() <= -opts.c2 * d0;
    // Approximate Wolfe conditions, usable when f changes at rounding level.
    let approx = |t: &Trial| {
        t.f <= f0 + 1e-12 * f0.abs() && t.d.is_finite() && (2.0 * opts.c1 - 1.0) * d0 >= t.d && t.d >= opts.c2 * d0
    };

    let mut prev = Trial { alpha: 0.0, f: f0, g: Vec::new(), d: d0 };
    let mut alpha = 1.0f64.min(alpha_max);
    for i in 0..40 {
        let t = eval(alpha);
        if !t.f.is_finite() || !armijo(&t) || (i > 0 && t.f >= prev.f) {
            if approx(&t) {
                return Some(t);
            }
            return zoom(&mut eval, prev, t, d0, opts, &armijo, &approx);
        }
        if curvature(&t) {
            return Some(t);
        }
        if t.d >= 0.0 {
            return zoom(&mut eval, t, prev, d0, opts, &armijo, &approx);
        }
        if alpha >= alpha_max {
            return Some(t);
        }
        prev = t;
        alpha = (2.0 * alpha).min(alpha_max);
    }
    (prev.alpha > 0.0).then_some(prev)
}

#[allow(clippy::too_many_arguments)]
fn zoom<E, A, W>(
    eval: &mut E,
    mut lo: Trial,
    mut hi: Trial,
    d0: f64,
    opts: &BfgsOptions,
    armijo: &A,
    approx: &W,
) -> Option<Trial>
where
    E: FnMut(f64) -> Trial,
    A: Fn(&Trial) -> bool,
    W: Fn(&Trial) -> bool,
{
    for _ in 0..60 {
        let width = hi.alpha - lo.alpha;
        if width.abs() <= 1e-16 * lo.alpha.abs().max(hi.alpha.abs()) {
            break;
        }
        let mut alpha = if hi.f.is_finite() && lo.d.is_finite() {
            let denom = 2.0 * (hi.f - lo.f - lo.d * width);
            if denom > 0.0 {
                lo.alpha - lo.d * width * width / denom
            } else {
                lo.alpha + 0.5 * width
            }
        } else {
            lo.alpha + 0.5 * width
        };
        let (a, b) = if lo.alpha < hi.alpha { (lo.alpha, hi.alpha) } else { (hi.alpha, lo.alpha) };
        let margin = 0.1 * (b - a);
        if !(alpha > a + margin && alpha < b - margin) {
            alpha = lo.alpha + 0.5 * width;
        }
        let t = eval(alpha);
        if !t.f.is_finite() || !armijo(&t) || t.f >= lo.f {
            if approx(&t) {
                return Some(t);
            }
            hi = t;
        } else {
            if t.d.abs() <= -opts.c2 * d0 {
                return Some(t);
            }
            if t.d * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
    }
    (lo.alpha > 0.0).then_some(lo)
}
