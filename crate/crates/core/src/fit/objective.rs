//! Robust log-residual objective and the loss-floor hinge prior.

use crate::forms::{self, from_unconstrained_generic, EvalContext, FormId, Point};
use crate::scalar::{Dual, Scalar};

/// Huber penalty: quadratic inside `tau`, linear outside.
pub fn huber(r: f64, tau: f64) -> f64 {
    huber_generic(r, tau)
}

fn huber_generic<S: Scalar>(r: S, tau: f64) -> S {
    let a = r.abs();
    if a.re() <= tau {
        r * r * 0.5
    } else {
        (a - 0.5 * tau) * tau
    }
}

/// One-sided quadratic penalty on `ln e` below `m / kappa`.
pub fn e_hinge_penalty(e: f64, m: f64, kappa: f64, lambda: f64) -> f64 {
    hinge_generic(e, m, kappa, lambda)
}

fn hinge_generic<S: Scalar>(e: S, m: f64, kappa: f64, lambda: f64) -> S {
    let gap = S::cst((m / kappa).ln()) - e.ln();
    if gap.re() > 0.0 {
        gap * gap * lambda
    } else {
        S::cst(0.0)
    }
}

/// Hinge settings resolved against a concrete grid.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Hinge {
    pub index: usize,
    pub m: f64,
    pub kappa: f64,
    pub lambda: f64,
}

/// Data the objective needs, precomputed once per fit.
#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub form: FormId,
    pub ctx: EvalContext,
    pub points: Vec<Point>,
    pub log_losses: Vec<f64>,
    pub tau: f64,
    pub hinge: Option<Hinge>,
}

impl Problem {
    fn eval<S: Scalar>(&self, params: &[S]) -> Option<S> {
        let mut total = S::cst(0.0);
        for (pt, &ll) in self.points.iter().zip(&self.log_losses) {
            let pred = forms::eval(self.form, params, pt, &self.ctx).ok()?;
            if !(pred.re() > 0.0 && pred.re().is_finite()) {
                return None;
            }
            total = total + huber_generic(pred.ln() - ll, self.tau);
        }
        if let Some(h) = self.hinge {
            total = total + hinge_generic(params[h.index], h.m, h.kappa, h.lambda);
        }
        total.re().is_finite().then_some(total)
    }

    /// Objective at constrained parameter values; `None` outside the domain.
    pub fn value(&self, params: &[f64]) -> Option<f64> {
        self.eval(params)
    }

    /// Objective and gradient in unconstrained coordinates. Infinite outside
    /// the domain.
    pub fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let params = from_unconstrained_generic(self.form, &Dual::seed(x));
        match self.eval(&params) {
            Some(v) => (v.re, v.grad(x.len())),
            None => (f64::INFINITY, vec![f64::NAN; x.len()]),
        }
    }

    pub fn value_unconstrained(&self, x: &[f64]) -> f64 {
        self.eval(&from_unconstrained_generic(self.form, x)).unwrap_or(f64::INFINITY)
    }
}
