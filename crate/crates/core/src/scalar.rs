//! Scalar abstraction shared by plain `f64` evaluation and forward-mode
//! gradients.
//!
//! Every form is written once, generic over [`Scalar`]. Evaluating it with
//! `f64` gives predictions; evaluating it with [`Dual`] gives predictions
//! together with the exact gradient with respect to up to [`MAX_PARAMS`]
//! seeded inputs.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Largest parameter vector any registered form uses (the 12-parameter
/// extended form).
pub const MAX_PARAMS: usize = 12;

pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn re(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn exp_m1(self) -> Self;
    fn sqrt(self) -> Self;

    fn abs(self) -> Self {
        if self.re() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn powf(self, p: Self) -> Self {
        (self.ln() * p).exp()
    }

    fn square(self) -> Self {
        self * self
    }

    /// `ln(1 + e^x)` without overflow.
    fn softplus(self) -> Self {
        if self.re() > 0.0 {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }

    fn clamp_re(self, lo: f64, hi: f64) -> Self {
        let v = self.re();
        if v < lo {
            Self::cst(lo)
        } else if v > hi {
            Self::cst(hi)
        } else {
            self
        }
    }

    fn min_re(self, other: Self) -> Self {
        if other.re() < self.re() {
            other
        } else {
            self
        }
    }

    fn max_re(self, other: Self) -> Self {
        if other.re() > self.re() {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    fn exp_m1(self) -> Self {
        f64::exp_m1(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// First-order dual number carrying a dense gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: [f64; MAX_PARAMS],
}

impl Dual {
    /// The `i`-th independent variable with value `v`.
    pub fn var(v: f64, i: usize) -> Self {
        let mut eps = [0.0; MAX_PARAMS];
        eps[i] = 1.0;
        Dual { re: v, eps }
    }

    /// Seeds each entry of `xs` as its own independent variable.
    pub fn seed(xs: &[f64]) -> Vec<Dual> {
        assert!(xs.len() <= MAX_PARAMS, "too many parameters for Dual");
        xs.iter().enumerate().map(|(i, &v)| Dual::var(v, i)).collect()
    }

    pub fn grad(&self, n: usize) -> Vec<f64> {
        self.eps[..n].to_vec()
    }

    #[inline]
    fn chain(self, re: f64, d: f64) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e *= d;
        }
        Dual { re, eps }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        let mut eps = self.eps;
        for (e, oe) in eps.iter_mut().zip(o.eps.iter()) {
            *e += oe;
        }
        Dual { re: self.re + o.re, eps }
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        let mut eps = self.eps;
        for (e, oe) in eps.iter_mut().zip(o.eps.iter()) {
            *e -= oe;
        }
        Dual { re: self.re - o.re, eps }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        let mut eps = [0.0; MAX_PARAMS];
        for i in 0..MAX_PARAMS {
            eps[i] = self.eps[i] * o.re + o.eps[i] * self.re;
        }
        Dual { re: self.re * o.re, eps }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.re;
        let re = self.re * inv;
        let mut eps = [0.0; MAX_PARAMS];
        for i in 0..MAX_PARAMS {
            eps[i] = (self.eps[i] - re * o.eps[i]) * inv;
        }
        Dual { re, eps }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        self.chain(-self.re, -1.0)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: f64) -> Dual {
        Dual { re: self.re + o, eps: self.eps }
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: f64) -> Dual {
        Dual { re: self.re - o, eps: self.eps }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: f64) -> Dual {
        self.chain(self.re * o, o)
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: f64) -> Dual {
        self.chain(self.re / o, 1.0 / o)
    }
}

impl Scalar for Dual {
    fn cst(v: f64) -> Self {
        Dual { re: v, eps: [0.0; MAX_PARAMS] }
    }
    fn re(&self) -> f64 {
        self.re
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), 1.0 / self.re)
    }
    fn ln_1p(self) -> Self {
        self.chain(self.re.ln_1p(), 1.0 / (1.0 + self.re))
    }
    fn exp_m1(self) -> Self {
        self.chain(self.re.exp_m1(), self.re.exp())
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6 * x.abs().max(1.0);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn elementary_derivatives_match_finite_differences() {
        let x = 0.7;
        let cases: Vec<(Box<dyn Fn(Dual) -> Dual>, Box<dyn Fn(f64) -> f64>)> = vec![
            (Box::new(|v: Dual| v.exp()), Box::new(|v: f64| v.exp())),
            (Box::new(|v: Dual| v.ln()), Box::new(|v: f64| v.ln())),
            (Box::new(|v: Dual| v.ln_1p()), Box::new(|v: f64| v.ln_1p())),
            (Box::new(|v: Dual| v.exp_m1()), Box::new(|v: f64| v.exp_m1())),
            (Box::new(|v: Dual| v.sqrt()), Box::new(|v: f64| v.sqrt())),
            (Box::new(|v: Dual| v.softplus()), Box::new(|v: f64| v.softplus())),
            (
                Box::new(|v: Dual| v.powf(Dual::cst(1.7)) / (v + 2.0)),
                Box::new(|v: f64| v.powf(1.7) / (v + 2.0)),
            ),
        ];
        for (df, ff) in cases {
            let d = df(Dual::var(x, 0));
            assert!((d.re - ff(x)).abs() < 1e-15);
            assert!((d.eps[0] - fd(&ff, x)).abs() < 1e-8);
        }
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_eq!(800.0f64.softplus(), 800.0);
        assert!((-800.0f64).softplus() >= 0.0);
        assert!(((-800.0f64).softplus()).is_finite());
    }

    #[test]
    fn product_rule_with_two_variables() {
        let v = Dual::seed(&[2.0, 3.0]);
        let p = v[0] * v[1] - v[0] / v[1];
        assert_eq!(p.re, 6.0 - 2.0 / 3.0);
        assert!((p.eps[0] - (3.0 - 1.0 / 3.0)).abs() < 1e-15);
        assert!((p.eps[1] - (2.0 + 2.0 / 9.0)).abs() < 1e-15);
    }
}
