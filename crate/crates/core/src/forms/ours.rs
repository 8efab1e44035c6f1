//! The saturating three-term law and its ablations.

use serde::{Deserialize, Serialize};

use super::{FormId, FormParams, Point, LN_SATURATION};
use crate::error::{Bound, FormError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WrapperKind {
    /// `h / (1 + h)`
    #[default]
    Rational,
    /// `1 - exp(-h)`
    Exponential,
}

/// Parameters of the headline eight-parameter form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OursParams {
    pub e: f64,
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub beta: f64,
    pub c: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl OursParams {
    pub fn to_array(&self) -> [f64; 8] {
        [self.e, self.a, self.alpha, self.b, self.beta, self.c, self.gamma, self.delta]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, FormError> {
        if v.len() != 8 {
            return Err(FormError::InvalidParams(format!("expected 8 parameters, got {}", v.len())));
        }
        let p = OursParams { e: v[0], a: v[1], alpha: v[2], b: v[3], beta: v[4], c: v[5], gamma: v[6], delta: v[7] };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FormError> {
        let names = ["e", "a", "alpha", "b", "beta", "c", "gamma", "delta"];
        for (n, v) in names.iter().zip(self.to_array()) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(FormError::InvalidParams(format!("`{n}` = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Checks `e < l0` in addition to [`validate`](Self::validate).
    pub fn validate_against(&self, l0: f64) -> Result<(), FormError> {
        self.validate()?;
        if self.e >= l0 {
            return Err(FormError::InvalidParams(format!("e = {} must be below l0 = {l0}", self.e)));
        }
        Ok(())
    }
}

impl From<OursParams> for FormParams {
    fn from(p: OursParams) -> Self {
        FormParams { form: FormId::Ours, values: p.to_array().to_vec() }
    }
}

impl TryFrom<&FormParams> for OursParams {
    type Error = FormError;
    /// Accepts every form sharing the eight-parameter layout.
    fn try_from(fp: &FormParams) -> Result<Self, FormError> {
        match fp.form {
            FormId::Ours | FormId::OursExpWrapper | FormId::OursNoWrapper => OursParams::from_slice(&fp.values),
            FormId::OursNoOverfit => {
                let v = &fp.values;
                OursParams::from_slice(&[v[0], v[1], v[2], v[3], v[4], 0.0, 0.0, 0.0])
            }
            other => Err(FormError::InvalidParams(format!("{other} does not have the eight-parameter layout"))),
        }
    }
}

/// Difficulty value with its log and a saturation flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Difficulty {
    pub value: f64,
    /// `ln h`; `-inf` when every term vanishes.
    pub log_value: f64,
    /// Set when some term exceeded `1e300` and `value` was capped.
    pub saturated: bool,
}

/// Three-term difficulty `a/n^alpha + b/t^beta + c n^gamma / d^delta`.
///
/// ```
/// use satlaw::forms::{difficulty, OursParams, Point};
/// let p = OursParams { e: 0.0, a: 1.0, alpha: 1.0, b: 1.0, beta: 1.0, c: 1.0, gamma: 1.0, delta: 1.0 };
/// let h = difficulty(&p, &Point::new(2.0, 8.0, 4.0).unwrap()).unwrap();
/// assert_eq!(h.value, 1.0);
/// ```
pub fn difficulty(p: &OursParams, pt: &Point) -> Result<Difficulty, FormError> {
    p.validate()?;
    pt.validate()?;
    let (ln_n, ln_d, ln_t) = (pt.n.ln(), pt.d.ln(), pt.t.ln());
    let logs = [
        log_term(p.a, -p.alpha * ln_n),
        log_term(p.b, -p.beta * ln_t),
        log_term(p.c, p.gamma * ln_n - p.delta * ln_d),
    ];
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(Difficulty { value: 0.0, log_value: f64::NEG_INFINITY, saturated: false });
    }
    let log_value = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    if max > LN_SATURATION {
        return Ok(Difficulty { value: 1e300, log_value, saturated: true });
    }
    Ok(Difficulty { value: log_value.exp(), log_value, saturated: false })
}

fn log_term(coef: f64, log_scale: f64) -> f64 {
    if coef == 0.0 {
        f64::NEG_INFINITY
    } else {
        coef.ln() + log_scale
    }
}

/// Applies a saturating wrapper: `e + (l0 - e) w(h)`.
pub fn wrap(h: f64, e: f64, l0: f64, kind: WrapperKind) -> Result<f64, FormError> {
    if !(e.is_finite() && l0.is_finite() && e >= 0.0 && e < l0) {
        return Err(FormError::InvalidParams(format!("need 0 <= e < l0, got e = {e}, l0 = {l0}")));
    }
    if h.is_nan() || h < 0.0 {
        return Err(FormError::InvalidParams(format!("difficulty h = {h} must be >= 0")));
    }
    Ok(e + (l0 - e) * wrapper_value(h, kind))
}

fn wrapper_value<S: Scalar>(h: S, kind: WrapperKind) -> S {
    match kind {
        WrapperKind::Rational => {
            if h.re() == f64::INFINITY {
                S::cst(1.0)
            } else {
                h / (h + 1.0)
            }
        }
        WrapperKind::Exponential => -(-h).exp_m1(),
    }
}

/// Inverse of [`wrap`]: the difficulty that produces loss `loss`.
///
/// ```
/// use satlaw::forms::{invert_wrapper, WrapperKind};
/// assert_eq!(invert_wrapper(2.0, 1.0, 3.0, WrapperKind::Rational).unwrap(), 1.0);
/// ```
pub fn invert_wrapper(loss: f64, e: f64, l0: f64, kind: WrapperKind) -> Result<f64, FormError> {
    if !(loss.is_finite() && e.is_finite() && l0.is_finite() && e < l0) {
        return Err(FormError::InvalidParams(format!("need finite e < l0, got e = {e}, l0 = {l0}")));
    }
    if loss <= e {
        return Err(FormError::OutOfRange { loss, e, l0, bound: Bound::Floor });
    }
    if loss >= l0 {
        return Err(FormError::OutOfRange { loss, e, l0, bound: Bound::Ceiling });
    }
    Ok(match kind {
        WrapperKind::Rational => (loss - e) / (l0 - loss),
        WrapperKind::Exponential => -((l0 - loss) / (l0 - e)).ln(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Variant {
    Full,
    NoWrapper,
    NoOverfit,
    ExpWrapper,
    SingleExp,
    Extended,
}

/// `coef * exp(log_scale)` plus whether the term's log exceeded the
/// saturation threshold.
fn term<S: Scalar>(coef: S, log_scale: S) -> (S, bool) {
    let c = coef.re();
    if c <= 0.0 {
        return (coef * log_scale.min_re(S::cst(LN_SATURATION)).exp(), false);
    }
    let l = coef.ln() + log_scale;
    if l.re() > LN_SATURATION {
        (S::cst(1e300), true)
    } else {
        (l.exp(), false)
    }
}

pub(crate) fn eval_family<S: Scalar>(v: Variant, p: &[S], pt: &Point, l0: f64) -> Result<S, FormError> {
    let (ln_n, ln_d, ln_t) = (pt.n.ln(), pt.d.ln(), pt.t.ln());
    let e = p[0];
    let mut terms: Vec<(S, bool)> = Vec::with_capacity(4);
    terms.push(term(p[1], p[2] * -ln_n));
    let kind = match v {
        Variant::Full | Variant::NoWrapper | Variant::ExpWrapper => {
            terms.push(term(p[3], p[4] * -ln_t));
            terms.push(term(p[5], p[6] * ln_n - p[7] * ln_d));
            if v == Variant::ExpWrapper {
                Some(WrapperKind::Exponential)
            } else if v == Variant::NoWrapper {
                None
            } else {
                Some(WrapperKind::Rational)
            }
        }
        Variant::NoOverfit => {
            terms.push(term(p[3], p[4] * -ln_t));
            Some(WrapperKind::Rational)
        }
        Variant::SingleExp => {
            terms.push(term(p[3], p[4] * -ln_t));
            terms.push(term(p[5], p[6] * (ln_n - ln_d)));
            Some(WrapperKind::Rational)
        }
        Variant::Extended => {
            let beta_eff = (p[4] + p[5] * ln_n + p[6] * ln_d).clamp_re(0.01, 5.0);
            terms.push(term(p[3], beta_eff * -ln_t));
            terms.push(term(p[7], p[8] * ln_n - p[9] * ln_d));
            terms.push(term(p[10], p[11] * (ln_n - ln_d)));
            Some(WrapperKind::Exponential)
        }
    };
    let saturated = terms.iter().any(|t| t.1);
    let h = terms.iter().fold(S::cst(0.0), |acc, t| acc + t.0);
    match kind {
        None => Ok(e + h),
        Some(kind) => {
            if !(e.re() < l0) {
                return Err(FormError::InvalidParams(format!("e = {} must be below l0 = {l0}", e.re())));
            }
            if saturated {
                return Ok(S::cst(l0));
            }
            Ok(e + (S::cst(l0) - e) * wrapper_value(h, kind))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{eval, predict, EvalContext};
    use crate::scalar::Dual;
    use proptest::prelude::*;

    fn unit() -> OursParams {
        OursParams { e: 0.0, a: 1.0, alpha: 1.0, b: 1.0, beta: 1.0, c: 1.0, gamma: 1.0, delta: 1.0 }
    }

    #[test]
    fn difficulty_direct_arithmetic() {
        let h = difficulty(&unit(), &Point::new(2.0, 8.0, 4.0).unwrap()).unwrap();
        assert_eq!(h.value, 1.0);
        assert!(!h.saturated);
    }

    #[test]
    fn difficulty_vanishes_with_zero_coefficients() {
        let p = OursParams { a: 0.0, b: 0.0, c: 0.0, ..unit() };
        let h = difficulty(&p, &Point::new(3.0, 5.0, 7.0).unwrap()).unwrap();
        assert_eq!(h.value, 0.0);
    }

    #[test]
    fn difficulty_mnist_row_golden() {
        // Golden value from an independent 40-digit evaluation.
        let p = OursParams {
            e: 0.070,
            a: 5.41e4,
            alpha: 1.448,
            b: 1.86e3,
            beta: 1.226,
            c: 3.41,
            gamma: 0.109,
            delta: 0.584,
        };
        let h = difficulty(&p, &Point::new(6.69e5, 6e4, 1e6).unwrap()).unwrap();
        let golden = 0.024_119_404_347_556_593;
        assert!((h.value - golden).abs() / golden < 1e-13, "{}", h.value);
    }

    #[test]
    fn difficulty_saturates_instead_of_overflowing() {
        let p = OursParams { a: 1e10, alpha: 5.0, ..unit() };
        let h = difficulty(&p, &Point::new(1e-80, 1.0, 1.0).unwrap()).unwrap();
        assert!(h.saturated);
        assert!(h.value.is_finite());
        let l = predict(&FormParams::from(OursParams { e: 1.0, ..p }), &Point::new(1e-80, 1.0, 1.0).unwrap(), &EvalContext::new(3.0))
            .unwrap();
        assert_eq!(l, 3.0);
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap(1.0, 1.0, 3.0, WrapperKind::Rational).unwrap(), 2.0);
        assert_eq!(wrap(0.0, 1.0, 3.0, WrapperKind::Rational).unwrap(), 1.0);
        assert_eq!(wrap(0.0, 1.0, 3.0, WrapperKind::Exponential).unwrap(), 1.0);
        let l = wrap(1e9, 1.0, 3.0, WrapperKind::Rational).unwrap();
        assert!((l - (3.0 - 2.0 / (1.0 + 1e9))).abs() < 1e-15);
        assert!(3.0 - l < 1e-8);
        assert!(wrap(1.0, 3.0, 3.0, WrapperKind::Rational).is_err());
    }

    #[test]
    fn invert_examples() {
        assert_eq!(invert_wrapper(2.0, 1.0, 3.0, WrapperKind::Rational).unwrap(), 1.0);
        let h = invert_wrapper(1.0 + 1e-12, 1.0, 3.0, WrapperKind::Rational).unwrap();
        assert!(h < 1e-11);
        let h = invert_wrapper(1.83, 0.315, 11.09, WrapperKind::Rational).unwrap();
        assert!((h - 0.163_606_911_447_084_23).abs() < 1e-15);
        match invert_wrapper(0.5, 1.0, 3.0, WrapperKind::Rational) {
            Err(FormError::OutOfRange { bound: Bound::Floor, .. }) => {}
            other => panic!("{other:?}"),
        }
        match invert_wrapper(3.0, 1.0, 3.0, WrapperKind::Exponential) {
            Err(FormError::OutOfRange { bound: Bound::Ceiling, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn extended_clamp_matches_clamped_evaluation() {
        let ctx = EvalContext::new(5.0);
        let pt = Point::new(1e3, 1e4, 1e5).unwrap();
        let mut v = vec![0.5, 10.0, 0.3, 5.0, 0.0, 0.5, 0.0, 1.0, 0.2, 0.4, 0.1, 0.3];
        // beta_eff = 0.5 * ln(1e3) ~ 3.45 stays inside; push it above 5.
        v[5] = 2.0;
        let above = eval::<f64>(FormId::OursExtended, &v, &pt, &ctx).unwrap();
        let mut clamped = v.clone();
        clamped[4] = 5.0;
        clamped[5] = 0.0;
        let at = eval::<f64>(FormId::OursExtended, &clamped, &pt, &ctx).unwrap();
        assert_eq!(above, at);
        v[5] = -2.0;
        let below = eval::<f64>(FormId::OursExtended, &v, &pt, &ctx).unwrap();
        clamped[4] = 0.01;
        assert_eq!(below, eval::<f64>(FormId::OursExtended, &clamped, &pt, &ctx).unwrap());
    }

    #[test]
    fn dual_gradient_matches_finite_difference() {
        let ctx = EvalContext::new(4.0);
        let pt = Point::new(3e4, 2e5, 6e5).unwrap();
        let v = [0.4, 120.0, 0.5, 30.0, 0.35, 2.0, 0.3, 0.45];
        for form in [FormId::Ours, FormId::OursExpWrapper, FormId::OursNoWrapper] {
            let d = eval(form, &Dual::seed(&v), &pt, &ctx).unwrap();
            for i in 0..8 {
                let h = 1e-6 * v[i];
                let mut up = v;
                up[i] += h;
                let mut dn = v;
                dn[i] -= h;
                let fd = (eval::<f64>(form, &up, &pt, &ctx).unwrap() - eval::<f64>(form, &dn, &pt, &ctx).unwrap()) / (2.0 * h);
                assert!((d.eps[i] - fd).abs() <= 1e-6 * fd.abs().max(1e-6), "{form} {i}: {} vs {fd}", d.eps[i]);
            }
        }
    }

    proptest! {
        #[test]
        fn wrap_inverts(h in 1e-6f64..1e6, e in 0.0f64..2.0, gap in 0.1f64..10.0, exp in any::<bool>()) {
            let kind = if exp { WrapperKind::Exponential } else { WrapperKind::Rational };
            let l0 = e + gap;
            let l = wrap(h, e, l0, kind).unwrap();
            prop_assume!(l < l0 && l > e);
            let back = invert_wrapper(l, e, l0, kind).unwrap();
            prop_assert!((wrap(back, e, l0, kind).unwrap() - l).abs() <= 1e-12 * l);
        }

        #[test]
        fn wrap_strictly_increasing(h in 0.0f64..100.0, dh in 1e-3f64..10.0, exp in any::<bool>()) {
            let kind = if exp { WrapperKind::Exponential } else { WrapperKind::Rational };
            prop_assume!(!(exp && h > 30.0));
            prop_assert!(wrap(h + dh, 0.5, 3.0, kind).unwrap() > wrap(h, 0.5, 3.0, kind).unwrap());
        }

        #[test]
        fn wrappers_agree_at_small_h(h in 0.0f64..0.01, e in 0.0f64..2.0, gap in 0.1f64..10.0) {
            let r = wrap(h, e, e + gap, WrapperKind::Rational).unwrap();
            let x = wrap(h, e, e + gap, WrapperKind::Exponential).unwrap();
            prop_assert!((r - x).abs() <= gap * h * h * 0.5 * 1.02 + 1e-15);
        }

        #[test]
        fn difficulty_monotone_in_d_and_t(
            t in 1.0f64..1e9, d in 1.0f64..1e9, n in 1.0f64..1e9, k in 1.01f64..100.0,
        ) {
            let p = OursParams { e: 0.1, a: 3.0, alpha: 0.4, b: 5.0, beta: 0.3, c: 0.2, gamma: 0.2, delta: 0.5 };
            let base = difficulty(&p, &Point::new(n, d, t).unwrap()).unwrap().value;
            prop_assert!(difficulty(&p, &Point::new(n, d * k, t).unwrap()).unwrap().value <= base);
            prop_assert!(difficulty(&p, &Point::new(n, d, t * k).unwrap()).unwrap().value <= base);
        }
    }
}
