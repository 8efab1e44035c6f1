//! Registry of parametric scaling-law forms.
//!
//! Each [`FormId`] owns one parameter layout ([`FormId::layout`]) and one
//! evaluation rule. Evaluation is written once, generic over
//! [`Scalar`](crate::scalar::Scalar), so the same code produces plain
//! predictions and exact parameter gradients for fitting.
//!
//! The headline form bounds loss between an irreducible floor `e` and the
//! uninformed baseline `l0`:
//!
//! ```text
//! L = e + (l0 - e) * w(h),    h = a/n^alpha + b/t^beta + c * n^gamma / d^delta
//! ```
//!
//! with `w(h) = h/(1+h)` (rational) or `1 - exp(-h)` (exponential).

mod baselines;
mod ours;
mod transform;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::FormError;
use crate::scalar::Scalar;

pub use baselines::solve_m4;
pub use ours::{difficulty, invert_wrapper, wrap, Difficulty, OursParams, WrapperKind};
pub use transform::{from_unconstrained, inverse_softplus, to_unconstrained, E_FLOOR};

pub(crate) use transform::from_unconstrained_generic;

/// Chinchilla-style examples-per-parameter ratio used to define the base
/// capacity of the Muennighoff effective-parameter rule.
pub const EXAMPLES_PER_PARAM: f64 = 20.0;

/// Log of the largest term value evaluated before the difficulty is treated
/// as saturated.
pub const LN_SATURATION: f64 = 690.775_527_898_213_7; // ln(1e300)

/// One coordinate of the `(n, d, t)` space, with optional measured compute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub n: f64,
    pub d: f64,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

impl Point {
    pub fn new(n: f64, d: f64, t: f64) -> Result<Self, FormError> {
        let p = Point { n, d, t, c: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_compute(mut self, c: f64) -> Self {
        self.c = Some(c);
        self
    }

    pub fn validate(&self) -> Result<(), FormError> {
        for (name, v) in [("n", self.n), ("d", self.d), ("t", self.t)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FormError::InvalidPoint(format!("{name} = {v} must be finite and > 0")));
            }
        }
        if let Some(c) = self.c {
            if !(c.is_finite() && c > 0.0) {
                return Err(FormError::InvalidPoint(format!("c = {c} must be finite and > 0")));
            }
        }
        Ok(())
    }

    /// Value of the point on `axis`; compute falls back to `k * n * t`.
    pub fn axis_value(&self, axis: Axis, k: f64) -> f64 {
        match axis {
            Axis::N => self.n,
            Axis::D => self.d,
            Axis::T => self.t,
            Axis::C => self.c.unwrap_or(k * self.n * self.t),
        }
    }
}

/// A coordinate axis of the run space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    N,
    D,
    T,
    C,
}

impl FromStr for Axis {
    type Err = FormError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "n" => Ok(Axis::N),
            "d" => Ok(Axis::D),
            "t" => Ok(Axis::T),
            "c" => Ok(Axis::C),
            other => Err(FormError::InvalidParams(format!("unknown axis `{other}` (expected n, d, t or c)"))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::N => "n",
            Axis::D => "d",
            Axis::T => "t",
            Axis::C => "c",
        };
        f.write_str(s)
    }
}

/// Context a form needs beyond its own parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalContext {
    /// Uninformed-baseline loss of the dataset.
    pub l0: f64,
    /// Input scalar of the M4 form.
    #[serde(default = "default_m4_axis")]
    pub m4_axis: Axis,
    /// Composite scalar of the BNSL forms.
    #[serde(default = "default_bnsl_axis")]
    pub bnsl_axis: Axis,
    /// FLOPs per parameter-example, used when compute is derived as `k n t`.
    #[serde(default = "default_k")]
    pub k: f64,
}

fn default_m4_axis() -> Axis {
    Axis::D
}
fn default_bnsl_axis() -> Axis {
    Axis::C
}
fn default_k() -> f64 {
    6.0
}

impl EvalContext {
    pub fn new(l0: f64) -> Self {
        EvalContext { l0, m4_axis: Axis::D, bnsl_axis: Axis::C, k: 6.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormId {
    Ours,
    OursNoWrapper,
    OursNoOverfit,
    OursExpWrapper,
    OursSingleExp,
    OursExtended,
    Chinchilla,
    Kaplan,
    Muennighoff,
    M4,
    BnslK1,
    BnslK2,
    Farseer,
}

/// How a parameter is mapped to unconstrained space and initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Loss floor: softplus transform, `U(0.5, 3.0)` init.
    Floor,
    /// Multiplicative coefficient: log transform, log-uniform `[0.01, 1000]`.
    Coef,
    /// Exponent: log transform, `U(0.1, 0.7)`.
    Exponent,
    /// Scale or break location: log transform, log-uniform `[10, 1e6]`.
    Scale,
    /// Exponent allowed to change sign: identity transform, `U(0.1, 0.7)`.
    SignedExponent,
    /// Log-linear slope: identity transform, `U(-0.02, 0.02)`.
    Slope,
    /// Sign-free parameter initialised around a supplied anchor.
    Anchored,
}

impl ParamKind {
    pub fn is_positive(self) -> bool {
        matches!(self, ParamKind::Floor | ParamKind::Coef | ParamKind::Exponent | ParamKind::Scale)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
}

const fn p(name: &'static str, kind: ParamKind) -> ParamSpec {
    ParamSpec { name, kind }
}

use ParamKind::*;

const OURS: &[ParamSpec] = &[
    p("e", Floor),
    p("a", Coef),
    p("alpha", Exponent),
    p("b", Coef),
    p("beta", Exponent),
    p("c", Coef),
    p("gamma", Exponent),
    p("delta", Exponent),
];
const OURS_NO_OVERFIT: &[ParamSpec] =
    &[p("e", Floor), p("a", Coef), p("alpha", Exponent), p("b", Coef), p("beta", Exponent)];
const OURS_SINGLE_EXP: &[ParamSpec] = &[
    p("e", Floor),
    p("a", Coef),
    p("alpha", Exponent),
    p("b", Coef),
    p("beta", Exponent),
    p("c", Coef),
    p("gamma", Exponent),
];
const OURS_EXTENDED: &[ParamSpec] = &[
    p("e", Floor),
    p("a", Coef),
    p("alpha", Exponent),
    p("b", Coef),
    p("beta0", Exponent),
    p("beta_n", Slope),
    p("beta_d", Slope),
    p("c", Coef),
    p("gamma", Exponent),
    p("delta", Exponent),
    p("e2", Coef),
    p("phi", Exponent),
];
const CHINCHILLA: &[ParamSpec] =
    &[p("e", Floor), p("A", Coef), p("B", Coef), p("alpha", Exponent), p("beta", Exponent)];
const KAPLAN: &[ParamSpec] =
    &[p("n_c", Scale), p("d_c", Scale), p("alpha_n", Exponent), p("alpha_d", Exponent)];
const MUENNIGHOFF: &[ParamSpec] = &[
    p("e", Floor),
    p("A", Coef),
    p("B", Coef),
    p("alpha", Exponent),
    p("beta", Exponent),
    p("r_d_star", Coef),
    p("r_n_star", Coef),
];
const M4: &[ParamSpec] = &[p("e", Floor), p("a_m4", Coef), p("b_m4", Coef), p("c_m4", Exponent)];
const BNSL_K1: &[ParamSpec] = &[
    p("a_bnsl", Floor),
    p("b_bnsl", Coef),
    p("c0", Exponent),
    p("d1", Scale),
    p("c1", SignedExponent),
    p("f1", Exponent),
];
const BNSL_K2: &[ParamSpec] = &[
    p("a_bnsl", Floor),
    p("b_bnsl", Coef),
    p("c0", Exponent),
    p("d1", Scale),
    p("c1", SignedExponent),
    p("f1", Exponent),
    p("d2", Scale),
    p("c2", SignedExponent),
    p("f2", Exponent),
];
const FARSEER: &[ParamSpec] = &[
    p("a1", Anchored),
    p("a2", Anchored),
    p("a3", Anchored),
    p("b1", Anchored),
    p("b2", Anchored),
    p("b3", Anchored),
    p("c1", Anchored),
    p("c2", Anchored),
    p("c3", Anchored),
];

impl FormId {
    pub const ALL: [FormId; 13] = [
        FormId::Ours,
        FormId::OursNoWrapper,
        FormId::OursNoOverfit,
        FormId::OursExpWrapper,
        FormId::OursSingleExp,
        FormId::OursExtended,
        FormId::Chinchilla,
        FormId::Kaplan,
        FormId::Muennighoff,
        FormId::M4,
        FormId::BnslK1,
        FormId::BnslK2,
        FormId::Farseer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FormId::Ours => "ours",
            FormId::OursNoWrapper => "ours-no-wrapper",
            FormId::OursNoOverfit => "ours-no-overfit",
            FormId::OursExpWrapper => "ours-exp-wrapper",
            FormId::OursSingleExp => "ours-single-exp",
            FormId::OursExtended => "ours-extended",
            FormId::Chinchilla => "chinchilla",
            FormId::Kaplan => "kaplan",
            FormId::Muennighoff => "muennighoff",
            FormId::M4 => "m4",
            FormId::BnslK1 => "bnsl-k1",
            FormId::BnslK2 => "bnsl-k2",
            FormId::Farseer => "farseer",
        }
    }

    pub fn layout(self) -> &'static [ParamSpec] {
        match self {
            FormId::Ours | FormId::OursNoWrapper | FormId::OursExpWrapper => OURS,
            FormId::OursNoOverfit => OURS_NO_OVERFIT,
            FormId::OursSingleExp => OURS_SINGLE_EXP,
            FormId::OursExtended => OURS_EXTENDED,
            FormId::Chinchilla => CHINCHILLA,
            FormId::Kaplan => KAPLAN,
            FormId::Muennighoff => MUENNIGHOFF,
            FormId::M4 => M4,
            FormId::BnslK1 => BNSL_K1,
            FormId::BnslK2 => BNSL_K2,
            FormId::Farseer => FARSEER,
        }
    }

    pub fn n_params(self) -> usize {
        self.layout().len()
    }

    pub fn param_names(self) -> Vec<&'static str> {
        self.layout().iter().map(|s| s.name).collect()
    }

    pub fn index_of(self, name: &str) -> Option<usize> {
        self.layout().iter().position(|s| s.name == name)
    }

    /// Forms whose prediction goes through a saturating wrapper between `e`
    /// and `l0`. Only these accept the E-hinge prior.
    pub fn is_wrapper_form(self) -> bool {
        matches!(
            self,
            FormId::Ours
                | FormId::OursNoOverfit
                | FormId::OursExpWrapper
                | FormId::OursSingleExp
                | FormId::OursExtended
        )
    }

    /// Forms whose predictions are confined to `[e, l0)`.
    pub fn is_bounded(self) -> bool {
        self.is_wrapper_form() || self == FormId::M4
    }

    /// Index of the loss-floor parameter, if the form has one.
    pub fn floor_index(self) -> Option<usize> {
        self.layout().iter().position(|s| s.kind == ParamKind::Floor)
    }

    pub fn valid_ids() -> String {
        FormId::ALL.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for FormId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormId {
    type Err = FormError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FormId::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| FormError::UnknownForm(s.to_string(), FormId::valid_ids()))
    }
}

/// A named parameter vector for one form, in the form's layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct FormParams {
    pub form: FormId,
    pub values: Vec<f64>,
}

impl FormParams {
    pub fn new(form: FormId, values: Vec<f64>) -> Result<Self, FormError> {
        if values.len() != form.n_params() {
            return Err(FormError::InvalidParams(format!(
                "{form} takes {} parameters, got {}",
                form.n_params(),
                values.len()
            )));
        }
        let fp = FormParams { form, values };
        fp.validate()?;
        Ok(fp)
    }

    /// Builds from `(name, value)` pairs; every layout name must be present.
    pub fn from_named<'a, I>(form: FormId, named: I) -> Result<Self, FormError>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let map: BTreeMap<&str, f64> = named.into_iter().collect();
        let mut values = Vec::with_capacity(form.n_params());
        for spec in form.layout() {
            let v = map
                .get(spec.name)
                .ok_or_else(|| FormError::InvalidParams(format!("{form}: missing parameter `{}`", spec.name)))?;
            values.push(*v);
        }
        if let Some(extra) = map.keys().find(|k| form.index_of(k).is_none()) {
            return Err(FormError::InvalidParams(format!("{form}: unknown parameter `{extra}`")));
        }
        FormParams::new(form, values)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.form.index_of(name).map(|i| self.values[i])
    }

    pub fn named(&self) -> BTreeMap<String, f64> {
        self.form
            .layout()
            .iter()
            .zip(&self.values)
            .map(|(s, v)| (s.name.to_string(), *v))
            .collect()
    }

    /// Finite everywhere; non-negative where the layout requires it.
    pub fn validate(&self) -> Result<(), FormError> {
        for (spec, v) in self.form.layout().iter().zip(&self.values) {
            if !v.is_finite() {
                return Err(FormError::InvalidParams(format!("{}: `{}` = {v} is not finite", self.form, spec.name)));
            }
            if spec.kind.is_positive() && *v < 0.0 {
                return Err(FormError::InvalidParams(format!("{}: `{}` = {v} must be >= 0", self.form, spec.name)));
            }
        }
        Ok(())
    }

    pub fn floor(&self) -> Option<f64> {
        self.form.floor_index().map(|i| self.values[i])
    }
}

impl Serialize for FormParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            form: FormId,
            params: &'a BTreeMap<String, f64>,
        }
        Repr { form: self.form, params: &self.named() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FormParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            form: FormId,
            params: BTreeMap<String, f64>,
        }
        let r = Repr::deserialize(d)?;
        FormParams::from_named(r.form, r.params.iter().map(|(k, v)| (k.as_str(), *v)))
            .map_err(serde::de::Error::custom)
    }
}

/// Predicted loss of `params` at `pt`.
pub fn predict(params: &FormParams, pt: &Point, ctx: &EvalContext) -> Result<f64, FormError> {
    params.validate()?;
    pt.validate()?;
    let v = eval(params.form, &params.values, pt, ctx)?;
    if !(v.is_finite() && v > 0.0) {
        return Err(FormError::InvalidParams(format!(
            "{} produced non-positive or non-finite loss {v} at n={}, d={}, t={}",
            params.form, pt.n, pt.d, pt.t
        )));
    }
    Ok(v)
}

/// Generic evaluation of `form` with parameters in constrained space.
pub(crate) fn eval<S: Scalar>(form: FormId, p: &[S], pt: &Point, ctx: &EvalContext) -> Result<S, FormError> {
    match form {
        FormId::Ours => ours::eval_family(ours::Variant::Full, p, pt, ctx.l0),
        FormId::OursNoWrapper => ours::eval_family(ours::Variant::NoWrapper, p, pt, ctx.l0),
        FormId::OursNoOverfit => ours::eval_family(ours::Variant::NoOverfit, p, pt, ctx.l0),
        FormId::OursExpWrapper => ours::eval_family(ours::Variant::ExpWrapper, p, pt, ctx.l0),
        FormId::OursSingleExp => ours::eval_family(ours::Variant::SingleExp, p, pt, ctx.l0),
        FormId::OursExtended => ours::eval_family(ours::Variant::Extended, p, pt, ctx.l0),
        FormId::Chinchilla => Ok(baselines::chinchilla(p, pt)),
        FormId::Kaplan => Ok(baselines::kaplan(p, pt)),
        FormId::Muennighoff => Ok(baselines::muennighoff(p, pt)),
        FormId::M4 => baselines::m4(p, pt.axis_value(ctx.m4_axis, ctx.k), ctx.l0),
        FormId::BnslK1 | FormId::BnslK2 => Ok(baselines::bnsl(p, pt.axis_value(ctx.bnsl_axis, ctx.k))),
        FormId::Farseer => Ok(baselines::farseer(p, pt)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(l0: f64) -> EvalContext {
        EvalContext::new(l0)
    }

    #[test]
    fn form_ids_round_trip_through_strings() {
        for f in FormId::ALL {
            assert_eq!(f.as_str().parse::<FormId>().unwrap(), f);
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json, format!("\"{}\"", f.as_str()));
        }
        let err = "gadre".parse::<FormId>().unwrap_err();
        assert!(err.to_string().contains("bnsl-k2"));
    }

    #[test]
    fn chinchilla_unit_exponents() {
        let fp = FormParams::from_named(
            FormId::Chinchilla,
            [("e", 1.0), ("A", 2.0), ("B", 3.0), ("alpha", 1.0), ("beta", 1.0)],
        )
        .unwrap();
        let v = predict(&fp, &Point::new(2.0, 3.0, 3.0).unwrap(), &ctx(10.0)).unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn farseer_zeroed_exponentials() {
        let fp = FormParams::new(FormId::Farseer, vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let v = predict(&fp, &Point::new(5.0, 1.0, 1.0).unwrap(), &ctx(10.0)).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ours_on_chinchilla_grid_row_matches_golden_value() {
        // Golden value from an independent 40-digit evaluation.
        let fp = FormParams::from(OursParams {
            e: 0.038,
            a: 3.09e2,
            alpha: 0.422,
            b: 1.17,
            beta: 0.063,
            c: 4.76e9,
            gamma: 0.002,
            delta: 1.184,
        });
        let l0 = 32000f64.ln();
        let v = predict(&fp, &Point::new(1e10, 2e11, 2e11).unwrap(), &ctx(l0)).unwrap();
        assert!((v - 2.078_079_609_634_095_5).abs() < 1e-12, "{v}");
        assert!(v > 0.038 && v < 10.37);
    }

    #[test]
    fn named_params_reject_missing_and_unknown() {
        assert!(FormParams::from_named(FormId::M4, [("e", 0.1)]).is_err());
        let r = FormParams::from_named(
            FormId::M4,
            [("e", 0.1), ("a_m4", 1.0), ("b_m4", 1.0), ("c_m4", 0.5), ("zeta", 1.0)],
        );
        assert!(matches!(r, Err(FormError::InvalidParams(m)) if m.contains("zeta")));
    }

    #[test]
    fn negative_positive_kind_rejected() {
        let r = FormParams::new(FormId::Chinchilla, vec![1.0, -2.0, 3.0, 0.5, 0.5]);
        assert!(r.is_err());
        // Farseer is sign-free.
        assert!(FormParams::new(FormId::Farseer, vec![-1.0; 9]).is_ok());
    }

    #[test]
    fn params_json_shape() {
        let fp = FormParams::new(FormId::M4, vec![0.5, 1.0, 2.0, 0.3]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&fp).unwrap();
        assert_eq!(v["form"], "m4");
        assert_eq!(v["params"]["b_m4"], 2.0);
        let back: FormParams = serde_json::from_value(v).unwrap();
        assert_eq!(back, fp);
    }

    #[test]
    fn point_rejects_non_positive() {
        assert!(Point::new(0.0, 1.0, 1.0).is_err());
        assert!(Point::new(1.0, f64::NAN, 1.0).is_err());
        assert!(Point::new(1.0, 1.0, 1.0).unwrap().with_compute(-1.0).validate().is_err());
    }

    #[test]
    fn compute_axis_falls_back_to_k_n_t() {
        let p = Point::new(2.0, 3.0, 5.0).unwrap();
        assert_eq!(p.axis_value(Axis::C, 6.0), 60.0);
        assert_eq!(p.with_compute(7.0).axis_value(Axis::C, 6.0), 7.0);
    }
}
