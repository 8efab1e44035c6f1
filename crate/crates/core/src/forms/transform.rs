//! Maps between constrained parameter values and the unconstrained space the
//! optimizer works in.

use super::{FormId, FormParams, ParamKind};
use crate::error::FormError;
use crate::scalar::Scalar;

/// Smallest loss floor accepted by the softplus transform.
pub const E_FLOOR: f64 = 1e-12;

/// Smallest positive value accepted by the log transform.
const POSITIVE_FLOOR: f64 = 1e-300;

/// Inverse of `softplus(x) = ln(1 + e^x)` for `y > 0`.
pub fn inverse_softplus(y: f64) -> f64 {
    // ln(e^y - 1) = y + ln(1 - e^-y)
    y + (-(-y).exp_m1()).ln()
}

pub fn to_unconstrained(params: &FormParams) -> Result<Vec<f64>, FormError> {
    params.validate()?;
    Ok(params
        .form
        .layout()
        .iter()
        .zip(&params.values)
        .map(|(spec, &v)| match spec.kind {
            ParamKind::Floor => inverse_softplus(v.max(E_FLOOR)),
            k if k.is_positive() => v.max(POSITIVE_FLOOR).ln(),
            _ => v,
        })
        .collect())
}

pub fn from_unconstrained(form: FormId, x: &[f64]) -> Result<FormParams, FormError> {
    if x.len() != form.n_params() {
        return Err(FormError::InvalidParams(format!(
            "{form} takes {} unconstrained coordinates, got {}",
            form.n_params(),
            x.len()
        )));
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(FormError::InvalidParams(format!("non-finite unconstrained coordinate {bad}")));
    }
    FormParams::new(form, from_unconstrained_generic(form, x))
}

pub(crate) fn from_unconstrained_generic<S: Scalar>(form: FormId, x: &[S]) -> Vec<S> {
    form.layout()
        .iter()
        .zip(x)
        .map(|(spec, &v)| match spec.kind {
            ParamKind::Floor => v.softplus(),
            k if k.is_positive() => v.exp(),
            _ => v,
        })
        .collect()
}
