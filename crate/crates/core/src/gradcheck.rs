//! Central finite-difference gradient oracle.
//!
//! Used by the test suites to certify every backward implementation against
//! an independent forward-only evaluation. Nothing here touches the reverse
//! pass: the probe only re-runs the caller's forward closure with perturbed
//! parameter data.

use crate::tensor::Tensor;

/// Central finite differences of `loss_fn` with respect to every element of
/// `param`, probing in place with step `h`. The closure must rebuild its
/// graph from the parameter's current data on every call.
pub fn central_diff(loss_fn: &mut dyn FnMut() -> f64, param: &Tensor, h: f64) -> Vec<f64> {
    let n = param.numel();
    let mut grad = vec![0.0f64; n];
    for i in 0..n {
        param.nudge(i, h);
        let up = loss_fn();
        param.nudge(i, -2.0 * h);
        let down = loss_fn();
        param.nudge(i, h);
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// As [`central_diff`] but only for the listed element indices.
pub fn central_diff_at(
    loss_fn: &mut dyn FnMut() -> f64,
    param: &Tensor,
    indices: &[usize],
    h: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0f64; indices.len()];
    for (k, &i) in indices.iter().enumerate() {
        param.nudge(i, h);
        let up = loss_fn();
        param.nudge(i, -2.0 * h);
        let down = loss_fn();
        param.nudge(i, h);
        grad[k] = (up - down) / (2.0 * h);
    }
    grad
}

/// Relative error with a floor on the denominator so finite-difference noise
/// on near-zero gradients does not dominate.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Maximum relative error between an analytic gradient and its
/// finite-difference counterpart.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| rel_err(*a, *n))
        .fold(0.0, f64::max)
}

/// Default finite-difference step (64-bit).
pub const FD_STEP: f64 = 1e-6;

/// Default acceptance tolerance for gradient checks.
pub const FD_TOL: f64 = 1e-4;
