//! Central finite-difference gradient oracle.
//!
//! Used by the test suites to verify every analytic backward rule. Only the
//! forward path of the function under test is evaluated here, so the oracle
//! stays independent of the backward implementation it checks.

/// Central-difference gradient of a scalar-valued function of a flat buffer.
///
/// `f` must evaluate the forward pass only. Runs in whatever precision the
/// caller supplies; gradient checks are meaningful in `f64`.
pub fn numerical_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Largest relative error between an analytic gradient and its
/// finite-difference estimate, with an absolute floor for near-zero entries.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| {
            let denom = a.abs().max(n.abs()).max(1e-6);
            (a - n).abs() / denom
        })
        .fold(0.0, f64::max)
}

/// Step size for central differences in double precision.
pub const FD_STEP: f64 = 1e-5;

/// Relative-error tolerance for gradient checks in double precision.
pub const FD_REL_TOL: f64 = 1e-4;
