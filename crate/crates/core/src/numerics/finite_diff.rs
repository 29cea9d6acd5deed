//! Finite-difference utilities used by curvature probes and test oracles.

use crate::error::{Error, Result};
use crate::numerics::{ParamVector, Vector};

/// Central second difference of `f` along one axis:
/// `(f(x + h e) - 2 f(x) + f(x - h e)) / h^2`.
pub fn central_second_difference<F>(
    f: &mut F,
    theta: &ParamVector,
    axis: usize,
    h: f64,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter {
            context: "central_second_difference",
            message: format!("step must be positive, got {h}"),
        });
    }
    if axis >= theta.dim() {
        return Err(Error::InvalidDimension {
            context: "central_second_difference axis",
            got: axis,
        });
    }
    let mut x = theta.as_slice().to_vec();
    let center = f(&x)?;
    x[axis] = theta.as_slice()[axis] + h;
    let plus = f(&x)?;
    x[axis] = theta.as_slice()[axis] - h;
    let minus = f(&x)?;
    let value = (plus - 2.0 * center + minus) / (h * h);
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "central_second_difference",
        });
    }
    Ok(value)
}

/// Central-difference gradient of `f` at `x`, one axis at a time.
pub fn central_gradient<F>(f: &mut F, x: &[f64], h: f64) -> Result<Vector>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter {
            context: "central_gradient",
            message: format!("step must be positive, got {h}"),
        });
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe)?;
        probe[i] = x[i] - h;
        let minus = f(&probe)?;
        probe[i] = x[i];
        let g = (plus - minus) / (2.0 * h);
        if !g.is_finite() {
            return Err(Error::NonFinite {
                context: "central_gradient",
            });
        }
        grad.push(g);
    }
    Ok(Vector::from_vec(grad))
}
