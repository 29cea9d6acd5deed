//! Continual-learning accuracy metrics (avg / last / fgt) and loss-landscape
//! curvature probes: SAM-style flatness, Hessian trace, top eigenvalue, and
//! the quadratic forgetting bound.

use serde::{Deserialize, Serialize};

use crate::continual::EvalMatrix;
use crate::error::{Error, Result};
use crate::numerics::{
    central_gradient, central_second_difference, norm, sym_eigenvalues, Matrix, ParamVector,
    RngStream, Vector,
};

/// Mean of the final-row accuracies: `avg = (1/K) sum_j A[K][j]`.
pub fn avg_accuracy(matrix: &EvalMatrix) -> Result<f64> {
    let k = matrix.num_tasks();
    if k == 0 {
        return Err(Error::UndefinedMetric {
            message: "avg_accuracy of an empty matrix".into(),
        });
    }
    let last_row = matrix.row(k - 1)?;
    Ok(last_row.iter().sum::<f64>() / k as f64)
}

/// Final-task accuracy `A[K][K]`.
pub fn last_accuracy(matrix: &EvalMatrix) -> Result<f64> {
    let k = matrix.num_tasks();
    if k == 0 {
        return Err(Error::UndefinedMetric {
            message: "last_accuracy of an empty matrix".into(),
        });
    }
    matrix.get(k - 1, k - 1)
}

/// Catastrophic forgetting: average drop from each old task's best-ever
/// accuracy to its final accuracy. Requires at least two tasks; by the
/// max-over-history definition the result is always nonnegative.
pub fn forgetting(matrix: &EvalMatrix) -> Result<f64> {
    let k = matrix.num_tasks();
    if k < 2 {
        return Err(Error::UndefinedMetric {
            message: format!("forgetting needs at least 2 tasks, have {k}"),
        });
    }
    let mut total = 0.0;
    for j in 0..k - 1 {
        let mut best = f64::NEG_INFINITY;
        for i in j..k {
            best = best.max(matrix.get(i, j)?);
        }
        total += best - matrix.get(k - 1, j)?;
    }
    let fgt = total / (k - 1) as f64;
    debug_assert!(fgt >= 0.0);
    Ok(fgt)
}

/// The three stream-level metrics. `fgt` is `None` for single-task streams,
/// where it is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub avg: f64,
    pub last: f64,
    pub fgt: Option<f64>,
    /// Final-row accuracy of each task, in task order.
    pub per_task: Vec<f64>,
}

impl MetricsReport {
    pub fn from_matrix(matrix: &EvalMatrix) -> Result<Self> {
        let k = matrix.num_tasks();
        Ok(MetricsReport {
            avg: avg_accuracy(matrix)?,
            last: last_accuracy(matrix)?,
            fgt: if k >= 2 {
                Some(forgetting(matrix)?)
            } else {
                None
            },
            per_task: matrix.row(k - 1)?.to_vec(),
        })
    }
}

/// How the flatness probe picks its perturbation direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlatnessProbe {
    /// SAM-style ascent: the unit direction of a central-difference gradient
    /// of the old-task loss.
    Ascent { fd_step: f64 },
    /// Average over `directions` random unit directions drawn from a fixed
    /// seed.
    RandomAverage { directions: u32, seed: u64 },
}

/// One flatness measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessSample {
    pub task_index: usize,
    pub rho: f64,
    pub probe: FlatnessProbe,
    pub phi: f64,
}

const FLATNESS_EPS: f64 = 1e-12;

fn phi_along<F>(
    loss_fn: &mut F,
    theta: &[f64],
    base_loss: f64,
    rho: f64,
    unit: &[f64],
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let probe_point: Vec<f64> = theta.iter().zip(unit).map(|(t, u)| t + rho * u).collect();
    let perturbed = loss_fn(&probe_point)?;
    if !perturbed.is_finite() {
        return Err(Error::NonFinite {
            context: "sam_flatness probe loss",
        });
    }
    Ok((perturbed - base_loss) / (rho * (base_loss + FLATNESS_EPS)))
}

/// Normalized loss increase under a radius-`rho` perturbation:
/// `[L(theta+) - L(theta)] / (rho (L(theta) + 1e-12))`. Lower is flatter;
/// the value may be negative if the probe direction decreases the loss.
pub fn sam_flatness<F>(
    loss_fn: &mut F,
    theta: &[f64],
    rho: f64,
    probe: &FlatnessProbe,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter {
            context: "sam_flatness",
            message: format!("rho must be positive, got {rho}"),
        });
    }
    let base_loss = loss_fn(theta)?;
    if !base_loss.is_finite() {
        return Err(Error::NonFinite {
            context: "sam_flatness base loss",
        });
    }
    match probe {
        FlatnessProbe::Ascent { fd_step } => {
            let grad = central_gradient(loss_fn, theta, *fd_step)?;
            let gn = grad.norm();
            let unit: Vec<f64> = if gn < 1e-15 {
                // Stationary (or constant) loss: any direction; use e_1 so the
                // probe stays deterministic.
                let mut e = vec![0.0; theta.len()];
                e[0] = 1.0;
                e
            } else {
                grad.as_slice().iter().map(|g| g / gn).collect()
            };
            phi_along(loss_fn, theta, base_loss, rho, &unit)
        }
        FlatnessProbe::RandomAverage { directions, seed } => {
            if *directions == 0 {
                return Err(Error::InvalidParameter {
                    context: "sam_flatness",
                    message: "probe needs at least one direction".into(),
                });
            }
            let mut stream = RngStream::new("flatness-probe", *seed);
            let mut total = 0.0;
            for _ in 0..*directions {
                let dir = crate::numerics::gaussian(theta.len(), &mut stream)?;
                let n = dir.norm();
                let unit: Vec<f64> = dir.as_slice().iter().map(|d| d / n).collect();
                total += phi_along(loss_fn, theta, base_loss, rho, &unit)?;
            }
            Ok(total / *directions as f64)
        }
    }
}

/// Sum of per-axis central second differences; equals the Hessian trace up to
/// O(h^2) discretization (exact for quadratics).
pub fn hessian_trace<F>(loss_fn: &mut F, theta: &ParamVector, h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut total = 0.0;
    for axis in 0..theta.dim() {
        total += central_second_difference(loss_fn, theta, axis, h)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaMaxEstimate {
    pub value: f64,
    /// False if the iteration cap was reached before the estimate settled.
    pub converged: bool,
}

/// Power-iteration estimate of the largest-magnitude Hessian eigenvalue.
/// Hessian-vector products are taken by central differences of
/// central-difference gradients, so only loss evaluations are needed.
pub fn lambda_max<F>(
    loss_fn: &mut F,
    theta: &ParamVector,
    iterations: u32,
    h: f64,
) -> Result<LambdaMaxEstimate>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = theta.dim();
    if d == 0 {
        return Err(Error::InvalidDimension {
            context: "lambda_max",
            got: 0,
        });
    }
    let mut hv = |v: &[f64]| -> Result<Vector> {
        let vn = norm(v);
        debug_assert!((vn - 1.0).abs() < 1e-9);
        let plus: Vec<f64> = theta
            .as_slice()
            .iter()
            .zip(v)
            .map(|(t, x)| t + h * x)
            .collect();
        let minus: Vec<f64> = theta
            .as_slice()
            .iter()
            .zip(v)
            .map(|(t, x)| t - h * x)
            .collect();
        let gp = central_gradient(loss_fn, &plus, h)?;
        let gm = central_gradient(loss_fn, &minus, h)?;
        Ok(gp.sub(&gm)?.scale(1.0 / (2.0 * h)))
    };

    let mut stream = RngStream::new("lambda-max-init", 0);
    let v0 = crate::numerics::gaussian(d, &mut stream)?;
    let n0 = v0.norm();
    let mut v: Vec<f64> = v0.as_slice().iter().map(|x| x / n0).collect();
    let mut estimate = 0.0;
    let mut converged = false;
    for _ in 0..iterations {
        let w = hv(&v)?;
        let rayleigh = crate::numerics::dot(w.as_slice(), &v);
        let wn = w.norm();
        if wn < 1e-300 {
            // Zero Hessian (e.g. linear loss): eigenvalue 0.
            return Ok(LambdaMaxEstimate {
                value: 0.0,
                converged: true,
            });
        }
        v = w.as_slice().iter().map(|x| x / wn).collect();
        if (rayleigh - estimate).abs() <= 1e-9 * rayleigh.abs().max(1.0) {
            estimate = rayleigh;
            converged = true;
            break;
        }
        estimate = rayleigh;
    }
    Ok(LambdaMaxEstimate {
        value: estimate.abs(),
        converged,
    })
}

/// Quadratic old-task loss `L(x) = offset + (x - center)' H (x - center) / 2`
/// with an explicitly known symmetric Hessian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticLoss {
    pub hessian: Matrix,
    pub center: Vector,
    pub offset: f64,
}

impl QuadraticLoss {
    pub fn eval(&self, x: &Vector) -> Result<f64> {
        let d = x.sub(&self.center)?;
        let hd = self.hessian.matvec(&d)?;
        Ok(self.offset + 0.5 * d.dot(&hd)?)
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vector> {
        self.hessian.matvec(&x.sub(&self.center)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForgettingBoundCheck {
    /// Exact loss increase `L(theta_t + dtheta) - L(theta_t)`.
    pub forgetting: f64,
    /// `lambda_max(H) * |dtheta|^2 / 2`.
    pub bound: f64,
    pub satisfied: bool,
}

/// Evaluate the forgetting definition and its eigenvalue bound on a quadratic
/// old-task loss (where the Taylor remainder vanishes).
pub fn forgetting_bound_check(
    quad: &QuadraticLoss,
    theta_t: &Vector,
    dtheta: &Vector,
) -> Result<ForgettingBoundCheck> {
    let before = quad.eval(theta_t)?;
    let after = quad.eval(&theta_t.add(dtheta)?)?;
    let forgetting = after - before;
    let lmax = sym_eigenvalues(&quad.hessian)?
        .last()
        .copied()
        .unwrap_or(0.0);
    let step = dtheta.norm();
    let bound = 0.5 * lmax * step * step;
    Ok(ForgettingBoundCheck {
        forgetting,
        bound,
        satisfied: forgetting <= bound + 1e-12 * bound.abs().max(1.0),
    })
}
