//! Reference computation of the perturbation-smoothed loss
//! `L_eps(theta) = E[L(theta + eps * Delta)]`, by exact enumeration of all
//! Rademacher sign vectors or by seeded Monte Carlo.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::optim::PerturbLaw;

/// Largest dimension for which all 2^d sign vectors are enumerated.
pub const ENUMERATION_DIM_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SmoothingMode {
    /// Exact expectation over all 2^d Rademacher directions (d <= 20).
    Enumerate,
    /// Seeded Monte Carlo with a reported standard error.
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedLossEstimate {
    pub value: f64,
    /// Standard error of the estimate; `None` for exact modes.
    pub std_error: Option<f64>,
}

pub fn smoothed_loss<F>(
    loss_fn: &mut F,
    theta: &[f64],
    epsilon: f64,
    law: PerturbLaw,
    mode: SmoothingMode,
) -> Result<SmoothedLossEstimate>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = theta.len();
    if d == 0 {
        return Err(Error::InvalidDimension {
            context: "smoothed_loss",
            got: 0,
        });
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter {
            context: "smoothed_loss",
            message: format!("epsilon must be finite and nonnegative, got {epsilon}"),
        });
    }
    if epsilon == 0.0 {
        // Zero-radius smoothing is the loss itself under any law/mode.
        let value = check_finite(loss_fn(theta)?)?;
        return Ok(SmoothedLossEstimate {
            value,
            std_error: None,
        });
    }
    match mode {
        SmoothingMode::Enumerate => {
            if law != PerturbLaw::Rademacher {
                return Err(Error::InvalidParameter {
                    context: "smoothed_loss",
                    message: "enumeration is only defined for the Rademacher law".into(),
                });
            }
            if d > ENUMERATION_DIM_LIMIT {
                return Err(Error::EnumerationTooLarge {
                    dim: d,
                    limit: ENUMERATION_DIM_LIMIT,
                });
            }
            let mut total = 0.0;
            let count = 1u64 << d;
            let mut probe = vec![0.0; d];
            for mask in 0..count {
                for i in 0..d {
                    let sign = if mask >> i & 1 == 0 { 1.0 } else { -1.0 };
                    probe[i] = theta[i] + epsilon * sign;
                }
                total += check_finite(loss_fn(&probe)?)?;
            }
            Ok(SmoothedLossEstimate {
                value: total / count as f64,
                std_error: None,
            })
        }
        SmoothingMode::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidParameter {
                    context: "smoothed_loss",
                    message: "Monte Carlo needs at least 2 samples".into(),
                });
            }
            let mut stream = RngStream::new("smoothing-mc", seed);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut probe = vec![0.0; d];
            for _ in 0..samples {
                for (p, &t) in probe.iter_mut().zip(theta) {
                    let delta = match law {
                        PerturbLaw::Rademacher => stream.next_sign(),
                        PerturbLaw::Gaussian => stream.next_gaussian(),
                    };
                    *p = t + epsilon * delta;
                }
                let l = check_finite(loss_fn(&probe)?)?;
                sum += l;
                sum_sq += l * l;
            }
            let n = samples as f64;
            let mean = sum / n;
            let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
            Ok(SmoothedLossEstimate {
                value: mean,
                std_error: Some((var / n).sqrt()),
            })
        }
    }
}

fn check_finite(l: f64) -> Result<f64> {
    if !l.is_finite() {
        return Err(Error::NonFinite {
            context: "smoothed_loss probe",
        });
    }
    Ok(l)
}
