//! First-order SGD, the two-point SPSA estimator, Q-query ZO-SGD with L2
//! clipping, and seed-replay perturbation records.
//!
//! Probe evaluations read parameters through [`ParamView`], applying the
//! perturbation at read time. The stored parameters are never mutated by a
//! probe, so they are bit-identical before and after every query, and each
//! direction is regenerable from its (seed, step, q) coordinates alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{l2_clip, ParamVector, ParamView, RngStream, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbLaw {
    Rademacher,
    Gaussian,
}

/// SPSA / ZO-SGD configuration. Defaults follow the reference setup:
/// epsilon 0.001, Q = 4, L2 clip 1.0, Rademacher directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpsaConfig {
    pub epsilon: f64,
    pub queries: u32,
    /// `None` disables clipping.
    pub clip_threshold: Option<f64>,
    pub law: PerturbLaw,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        SpsaConfig {
            epsilon: 0.001,
            queries: 4,
            clip_threshold: Some(1.0),
            law: PerturbLaw::Rademacher,
        }
    }
}

impl SpsaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter {
                context: "spsa config",
                message: format!("epsilon must be positive, got {}", self.epsilon),
            });
        }
        if self.queries == 0 {
            return Err(Error::InvalidParameter {
                context: "spsa config",
                message: "query budget must be at least 1".into(),
            });
        }
        if let Some(t) = self.clip_threshold {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter {
                    context: "spsa config",
                    message: format!("clip threshold must be positive, got {t}"),
                });
            }
        }
        Ok(())
    }
}

/// Everything needed to regenerate one perturbation direction bit-exactly:
/// the base seed, the step index, the query index, and the scale/law it was
/// drawn under. No direction vectors are ever stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub base_seed: u64,
    pub step: u64,
    pub q: u32,
    pub epsilon: f64,
    pub law: PerturbLaw,
}

fn direction_stream(base_seed: u64, step: u64, q: u32) -> RngStream {
    RngStream::new(&format!("spsa/{step}/{q}"), base_seed)
}

fn draw_direction(law: PerturbLaw, dim: usize, stream: &mut RngStream) -> Result<Vector> {
    match law {
        PerturbLaw::Rademacher => crate::numerics::rademacher(dim, stream),
        PerturbLaw::Gaussian => crate::numerics::gaussian(dim, stream),
    }
}

/// Regenerate the direction used for `record`, bit-identical to the original.
pub fn replay_direction(record: &PerturbationRecord, dim: usize) -> Result<Vector> {
    if dim == 0 {
        return Err(Error::InvalidDimension {
            context: "replay_direction",
            got: 0,
        });
    }
    let mut stream = direction_stream(record.base_seed, record.step, record.q);
    draw_direction(record.law, dim, &mut stream)
}

fn check_direction(theta: &ParamVector, delta: &Vector, epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter {
            context: "spsa_estimate",
            message: format!("epsilon must be positive, got {epsilon}"),
        });
    }
    if delta.dim() != theta.dim() {
        return Err(Error::DimensionMismatch {
            context: "spsa_estimate",
            expected: theta.dim(),
            got: delta.dim(),
        });
    }
    if delta.as_slice().contains(&0.0) {
        return Err(Error::InvalidParameter {
            context: "spsa_estimate",
            message: "perturbation direction has a zero entry".into(),
        });
    }
    Ok(())
}

/// The two probe losses for one direction. Exactly two loss evaluations.
fn probe_pair<F>(
    loss_fn: &mut F,
    theta: &ParamVector,
    delta: &Vector,
    epsilon: f64,
) -> Result<(f64, f64)>
where
    F: FnMut(ParamView<'_>) -> Result<f64>,
{
    let plus = loss_fn(ParamView::perturbed(
        theta.as_slice(),
        delta.as_slice(),
        epsilon,
    )?)?;
    let minus = loss_fn(ParamView::perturbed(
        theta.as_slice(),
        delta.as_slice(),
        -epsilon,
    )?)?;
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::NonFinite {
            context: "spsa_estimate loss",
        });
    }
    Ok((plus, minus))
}

/// Two-point SPSA gradient estimate along one direction:
/// `g = (L(theta + eps*delta) - L(theta - eps*delta)) / (2 eps) * delta`.
///
/// Performs exactly two loss evaluations. `theta` is only ever read, so it is
/// bitwise unchanged afterwards. For Rademacher directions the elementwise
/// inverse of `delta` equals `delta` itself; for Gaussian directions the
/// standard random-gradient-estimator form (multiply by `delta`) is used.
pub fn spsa_estimate<F>(
    loss_fn: &mut F,
    theta: &ParamVector,
    delta: &Vector,
    epsilon: f64,
) -> Result<Vector>
where
    F: FnMut(ParamView<'_>) -> Result<f64>,
{
    check_direction(theta, delta, epsilon)?;
    let (plus, minus) = probe_pair(loss_fn, theta, delta, epsilon)?;
    let scalar = (plus - minus) / (2.0 * epsilon);
    Ok(delta.scale(scalar))
}

/// Outcome of one ZO-SGD step.
#[derive(Debug, Clone)]
pub struct ZoStepOutcome {
    pub records: Vec<PerturbationRecord>,
    /// Mean of the 2Q probe losses.
    pub mean_loss: f64,
    /// Norm of the Q-averaged estimate before clipping.
    pub raw_grad_norm: f64,
}

/// One ZO-SGD step: draw Q directions from the (base_seed, step) coordinates,
/// average the per-query SPSA estimates, clip the average, and update
/// `phi <- phi - lr * clip(g_bar)`. Exactly 2Q loss evaluations are
/// performed; each reads `phi` through a perturbed view, so `phi` holds its
/// entry value bitwise until the final update is applied — including on every
/// error path.
pub fn zo_sgd_step<F>(
    loss_fn: &mut F,
    phi: &mut ParamVector,
    cfg: &SpsaConfig,
    lr: f64,
    base_seed: u64,
    step: u64,
) -> Result<ZoStepOutcome>
where
    F: FnMut(ParamView<'_>) -> Result<f64>,
{
    cfg.validate()?;
    let dim = phi.dim();
    let mut g_bar = Vector::zeros(dim);
    let mut records = Vec::with_capacity(cfg.queries as usize);
    let mut loss_sum = 0.0;
    for q in 0..cfg.queries {
        let mut stream = direction_stream(base_seed, step, q);
        let delta = draw_direction(cfg.law, dim, &mut stream)?;
        check_direction(phi, &delta, cfg.epsilon)?;
        let (plus, minus) = probe_pair(loss_fn, phi, &delta, cfg.epsilon)?;
        let scalar = (plus - minus) / (2.0 * cfg.epsilon);
        loss_sum += plus + minus;
        g_bar.axpy(scalar, &delta)?;
        records.push(PerturbationRecord {
            base_seed,
            step,
            q,
            epsilon: cfg.epsilon,
            law: cfg.law,
        });
    }
    let g_bar = g_bar.scale(1.0 / cfg.queries as f64);
    let raw_grad_norm = g_bar.norm();
    let update = match cfg.clip_threshold {
        Some(t) => l2_clip(&g_bar, t)?,
        None => {
            g_bar.validate_finite("zo_sgd_step gradient")?;
            g_bar
        }
    };
    for (p, u) in phi.as_mut_slice().iter_mut().zip(update.as_slice()) {
        *p -= lr * u;
    }
    Ok(ZoStepOutcome {
        records,
        mean_loss: loss_sum / (2.0 * cfg.queries as f64),
        raw_grad_norm,
    })
}

/// Plain SGD update `psi <- psi - lr * grad`.
pub fn fo_sgd_step(psi: &mut ParamVector, grad: &ParamVector, lr: f64) -> Result<()> {
    if grad.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            context: "fo_sgd_step",
            expected: psi.dim(),
            got: grad.dim(),
        });
    }
    grad.validate_finite("fo_sgd_step gradient")?;
    for (p, g) in psi.as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *p -= lr * g;
    }
    Ok(())
}

/// Learning-rate schedule: constant, or cosine decay reaching zero at the
/// final step: `lr(t) = base * (1 + cos(pi t / T)) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LrSchedule {
    Constant { base: f64 },
    Cosine { base: f64, total_steps: u64 },
}

impl LrSchedule {
    pub fn base(&self) -> f64 {
        match self {
            LrSchedule::Constant { base } => *base,
            LrSchedule::Cosine { base, .. } => *base,
        }
    }

    pub fn lr_at(&self, step: u64) -> Result<f64> {
        match self {
            LrSchedule::Constant { base } => Ok(*base),
            LrSchedule::Cosine { base, total_steps } => {
                if step > *total_steps {
                    return Err(Error::StepOutOfRange {
                        step,
                        total: *total_steps,
                    });
                }
                if *total_steps == 0 {
                    return Ok(*base);
                }
                let frac = step as f64 / *total_steps as f64;
                Ok(base * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(coeffs: Vec<f64>) -> impl FnMut(ParamView<'_>) -> Result<f64> {
        move |view: ParamView<'_>| {
            Ok(view
                .iter()
                .zip(&coeffs)
                .map(|(x, c)| c * x * x)
                .sum::<f64>())
        }
    }

    #[test]
    fn one_dim_quadratic_exact_derivative() {
        let mut f = quadratic(vec![1.0]);
        let theta = ParamVector::from_vec(vec![1.0]);
        let delta = Vector::from_vec(vec![1.0]);
        let g = spsa_estimate(&mut f, &theta, &delta, 0.001).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-10, "{}", g[0]);
        // theta untouched, bitwise.
        assert_eq!(theta.as_slice(), &[1.0]);
    }

    #[test]
    fn hand_evaluated_two_dim() {
        // L = x1^2 + x2^2, theta = (1,0), eps = 0.001, delta = (1,1):
        // L+ = 1.002002, L- = 0.998002, diff/(2 eps) = 2, g = (2,2).
        let mut f = quadratic(vec![1.0, 1.0]);
        let theta = ParamVector::from_vec(vec![1.0, 0.0]);
        let delta = Vector::from_vec(vec![1.0, 1.0]);
        let g = spsa_estimate(&mut f, &theta, &delta, 0.001).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-10);
        assert!((g[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn average_over_all_directions_is_exact_gradient() {
        // Brute force over all four sign vectors in 2-D.
        let theta = ParamVector::from_vec(vec![1.0, 0.0]);
        let mut sum = Vector::zeros(2);
        for signs in 0..4u32 {
            let delta = Vector::from_vec(vec![
                if signs & 1 == 0 { 1.0 } else { -1.0 },
                if signs & 2 == 0 { 1.0 } else { -1.0 },
            ]);
            let mut f = quadratic(vec![1.0, 1.0]);
            let g = spsa_estimate(&mut f, &theta, &delta, 0.001).unwrap();
            sum.axpy(0.25, &g).unwrap();
        }
        assert!((sum[0] - 2.0).abs() < 1e-10);
        assert!(sum[1].abs() < 1e-10);
    }

    #[test]
    fn spsa_rejects_bad_inputs() {
        let theta = ParamVector::from_vec(vec![1.0, 2.0]);
        let mut f = quadratic(vec![1.0, 1.0]);
        assert!(spsa_estimate(&mut f, &theta, &Vector::from_vec(vec![1.0]), 0.001).is_err());
        assert!(spsa_estimate(&mut f, &theta, &Vector::from_vec(vec![1.0, 0.0]), 0.001).is_err());
        assert!(spsa_estimate(&mut f, &theta, &Vector::from_vec(vec![1.0, 1.0]), 0.0).is_err());
        let mut bad = |_: ParamView<'_>| Ok(f64::NAN);
        assert!(spsa_estimate(&mut bad, &theta, &Vector::from_vec(vec![1.0, 1.0]), 0.001).is_err());
    }

    #[test]
    fn zo_step_exact_on_one_dim_quadratic() {
        // Q=1: estimate is exactly 2*theta regardless of the sign drawn.
        let mut f = quadratic(vec![1.0]);
        let mut phi = ParamVector::from_vec(vec![1.0]);
        let cfg = SpsaConfig {
            epsilon: 0.001,
            queries: 1,
            clip_threshold: None,
            law: PerturbLaw::Rademacher,
        };
        let out = zo_sgd_step(&mut f, &mut phi, &cfg, 0.01, 7, 0).unwrap();
        assert!((phi.as_slice()[0] - 0.98).abs() < 1e-10);
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn clip_engages_on_steep_quadratic() {
        // L = 100 x^2 at x=1: raw estimate magnitude 200, clipped to 1, so
        // the update is exactly lr * 1.
        let mut f = quadratic(vec![100.0]);
        let mut phi = ParamVector::from_vec(vec![1.0]);
        let cfg = SpsaConfig {
            epsilon: 0.001,
            queries: 4,
            clip_threshold: Some(1.0),
            law: PerturbLaw::Rademacher,
        };
        let out = zo_sgd_step(&mut f, &mut phi, &cfg, 0.01, 3, 0).unwrap();
        assert!(
            (out.raw_grad_norm - 200.0).abs() < 1e-6,
            "{}",
            out.raw_grad_norm
        );
        assert!((phi.as_slice()[0] - (1.0 - 0.01)).abs() < 1e-12);
        // Cross-check against the clipping oracle.
        let clipped = l2_clip(&Vector::from_vec(vec![200.0]), 1.0).unwrap();
        assert_eq!(clipped[0], 1.0);
    }

    #[test]
    fn zo_step_is_deterministic() {
        let run = || {
            let mut f = quadratic(vec![1.0, 3.0, 0.5]);
            let mut phi = ParamVector::from_vec(vec![0.4, -0.2, 1.1]);
            for step in 0..5 {
                zo_sgd_step(&mut f, &mut phi, &SpsaConfig::default(), 0.01, 99, step).unwrap();
            }
            phi
        };
        let a = run();
        let b = run();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn exactly_two_evaluations_per_query() {
        for queries in [1u32, 4, 16] {
            let mut count = 0usize;
            let mut f = |view: ParamView<'_>| {
                count += 1;
                Ok(view.iter().map(|x| x * x).sum())
            };
            let mut phi = ParamVector::from_vec(vec![0.5, 0.5]);
            let cfg = SpsaConfig {
                queries,
                ..SpsaConfig::default()
            };
            zo_sgd_step(&mut f, &mut phi, &cfg, 0.01, 1, 0).unwrap();
            assert_eq!(count, 2 * queries as usize);
        }
    }

    #[test]
    fn phi_bitwise_preserved_on_error_path() {
        let mut calls = 0;
        let mut f = |view: ParamView<'_>| {
            calls += 1;
            if calls >= 3 {
                return Err(Error::NonFinite { context: "test" });
            }
            Ok(view.iter().map(|x| x * x).sum())
        };
        let mut phi = ParamVector::from_vec(vec![0.123456789, -0.987654321]);
        let before = phi.as_slice().to_vec();
        let err = zo_sgd_step(&mut f, &mut phi, &SpsaConfig::default(), 0.01, 1, 0);
        assert!(err.is_err());
        assert_eq!(phi.as_slice(), before.as_slice());
    }

    #[test]
    fn replayed_direction_matches_step_records() {
        let mut f = quadratic(vec![1.0, 2.0, 3.0, 4.0]);
        let mut phi = ParamVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let before = phi.clone();
        let cfg = SpsaConfig {
            clip_threshold: None,
            ..SpsaConfig::default()
        };
        let out = zo_sgd_step(&mut f, &mut phi, &cfg, 0.05, 42, 5).unwrap();

        // Reconstruct the applied update from the records alone.
        let mut g_bar = Vector::zeros(4);
        for rec in &out.records {
            let delta = replay_direction(rec, 4).unwrap();
            let mut f2 = quadratic(vec![1.0, 2.0, 3.0, 4.0]);
            let g = spsa_estimate(&mut f2, &before, &delta, rec.epsilon).unwrap();
            g_bar.axpy(1.0 / out.records.len() as f64, &g).unwrap();
        }
        for i in 0..4 {
            let expected = before.as_slice()[i] - 0.05 * g_bar[i];
            assert_eq!(phi.as_slice()[i], expected, "entry {i}");
        }
    }

    #[test]
    fn distinct_queries_distinct_directions() {
        let a = replay_direction(
            &PerturbationRecord {
                base_seed: 9,
                step: 5,
                q: 1,
                epsilon: 0.001,
                law: PerturbLaw::Rademacher,
            },
            32,
        )
        .unwrap();
        let b = replay_direction(
            &PerturbationRecord {
                base_seed: 9,
                step: 5,
                q: 2,
                epsilon: 0.001,
                law: PerturbLaw::Rademacher,
            },
            32,
        )
        .unwrap();
        assert_ne!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn fo_sgd_basics() {
        let mut psi = ParamVector::from_vec(vec![1.0, 1.0]);
        fo_sgd_step(&mut psi, &ParamVector::from_vec(vec![0.0, 0.0]), 0.5).unwrap();
        assert_eq!(psi.as_slice(), &[1.0, 1.0]);
        fo_sgd_step(&mut psi, &ParamVector::from_vec(vec![1.0, -1.0]), 0.5).unwrap();
        assert_eq!(psi.as_slice(), &[0.5, 1.5]);
        assert!(fo_sgd_step(&mut psi, &ParamVector::from_vec(vec![1.0]), 0.5).is_err());
        assert!(fo_sgd_step(&mut psi, &ParamVector::from_vec(vec![f64::NAN, 0.0]), 0.5).is_err());
    }

    #[test]
    fn fo_sgd_converges_on_quadratic() {
        // L = sum c_i x_i^2, gradient 2 c x, lr 0.1: contraction to 0.
        let coeffs = [1.0, 2.0, 0.7];
        let mut psi = ParamVector::from_vec(vec![3.0, -2.0, 5.0]);
        for _ in 0..1000 {
            let grad = ParamVector::from_vec(
                psi.as_slice()
                    .iter()
                    .zip(&coeffs)
                    .map(|(x, c)| 2.0 * c * x)
                    .collect(),
            );
            fo_sgd_step(&mut psi, &grad, 0.1).unwrap();
        }
        for &x in psi.as_slice() {
            assert!(x.abs() < 1e-6, "{x}");
        }
    }

    #[test]
    fn lr_schedule_values() {
        let cos = LrSchedule::Cosine {
            base: 0.01,
            total_steps: 100,
        };
        assert_eq!(cos.lr_at(0).unwrap(), 0.01);
        assert!((cos.lr_at(50).unwrap() - 0.005).abs() < 1e-15);
        assert!(cos.lr_at(100).unwrap().abs() < 1e-18);
        assert!(cos.lr_at(101).is_err());
        let c = LrSchedule::Constant { base: 0.01 };
        assert_eq!(c.lr_at(0).unwrap(), 0.01);
        assert_eq!(c.lr_at(10_000).unwrap(), 0.01);
    }
}
