//! Two-well Gaussian landscape for basin-selection experiments: one sharp
//! well and one flat well of equal depth, plus paired FO-vs-ZO trial
//! machinery with an exact McNemar-style binomial significance test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamVector, ParamView, RngStream, Vector};
use crate::optim::{zo_sgd_step, SpsaConfig};

/// `L(theta) = A - A exp(-|theta-c1|^2 / 2 s1^2) - A exp(-|theta-c2|^2 / 2 s2^2)`
/// with `s1 < s2`: the well at `c1` is sharp, the well at `c2` is flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoWellLandscape {
    pub sharp_center: Vector,
    pub flat_center: Vector,
    pub sharp_sigma: f64,
    pub flat_sigma: f64,
    pub depth: f64,
}

impl TwoWellLandscape {
    pub fn validate(&self) -> Result<()> {
        if self.sharp_center.dim() == 0 || self.sharp_center.dim() != self.flat_center.dim() {
            return Err(Error::DimensionMismatch {
                context: "two-well centers",
                expected: self.sharp_center.dim(),
                got: self.flat_center.dim(),
            });
        }
        if !(self.sharp_sigma > 0.0 && self.flat_sigma > self.sharp_sigma) {
            return Err(Error::InvalidParameter {
                context: "two-well widths",
                message: format!(
                    "need 0 < sharp sigma < flat sigma, got {} and {}",
                    self.sharp_sigma, self.flat_sigma
                ),
            });
        }
        if !(self.depth > 0.0) {
            return Err(Error::InvalidParameter {
                context: "two-well depth",
                message: format!("depth must be positive, got {}", self.depth),
            });
        }
        if self.sharp_center == self.flat_center {
            return Err(Error::InvalidParameter {
                context: "two-well centers",
                message: "centers must be distinct".into(),
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.sharp_center.dim()
    }

    fn well_terms(&self, theta: &[f64]) -> (f64, f64) {
        let d2 = |c: &Vector| {
            c.as_slice()
                .iter()
                .zip(theta)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        let e1 = (-d2(&self.sharp_center) / (2.0 * self.sharp_sigma * self.sharp_sigma)).exp();
        let e2 = (-d2(&self.flat_center) / (2.0 * self.flat_sigma * self.flat_sigma)).exp();
        (e1, e2)
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let (e1, e2) = self.well_terms(theta);
        self.depth * (1.0 - e1 - e2)
    }

    /// Closed-form gradient of `loss`.
    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let (e1, e2) = self.well_terms(theta);
        let a1 = self.depth * e1 / (self.sharp_sigma * self.sharp_sigma);
        let a2 = self.depth * e2 / (self.flat_sigma * self.flat_sigma);
        theta
            .iter()
            .enumerate()
            .map(|(i, &t)| a1 * (t - self.sharp_center[i]) + a2 * (t - self.flat_center[i]))
            .collect()
    }

    /// Basin classification radius: endpoints within `2 * max(sigma)` of a
    /// center belong to that well.
    pub fn basin_radius(&self) -> f64 {
        2.0 * self.flat_sigma.max(self.sharp_sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasinLabel {
    Sharp,
    Flat,
    Neither,
}

/// The optimizer run in a trial; FO and ZO share lr and step count so the
/// smoothing radius is the only difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrialOptimizer {
    Fo {
        lr: f64,
        steps: u32,
    },
    Zo {
        lr: f64,
        steps: u32,
        spsa: SpsaConfig,
    },
}

/// Uniform box the trial initializer draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InitBox {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.lo.len() != dim || self.hi.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "init box",
                expected: dim,
                got: self.lo.len().min(self.hi.len()),
            });
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidParameter {
                context: "init box",
                message: "each lo bound must not exceed its hi bound".into(),
            });
        }
        Ok(())
    }

    fn sample(&self, stream: &mut RngStream) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| stream.next_range(l, h))
            .collect()
    }
}

const DIVERGENCE_BOUND: f64 = 1e6;

fn classify(landscape: &TwoWellLandscape, theta: &[f64]) -> BasinLabel {
    if theta.iter().any(|t| !t.is_finite()) || crate::numerics::norm(theta) > DIVERGENCE_BOUND {
        return BasinLabel::Neither;
    }
    let dist = |c: &Vector| {
        c.as_slice()
            .iter()
            .zip(theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let ds = dist(&landscape.sharp_center);
    let df = dist(&landscape.flat_center);
    let r = landscape.basin_radius();
    match (ds <= r, df <= r) {
        (true, false) => BasinLabel::Sharp,
        (false, true) => BasinLabel::Flat,
        (true, true) => {
            if ds <= df {
                BasinLabel::Sharp
            } else {
                BasinLabel::Flat
            }
        }
        (false, false) => BasinLabel::Neither,
    }
}

/// One seeded descent trial: sample an init point, run the optimizer, label
/// the endpoint's basin. Divergence or non-finite parameters yield `Neither`.
pub fn flat_minima_trial(
    landscape: &TwoWellLandscape,
    optimizer: &TrialOptimizer,
    init: &InitBox,
    seed: u64,
) -> Result<BasinLabel> {
    landscape.validate()?;
    init.validate(landscape.dim())?;
    let mut init_stream = RngStream::new("trial-init", seed);
    let theta0 = init.sample(&mut init_stream);
    match *optimizer {
        TrialOptimizer::Fo { lr, steps } => {
            let mut theta = theta0;
            for _ in 0..steps {
                let g = landscape.gradient(&theta);
                for (t, gi) in theta.iter_mut().zip(&g) {
                    *t -= lr * gi;
                }
                if theta.iter().any(|t| !t.is_finite())
                    || crate::numerics::norm(&theta) > DIVERGENCE_BOUND
                {
                    return Ok(BasinLabel::Neither);
                }
            }
            Ok(classify(landscape, &theta))
        }
        TrialOptimizer::Zo { lr, steps, spsa } => {
            let mut phi = ParamVector::from_vec(theta0);
            let mut loss_fn = |view: ParamView<'_>| Ok(landscape.loss(&view.to_vec()));
            for step in 0..steps {
                if zo_sgd_step(&mut loss_fn, &mut phi, &spsa, lr, seed, step as u64).is_err() {
                    return Ok(BasinLabel::Neither);
                }
                if phi.as_slice().iter().any(|t| !t.is_finite())
                    || crate::numerics::norm(phi.as_slice()) > DIVERGENCE_BOUND
                {
                    return Ok(BasinLabel::Neither);
                }
            }
            Ok(classify(landscape, phi.as_slice()))
        }
    }
}

/// Paired FO/ZO basin-rate comparison over `trials` shared seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinComparison {
    pub trials: u32,
    pub flat_fo: u32,
    pub flat_zo: u32,
    /// Trials where only ZO (resp. only FO) landed in the flat basin.
    pub zo_only_flat: u32,
    pub fo_only_flat: u32,
    /// One-sided exact McNemar p-value for "ZO reaches the flat basin more
    /// often than FO".
    pub p_value: f64,
}

pub fn basin_comparison(
    landscape: &TwoWellLandscape,
    fo: &TrialOptimizer,
    zo: &TrialOptimizer,
    init: &InitBox,
    trials: u32,
    seed0: u64,
) -> Result<BasinComparison> {
    if trials == 0 {
        return Err(Error::InvalidParameter {
            context: "basin_comparison",
            message: "need at least one trial".into(),
        });
    }
    let mut flat_fo = 0;
    let mut flat_zo = 0;
    let mut zo_only = 0;
    let mut fo_only = 0;
    for t in 0..trials {
        let seed = seed0.wrapping_add(t as u64);
        // Same seed, hence identical init point, for both optimizers.
        let lf = flat_minima_trial(landscape, fo, init, seed)? == BasinLabel::Flat;
        let lz = flat_minima_trial(landscape, zo, init, seed)? == BasinLabel::Flat;
        flat_fo += lf as u32;
        flat_zo += lz as u32;
        zo_only += (lz && !lf) as u32;
        fo_only += (lf && !lz) as u32;
    }
    Ok(BasinComparison {
        trials,
        flat_fo,
        flat_zo,
        zo_only_flat: zo_only,
        fo_only_flat: fo_only,
        p_value: binomial_tail_one_sided(zo_only + fo_only, zo_only),
    })
}

/// `P[Binomial(n, 1/2) >= x]`, computed in log space; `n = 0` yields 1.
pub fn binomial_tail_one_sided(n: u32, x: u32) -> f64 {
    if x == 0 {
        return 1.0;
    }
    if x > n {
        return 0.0;
    }
    // ln(k!) table, exact summation at these scales.
    let mut ln_fact = vec![0.0f64; n as usize + 1];
    for k in 1..=n as usize {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut p = 0.0;
    for k in x..=n {
        let ln_choose = ln_fact[n as usize] - ln_fact[k as usize] - ln_fact[(n - k) as usize];
        p += (ln_choose + ln_half_n).exp();
    }
    p.min(1.0)
}
