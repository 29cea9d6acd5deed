//! Frozen feature backbone: identity or a stack of fixed random affine maps
//! with tanh nonlinearities. Weights are generated once from a recorded seed
//! and never change.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream, Vector};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FrozenBackbone {
    Identity {
        dim: usize,
    },
    RandomAffineStack {
        input_dim: usize,
        widths: Vec<usize>,
        seed: u64,
        layers: Vec<(Matrix, Vector)>,
    },
}

impl FrozenBackbone {
    pub fn identity(dim: usize) -> Self {
        FrozenBackbone::Identity { dim }
    }

    /// Stack of `widths.len()` layers, each `h <- tanh(W h + b)`, with weights
    /// drawn from a named stream of the given seed. Zero layers behaves as
    /// the identity.
    pub fn random_affine_stack(input_dim: usize, widths: &[usize], seed: u64) -> Self {
        let mut stream = RngStream::new("backbone", seed);
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for &width in widths {
            let scale = 1.0 / (fan_in as f64).sqrt();
            let mut w = Matrix::zeros(width, fan_in);
            for r in 0..width {
                for c in 0..fan_in {
                    w.set(r, c, stream.next_gaussian() * scale);
                }
            }
            let b = Vector::from_vec((0..width).map(|_| stream.next_gaussian() * 0.1).collect());
            layers.push((w, b));
            fan_in = width;
        }
        FrozenBackbone::RandomAffineStack {
            input_dim,
            widths: widths.to_vec(),
            seed,
            layers,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FrozenBackbone::Identity { dim } => *dim,
            FrozenBackbone::RandomAffineStack { input_dim, .. } => *input_dim,
        }
    }

    /// Feature dimension D exposed to the adapter and heads.
    pub fn output_dim(&self) -> usize {
        match self {
            FrozenBackbone::Identity { dim } => *dim,
            FrozenBackbone::RandomAffineStack {
                input_dim, widths, ..
            } => widths.last().copied().unwrap_or(*input_dim),
        }
    }

    /// Per-layer output widths, used by the activation-memory proxy.
    pub fn layer_widths(&self) -> Vec<usize> {
        match self {
            FrozenBackbone::Identity { .. } => vec![],
            FrozenBackbone::RandomAffineStack { widths, .. } => widths.clone(),
        }
    }

    pub fn forward(&self, x: &Vector) -> Result<Vector> {
        if x.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "backbone forward",
                expected: self.input_dim(),
                got: x.dim(),
            });
        }
        match self {
            FrozenBackbone::Identity { .. } => Ok(x.clone()),
            FrozenBackbone::RandomAffineStack { layers, .. } => {
                let mut h = x.clone();
                for (w, b) in layers {
                    let mut z = w.matvec(&h)?;
                    z.axpy(1.0, b)?;
                    h = Vector::from_vec(z.as_slice().iter().map(|v| v.tanh()).collect());
                }
                Ok(h)
            }
        }
    }
}
