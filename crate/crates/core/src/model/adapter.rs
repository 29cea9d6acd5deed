//! LoRA-style bottleneck adapter, inserted as a parallel residual on the
//! backbone output: `forward(h) = h + W_up (W_down h)`.
//!
//! Parameters live in a flat [`ParamVector`] with segments `w_down` (r x D,
//! row-major) and `w_up` (D x r, row-major), 2*D*r scalars total and no
//! biases. With all parameters zero the adapter is the identity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamVector, ParamView, RngStream, Vector};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adapter {
    dim: usize,
    rank: usize,
    params: ParamVector,
}

impl Adapter {
    /// Zero-initialized adapter (identity map).
    pub fn zeros(dim: usize, rank: usize) -> Result<Self> {
        if dim == 0 || rank == 0 {
            return Err(Error::InvalidDimension {
                context: "adapter dims",
                got: dim.min(rank),
            });
        }
        Ok(Adapter {
            dim,
            rank,
            params: ParamVector::zeros(&[("w_down", rank * dim), ("w_up", dim * rank)]),
        })
    }

    /// Standard trainable init: Gaussian down-projection scaled by
    /// `1/sqrt(dim)`, zero up-projection. Still the identity map, but unlike
    /// the all-zeros point it is not a symmetric saddle: an antithetic probe
    /// pair `phi +/- eps*delta` sees a first-order loss difference through
    /// the nonzero down-projection, so two-sided gradient estimates can move
    /// the parameters away from init.
    pub fn initialized(dim: usize, rank: usize, seed: u64) -> Result<Self> {
        let mut adapter = Self::zeros(dim, rank)?;
        let scale = 1.0 / (dim as f64).sqrt();
        let mut stream = RngStream::new("adapter-init", seed);
        for p in adapter.params.segment_mut("w_down")? {
            *p = scale * stream.next_gaussian();
        }
        Ok(adapter)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn param_count(&self) -> usize {
        2 * self.dim * self.rank
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        if params.dim() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "adapter set_params",
                expected: self.param_count(),
                got: params.dim(),
            });
        }
        self.params = params;
        Ok(())
    }

    pub fn forward(&self, h: &Vector) -> Result<Vector> {
        self.forward_view(h, &self.params.view())
    }

    /// Forward pass reading parameters through a view, so probe perturbations
    /// apply at read time without touching stored parameters.
    pub fn forward_view(&self, h: &Vector, params: &ParamView<'_>) -> Result<Vector> {
        if h.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "adapter forward",
                expected: self.dim,
                got: h.dim(),
            });
        }
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "adapter forward params",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let d = self.dim;
        let r = self.rank;
        let hs = h.as_slice();
        // z = W_down h  (r entries); w_down is row-major r x D at offset 0.
        let mut z = vec![0.0; r];
        for (row, zr) in z.iter_mut().enumerate() {
            let base = row * d;
            let mut acc = 0.0;
            for (c, &hc) in hs.iter().enumerate() {
                acc += params.get(base + c) * hc;
            }
            *zr = acc;
        }
        // y = h + W_up z; w_up is row-major D x r at offset r*d.
        let up_off = r * d;
        let mut y = hs.to_vec();
        for (row, yr) in y.iter_mut().enumerate() {
            let base = up_off + row * r;
            let mut acc = 0.0;
            for (c, zc) in z.iter().enumerate() {
                acc += params.get(base + c) * zc;
            }
            *yr += acc;
        }
        Ok(Vector::from_vec(y))
    }

    /// Gradient of a scalar loss with respect to the adapter parameters,
    /// given per-example pairs of backbone feature `h` and upstream gradient
    /// `g_out = dL/d(forward(h))`. Averages over the batch.
    pub fn backward(&self, batch: &[(&Vector, &Vector)]) -> Result<ParamVector> {
        if batch.is_empty() {
            return Err(Error::InvalidParameter {
                context: "adapter backward",
                message: "empty batch".into(),
            });
        }
        let d = self.dim;
        let r = self.rank;
        let down = self.params.segment("w_down")?.to_vec();
        let up = self.params.segment("w_up")?.to_vec();
        let mut grad = ParamVector::zeros(&[("w_down", r * d), ("w_up", d * r)]);
        let scale = 1.0 / batch.len() as f64;
        for (h, g_out) in batch {
            if h.dim() != d || g_out.dim() != d {
                return Err(Error::DimensionMismatch {
                    context: "adapter backward",
                    expected: d,
                    got: h.dim().min(g_out.dim()),
                });
            }
            let hs = h.as_slice();
            let gs = g_out.as_slice();
            // z = W_down h, u = W_up^T g_out
            let mut z = vec![0.0; r];
            let mut u = vec![0.0; r];
            for k in 0..r {
                let mut zk = 0.0;
                for c in 0..d {
                    zk += down[k * d + c] * hs[c];
                }
                z[k] = zk;
                let mut uk = 0.0;
                for row in 0..d {
                    uk += up[row * r + k] * gs[row];
                }
                u[k] = uk;
            }
            // dL/dW_down = u h^T ; dL/dW_up = g_out z^T
            {
                let gd = grad.segment_mut("w_down")?;
                for k in 0..r {
                    for c in 0..d {
                        gd[k * d + c] += scale * u[k] * hs[c];
                    }
                }
            }
            {
                let gu = grad.segment_mut("w_up")?;
                for row in 0..d {
                    for k in 0..r {
                        gu[row * r + k] += scale * gs[row] * z[k];
                    }
                }
            }
        }
        Ok(grad)
    }
}
