//! Classifier heads: prototype (nearest-centroid), linear, and cosine.
//!
//! The head grows as new classes arrive; old rows and centroids are preserved
//! verbatim. For learnable families, weights live in a flat [`ParamVector`]
//! with one segment per class, so the whole head is a single optimizer
//! target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::loss::{cross_entropy, softmax, LossValue};
use crate::numerics::{ParamVector, RngStream, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadFamily {
    Prototype,
    Linear,
    Cosine,
}

/// Default cosine scale. The scale is a fixed configuration constant, not a
/// trainable parameter.
pub const DEFAULT_COSINE_SCALE: f64 = 16.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierHead {
    family: HeadFamily,
    dim: usize,
    alpha: f64,
    class_ids: Vec<u32>,
    weights: ParamVector,
    centroids: Vec<Option<Vector>>,
    init_stream: RngStream,
}

impl ClassifierHead {
    pub fn new(family: HeadFamily, dim: usize, alpha: f64, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension {
                context: "head dim",
                got: 0,
            });
        }
        if family == HeadFamily::Cosine && !(alpha > 0.0) {
            return Err(Error::InvalidParameter {
                context: "head alpha",
                message: format!("cosine scale must be positive, got {alpha}"),
            });
        }
        Ok(ClassifierHead {
            family,
            dim,
            alpha,
            class_ids: Vec::new(),
            weights: ParamVector::zeros(&[]),
            centroids: Vec::new(),
            init_stream: RngStream::new("head-init", seed),
        })
    }

    pub fn family(&self) -> HeadFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn weights(&self) -> &ParamVector {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut ParamVector {
        &mut self.weights
    }

    pub fn set_weights(&mut self, weights: ParamVector) -> Result<()> {
        if weights.dim() != self.weights.dim() {
            return Err(Error::DimensionMismatch {
                context: "head set_weights",
                expected: self.weights.dim(),
                got: weights.dim(),
            });
        }
        self.weights = weights;
        Ok(())
    }

    /// Row index of a class id within the head.
    pub fn class_row(&self, class_id: u32) -> Result<usize> {
        self.class_ids
            .iter()
            .position(|&c| c == class_id)
            .ok_or(Error::LabelOutOfRange {
                label: class_id as usize,
                num_classes: self.class_ids.len(),
            })
    }

    /// Register new classes before training on a task. Linear rows start at
    /// zero (neutral pre-training score); cosine rows get a small fixed-seed
    /// Gaussian init to avoid zero norms. Existing rows are untouched.
    pub fn register_classes(&mut self, ids: &[u32]) -> Result<()> {
        for &id in ids {
            if self.class_ids.contains(&id) {
                return Err(Error::InvalidParameter {
                    context: "register_classes",
                    message: format!("class {id} already registered"),
                });
            }
            self.class_ids.push(id);
            self.centroids.push(None);
            let name = format!("c{id}");
            self.weights.grow_segment(&name, self.dim);
            if self.family == HeadFamily::Cosine {
                let row = self.weights.segment_mut(&name)?;
                for w in row.iter_mut() {
                    *w = 0.01 * self.init_stream.next_gaussian();
                }
            }
        }
        Ok(())
    }

    fn weight_row(&self, row: usize) -> &[f64] {
        &self.weights.as_slice()[row * self.dim..(row + 1) * self.dim]
    }

    /// One score per seen class, in class registration order. Linear:
    /// `w_y . h`; cosine: `alpha * (w_y . h) / (|w_y| |h|)`.
    pub fn scores(&self, h: &Vector) -> Result<Vec<f64>> {
        self.scores_from(h, self.weights.as_slice())
    }

    /// Scores with weights supplied externally (e.g. a perturbed probe copy).
    pub fn scores_from(&self, h: &Vector, weights: &[f64]) -> Result<Vec<f64>> {
        if self.family == HeadFamily::Prototype {
            return Err(Error::InvalidParameter {
                context: "head scores",
                message: "prototype family has no score vector; use predict".into(),
            });
        }
        if self.class_ids.is_empty() {
            return Err(Error::InvalidParameter {
                context: "head scores",
                message: "no classes registered".into(),
            });
        }
        if h.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "head scores",
                expected: self.dim,
                got: h.dim(),
            });
        }
        if weights.len() != self.class_ids.len() * self.dim {
            return Err(Error::DimensionMismatch {
                context: "head scores weights",
                expected: self.class_ids.len() * self.dim,
                got: weights.len(),
            });
        }
        let hs = h.as_slice();
        let mut out = Vec::with_capacity(self.class_ids.len());
        match self.family {
            HeadFamily::Linear => {
                for row in 0..self.class_ids.len() {
                    let w = &weights[row * self.dim..(row + 1) * self.dim];
                    out.push(crate::numerics::dot(w, hs));
                }
            }
            HeadFamily::Cosine => {
                let hn = crate::numerics::norm(hs);
                if hn == 0.0 {
                    return Err(Error::DegenerateNorm {
                        context: "cosine head: feature",
                    });
                }
                for row in 0..self.class_ids.len() {
                    let w = &weights[row * self.dim..(row + 1) * self.dim];
                    let wn = crate::numerics::norm(w);
                    if wn == 0.0 {
                        return Err(Error::DegenerateNorm {
                            context: "cosine head: weight row",
                        });
                    }
                    out.push(self.alpha * crate::numerics::dot(w, hs) / (wn * hn));
                }
            }
            HeadFamily::Prototype => unreachable!(),
        }
        Ok(out)
    }

    /// Argmax-of-scores prediction for learnable families, nearest centroid
    /// for the prototype family. Returns a class id.
    pub fn predict(&self, h: &Vector) -> Result<u32> {
        match self.family {
            HeadFamily::Prototype => self.prototype_predict(h),
            _ => {
                let scores = self.scores(h)?;
                let mut best = 0;
                for (i, &s) in scores.iter().enumerate() {
                    if s > scores[best] {
                        best = i;
                    }
                }
                Ok(self.class_ids[best])
            }
        }
    }

    /// Nearest-centroid prediction; ties broken toward the lowest class id.
    pub fn prototype_predict(&self, h: &Vector) -> Result<u32> {
        if h.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "prototype predict",
                expected: self.dim,
                got: h.dim(),
            });
        }
        let mut best: Option<(f64, u32)> = None;
        for (row, centroid) in self.centroids.iter().enumerate() {
            let Some(c) = centroid else { continue };
            let d2 = c
                .as_slice()
                .iter()
                .zip(h.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            let id = self.class_ids[row];
            best = match best {
                None => Some((d2, id)),
                Some((bd, bid)) => {
                    if d2 < bd || (d2 == bd && id < bid) {
                        Some((d2, id))
                    } else {
                        Some((bd, bid))
                    }
                }
            };
        }
        best.map(|(_, id)| id).ok_or(Error::EmptyCentroids)
    }

    pub fn centroid(&self, class_id: u32) -> Result<Option<&Vector>> {
        let row = self.class_row(class_id)?;
        Ok(self.centroids[row].as_ref())
    }

    /// Set centroids for `classes` to the exact per-class feature means of
    /// the given data. Centroids of classes outside `classes` are untouched.
    pub fn build_prototypes(
        &mut self,
        features: &[Vector],
        labels: &[u32],
        classes: &[u32],
    ) -> Result<()> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "build_prototypes",
                expected: features.len(),
                got: labels.len(),
            });
        }
        for &class in classes {
            let row = self.class_row(class)?;
            let mut sum = Vector::zeros(self.dim);
            let mut count = 0usize;
            for (f, &label) in features.iter().zip(labels) {
                if label == class {
                    sum.axpy(1.0, f)?;
                    count += 1;
                }
            }
            if count == 0 {
                return Err(Error::ClassWithoutExamples { class });
            }
            self.centroids[row] = Some(sum.scale(1.0 / count as f64));
        }
        Ok(())
    }

    /// Mean cross-entropy over a batch, retaining per-example logits.
    pub fn batch_loss(&self, features: &[Vector], labels: &[u32]) -> Result<LossValue> {
        self.batch_loss_from(features, labels, self.weights.as_slice())
    }

    pub fn batch_loss_from(
        &self,
        features: &[Vector],
        labels: &[u32],
        weights: &[f64],
    ) -> Result<LossValue> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::InvalidParameter {
                context: "batch_loss",
                message: "empty or mismatched batch".into(),
            });
        }
        let mut total = 0.0;
        let mut logits = Vec::with_capacity(features.len());
        for (h, &label) in features.iter().zip(labels) {
            let s = self.scores_from(h, weights)?;
            let row = self.class_row(label)?;
            total += cross_entropy(&s, row)?;
            logits.push(s);
        }
        Ok(LossValue {
            loss: total / features.len() as f64,
            logits: Some(logits),
        })
    }

    /// Analytic gradient of the mean cross-entropy with respect to the head
    /// weights only; features are treated as constants.
    pub fn gradient(&self, features: &[Vector], labels: &[u32]) -> Result<ParamVector> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::InvalidParameter {
                context: "head gradient",
                message: "empty or mismatched batch".into(),
            });
        }
        let d = self.dim;
        let mut grad = self.weights.clone();
        grad.as_mut_slice().fill(0.0);
        let scale = 1.0 / features.len() as f64;
        for (h, &label) in features.iter().zip(labels) {
            let s = self.scores(h)?;
            let target = self.class_row(label)?;
            let p = softmax(&s);
            let hs = h.as_slice();
            match self.family {
                HeadFamily::Linear => {
                    for (row, &p_row) in p.iter().enumerate() {
                        let coeff = scale * (p_row - if row == target { 1.0 } else { 0.0 });
                        let g = &mut grad.as_mut_slice()[row * d..(row + 1) * d];
                        for (gk, hk) in g.iter_mut().zip(hs) {
                            *gk += coeff * hk;
                        }
                    }
                }
                HeadFamily::Cosine => {
                    let hn = crate::numerics::norm(hs);
                    for (row, &p_row) in p.iter().enumerate() {
                        let w = self.weight_row(row);
                        let wn = crate::numerics::norm(w);
                        let wh = crate::numerics::dot(w, hs);
                        let coeff = scale * (p_row - if row == target { 1.0 } else { 0.0 });
                        // ds/dw = alpha * ( h/(|w||h|) - (w.h) w / (|w|^3 |h|) )
                        let a1 = self.alpha / (wn * hn);
                        let a2 = self.alpha * wh / (wn * wn * wn * hn);
                        let g = &mut grad.as_mut_slice()[row * d..(row + 1) * d];
                        for k in 0..d {
                            g[k] += coeff * (a1 * hs[k] - a2 * w[k]);
                        }
                    }
                }
                HeadFamily::Prototype => {
                    return Err(Error::InvalidParameter {
                        context: "head gradient",
                        message: "prototype family is not trainable".into(),
                    })
                }
            }
        }
        Ok(grad)
    }

    /// Per-example gradient of the mean cross-entropy with respect to the
    /// head input features (used to backpropagate into an adapter). The 1/B
    /// batch averaging factor is included.
    pub fn input_gradients(&self, features: &[Vector], labels: &[u32]) -> Result<Vec<Vector>> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::InvalidParameter {
                context: "head input gradient",
                message: "empty or mismatched batch".into(),
            });
        }
        let d = self.dim;
        let scale = 1.0 / features.len() as f64;
        let mut out = Vec::with_capacity(features.len());
        for (h, &label) in features.iter().zip(labels) {
            let s = self.scores(h)?;
            let target = self.class_row(label)?;
            let p = softmax(&s);
            let hs = h.as_slice();
            let mut g = vec![0.0; d];
            match self.family {
                HeadFamily::Linear => {
                    for (row, &p_row) in p.iter().enumerate() {
                        let coeff = scale * (p_row - if row == target { 1.0 } else { 0.0 });
                        let w = self.weight_row(row);
                        for k in 0..d {
                            g[k] += coeff * w[k];
                        }
                    }
                }
                HeadFamily::Cosine => {
                    let hn = crate::numerics::norm(hs);
                    for (row, &p_row) in p.iter().enumerate() {
                        let w = self.weight_row(row);
                        let wn = crate::numerics::norm(w);
                        let wh = crate::numerics::dot(w, hs);
                        let coeff = scale * (p_row - if row == target { 1.0 } else { 0.0 });
                        // ds/dh = alpha * ( w/(|w||h|) - (w.h) h / (|w| |h|^3) )
                        let a1 = self.alpha / (wn * hn);
                        let a2 = self.alpha * wh / (wn * hn * hn * hn);
                        for k in 0..d {
                            g[k] += coeff * (a1 * w[k] - a2 * hs[k]);
                        }
                    }
                }
                HeadFamily::Prototype => {
                    return Err(Error::InvalidParameter {
                        context: "head input gradient",
                        message: "prototype family is not trainable".into(),
                    })
                }
            }
            out.push(Vector::from_vec(g));
        }
        Ok(out)
    }
}
