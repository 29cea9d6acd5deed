//! Flat trainable-parameter storage with named segments, and read-time
//! perturbation views.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat array of trainable scalars for one component, with a named-segment
/// layout (e.g. `w_down` / `w_up` for an adapter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    segments: Vec<(String, usize)>,
}

impl ParamVector {
    pub fn zeros(segments: &[(&str, usize)]) -> Self {
        let total = segments.iter().map(|(_, n)| n).sum();
        ParamVector {
            values: vec![0.0; total],
            segments: segments.iter().map(|(s, n)| (s.to_string(), *n)).collect(),
        }
    }

    /// Single unnamed segment covering the whole vector.
    pub fn from_vec(values: Vec<f64>) -> Self {
        let n = values.len();
        ParamVector {
            values,
            segments: vec![("all".to_string(), n)],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segments(&self) -> &[(String, usize)] {
        &self.segments
    }

    fn segment_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut offset = 0;
        for (seg, len) in &self.segments {
            if seg == name {
                return Some(offset..offset + len);
            }
            offset += len;
        }
        None
    }

    pub fn segment(&self, name: &str) -> Result<&[f64]> {
        self.segment_range(name)
            .map(|r| &self.values[r])
            .ok_or_else(|| Error::InvalidParameter {
                context: "param segment",
                message: format!("no segment named {name}"),
            })
    }

    pub fn segment_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let range = self
            .segment_range(name)
            .ok_or_else(|| Error::InvalidParameter {
                context: "param segment",
                message: format!("no segment named {name}"),
            })?;
        Ok(&mut self.values[range])
    }

    /// Append a named segment of zeros (used when a classifier head grows).
    pub fn grow_segment(&mut self, name: &str, len: usize) {
        self.values.resize(self.values.len() + len, 0.0);
        self.segments.push((name.to_string(), len));
    }

    pub fn validate_finite(&self, context: &'static str) -> Result<()> {
        super::vector::validate_finite(&self.values, context)
    }

    pub fn view(&self) -> ParamView<'_> {
        ParamView::plain(&self.values)
    }
}

/// Read-only view of a parameter vector, optionally with a perturbation
/// `base + scale * dir` applied entry-wise at read time. Probe evaluations go
/// through this view, so the underlying parameters are never mutated by a
/// perturbation and restoration is trivially exact.
#[derive(Debug, Clone, Copy)]
pub struct ParamView<'a> {
    base: &'a [f64],
    perturb: Option<(&'a [f64], f64)>,
}

impl<'a> ParamView<'a> {
    pub fn plain(base: &'a [f64]) -> Self {
        ParamView {
            base,
            perturb: None,
        }
    }

    pub fn perturbed(base: &'a [f64], dir: &'a [f64], scale: f64) -> Result<Self> {
        if base.len() != dir.len() {
            return Err(Error::DimensionMismatch {
                context: "param view perturbation",
                expected: base.len(),
                got: dir.len(),
            });
        }
        Ok(ParamView {
            base,
            perturb: Some((dir, scale)),
        })
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        match self.perturb {
            None => self.base[i],
            Some((dir, scale)) => self.base[i] + scale * dir[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().collect()
    }
}
