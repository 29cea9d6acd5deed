//! Lower-triangular accuracy matrix: entry (i, j) is the test accuracy on
//! task j after completing training on task i, in percent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalMatrix {
    rows: Vec<Vec<f64>>,
}

impl EvalMatrix {
    pub fn new() -> Self {
        EvalMatrix { rows: Vec::new() }
    }

    /// Number of completed tasks K (rows appended so far).
    pub fn num_tasks(&self) -> usize {
        self.rows.len()
    }

    /// Append the accuracy row after task `K`: one entry per task seen so
    /// far, so row `i` (0-based) must have `i + 1` entries, all in [0, 100].
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let expected = self.rows.len() + 1;
        if row.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "eval matrix row",
                expected,
                got: row.len(),
            });
        }
        for &a in &row {
            if !a.is_finite() {
                return Err(Error::NonFinite {
                    context: "eval matrix entry",
                });
            }
            if !(0.0..=100.0).contains(&a) {
                return Err(Error::InvalidParameter {
                    context: "eval matrix entry",
                    message: format!("accuracy {a} outside [0, 100]"),
                });
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Entry A[i][j] (0-based), defined only for j <= i < K.
    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.rows.len() || j > i {
            return Err(Error::IncompleteMatrix { row: i, col: j });
        }
        Ok(self.rows[i][j])
    }

    pub fn row(&self, i: usize) -> Result<&[f64]> {
        self.rows
            .get(i)
            .map(|r| r.as_slice())
            .ok_or(Error::IncompleteMatrix { row: i, col: 0 })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}
