//! Class-incremental task streams and the synthetic Gaussian-cluster
//! generator used for desk-scale experiments.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gaussian, RngStream, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vector>,
    pub labels: Vec<u32>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.features.len() != self.labels.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: self.features.len(),
                got: self.labels.len(),
            });
        }
        for f in &self.features {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "dataset feature dim",
                    expected: dim,
                    got: f.dim(),
                });
            }
            f.validate_finite("dataset feature")?;
        }
        Ok(())
    }
}

/// One task: a disjoint group of classes with train and test splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub classes: Vec<u32>,
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStream {
    pub input_dim: usize,
    pub tasks: Vec<Task>,
}

impl TaskStream {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// All class ids introduced in tasks `0..=upto`.
    pub fn seen_classes(&self, upto: usize) -> Vec<u32> {
        self.tasks[..=upto]
            .iter()
            .flat_map(|t| t.classes.iter().copied())
            .collect()
    }

    /// Class-incremental protocol checks: pairwise-disjoint class sets, and
    /// at least one train and test example per declared class.
    pub fn validate(&self) -> Result<()> {
        let mut seen: HashSet<u32> = HashSet::new();
        for task in &self.tasks {
            if task.classes.is_empty() {
                return Err(Error::InvalidParameter {
                    context: "task stream",
                    message: "task with no classes".into(),
                });
            }
            for &c in &task.classes {
                if !seen.insert(c) {
                    return Err(Error::InvalidParameter {
                        context: "task stream",
                        message: format!("class {c} appears in more than one task"),
                    });
                }
            }
            task.train.validate(self.input_dim)?;
            task.test.validate(self.input_dim)?;
            for &c in &task.classes {
                for (split, name) in [(&task.train, "train"), (&task.test, "test")] {
                    if !split.labels.contains(&c) {
                        return Err(Error::InvalidParameter {
                            context: "task stream",
                            message: format!("class {c} has no {name} examples"),
                        });
                    }
                }
            }
            for split in [&task.train, &task.test] {
                for &l in &split.labels {
                    if !task.classes.contains(&l) {
                        return Err(Error::InvalidParameter {
                            context: "task stream",
                            message: format!("label {l} not in the task's class set"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStreamSpec {
    pub num_tasks: usize,
    pub classes_per_task: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Radius of the sphere class means are drawn on. Zero makes all classes
    /// indistinguishable (chance-level accuracy).
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticStreamSpec {
    fn default() -> Self {
        SyntheticStreamSpec {
            num_tasks: 2,
            classes_per_task: 2,
            dim: 8,
            train_per_class: 32,
            test_per_class: 32,
            separation: 5.0,
            seed: 0,
        }
    }
}

/// Build a class-incremental stream of isotropic unit-variance Gaussian
/// clusters. Each class mean is a random direction scaled to `separation`;
/// class ids are assigned sequentially across tasks. Fully deterministic per
/// seed.
pub fn make_synthetic_stream(spec: &SyntheticStreamSpec) -> Result<TaskStream> {
    if spec.num_tasks == 0
        || spec.classes_per_task == 0
        || spec.dim == 0
        || spec.train_per_class == 0
        || spec.test_per_class == 0
    {
        return Err(Error::InvalidParameter {
            context: "make_synthetic_stream",
            message: "all counts must be at least 1".into(),
        });
    }
    if !(spec.separation >= 0.0) || !spec.separation.is_finite() {
        return Err(Error::InvalidParameter {
            context: "make_synthetic_stream",
            message: format!(
                "separation must be finite and nonnegative, got {}",
                spec.separation
            ),
        });
    }
    let mut tasks = Vec::with_capacity(spec.num_tasks);
    let mut next_class: u32 = 0;
    for t in 0..spec.num_tasks {
        let mut classes = Vec::with_capacity(spec.classes_per_task);
        let mut train = Dataset {
            features: Vec::new(),
            labels: Vec::new(),
        };
        let mut test = Dataset {
            features: Vec::new(),
            labels: Vec::new(),
        };
        for _ in 0..spec.classes_per_task {
            let class = next_class;
            next_class += 1;
            classes.push(class);
            let mut mean_stream = RngStream::new(&format!("stream/mean/{class}"), spec.seed);
            let mean = if spec.separation > 0.0 {
                let dir = gaussian(spec.dim, &mut mean_stream)?;
                let n = dir.norm();
                if n == 0.0 {
                    return Err(Error::DegenerateNorm {
                        context: "synthetic class mean",
                    });
                }
                dir.scale(spec.separation / n)
            } else {
                Vector::zeros(spec.dim)
            };
            for (split, count, name) in [
                (&mut train, spec.train_per_class, "train"),
                (&mut test, spec.test_per_class, "test"),
            ] {
                let mut s =
                    RngStream::new(&format!("stream/task{t}/class{class}/{name}"), spec.seed);
                for _ in 0..count {
                    let mut x = gaussian(spec.dim, &mut s)?;
                    x.axpy(1.0, &mean)?;
                    split.features.push(x);
                    split.labels.push(class);
                }
            }
        }
        tasks.push(Task {
            classes,
            train,
            test,
        });
    }
    let stream = TaskStream {
        input_dim: spec.dim,
        tasks,
    };
    stream.validate()?;
    Ok(stream)
}
