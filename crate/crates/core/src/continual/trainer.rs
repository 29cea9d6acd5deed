//! The hybrid trainer: first-order SGD on the classifier head, Q-query
//! zeroth-order SGD on the adapter, dispatched over the full method-variant
//! grid, plus stream evaluation and checkpointing.
//!
//! Per mini-batch the head step runs first, then the adapter step, so the
//! adapter's probe losses always see the already-updated head. Epoch budgets
//! are per component: joint epochs run first, then whichever component has
//! budget left continues alone.

use serde::{Deserialize, Serialize};

use crate::continual::{EvalMatrix, Task, TaskStream};
use crate::error::{Error, Result};
use crate::model::{Adapter, ClassifierHead, FrozenBackbone, HeadFamily, DEFAULT_COSINE_SCALE};
use crate::numerics::{ParamVector, ParamView, RngStream, Vector};
use crate::optim::{fo_sgd_step, zo_sgd_step, LrSchedule, PerturbationRecord, SpsaConfig};

/// How one component (adapter or head) is optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentOpt {
    None,
    Fo,
    Zo,
}

/// One cell of the method grid: optimizer for the adapter, classifier family,
/// optimizer for the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodVariant {
    pub adapter: ComponentOpt,
    pub head_family: HeadFamily,
    pub head: ComponentOpt,
}

impl MethodVariant {
    /// The reference hybrid: ZO adapter, FO cosine head.
    pub fn zofc() -> Self {
        MethodVariant {
            adapter: ComponentOpt::Zo,
            head_family: HeadFamily::Cosine,
            head: ComponentOpt::Fo,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_family == HeadFamily::Prototype && self.head != ComponentOpt::None {
            return Err(Error::InvalidParameter {
                context: "method variant",
                message: "the prototype family has no trainable head".into(),
            });
        }
        Ok(())
    }
}

/// Per-task epoch budgets and the batch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainBudget {
    pub head_epochs: u32,
    pub adapter_epochs: u32,
    pub batch_size: usize,
}

impl Default for TrainBudget {
    fn default() -> Self {
        // Reference ratio: fewer head epochs than adapter epochs.
        TrainBudget {
            head_epochs: 10,
            adapter_epochs: 20,
            batch_size: 48,
        }
    }
}

impl TrainBudget {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter {
                context: "train budget",
                message: "batch size must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Constant,
    Cosine,
}

/// Schedule shape plus base rate; the per-task step count is filled in once
/// the task's batch count is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub base: f64,
}

impl ScheduleSpec {
    pub fn realize(&self, total_steps: u64) -> LrSchedule {
        match self.kind {
            ScheduleKind::Constant => LrSchedule::Constant { base: self.base },
            ScheduleKind::Cosine => LrSchedule::Cosine {
                base: self.base,
                total_steps,
            },
        }
    }
}

/// Learning-rate schedules per component. Defaults: cosine-decayed head,
/// constant adapter, both starting at 0.01.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedules {
    pub head: ScheduleSpec,
    pub adapter: ScheduleSpec,
}

impl Default for Schedules {
    fn default() -> Self {
        Schedules {
            head: ScheduleSpec {
                kind: ScheduleKind::Cosine,
                base: 0.01,
            },
            adapter: ScheduleSpec {
                kind: ScheduleKind::Constant,
                base: 0.01,
            },
        }
    }
}

/// Everything that evolves across a stream run. Serializable, and sufficient
/// to resume a run bit-exactly at a task boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinualState {
    pub backbone: FrozenBackbone,
    pub adapter: Adapter,
    pub head: ClassifierHead,
    pub variant: MethodVariant,
    pub tasks_seen: usize,
    /// Global ZO step counters; combined with `base_seed` they index the
    /// perturbation-direction streams.
    pub adapter_zo_step: u64,
    pub head_zo_step: u64,
    pub shuffle_stream: RngStream,
    pub base_seed: u64,
}

/// Head-direction streams use a decorrelated seed so a head step and an
/// adapter step with the same step index never share a direction prefix.
const HEAD_SEED_TWEAK: u64 = 0x5EED_0F0F_5EED_0F0F;

impl ContinualState {
    pub fn new(
        backbone: FrozenBackbone,
        adapter_rank: usize,
        variant: MethodVariant,
        seed: u64,
    ) -> Result<Self> {
        variant.validate()?;
        let dim = backbone.output_dim();
        let adapter = Adapter::initialized(dim, adapter_rank, seed)?;
        let head = ClassifierHead::new(variant.head_family, dim, DEFAULT_COSINE_SCALE, seed)?;
        Ok(ContinualState {
            backbone,
            adapter,
            head,
            variant,
            tasks_seen: 0,
            adapter_zo_step: 0,
            head_zo_step: 0,
            shuffle_stream: RngStream::new("shuffle", seed),
            base_seed: seed,
        })
    }
}

/// Model parameters frozen after one task, for later matrix evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub adapter: Adapter,
    pub head: ClassifierHead,
}

/// What one task's training produced, beyond the state mutation.
#[derive(Debug, Clone, Default)]
pub struct TaskTrainReport {
    pub records: Vec<PerturbationRecord>,
    /// Mean probe loss of each adapter ZO step, in step order.
    pub zo_losses: Vec<f64>,
}

/// Backbone outputs for a whole dataset; the backbone is frozen, so these are
/// computed once per dataset and reused across epochs and probes.
pub fn backbone_features(backbone: &FrozenBackbone, features: &[Vector]) -> Result<Vec<Vector>> {
    features.iter().map(|x| backbone.forward(x)).collect()
}

fn adapt_batch(adapter: &Adapter, feats: &[Vector], idx: &[usize]) -> Result<Vec<Vector>> {
    idx.iter().map(|&i| adapter.forward(&feats[i])).collect()
}

fn gather_labels(labels: &[u32], idx: &[usize]) -> Vec<u32> {
    idx.iter().map(|&i| labels[i]).collect()
}

fn training_failure(task: usize, batch: usize) -> impl Fn(Error) -> Error + Copy {
    move |source| Error::TrainingFailure {
        task,
        batch,
        source: Box::new(source),
    }
}

/// One FO step on the head from the adapted features of this batch.
fn head_fo_step(
    head: &mut ClassifierHead,
    adapted: &[Vector],
    labels: &[u32],
    lr: f64,
) -> Result<()> {
    let grad = head.gradient(adapted, labels)?;
    fo_sgd_step(head.weights_mut(), &grad, lr)
}

/// One ZO step on the head weights. Probe losses read the weights through a
/// perturbed view; the stored weights move only by the final update.
fn head_zo_step(
    head: &mut ClassifierHead,
    adapted: &[Vector],
    labels: &[u32],
    cfg: &SpsaConfig,
    lr: f64,
    base_seed: u64,
    step: u64,
) -> Result<Vec<PerturbationRecord>> {
    let mut weights = std::mem::replace(head.weights_mut(), ParamVector::zeros(&[]));
    let outcome = {
        let head_ref: &ClassifierHead = head;
        let mut loss_fn = |view: ParamView<'_>| {
            Ok(head_ref
                .batch_loss_from(adapted, labels, &view.to_vec())?
                .loss)
        };
        zo_sgd_step(&mut loss_fn, &mut weights, cfg, lr, base_seed, step)
    };
    *head.weights_mut() = weights;
    Ok(outcome?.records)
}

/// One FO step on the adapter: backpropagate the batch loss through the head
/// into the adapter parameters analytically.
fn adapter_fo_step(
    adapter: &mut Adapter,
    head: &ClassifierHead,
    raw: &[Vector],
    idx: &[usize],
    labels: &[u32],
    lr: f64,
) -> Result<()> {
    let adapted = adapt_batch(adapter, raw, idx)?;
    // input_gradients already includes the 1/B mean factor, and
    // Adapter::backward averages again; rescale so the result is the gradient
    // of the batch-mean loss.
    let b = idx.len() as f64;
    let upstream: Vec<Vector> = head
        .input_gradients(&adapted, labels)?
        .into_iter()
        .map(|g| g.scale(b))
        .collect();
    let pairs: Vec<(&Vector, &Vector)> =
        idx.iter().map(|&i| &raw[i]).zip(upstream.iter()).collect();
    let grad = adapter.backward(&pairs)?;
    fo_sgd_step(adapter.params_mut(), &grad, lr)
}

/// One ZO step on the adapter parameters against the batch loss through the
/// current (already-updated) head.
#[allow(clippy::too_many_arguments)]
fn adapter_zo_step(
    adapter: &mut Adapter,
    head: &ClassifierHead,
    raw: &[Vector],
    idx: &[usize],
    labels: &[u32],
    cfg: &SpsaConfig,
    lr: f64,
    base_seed: u64,
    step: u64,
) -> Result<(Vec<PerturbationRecord>, f64)> {
    let mut phi = std::mem::replace(adapter.params_mut(), ParamVector::zeros(&[]));
    let outcome = {
        let adapter_ref: &Adapter = adapter;
        let mut loss_fn = |view: ParamView<'_>| {
            let adapted: Vec<Vector> = idx
                .iter()
                .map(|&i| adapter_ref.forward_view(&raw[i], &view))
                .collect::<Result<_>>()?;
            Ok(head.batch_loss(&adapted, labels)?.loss)
        };
        zo_sgd_step(&mut loss_fn, &mut phi, cfg, lr, base_seed, step)
    };
    *adapter.params_mut() = phi;
    let outcome = outcome?;
    Ok((outcome.records, outcome.mean_loss))
}

struct EpochPlan {
    head_epochs: u32,
    adapter_epochs: u32,
    total_epochs: u32,
    head_schedule: LrSchedule,
    adapter_schedule: LrSchedule,
}

fn plan_epochs(
    n_examples: usize,
    budget: &TrainBudget,
    schedules: &Schedules,
    train_head: bool,
    train_adapter: bool,
) -> EpochPlan {
    let batches_per_epoch = (n_examples as u64).div_ceil(budget.batch_size as u64);
    let head_epochs = if train_head { budget.head_epochs } else { 0 };
    let adapter_epochs = if train_adapter {
        budget.adapter_epochs
    } else {
        0
    };
    EpochPlan {
        head_epochs,
        adapter_epochs,
        total_epochs: head_epochs.max(adapter_epochs),
        head_schedule: schedules
            .head
            .realize(head_epochs as u64 * batches_per_epoch),
        adapter_schedule: schedules
            .adapter
            .realize(adapter_epochs as u64 * batches_per_epoch),
    }
}

/// Train the current task under the state's method variant. Classes are
/// registered before training; prototype variants rebuild this task's
/// centroids from the post-training adapter outputs.
pub fn train_task_variant(
    state: &mut ContinualState,
    task: &Task,
    budget: &TrainBudget,
    spsa: &SpsaConfig,
    schedules: &Schedules,
) -> Result<TaskTrainReport> {
    state.variant.validate()?;
    budget.validate()?;
    spsa.validate()?;
    let task_index = state.tasks_seen;
    let fail = |batch: usize| training_failure(task_index, batch);
    let raw = backbone_features(&state.backbone, &task.train.features).map_err(fail(0))?;
    let labels = &task.train.labels;
    state
        .head
        .register_classes(&task.classes)
        .map_err(fail(0))?;

    let mut report = TaskTrainReport::default();

    if state.variant.head_family == HeadFamily::Prototype {
        if state.variant.adapter != ComponentOpt::None {
            // The prototype family has nothing to backpropagate or probe, so
            // adapter training is driven by a temporary FO cosine head that is
            // discarded once the task ends; only the centroids persist.
            let aux_seed = state.base_seed ^ HEAD_SEED_TWEAK ^ task_index as u64;
            let mut aux = ClassifierHead::new(
                HeadFamily::Cosine,
                state.head.dim(),
                DEFAULT_COSINE_SCALE,
                aux_seed,
            )?;
            aux.register_classes(&task.classes)?;
            train_components(
                state,
                &mut aux,
                ComponentOpt::Fo,
                &raw,
                labels,
                budget,
                spsa,
                schedules,
                task_index,
                &mut report,
            )?;
        }
        let adapted: Vec<Vector> = raw
            .iter()
            .map(|h| state.adapter.forward(h))
            .collect::<Result<_>>()
            .map_err(fail(0))?;
        state
            .head
            .build_prototypes(&adapted, labels, &task.classes)
            .map_err(fail(0))?;
    } else {
        let mut head = std::mem::replace(
            &mut state.head,
            ClassifierHead::new(HeadFamily::Linear, 1, 1.0, 0)?,
        );
        let result = train_components(
            state,
            &mut head,
            state.variant.head,
            &raw,
            labels,
            budget,
            spsa,
            schedules,
            task_index,
            &mut report,
        );
        state.head = head;
        result?;
    }

    state.tasks_seen += 1;
    Ok(report)
}

/// The shared epoch/batch loop: FO or ZO on `head` (per `head_opt`), then FO
/// or ZO on the state's adapter, each within its own epoch budget.
#[allow(clippy::too_many_arguments)]
fn train_components(
    state: &mut ContinualState,
    head: &mut ClassifierHead,
    head_opt: ComponentOpt,
    raw: &[Vector],
    labels: &[u32],
    budget: &TrainBudget,
    spsa: &SpsaConfig,
    schedules: &Schedules,
    task_index: usize,
    report: &mut TaskTrainReport,
) -> Result<()> {
    let plan = plan_epochs(
        raw.len(),
        budget,
        schedules,
        head_opt != ComponentOpt::None,
        state.variant.adapter != ComponentOpt::None,
    );
    let mut head_step: u64 = 0;
    let mut adapter_fo_lr_step: u64 = 0;
    let mut order: Vec<usize> = (0..raw.len()).collect();
    for epoch in 0..plan.total_epochs {
        let do_head = epoch < plan.head_epochs;
        let do_adapter = epoch < plan.adapter_epochs;
        state.shuffle_stream.shuffle(&mut order);
        for (batch_no, idx) in order.chunks(budget.batch_size).enumerate() {
            let fail = training_failure(task_index, batch_no);
            let batch_labels = gather_labels(labels, idx);
            if do_head {
                let lr = plan.head_schedule.lr_at(head_step).map_err(fail)?;
                match head_opt {
                    ComponentOpt::Fo => {
                        let adapted = adapt_batch(&state.adapter, raw, idx).map_err(fail)?;
                        head_fo_step(head, &adapted, &batch_labels, lr).map_err(fail)?;
                    }
                    ComponentOpt::Zo => {
                        let adapted = adapt_batch(&state.adapter, raw, idx).map_err(fail)?;
                        let records = head_zo_step(
                            head,
                            &adapted,
                            &batch_labels,
                            spsa,
                            lr,
                            state.base_seed ^ HEAD_SEED_TWEAK,
                            state.head_zo_step,
                        )
                        .map_err(fail)?;
                        state.head_zo_step += 1;
                        report.records.extend(records);
                    }
                    ComponentOpt::None => unreachable!("head epochs are zero when untrained"),
                }
                head_step += 1;
            }
            if do_adapter {
                match state.variant.adapter {
                    ComponentOpt::Fo => {
                        let lr = plan
                            .adapter_schedule
                            .lr_at(adapter_fo_lr_step)
                            .map_err(fail)?;
                        adapter_fo_lr_step += 1;
                        adapter_fo_step(&mut state.adapter, head, raw, idx, &batch_labels, lr)
                            .map_err(fail)?;
                    }
                    ComponentOpt::Zo => {
                        let lr = plan
                            .adapter_schedule
                            .lr_at(adapter_fo_lr_step)
                            .map_err(fail)?;
                        adapter_fo_lr_step += 1;
                        let (records, mean_loss) = adapter_zo_step(
                            &mut state.adapter,
                            head,
                            raw,
                            idx,
                            &batch_labels,
                            spsa,
                            lr,
                            state.base_seed,
                            state.adapter_zo_step,
                        )
                        .map_err(fail)?;
                        state.adapter_zo_step += 1;
                        report.records.extend(records);
                        report.zo_losses.push(mean_loss);
                    }
                    ComponentOpt::None => unreachable!("adapter epochs are zero when untrained"),
                }
            }
        }
    }
    Ok(())
}

/// Train one task with the reference hybrid recipe (FO head step first, then
/// the ZO adapter step, every batch). The state's variant must be a ZO
/// adapter with an FO learnable head.
pub fn train_task_zofc(
    state: &mut ContinualState,
    task: &Task,
    budget: &TrainBudget,
    spsa: &SpsaConfig,
    schedules: &Schedules,
) -> Result<TaskTrainReport> {
    if state.variant.adapter != ComponentOpt::Zo
        || state.variant.head != ComponentOpt::Fo
        || state.variant.head_family == HeadFamily::Prototype
    {
        return Err(Error::InvalidParameter {
            context: "train_task_zofc",
            message: "requires a ZO adapter and an FO learnable head".into(),
        });
    }
    train_task_variant(state, task, budget, spsa, schedules)
}

/// Percent of `dataset` classified correctly by the given model over the full
/// seen-class label space (no task identity at test time).
pub fn accuracy(
    backbone: &FrozenBackbone,
    adapter: &Adapter,
    head: &ClassifierHead,
    dataset: &super::Dataset,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidParameter {
            context: "accuracy",
            message: "empty dataset".into(),
        });
    }
    let mut correct = 0usize;
    for (x, &label) in dataset.features.iter().zip(&dataset.labels) {
        let h = adapter.forward(&backbone.forward(x)?)?;
        if head.predict(&h)? == label {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / dataset.len() as f64)
}

/// Fill the lower-triangular accuracy matrix from one snapshot per completed
/// task: entry (i, j) evaluates snapshot i on task j's test split.
pub fn evaluate_stream(
    backbone: &FrozenBackbone,
    stream: &TaskStream,
    snapshots: &[ModelSnapshot],
) -> Result<EvalMatrix> {
    if snapshots.len() != stream.num_tasks() {
        return Err(Error::MissingSnapshot {
            task: snapshots.len(),
        });
    }
    let mut matrix = EvalMatrix::new();
    for (i, snap) in snapshots.iter().enumerate() {
        let mut row = Vec::with_capacity(i + 1);
        for task in &stream.tasks[..=i] {
            row.push(accuracy(backbone, &snap.adapter, &snap.head, &task.test)?);
        }
        matrix.push_row(row)?;
    }
    Ok(matrix)
}

/// Result of a full stream run.
#[derive(Debug, Clone)]
pub struct StreamRunResult {
    pub matrix: EvalMatrix,
    pub snapshots: Vec<ModelSnapshot>,
    pub records: Vec<PerturbationRecord>,
    pub zo_losses: Vec<f64>,
}

/// Train every task in order, snapshotting after each, then evaluate the
/// whole matrix.
pub fn run_stream(
    state: &mut ContinualState,
    stream: &TaskStream,
    budget: &TrainBudget,
    spsa: &SpsaConfig,
    schedules: &Schedules,
) -> Result<StreamRunResult> {
    stream.validate()?;
    let mut snapshots = Vec::with_capacity(stream.num_tasks());
    let mut records = Vec::new();
    let mut zo_losses = Vec::new();
    for task in &stream.tasks {
        let report = train_task_variant(state, task, budget, spsa, schedules)?;
        records.extend(report.records);
        zo_losses.extend(report.zo_losses);
        snapshots.push(ModelSnapshot {
            adapter: state.adapter.clone(),
            head: state.head.clone(),
        });
    }
    let matrix = evaluate_stream(&state.backbone, stream, &snapshots)?;
    Ok(StreamRunResult {
        matrix,
        snapshots,
        records,
        zo_losses,
    })
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Task-boundary checkpoint: the full evolving state plus per-task snapshots,
/// sufficient to resume the run bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub state: ContinualState,
    pub snapshots: Vec<ModelSnapshot>,
}

impl Checkpoint {
    pub fn new(state: ContinualState, snapshots: Vec<ModelSnapshot>) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            state,
            snapshots,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidParameter {
                context: "checkpoint",
                message: format!(
                    "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                    self.version
                ),
            });
        }
        if self.snapshots.len() != self.state.tasks_seen {
            return Err(Error::MissingSnapshot {
                task: self.snapshots.len(),
            });
        }
        Ok(())
    }
}

/// Flat concatenation of adapter parameters followed by head weights, the
/// coordinate system used by the landscape probes.
pub fn stacked_params(adapter: &Adapter, head: &ClassifierHead) -> Vec<f64> {
    let mut theta = Vec::with_capacity(adapter.params().dim() + head.weights().dim());
    theta.extend_from_slice(adapter.params().as_slice());
    theta.extend_from_slice(head.weights().as_slice());
    theta
}

/// Sum of the mean train losses of tasks `0..upto`, as a function of the
/// stacked (adapter, head) parameter point. Used as the old-task loss surface
/// for flatness probes; the stored model is never mutated.
pub fn old_tasks_loss(
    backbone: &FrozenBackbone,
    adapter: &Adapter,
    head: &ClassifierHead,
    stream: &TaskStream,
    upto: usize,
    theta: &[f64],
) -> Result<f64> {
    if head.family() == HeadFamily::Prototype {
        return Err(Error::InvalidParameter {
            context: "old_tasks_loss",
            message: "prototype heads have no differentiable loss surface".into(),
        });
    }
    let phi_dim = adapter.params().dim();
    let psi_dim = head.weights().dim();
    if theta.len() != phi_dim + psi_dim {
        return Err(Error::DimensionMismatch {
            context: "old_tasks_loss",
            expected: phi_dim + psi_dim,
            got: theta.len(),
        });
    }
    if upto == 0 || upto > stream.num_tasks() {
        return Err(Error::InvalidParameter {
            context: "old_tasks_loss",
            message: format!("task range 1..={} required, got {upto}", stream.num_tasks()),
        });
    }
    let (phi, psi) = theta.split_at(phi_dim);
    let view = ParamView::plain(phi);
    let mut total = 0.0;
    for task in &stream.tasks[..upto] {
        let adapted: Vec<Vector> = task
            .train
            .features
            .iter()
            .map(|x| adapter.forward_view(&backbone.forward(x)?, &view))
            .collect::<Result<_>>()?;
        total += head
            .batch_loss_from(&adapted, &task.train.labels, psi)?
            .loss;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continual::{make_synthetic_stream, SyntheticStreamSpec};
    use crate::numerics::central_gradient;

    fn small_stream(seed: u64) -> TaskStream {
        make_synthetic_stream(&SyntheticStreamSpec {
            num_tasks: 2,
            classes_per_task: 2,
            dim: 6,
            train_per_class: 12,
            test_per_class: 12,
            separation: 6.0,
            seed,
        })
        .unwrap()
    }

    fn small_budget() -> TrainBudget {
        TrainBudget {
            head_epochs: 4,
            adapter_epochs: 6,
            batch_size: 8,
        }
    }

    #[test]
    fn variant_validation() {
        assert!(MethodVariant::zofc().validate().is_ok());
        let bad = MethodVariant {
            adapter: ComponentOpt::Zo,
            head_family: HeadFamily::Prototype,
            head: ComponentOpt::Fo,
        };
        assert!(bad.validate().is_err());
        assert!(TrainBudget {
            batch_size: 0,
            ..TrainBudget::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn zofc_learns_separable_tasks() {
        let stream = small_stream(3);
        let mut state =
            ContinualState::new(FrozenBackbone::identity(6), 2, MethodVariant::zofc(), 7).unwrap();
        let result = run_stream(
            &mut state,
            &stream,
            &small_budget(),
            &SpsaConfig::default(),
            &Schedules::default(),
        )
        .unwrap();
        // Well-separated clusters: the first task should be learned well.
        assert!(
            result.matrix.get(0, 0).unwrap() > 90.0,
            "{:?}",
            result.matrix
        );
        assert_eq!(result.matrix.num_tasks(), 2);
        assert!(!result.records.is_empty());
    }

    #[test]
    fn fo_head_only_learns_and_leaves_adapter_at_zero() {
        let stream = small_stream(5);
        let variant = MethodVariant {
            adapter: ComponentOpt::None,
            head_family: HeadFamily::Linear,
            head: ComponentOpt::Fo,
        };
        let mut state = ContinualState::new(FrozenBackbone::identity(6), 2, variant, 1).unwrap();
        let phi_init = state.adapter.params().as_slice().to_vec();
        let result = run_stream(
            &mut state,
            &stream,
            &small_budget(),
            &SpsaConfig::default(),
            &Schedules::default(),
        )
        .unwrap();
        assert!(result.matrix.get(0, 0).unwrap() > 95.0);
        // Adapter untouched: bitwise at its init point.
        assert_eq!(state.adapter.params().as_slice(), phi_init.as_slice());
        assert!(result.records.is_empty());
    }

    #[test]
    fn prototype_only_variant_changes_nothing_but_centroids() {
        let stream = small_stream(9);
        let variant = MethodVariant {
            adapter: ComponentOpt::None,
            head_family: HeadFamily::Prototype,
            head: ComponentOpt::None,
        };
        let mut state = ContinualState::new(FrozenBackbone::identity(6), 2, variant, 1).unwrap();
        let phi_init = state.adapter.params().as_slice().to_vec();
        let result = run_stream(
            &mut state,
            &stream,
            &small_budget(),
            &SpsaConfig::default(),
            &Schedules::default(),
        )
        .unwrap();
        assert_eq!(state.adapter.params().as_slice(), phi_init.as_slice());
        for &c in &[0u32, 1, 2, 3] {
            assert!(state.head.centroid(c).unwrap().is_some());
        }
        // Separation 6 makes nearest-centroid nearly perfect.
        assert!(result.matrix.get(1, 0).unwrap() > 90.0);
        assert!(result.matrix.get(1, 1).unwrap() > 90.0);
    }

    #[test]
    fn zo_adapter_prototype_variant_trains_adapter() {
        let stream = small_stream(12);
        let variant = MethodVariant {
            adapter: ComponentOpt::Zo,
            head_family: HeadFamily::Prototype,
            head: ComponentOpt::None,
        };
        let mut state = ContinualState::new(FrozenBackbone::identity(6), 2, variant, 2).unwrap();
        let phi_init = state.adapter.params().as_slice().to_vec();
        let result = run_stream(
            &mut state,
            &stream,
            &small_budget(),
            &SpsaConfig::default(),
            &Schedules::default(),
        )
        .unwrap();
        // Adapter moved, and the temporary head left no trace.
        assert_ne!(state.adapter.params().as_slice(), phi_init.as_slice());
        assert_eq!(state.head.family(), HeadFamily::Prototype);
        assert!(!result.records.is_empty());
        assert!(
            result.matrix.get(1, 1).unwrap() > 80.0,
            "{:?}",
            result.matrix
        );
    }

    #[test]
    fn full_run_is_deterministic() {
        let run = || {
            let stream = small_stream(13);
            let mut state =
                ContinualState::new(FrozenBackbone::identity(6), 2, MethodVariant::zofc(), 21)
                    .unwrap();
            run_stream(
                &mut state,
                &stream,
                &small_budget(),
                &SpsaConfig::default(),
                &Schedules::default(),
            )
            .map(|r| (r.matrix, state.adapter.params().as_slice().to_vec()))
            .unwrap()
        };
        let (m1, p1) = run();
        let (m2, p2) = run();
        assert_eq!(m1, m2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn head_and_adapter_isolation_per_step() {
        // During an adapter ZO step the head weights must be bitwise constant,
        // and vice versa. Exercised by stepping each component manually.
        let stream = small_stream(17);
        let mut state =
            ContinualState::new(FrozenBackbone::identity(6), 2, MethodVariant::zofc(), 4).unwrap();
        state
            .head
            .register_classes(&stream.tasks[0].classes)
            .unwrap();
        let raw = backbone_features(&state.backbone, &stream.tasks[0].train.features).unwrap();
        let idx: Vec<usize> = (0..8).collect();
        let labels = gather_labels(&stream.tasks[0].train.labels, &idx);

        let psi_before = state.head.weights().as_slice().to_vec();
        let (_, _) = adapter_zo_step(
            &mut state.adapter,
            &state.head,
            &raw,
            &idx,
            &labels,
            &SpsaConfig::default(),
            0.01,
            4,
            0,
        )
        .unwrap();
        assert_eq!(state.head.weights().as_slice(), psi_before.as_slice());

        let phi_before = state.adapter.params().as_slice().to_vec();
        let adapted = adapt_batch(&state.adapter, &raw, &idx).unwrap();
        head_fo_step(&mut state.head, &adapted, &labels, 0.01).unwrap();
        assert_eq!(state.adapter.params().as_slice(), phi_before.as_slice());
        assert_ne!(state.head.weights().as_slice(), psi_before.as_slice());
    }

    #[test]
    fn adapter_fo_gradient_matches_finite_differences() {
        let stream = small_stream(19);
        let variant = MethodVariant {
            adapter: ComponentOpt::Fo,
            head_family: HeadFamily::Linear,
            head: ComponentOpt::Fo,
        };
        let mut state = ContinualState::new(FrozenBackbone::identity(6), 2, variant, 8).unwrap();
        state
            .head
            .register_classes(&stream.tasks[0].classes)
            .unwrap();
        // Give the head nonzero weights so input gradients are nontrivial.
        let mut s = RngStream::new("fd-head", 0);
        for w in state.head.weights_mut().as_mut_slice() {
            *w = 0.3 * s.next_gaussian();
        }
        for p in state.adapter.params_mut().as_mut_slice() {
            *p = 0.1 * s.next_gaussian();
        }
        let raw = backbone_features(&state.backbone, &stream.tasks[0].train.features).unwrap();
        let idx: Vec<usize> = (0..5).collect();
        let labels = gather_labels(&stream.tasks[0].train.labels, &idx);

        // FD gradient of the batch-mean loss in phi.
        let adapter_ref = state.adapter.clone();
        let head_ref = state.head.clone();
        let raw_ref = raw.clone();
        let labels_ref = labels.clone();
        let mut loss_at = |phi: &[f64]| {
            let view = ParamView::plain(phi);
            let adapted: Vec<Vector> = idx
                .iter()
                .map(|&i| adapter_ref.forward_view(&raw_ref[i], &view))
                .collect::<Result<_>>()?;
            Ok(head_ref.batch_loss(&adapted, &labels_ref)?.loss)
        };
        let fd = central_gradient(&mut loss_at, state.adapter.params().as_slice(), 1e-6).unwrap();

        // One FO step with lr 1 moves phi by exactly -gradient.
        let before = state.adapter.params().as_slice().to_vec();
        adapter_fo_step(&mut state.adapter, &head_ref, &raw, &idx, &labels, 1.0).unwrap();
        for i in 0..before.len() {
            let analytic = before[i] - state.adapter.params().as_slice()[i];
            assert!(
                (analytic - fd[i]).abs() < 1e-6,
                "param {i}: analytic {analytic} vs fd {}",
                fd[i]
            );
        }
    }

    #[test]
    fn zero_adapter_epochs_reduces_to_head_only() {
        let stream = small_stream(23);
        let budget = TrainBudget {
            adapter_epochs: 0,
            ..small_budget()
        };
        let mut zofc =
            ContinualState::new(FrozenBackbone::identity(6), 2, MethodVariant::zofc(), 31).unwrap();
        let head_only_variant = MethodVariant {
            adapter: ComponentOpt::None,
            head_family: HeadFamily::Cosine,
            head: ComponentOpt::Fo,
        };
        let mut head_only =
            ContinualState::new(FrozenBackbone::identity(6), 2, head_only_variant, 31).unwrap();
        let r1 = run_stream(
            &mut zofc,
            &stream,
            &budget,
            &SpsaConfig::default(),
            &Schedules::default(),
        )
        .unwrap();
        let r2 = run_stream(
            &mut head_only,
            &stream,
            &small_budget(),
            &SpsaConfig::default(),
            &Schedules::default(),
        )
        .unwrap();
        assert_eq!(
            zofc.head.weights().as_slice(),
            head_only.head.weights().as_slice()
        );
        assert_eq!(r1.matrix, r2.matrix);
        let init = Adapter::initialized(6, 2, 31).unwrap();
        assert_eq!(zofc.adapter.params().as_slice(), init.params().as_slice());
    }

    #[test]
    fn q1_single_batch_matches_hand_stepped_trace() {
        // One epoch, one batch, Q=1: replay Algorithm steps by hand and
        // compare the final (phi, psi) exactly.
        let stream = make_synthetic_stream(&SyntheticStreamSpec {
            num_tasks: 1,
            classes_per_task: 2,
            dim: 4,
            train_per_class: 3,
            test_per_class: 3,
            separation: 4.0,
            seed: 29,
        })
        .unwrap();
        let task = &stream.tasks[0];
        let spsa = SpsaConfig {
            queries: 1,
            ..SpsaConfig::default()
        };
        let budget = TrainBudget {
            head_epochs: 1,
            adapter_epochs: 1,
            batch_size: 16,
        };
        let schedules = Schedules {
            head: ScheduleSpec {
                kind: ScheduleKind::Constant,
                base: 0.05,
            },
            adapter: ScheduleSpec {
                kind: ScheduleKind::Constant,
                base: 0.02,
            },
        };
        let seed = 77;
        let mut state =
            ContinualState::new(FrozenBackbone::identity(4), 2, MethodVariant::zofc(), seed)
                .unwrap();
        train_task_zofc(&mut state, task, &budget, &spsa, &schedules).unwrap();

        // Hand trace.
        let mut adapter = Adapter::initialized(4, 2, seed).unwrap();
        let mut head =
            ClassifierHead::new(HeadFamily::Cosine, 4, DEFAULT_COSINE_SCALE, seed).unwrap();
        head.register_classes(&task.classes).unwrap();
        let raw = task.train.features.clone();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        RngStream::new("shuffle", seed).shuffle(&mut order);
        let labels = gather_labels(&task.train.labels, &order);
        // (i) FO head step on the batch through the (identity) adapter.
        let adapted: Vec<Vector> = order
            .iter()
            .map(|&i| adapter.forward(&raw[i]).unwrap())
            .collect();
        let grad = head.gradient(&adapted, &labels).unwrap();
        fo_sgd_step(head.weights_mut(), &grad, 0.05).unwrap();
        // (ii) one-query ZO step on the adapter against the updated head.
        let mut phi = std::mem::replace(adapter.params_mut(), ParamVector::zeros(&[]));
        {
            let a = &adapter;
            let h = &head;
            let mut f = |view: ParamView<'_>| {
                let adapted: Vec<Vector> = order
                    .iter()
                    .map(|&i| a.forward_view(&raw[i], &view))
                    .collect::<Result<_>>()?;
                Ok(h.batch_loss(&adapted, &labels)?.loss)
            };
            zo_sgd_step(&mut f, &mut phi, &spsa, 0.02, seed, 0).unwrap();
        }
        *adapter.params_mut() = phi;

        assert_eq!(state.head.weights().as_slice(), head.weights().as_slice());
        assert_eq!(
            state.adapter.params().as_slice(),
            adapter.params().as_slice()
        );
    }

    #[test]
    fn evaluate_stream_matches_independent_scan() {
        let stream = small_stream(37);
        let mut state =
            ContinualState::new(FrozenBackbone::identity(6), 2, MethodVariant::zofc(), 5).unwrap();
        let result = run_stream(
            &mut state,
            &stream,
            &small_budget(),
            &SpsaConfig::default(),
            &Schedules::default(),
        )
        .unwrap();
        // Brute-force re-evaluation, one (i, j) at a time.
        for i in 0..2 {
            for j in 0..=i {
                let snap = &result.snapshots[i];
                let test = &stream.tasks[j].test;
                let mut correct = 0;
                for (x, &y) in test.features.iter().zip(&test.labels) {
                    let h = snap
                        .adapter
                        .forward(&state.backbone.forward(x).unwrap())
                        .unwrap();
                    if snap.head.predict(&h).unwrap() == y {
                        correct += 1;
                    }
                }
                let acc = 100.0 * correct as f64 / test.len() as f64;
                assert_eq!(result.matrix.get(i, j).unwrap(), acc);
            }
        }
        // Missing snapshot detected.
        assert!(evaluate_stream(&state.backbone, &stream, &result.snapshots[..1]).is_err());
    }

    #[test]
    fn checkpoint_resume_is_bit_exact() {
        let stream = make_synthetic_stream(&SyntheticStreamSpec {
            num_tasks: 3,
            classes_per_task: 2,
            dim: 6,
            train_per_class: 10,
            test_per_class: 10,
            separation: 6.0,
            seed: 41,
        })
        .unwrap();
        let budget = small_budget();
        let spsa = SpsaConfig::default();
        let schedules = Schedules::default();

        // Reference: straight-through run.
        let mut full =
            ContinualState::new(FrozenBackbone::identity(6), 2, MethodVariant::zofc(), 55).unwrap();
        for task in &stream.tasks {
            train_task_variant(&mut full, task, &budget, &spsa, &schedules).unwrap();
        }

        // Interrupted run: two tasks, checkpoint through JSON, resume.
        let mut first =
            ContinualState::new(FrozenBackbone::identity(6), 2, MethodVariant::zofc(), 55).unwrap();
        let mut snaps = Vec::new();
        for task in &stream.tasks[..2] {
            train_task_variant(&mut first, task, &budget, &spsa, &schedules).unwrap();
            snaps.push(ModelSnapshot {
                adapter: first.adapter.clone(),
                head: first.head.clone(),
            });
        }
        let pre_phi = first.adapter.params().as_slice().to_vec();
        let pre_psi = first.head.weights().as_slice().to_vec();
        let pre_shuffle = first.shuffle_stream.clone();
        let ckpt = Checkpoint::new(first, snaps);
        ckpt.validate().unwrap();
        let json = serde_json::to_string(&ckpt).unwrap();
        let restored: Checkpoint = serde_json::from_str(&json).unwrap();
        restored.validate().unwrap();
        // The roundtrip itself must be lossless before resuming.
        assert_eq!(
            restored.state.adapter.params().as_slice(),
            pre_phi.as_slice()
        );
        assert_eq!(restored.state.head.weights().as_slice(), pre_psi.as_slice());
        assert_eq!(restored.state.shuffle_stream, pre_shuffle);
        let mut resumed = restored.state;
        train_task_variant(&mut resumed, &stream.tasks[2], &budget, &spsa, &schedules).unwrap();

        assert_eq!(
            resumed.adapter.params().as_slice(),
            full.adapter.params().as_slice()
        );
        assert_eq!(
            resumed.head.weights().as_slice(),
            full.head.weights().as_slice()
        );
        assert_eq!(resumed.adapter_zo_step, full.adapter_zo_step);
        assert_eq!(resumed.shuffle_stream, full.shuffle_stream);
    }

    #[test]
    fn old_tasks_loss_evaluates_without_mutation() {
        let stream = small_stream(43);
        let mut state =
            ContinualState::new(FrozenBackbone::identity(6), 2, MethodVariant::zofc(), 9).unwrap();
        run_stream(
            &mut state,
            &stream,
            &small_budget(),
            &SpsaConfig::default(),
            &Schedules::default(),
        )
        .unwrap();
        let theta = stacked_params(&state.adapter, &state.head);
        let phi_before = state.adapter.params().as_slice().to_vec();
        let l = old_tasks_loss(
            &state.backbone,
            &state.adapter,
            &state.head,
            &stream,
            1,
            &theta,
        )
        .unwrap();
        assert!(l.is_finite() && l >= 0.0);
        assert_eq!(state.adapter.params().as_slice(), phi_before.as_slice());
        // Wrong dimension and empty range rejected.
        assert!(old_tasks_loss(
            &state.backbone,
            &state.adapter,
            &state.head,
            &stream,
            1,
            &theta[1..]
        )
        .is_err());
        assert!(old_tasks_loss(
            &state.backbone,
            &state.adapter,
            &state.head,
            &stream,
            0,
            &theta
        )
        .is_err());
    }
}
