//! Class-incremental streams, the hybrid (FO head / ZO adapter) trainer and
//! its method-variant grid, evaluation-matrix bookkeeping, and checkpoints.

mod eval;
mod stream;
mod trainer;

pub use eval::EvalMatrix;
pub use stream::{make_synthetic_stream, Dataset, SyntheticStreamSpec, Task, TaskStream};
pub use trainer::{
    accuracy, backbone_features, evaluate_stream, old_tasks_loss, run_stream, stacked_params,
    train_task_variant, train_task_zofc, Checkpoint, ComponentOpt, ContinualState, MethodVariant,
    ModelSnapshot, ScheduleKind, ScheduleSpec, Schedules, StreamRunResult, TaskTrainReport,
    TrainBudget, CHECKPOINT_VERSION,
};
