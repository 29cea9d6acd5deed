//! Independent brute-force and closed-form references: exact smoothed-loss
//! expectations, the two-well basin-selection testbed, the analytical FLOP /
//! activation-memory model, and the two-time-scale tracking check.

mod dynamics;
mod flops;
mod landscape;
mod smoothing;

pub use dynamics::{hybrid_dynamics_check, HybridDynamicsReport, HybridDynamicsSpec};
pub use flops::{
    activation_memory_proxy, flops_estimate, ActivationDims, CostReport, FlopsModel, Regime,
};
pub use landscape::{
    basin_comparison, binomial_tail_one_sided, flat_minima_trial, BasinComparison, BasinLabel,
    InitBox, TrialOptimizer, TwoWellLandscape,
};
pub use smoothing::{smoothed_loss, SmoothedLossEstimate, SmoothingMode, ENUMERATION_DIM_LIMIT};
