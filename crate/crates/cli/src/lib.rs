//! Operational surface for the ZO/FO hybrid continual-learning library:
//! experiment configuration, binary feature-dataset ingestion, run
//! orchestration, and versioned JSON reports.

// Validation deliberately writes `!(x > 0.0)` so NaN fails the check; the
// suggested `x <= 0.0` would let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod features;
pub mod report;
