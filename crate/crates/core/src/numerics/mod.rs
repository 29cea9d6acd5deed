//! Dense linear algebra, deterministic named random streams, and
//! finite-difference utilities. Everything downstream builds on this module.

mod finite_diff;
mod param;
mod rng;
mod vector;

pub use finite_diff::{central_gradient, central_second_difference};
pub use param::{ParamVector, ParamView};
pub use rng::{gaussian, rademacher, RngStream};
pub use vector::{
    dot, l2_clip, norm, solve, sym_eigenvalues, sym_lambda_max, validate_finite, Matrix, Vector,
};
