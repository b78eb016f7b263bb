//! Numerical kernels: adaptive explicit initial-value integration, banded
//! linear algebra and the collocation two-point boundary value solver.

pub mod banded;
pub mod collocation;
pub mod ivp;

pub use collocation::{
    equidistribute, estimate_residuals, remesh, solve_bvp, BvpError, BvpGuess, BvpOptions,
    BvpSolution, SmoothBvp,
};
pub use ivp::{integrate_ivp, IvpError, IvpProblem, IvpTrajectory};
