//! Weighted nonlinear least squares: robust kernels, normal-equation
//! assembly, linear solvers, damping strategies, the stopping scheduler and
//! the Levenberg-Marquardt driver.

mod kernel;
mod lm;
mod normal;
mod scheduler;
mod solver;
mod sparse;
mod strategy;

pub use kernel::{apply_kernel, Kernel, KernelName};
pub use lm::{
    evaluate, lm_step, loss, Assembly, Evaluation, FnModel, IterationRecord, LevenbergMarquardt,
    LmConfig, LmReport, Model, OptState, StepStatus, Termination, DENSE_LIMIT, STEP_TOLERANCE,
};
pub use normal::{
    build_normal_equations, build_normal_equations_sparse, correct_fast_triggs, weighted_cost,
    JacobianBlock, NormalEquations, ResidualBlock, SystemMatrix, DIAGONAL_FLOOR,
};
pub use scheduler::{scheduler_step, Schedule, StopOnPlateau, StopReason};
pub use solver::{solve_cholesky, solve_pcg, LinearSolver};
pub use sparse::{CsrMatrix, TripletBuilder};
pub use strategy::{strategy_update, Decision, Strategy, LAMBDA_MAX, LAMBDA_MIN};
