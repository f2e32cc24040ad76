//! Levenberg-Marquardt over a [`ParamSet`] with robust kernels.
//!
//! Each iteration evaluates every item (in parallel), applies the FastTriggs
//! correction, assembles `A delta = b` with multiplicative `diag(H)` damping,
//! and asks the damping [`Strategy`] whether to keep the retracted candidate.
//! Rejected candidates are retried with the updated damping up to
//! [`LmConfig::max_retries`] times within the same iteration.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::kernel::Kernel;
use super::normal::{
    build_normal_equations, build_normal_equations_sparse, correct_fast_triggs, JacobianBlock,
    NormalEquations, ResidualBlock,
};
use super::scheduler::{Schedule, StopOnPlateau, StopReason};
use super::solver::LinearSolver;
use super::strategy::Strategy;
use crate::diff::{central_columns, ParamSet};
use crate::{Error, Result};

/// Tangent dimension above which [`Assembly::Auto`] switches to sparse.
pub const DENSE_LIMIT: usize = 1800;

/// A rejected step no larger than this (in tangent coordinates) means the
/// loss can no longer be resolved and counts as convergence.
pub const STEP_TOLERANCE: f64 = 1e-12;

/// A weighted least-squares objective `sum_i rho(R_i^T W_i R_i)`.
///
/// `residual` must be callable concurrently for different items.
pub trait Model: Sync {
    fn num_items(&self) -> usize;

    /// `R_i = f(theta, x_i) - y_i`.
    fn residual(&self, params: &ParamSet, item: usize) -> Result<DVector<f64>>;

    /// Information matrix `W_i`; `None` means identity.
    fn weight(&self, _item: usize) -> Option<DMatrix<f64>> {
        None
    }

    /// Tangent coordinates item `item` depends on. Numerical Jacobians only
    /// probe these; the default is every coordinate.
    fn support(&self, params: &ParamSet, _item: usize) -> Vec<Range<usize>> {
        vec![0..params.tangent_dim()]
    }

    /// Analytic Jacobian blocks, or `None` for central differences.
    fn jacobian(&self, _params: &ParamSet, _item: usize) -> Option<Result<Vec<JacobianBlock>>> {
        None
    }
}

/// A model built from a closure `f(params, item)`.
pub struct FnModel<F> {
    items: usize,
    f: F,
    weights: Option<Vec<DMatrix<f64>>>,
}

impl<F> FnModel<F>
where
    F: Fn(&ParamSet, usize) -> Result<DVector<f64>> + Sync,
{
    pub fn new(items: usize, f: F) -> Self {
        FnModel {
            items,
            f,
            weights: None,
        }
    }

    pub fn with_weights(mut self, weights: Vec<DMatrix<f64>>) -> Self {
        self.weights = Some(weights);
        self
    }
}

impl<F> Model for FnModel<F>
where
    F: Fn(&ParamSet, usize) -> Result<DVector<f64>> + Sync,
{
    fn num_items(&self) -> usize {
        self.items
    }

    fn residual(&self, params: &ParamSet, item: usize) -> Result<DVector<f64>> {
        (self.f)(params, item)
    }

    fn weight(&self, item: usize) -> Option<DMatrix<f64>> {
        self.weights.as_ref().map(|w| w[item].clone())
    }
}

/// Residual blocks and kernelised loss at one parameter value.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub blocks: Vec<ResidualBlock>,
    pub loss: f64,
}

fn checked_residual<M: Model + ?Sized>(model: &M, params: &ParamSet, item: usize) -> Result<DVector<f64>> {
    let r = model.residual(params, item)?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Residual { item });
    }
    Ok(r)
}

fn item_weight<M: Model + ?Sized>(model: &M, item: usize, dim: usize) -> Result<DMatrix<f64>> {
    match model.weight(item) {
        None => Ok(DMatrix::identity(dim, dim)),
        Some(w) if w.nrows() == dim && w.ncols() == dim => Ok(w),
        Some(w) => Err(Error::Length {
            expected: dim,
            found: w.nrows(),
        }),
    }
}

fn numeric_blocks<M: Model + ?Sized>(
    model: &M,
    scratch: &mut ParamSet,
    item: usize,
) -> Result<Vec<JacobianBlock>> {
    let ranges = model.support(scratch, item);
    let mut blocks = Vec::with_capacity(ranges.len());
    for range in ranges {
        let coords: Vec<usize> = range.clone().collect();
        if coords.is_empty() {
            continue;
        }
        let values = central_columns(scratch, &coords, |p| {
            model.residual(p, item).map(|r| r.as_slice().to_vec())
        })?;
        blocks.push(JacobianBlock {
            col: range.start,
            values,
        });
    }
    Ok(blocks)
}

/// Evaluates every item; with `with_jacobian` the blocks carry Jacobians
/// (analytic when the model provides them).
pub fn evaluate<M: Model + ?Sized>(
    model: &M,
    params: &ParamSet,
    kernel: &Kernel,
    with_jacobian: bool,
) -> Result<Evaluation> {
    let blocks = (0..model.num_items())
        .into_par_iter()
        .map_init(
            || None::<ParamSet>,
            |scratch, i| -> Result<ResidualBlock> {
                let r = checked_residual(model, params, i)?;
                let w = item_weight(model, i, r.len())?;
                let jacobian = if !with_jacobian {
                    Vec::new()
                } else if let Some(j) = model.jacobian(params, i) {
                    j?
                } else {
                    let scratch = scratch.get_or_insert_with(|| params.clone());
                    numeric_blocks(model, scratch, i)?
                };
                Ok(ResidualBlock::new(r, jacobian, w))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    for b in &blocks {
        loss += kernel.apply(b.cost)?.0;
    }
    Ok(Evaluation { blocks, loss })
}

/// Kernelised loss only.
pub fn loss<M: Model + ?Sized>(model: &M, params: &ParamSet, kernel: &Kernel) -> Result<f64> {
    let costs = (0..model.num_items())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let r = checked_residual(model, params, i)?;
            let w = item_weight(model, i, r.len())?;
            Ok(kernel.apply(r.dot(&(w * &r)))?.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(costs.iter().sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assembly {
    Dense,
    Sparse,
    /// Dense up to the given tangent dimension, sparse above.
    Auto(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmConfig {
    pub kernel: Kernel,
    pub strategy: Strategy,
    pub solver: LinearSolver,
    pub assembly: Assembly,
    pub max_retries: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            kernel: Kernel::Trivial,
            strategy: Strategy::trust_region(1e-3),
            solver: LinearSolver::Cholesky,
            assembly: Assembly::Auto(DENSE_LIMIT),
            max_retries: 8,
        }
    }
}

/// Mutable optimiser state; owned by one thread.
#[derive(Clone, Debug)]
pub struct OptState {
    pub params: ParamSet,
    pub lambda: f64,
    pub loss: f64,
    pub strategy: Strategy,
    pub iteration: usize,
}

impl OptState {
    pub fn new<M: Model + ?Sized>(model: &M, params: ParamSet, config: &LmConfig) -> Result<Self> {
        let loss = loss(model, &params, &config.kernel)?;
        Ok(OptState {
            params,
            lambda: config.strategy.initial_damping(),
            loss,
            strategy: config.strategy,
            iteration: 0,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepStatus {
    /// A candidate was accepted after `rejected` rejections.
    Accepted { rejected: usize },
    /// The step (or the predicted reduction) vanished: nothing left to gain.
    Converged,
    /// Every retry was rejected; the parameters are unchanged.
    Failed { rejected: usize },
}

fn assemble(blocks: &[ResidualBlock], n: usize, assembly: Assembly) -> Result<NormalEquations> {
    let sparse = match assembly {
        Assembly::Dense => false,
        Assembly::Sparse => true,
        Assembly::Auto(limit) => n > limit,
    };
    if sparse {
        build_normal_equations_sparse(blocks, n, 0.0)
    } else {
        build_normal_equations(blocks, n, 0.0)
    }
}

/// One outer iteration: linearise once, then try damped steps until the
/// strategy accepts one or the retry budget is spent.
pub fn lm_step<M: Model + ?Sized>(state: &mut OptState, model: &M, config: &LmConfig) -> Result<StepStatus> {
    let eval = evaluate(model, &state.params, &config.kernel, true)?;
    state.loss = eval.loss;
    let corrected = eval
        .blocks
        .iter()
        .map(|b| correct_fast_triggs(b, &config.kernel))
        .collect::<Result<Vec<_>>>()?;
    let base = assemble(&corrected, state.params.tangent_dim(), config.assembly)?;
    state.iteration += 1;
    if state.loss == 0.0 || base.b.iter().all(|v| *v == 0.0) {
        return Ok(StepStatus::Converged);
    }

    let mut rejected = 0;
    for _ in 0..=config.max_retries {
        let eqs = base.with_damping(state.lambda);
        let delta = config.solver.solve(&eqs)?;
        let predicted = eqs.predicted_reduction(&delta);
        if !(predicted > f64::EPSILON * state.loss) {
            return Ok(StepStatus::Converged);
        }
        let candidate = state.params.retract(delta.as_slice())?;
        let new_loss = match loss(model, &candidate, &config.kernel) {
            Ok(l) => l,
            Err(Error::Residual { .. }) => f64::NAN,
            Err(e) => return Err(e),
        };
        let gain = if new_loss.is_nan() {
            f64::NEG_INFINITY
        } else {
            (state.loss - new_loss) / predicted
        };
        let previous = state.lambda;
        let decision = state.strategy.update(previous, gain);
        state.lambda = decision.lambda;
        if decision.accept {
            state.params = candidate;
            state.loss = new_loss;
            return Ok(StepStatus::Accepted { rejected });
        }
        if delta.amax() <= STEP_TOLERANCE {
            // The loss is already at the rounding floor.
            return Ok(StepStatus::Converged);
        }
        rejected += 1;
        log::debug!("rejected step: gain {gain:e}, damping {previous:e} -> {:e}", state.lambda);
        if state.lambda == previous {
            // A constant damping would reproduce the same candidate.
            break;
        }
    }
    Ok(StepStatus::Failed { rejected })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    Schedule(StopReason),
    Converged,
    StepFailed,
    /// A linear solve or evaluation failed; the last accepted iterate is kept.
    Error(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    pub lambda: f64,
    pub accepted: bool,
    pub rejected: usize,
}

#[derive(Clone, Debug)]
pub struct LmReport {
    pub params: ParamSet,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub history: Vec<IterationRecord>,
    pub termination: Termination,
}

#[derive(Clone, Debug, Default)]
pub struct LevenbergMarquardt {
    pub config: LmConfig,
}

impl LevenbergMarquardt {
    pub fn new(config: LmConfig) -> Self {
        LevenbergMarquardt { config }
    }

    /// Runs until the scheduler stops, the step converges or fails.
    pub fn optimize<M: Model + ?Sized>(
        &self,
        model: &M,
        params: ParamSet,
        scheduler: &mut StopOnPlateau,
    ) -> Result<LmReport> {
        self.optimize_with(model, params, scheduler, |_, _| {})
    }

    /// As [`optimize`](Self::optimize), calling `observe` after every
    /// iteration with the record and current state.
    pub fn optimize_with<M, O>(
        &self,
        model: &M,
        params: ParamSet,
        scheduler: &mut StopOnPlateau,
        mut observe: O,
    ) -> Result<LmReport>
    where
        M: Model + ?Sized,
        O: FnMut(&IterationRecord, &OptState),
    {
        let mut state = OptState::new(model, params, &self.config)?;
        let initial_loss = state.loss;
        let mut history = Vec::new();
        let (mut accepted, mut rejected) = (0, 0);
        let termination = loop {
            if !scheduler.continual() {
                break Termination::Schedule(scheduler.stop_reason().unwrap_or(StopReason::Budget));
            }
            let status = match lm_step(&mut state, model, &self.config) {
                Ok(s) => s,
                Err(e) => break Termination::Error(e.to_string()),
            };
            let (ok, rej) = match status {
                StepStatus::Accepted { rejected } => (true, rejected),
                StepStatus::Converged => (false, 0),
                StepStatus::Failed { rejected } => (false, rejected),
            };
            rejected += rej;
            if ok {
                accepted += 1;
            }
            let record = IterationRecord {
                iteration: state.iteration,
                loss: state.loss,
                lambda: state.lambda,
                accepted: ok,
                rejected: rej,
            };
            history.push(record);
            observe(&record, &state);
            match status {
                StepStatus::Converged => break Termination::Converged,
                StepStatus::Failed { .. } => break Termination::StepFailed,
                StepStatus::Accepted { .. } => {
                    if let Schedule::Stop(reason) = scheduler.step(state.loss) {
                        break Termination::Schedule(reason);
                    }
                }
            }
        };
        Ok(LmReport {
            initial_loss,
            final_loss: state.loss,
            iterations: history.len(),
            accepted,
            rejected,
            history,
            termination,
            params: state.params,
        })
    }
}
