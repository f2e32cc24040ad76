//! Batched transform inversion by second-order optimisation.
//!
//! Given `B` random SE3 inputs `X_k`, find parameters `theta_k` with
//! `Log(theta_k X_k) = 0`, i.e. `theta_k = X_k^-1`, using Levenberg-Marquardt
//! with a constant damping of `1e-4` and a plateau scheduler.

use std::ops::Range;
use std::time::Instant;

use nalgebra::DVector;

use crate::diff::ParamSet;
use crate::lie::element::Element;
use crate::lie::{Family, Kind, LieBatch};
use crate::optim::{IterationRecord, Kernel, LevenbergMarquardt, LinearSolver, LmConfig, Model, StopOnPlateau, Strategy, Termination};
use crate::optim::Assembly;
use crate::Result;

const SE3: Kind = Kind::Group(Family::SE3);

/// `r_k = Log(theta_k X_k)` over a batch of SE3 inputs.
pub struct InverseModel {
    inputs: LieBatch<f64>,
}

impl InverseModel {
    pub fn new(inputs: LieBatch<f64>) -> Self {
        InverseModel { inputs }
    }

    pub fn inputs(&self) -> &LieBatch<f64> {
        &self.inputs
    }
}

impl Model for InverseModel {
    fn num_items(&self) -> usize {
        self.inputs.len()
    }

    fn residual(&self, params: &ParamSet, item: usize) -> Result<DVector<f64>> {
        let theta = params.group_param(0).expect("parameters are one SE3 batch");
        let t = Element::load(Family::SE3, theta.item(item));
        let x = Element::load(Family::SE3, self.inputs.item(item));
        let r = t.compose(&x).log(Family::SE3).expect("the SE3 logarithm is defined everywhere");
        let mut out = [0.0; 6];
        r.store(Family::SE3, &mut out);
        Ok(DVector::from_column_slice(&out))
    }

    fn support(&self, _params: &ParamSet, item: usize) -> Vec<Range<usize>> {
        vec![6 * item..6 * item + 6]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DemoInit {
    /// Independent random poses.
    Random,
    /// The exact inverses of the inputs.
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoConfig {
    pub batch: usize,
    pub seed: u64,
    pub init: DemoInit,
    pub damping: f64,
    pub steps: usize,
    pub patience: usize,
    pub decreasing: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            batch: 10,
            seed: 0,
            init: DemoInit::Random,
            damping: 1e-4,
            steps: 10,
            patience: 3,
            decreasing: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DemoReport {
    pub initial_error: f64,
    /// Summed squared residual at the final parameters.
    pub final_error: f64,
    pub history: Vec<IterationRecord>,
    pub termination: Termination,
    pub wall_time_s: f64,
}

pub fn run_invdemo(cfg: &DemoConfig) -> Result<DemoReport> {
    let start = Instant::now();
    let inputs = LieBatch::random_group(SE3, &[cfg.batch], 1.0, cfg.seed)?;
    let theta = match cfg.init {
        DemoInit::Random => LieBatch::random_group(SE3, &[cfg.batch], 1.0, cfg.seed.wrapping_add(1))?,
        DemoInit::Exact => inputs.inverse()?,
    };
    let model = InverseModel::new(inputs);
    let lm = LevenbergMarquardt::new(LmConfig {
        kernel: Kernel::Trivial,
        strategy: Strategy::constant(cfg.damping),
        solver: LinearSolver::Cholesky,
        assembly: Assembly::Auto(crate::optim::DENSE_LIMIT),
        max_retries: 8,
    });
    let mut scheduler = StopOnPlateau::new(cfg.steps, cfg.patience, cfg.decreasing);
    let report = lm.optimize(&model, ParamSet::group(theta)?, &mut scheduler)?;
    Ok(DemoReport {
        initial_error: report.initial_loss,
        final_error: report.final_loss,
        history: report.history,
        termination: report.termination,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_start_has_zero_loss() {
        let r = run_invdemo(&DemoConfig {
            batch: 1,
            init: DemoInit::Exact,
            ..DemoConfig::default()
        })
        .unwrap();
        assert!(r.initial_error < 1e-28, "{}", r.initial_error);
        assert_eq!(r.termination, Termination::Converged);
    }

    #[test]
    fn random_batch_of_ten_converges() {
        let r = run_invdemo(&DemoConfig::default()).unwrap();
        assert!(r.history.len() <= 10);
        assert!(r.final_error <= 1e-3, "{}", r.final_error);
    }
}
