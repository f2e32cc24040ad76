#![allow(clippy::single_range_in_vec_init)]

mod common;

use std::ops::Range;

use common::grid_argmin;
use lieopt::diff::ParamSet;
use lieopt::optim::{
    build_normal_equations, correct_fast_triggs, lm_step, solve_cholesky, solve_pcg, FnModel, JacobianBlock, Kernel,
    LevenbergMarquardt, LinearSolver, LmConfig, Model, OptState, ResidualBlock, StepStatus, StopOnPlateau, Strategy,
};
use lieopt::Result;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = gaussian_matrix(rng, n, n);
    &m * m.transpose() + DMatrix::identity(n, n) * n as f64
}

/// `r_i = M_i x - y_i` with analytic Jacobian `M_i` and weight `W_i`.
struct LinearModel {
    rows: Vec<DMatrix<f64>>,
    targets: Vec<DVector<f64>>,
    weights: Vec<DMatrix<f64>>,
}

impl Model for LinearModel {
    fn num_items(&self) -> usize {
        self.rows.len()
    }

    fn residual(&self, params: &ParamSet, item: usize) -> Result<DVector<f64>> {
        let x = DVector::from_column_slice(params.vector_param(0).unwrap());
        Ok(&self.rows[item] * x - &self.targets[item])
    }

    fn weight(&self, item: usize) -> Option<DMatrix<f64>> {
        Some(self.weights[item].clone())
    }

    fn support(&self, params: &ParamSet, _item: usize) -> Vec<Range<usize>> {
        vec![0..params.tangent_dim()]
    }

    fn jacobian(&self, _params: &ParamSet, item: usize) -> Option<Result<Vec<JacobianBlock>>> {
        Some(Ok(vec![JacobianBlock {
            col: 0,
            values: self.rows[item].clone(),
        }]))
    }
}

#[test]
fn one_undamped_step_solves_weighted_linear_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 5;
    let model = LinearModel {
        rows: (0..8).map(|_| gaussian_matrix(&mut rng, 3, n)).collect(),
        targets: (0..8).map(|_| DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng))).collect(),
        weights: (0..8).map(|_| spd(&mut rng, 3)).collect(),
    };
    // oracle: (sum M^T W M) x = sum M^T W y
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    for ((m, y), w) in model.rows.iter().zip(&model.targets).zip(&model.weights) {
        h += m.transpose() * w * m;
        g += m.transpose() * w * y;
    }
    let oracle = h.cholesky().unwrap().solve(&g);

    let config = LmConfig {
        strategy: Strategy::adaptive(1e-12),
        ..LmConfig::default()
    };
    let mut state = OptState::new(&model, ParamSet::vector(vec![0.0; n]), &config).unwrap();
    let status = lm_step(&mut state, &model, &config).unwrap();
    assert!(matches!(status, StepStatus::Accepted { rejected: 0 }));
    let x = DVector::from_column_slice(state.params.vector_param(0).unwrap());
    assert!((&x - &oracle).amax() < 1e-10 * oracle.amax().max(1.0), "{x} vs {oracle}");
}

#[test]
fn fast_triggs_correction_scales_the_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 4;
    for kernel in [Kernel::Huber(0.5), Kernel::Cauchy(0.7), Kernel::Trivial] {
        let blocks: Vec<ResidualBlock> = (0..6)
            .map(|_| {
                let r = DVector::from_fn(3, |_, _| 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
                ResidualBlock::dense(r, gaussian_matrix(&mut rng, 3, n), spd(&mut rng, 3))
            })
            .collect();
        let corrected: Vec<ResidualBlock> = blocks.iter().map(|b| correct_fast_triggs(b, &kernel).unwrap()).collect();
        let eqs = build_normal_equations(&corrected, n, 0.0).unwrap();

        let mut h = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for blk in &blocks {
            let d = kernel.apply(blk.cost).unwrap().1;
            let j = blk.dense_jacobian(n);
            h += j.transpose() * &blk.weight * &j * d;
            b -= j.transpose() * &blk.weight * &blk.residual * d;
        }
        let scale = h.amax();
        assert!((eqs.a.to_dense() - &h).amax() < 1e-12 * scale, "{kernel:?}");
        assert!((&eqs.b - &b).amax() < 1e-12 * b.amax().max(1.0), "{kernel:?}");
    }
}

#[test]
fn cholesky_and_pcg_agree_on_random_spd_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in [1, 2, 10, 50, 200] {
        let j = gaussian_matrix(&mut rng, 2 * n, n);
        let r = DVector::from_fn(2 * n, |_, _| StandardNormal.sample(&mut rng));
        let eqs = build_normal_equations(&[ResidualBlock::dense(r, j, DMatrix::identity(2 * n, 2 * n))], n, 1e-3).unwrap();
        let x = solve_cholesky(&eqs).unwrap();
        let y = solve_pcg(&eqs, 1e-14, 10 * n).unwrap();
        let rel = (&x - &y).norm() / x.norm();
        assert!(rel < 1e-8, "n={n}: {rel:e}");
    }
}

/// Nine inliers near 0 and one gross outlier at 100.
fn contaminated_sample() -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut y: Vec<f64> = (0..9)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.01 * z
        })
        .collect();
    y.push(100.0);
    y
}

fn location_estimate(y: &[f64], kernel: Kernel, start: f64) -> f64 {
    let weight = DMatrix::from_element(1, 1, 1e4);
    let data = y.to_vec();
    let model = FnModel::new(y.len(), move |p: &ParamSet, i| {
        Ok(DVector::from_element(1, p.vector_param(0).unwrap()[0] - data[i]))
    })
    .with_weights(vec![weight; y.len()]);
    let lm = LevenbergMarquardt::new(LmConfig {
        kernel,
        strategy: Strategy::trust_region(1e-3),
        ..LmConfig::default()
    });
    let mut sched = StopOnPlateau::new(200, 5, 1e-12);
    let report = lm.optimize(&model, ParamSet::vector(vec![start]), &mut sched).unwrap();
    report.params.vector_param(0).unwrap()[0]
}

fn total_loss(y: &[f64], kernel: Kernel, theta: f64) -> f64 {
    y.iter().map(|v| kernel.apply(1e4 * (theta - v).powi(2)).unwrap().0).sum()
}

#[test]
fn huber_resists_a_gross_outlier() {
    let y = contaminated_sample();
    let mean = y.iter().sum::<f64>() / y.len() as f64;

    let plain = location_estimate(&y, Kernel::Trivial, 50.0);
    assert!((plain - mean).abs() < 1e-9);
    assert!((plain - 10.0).abs() < 0.5 && plain.abs() > 5.0, "{plain}");

    let robust = location_estimate(&y, Kernel::Huber(1.0), 50.0);
    assert!(robust.abs() < 0.1, "{robust}");

    // brute-force grid search over the kernel losses confirms both minima
    let grid_plain = grid_argmin(|t| total_loss(&y, Kernel::Trivial, t), -20.0, 120.0, 14_001);
    let grid_robust = grid_argmin(|t| total_loss(&y, Kernel::Huber(1.0), t), -20.0, 120.0, 14_001);
    assert!((grid_plain - plain).abs() < 1e-3, "{grid_plain} vs {plain}");
    assert!((grid_robust - robust).abs() < 1e-3, "{grid_robust} vs {robust}");
}

#[test]
fn accepted_losses_never_increase() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // exponential fitting: y = a exp(b t) + c from a poor start
    let t: Vec<f64> = (0..30).map(|k| k as f64 * 0.1).collect();
    let y: Vec<f64> = t.iter().map(|t| 2.0 * (-1.3 * t).exp() + 0.5 + 0.01 * rng.random::<f64>()).collect();
    let model = FnModel::new(t.len(), move |p: &ParamSet, i| {
        let v = p.vector_param(0).unwrap();
        Ok(DVector::from_element(1, v[0] * (v[1] * t[i]).exp() + v[2] - y[i]))
    });
    for strategy in [Strategy::adaptive(1e-2), Strategy::trust_region(1e-2)] {
        let lm = LevenbergMarquardt::new(LmConfig {
            strategy,
            ..LmConfig::default()
        });
        let mut losses = Vec::new();
        let mut sched = StopOnPlateau::new(200, 5, 1e-14);
        let report = lm
            .optimize_with(&model, ParamSet::vector(vec![1.0, -0.3, 0.0]), &mut sched, |rec, _| {
                if rec.accepted {
                    losses.push(rec.loss);
                }
            })
            .unwrap();
        assert!(report.final_loss < 1e-2 * report.initial_loss, "{strategy:?}: {:?} {:?}", report.termination, report.history);
        assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{strategy:?}: {losses:?}");
        let v = report.params.vector_param(0).unwrap();
        assert!((v[1] + 1.3).abs() < 0.05, "{v:?}");
    }
}

#[test]
fn pcg_solver_drives_the_same_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 6;
    let model = LinearModel {
        rows: (0..10).map(|_| gaussian_matrix(&mut rng, 2, n)).collect(),
        targets: (0..10).map(|_| DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng))).collect(),
        weights: (0..10).map(|_| DMatrix::identity(2, 2)).collect(),
    };
    let run = |solver| {
        let lm = LevenbergMarquardt::new(LmConfig {
            solver,
            ..LmConfig::default()
        });
        let mut sched = StopOnPlateau::new(50, 3, 1e-14);
        lm.optimize(&model, ParamSet::vector(vec![0.0; n]), &mut sched).unwrap()
    };
    let a = run(LinearSolver::Cholesky);
    let b = run(LinearSolver::Pcg { tol: 1e-14, max_iter: 100 });
    let xa = a.params.vector_param(0).unwrap();
    let xb = b.params.vector_param(0).unwrap();
    assert!(xa.iter().zip(xb).all(|(p, q)| (p - q).abs() < 1e-8));
}
