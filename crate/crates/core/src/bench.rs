//! Operator micro-benchmarks on rotations:
//!
//! * `f1(x) = Log(Exp(x))`
//! * `f2(x, y) = Log(Exp(x) Exp(y))`
//! * `f3(x, p) = Exp(x) p`
//!
//! Each operator is timed in two modes: the batched forward pass and the
//! batched central-difference Jacobian with respect to all of its vector
//! inputs. Analytic Jacobians are provided for validation.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diff::{jacobian_batched_items, relative_error, JacobianMatrix, Param, ParamSet, Residual, ANALYTIC_TOLERANCE};
use crate::lie::so3::{exp_quat, hat, left_jacobian, log_quat, quat_mul, quat_normalize, quat_rotate, quat_to_matrix, right_jacobian, v_inverse};
use crate::lie::{Family, Kind, LieBatch, PointBatch, Precision, Real};
use crate::{Error, Result};

const SO3_ALG: Kind = Kind::Algebra(Family::SO3);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Op {
    F1,
    F2,
    F3,
}

impl Op {
    pub const ALL: [Op; 3] = [Op::F1, Op::F2, Op::F3];

    /// Number of 3-vector inputs per item.
    pub fn inputs(self) -> usize {
        match self {
            Op::F1 => 1,
            Op::F2 | Op::F3 => 2,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::F1 => "f1",
            Op::F2 => "f2",
            Op::F3 => "f3",
        })
    }
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f1" => Ok(Op::F1),
            "f2" => Ok(Op::F2),
            "f3" => Ok(Op::F3),
            other => Err(format!("unknown operator '{other}' (f1, f2, f3)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    Forward,
    Jacobian,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Forward => "forward",
            Mode::Jacobian => "jacobian",
        })
    }
}

pub fn f1<T: Real>(x: &LieBatch<T>) -> Result<LieBatch<T>> {
    x.exp()?.log()
}

pub fn f2<T: Real>(x: &LieBatch<T>, y: &LieBatch<T>) -> Result<LieBatch<T>> {
    x.exp()?.compose(&y.exp()?)?.log()
}

pub fn f3<T: Real>(x: &LieBatch<T>, p: &PointBatch<T>) -> Result<PointBatch<T>> {
    x.exp()?.act(p)
}

/// `d f1 / d x = I` on the open ball of radius pi.
pub fn f1_jacobian(_x: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::identity()
}

/// `(d f2 / d x, d f2 / d y) = (Jl^-1(z) Jl(x), Jr^-1(z) Jr(y))` with
/// `z = f2(x, y)`.
pub fn f2_jacobians(x: &Vector3<f64>, y: &Vector3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let z = log_quat(&quat_normalize(&quat_mul(&exp_quat(x), &exp_quat(y))));
    let dx = v_inverse(&z) * left_jacobian(x);
    let dy = v_inverse(&-z) * right_jacobian(y);
    (dx, dy)
}

/// `(d f3 / d x, d f3 / d p) = (-hat(R p) Jl(x), R)` with `R = Exp(x)`.
pub fn f3_jacobians(x: &Vector3<f64>, p: &Vector3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let q = exp_quat(x);
    let rp = quat_rotate(&q, p);
    (-hat(&rp) * left_jacobian(x), quat_to_matrix(&q))
}

fn vec3(v: &[f64], k: usize) -> Vector3<f64> {
    Vector3::new(v[3 * k], v[3 * k + 1], v[3 * k + 2])
}

/// Item `k` of `op` evaluated on a parameter set laid out as
/// [`bench_params`] builds it.
pub fn eval_item(op: Op, k: usize, params: &ParamSet) -> Result<Vec<f64>> {
    let x = vec3(params.vector_param(0).ok_or_else(|| Error::Shape(vec![], vec![]))?, k);
    let out = match op {
        Op::F1 => log_quat(&exp_quat(&x)),
        Op::F2 => {
            let y = vec3(params.vector_param(1).ok_or_else(|| Error::Shape(vec![], vec![]))?, k);
            log_quat(&quat_normalize(&quat_mul(&exp_quat(&x), &exp_quat(&y))))
        }
        Op::F3 => {
            let p = vec3(params.vector_param(1).ok_or_else(|| Error::Shape(vec![], vec![]))?, k);
            quat_rotate(&exp_quat(&x), &p)
        }
    };
    Ok(out.as_slice().to_vec())
}

/// Analytic Jacobian block of item `k` (3 rows, 3 columns per input).
pub fn analytic_item(op: Op, k: usize, params: &ParamSet) -> DMatrix<f64> {
    let x = vec3(params.vector_param(0).expect("first parameter is a vector"), k);
    let blocks = match op {
        Op::F1 => vec![f1_jacobian(&x)],
        Op::F2 | Op::F3 => {
            let y = vec3(params.vector_param(1).expect("second parameter is a vector"), k);
            let (a, b) = if op == Op::F2 { f2_jacobians(&x, &y) } else { f3_jacobians(&x, &y) };
            vec![a, b]
        }
    };
    let mut out = DMatrix::zeros(3, 3 * blocks.len());
    for (i, b) in blocks.iter().enumerate() {
        out.view_mut((0, 3 * i), (3, 3)).copy_from(b);
    }
    out
}

/// A single-item operator as a [`Residual`] with its analytic Jacobian.
#[derive(Clone, Copy, Debug)]
pub struct OpResidual(pub Op);

impl Residual for OpResidual {
    fn eval(&self, params: &ParamSet) -> Result<Vec<f64>> {
        eval_item(self.0, 0, params)
    }

    fn analytic_jacobian(&self, params: &ParamSet) -> Option<Result<DMatrix<f64>>> {
        Some(Ok(analytic_item(self.0, 0, params)))
    }
}

/// Uniform sample from the ball of radius `radius` in R^3.
pub fn sample_ball<R: Rng>(rng: &mut R, radius: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

/// Random inputs for `batch` items of `op`: rotation vectors with norm below
/// `pi - 0.1` and standard-normal points.
pub fn bench_params(op: Op, batch: usize, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = std::f64::consts::PI - 0.1;
    let mut x = Vec::with_capacity(3 * batch);
    for _ in 0..batch {
        x.extend_from_slice(sample_ball(&mut rng, limit).as_slice());
    }
    let mut params = vec![Param::Vector(x)];
    match op {
        Op::F1 => {}
        Op::F2 => {
            let mut y = Vec::with_capacity(3 * batch);
            for _ in 0..batch {
                y.extend_from_slice(sample_ball(&mut rng, limit).as_slice());
            }
            params.push(Param::Vector(y));
        }
        Op::F3 => {
            let p: Vec<f64> = (0..3 * batch).map(|_| StandardNormal.sample(&mut rng)).collect();
            params.push(Param::Vector(p));
        }
    }
    ParamSet::new(params).expect("vector parameters are always valid")
}

/// Batched central-difference Jacobian of `op`.
pub fn numeric_jacobian(op: Op, params: &ParamSet, batch: usize) -> Result<JacobianMatrix> {
    jacobian_batched_items(&|k, p: &ParamSet| eval_item(op, k, p), params, batch, false)
}

/// Largest relative error between the batched numeric blocks and the
/// analytic Jacobians over all items.
pub fn jacobian_self_check(op: Op, params: &ParamSet, batch: usize) -> Result<f64> {
    let jac = numeric_jacobian(op, params, batch)?;
    let blocks = jac.blocks().expect("batched Jacobians are block diagonal");
    Ok(blocks
        .iter()
        .enumerate()
        .map(|(k, b)| relative_error(b, &analytic_item(op, k, params)))
        .fold(0.0, f64::max))
}

/// Forward inputs in the requested precision.
struct ForwardInputs<T: Real> {
    x: LieBatch<T>,
    y: Option<LieBatch<T>>,
    p: Option<PointBatch<T>>,
}

fn forward_inputs<T: Real>(op: Op, params: &ParamSet, batch: usize) -> Result<ForwardInputs<T>> {
    let cast = |v: &[f64]| v.iter().map(|a| T::lit(*a)).collect::<Vec<T>>();
    let x = LieBatch::from_vec(SO3_ALG, vec![batch], cast(params.vector_param(0).unwrap_or(&[])))?;
    let second = params.params().get(1).map(|_| cast(params.vector_param(1).unwrap_or(&[])));
    Ok(match op {
        Op::F1 => ForwardInputs { x, y: None, p: None },
        Op::F2 => ForwardInputs {
            x,
            y: Some(LieBatch::from_vec(SO3_ALG, vec![batch], second.unwrap_or_default())?),
            p: None,
        },
        Op::F3 => ForwardInputs {
            x,
            y: None,
            p: Some(PointBatch::from_vec(vec![batch], second.unwrap_or_default())?),
        },
    })
}

/// Runs `op` forward once; returns a checksum to keep the work observable.
fn forward_once<T: Real>(op: Op, inputs: &ForwardInputs<T>) -> Result<f64> {
    let first = match op {
        Op::F1 => f1(&inputs.x)?.as_slice()[0],
        Op::F2 => f2(&inputs.x, inputs.y.as_ref().expect("f2 has two inputs"))?.as_slice()[0],
        Op::F3 => f3(&inputs.x, inputs.p.as_ref().expect("f3 has a point input"))?.as_slice()[0],
    };
    Ok(first.to_f64())
}

fn forward_self_check<T: Real>(op: Op, inputs: &ForwardInputs<T>) -> Result<bool> {
    let tol = match T::PRECISION {
        Precision::F64 => 1e-9,
        Precision::F32 => 1e-4,
    };
    Ok(match op {
        Op::F1 => {
            let out = f1(&inputs.x)?;
            out.as_slice()
                .iter()
                .zip(inputs.x.as_slice())
                .all(|(a, b)| (a.to_f64() - b.to_f64()).abs() < tol)
        }
        Op::F2 => {
            // Exp(f2(x, y)) must equal Exp(x) Exp(y) as rotations.
            let y = inputs.y.as_ref().expect("f2 has two inputs");
            let z = f2(&inputs.x, y)?.exp()?;
            let xy = inputs.x.exp()?.compose(&y.exp()?)?;
            z.to_matrix()?
                .iter()
                .zip(xy.to_matrix()?)
                .all(|(a, b)| (a - b).iter().all(|v| v.to_f64().abs() < tol))
        }
        Op::F3 => {
            // rotations preserve lengths
            let p = inputs.p.as_ref().expect("f3 has a point input");
            let out = f3(&inputs.x, p)?;
            (0..p.len()).all(|k| (out.point(k).norm() - p.point(k).norm()).to_f64().abs() < tol * 10.0)
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub batches: Vec<usize>,
    pub precision: Precision,
    pub ops: Vec<Op>,
    pub warmup: usize,
    pub repeats: usize,
    /// Each timed run repeats the operation until at least this many items
    /// have been processed, so small batches are not dominated by timer
    /// resolution.
    pub min_items: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            batches: vec![1, 100, 10_000],
            precision: Precision::F64,
            ops: Op::ALL.to_vec(),
            warmup: 3,
            repeats: 7,
            min_items: 20_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub op: Op,
    pub mode: Mode,
    pub batch: usize,
    /// Jacobians are always computed in f64.
    pub precision: Precision,
    /// Items processed per second (median over the timed runs).
    pub ops_per_sec: f64,
    pub self_check: bool,
}

pub const CSV_HEADER: [&str; 6] = ["op", "mode", "batch", "precision", "ops_per_sec", "self_check"];

impl BenchRow {
    pub fn record(&self) -> [String; 6] {
        [
            self.op.to_string(),
            self.mode.to_string(),
            self.batch.to_string(),
            self.precision.to_string(),
            format!("{:.6e}", self.ops_per_sec),
            if self.self_check { "pass" } else { "fail" }.to_string(),
        ]
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median throughput of `run`, which processes `batch` items per call.
fn time_throughput<F>(cfg: &BenchConfig, batch: usize, mut run: F) -> Result<f64>
where
    F: FnMut() -> Result<f64>,
{
    let reps = cfg.min_items.div_ceil(batch.max(1)).max(1);
    let mut sink = 0.0;
    for _ in 0..cfg.warmup {
        for _ in 0..reps {
            sink += run()?;
        }
    }
    let mut samples = Vec::with_capacity(cfg.repeats);
    for _ in 0..cfg.repeats.max(1) {
        let start = Instant::now();
        for _ in 0..reps {
            sink += run()?;
        }
        let secs = start.elapsed().as_secs_f64().max(1e-12);
        samples.push((batch * reps) as f64 / secs);
    }
    std::hint::black_box(sink);
    Ok(median(samples))
}

fn forward_row<T: Real>(cfg: &BenchConfig, op: Op, batch: usize, params: &ParamSet) -> Result<BenchRow> {
    let inputs = forward_inputs::<T>(op, params, batch)?;
    let self_check = forward_self_check(op, &inputs)?;
    let ops_per_sec = time_throughput(cfg, batch, || forward_once(op, &inputs))?;
    Ok(BenchRow {
        op,
        mode: Mode::Forward,
        batch,
        precision: T::PRECISION,
        ops_per_sec,
        self_check,
    })
}

/// Times one operator/mode at one batch size.
pub fn bench_one(cfg: &BenchConfig, op: Op, mode: Mode, batch: usize) -> Result<BenchRow> {
    if batch == 0 {
        return Err(Error::Domain("batch sizes must be positive".into()));
    }
    let params = bench_params(op, batch, cfg.seed);
    match mode {
        Mode::Forward => match cfg.precision {
            Precision::F64 => forward_row::<f64>(cfg, op, batch, &params),
            Precision::F32 => forward_row::<f32>(cfg, op, batch, &params),
        },
        Mode::Jacobian => {
            let self_check = jacobian_self_check(op, &params, batch)? < ANALYTIC_TOLERANCE;
            let ops_per_sec = time_throughput(cfg, batch, || {
                let j = numeric_jacobian(op, &params, batch)?;
                Ok(j.blocks().map_or(0.0, |b| b[0][(0, 0)]))
            })?;
            Ok(BenchRow {
                op,
                mode,
                batch,
                precision: Precision::F64,
                ops_per_sec,
                self_check,
            })
        }
    }
}

/// All rows: for each batch size, each operator in forward then Jacobian
/// mode.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &batch in &cfg.batches {
        for &op in &cfg.ops {
            for mode in [Mode::Forward, Mode::Jacobian] {
                let row = bench_one(cfg, op, mode, batch)?;
                log::info!("{op} {mode} batch {batch}: {:.3e} items/s", row.ops_per_sec);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::check_analytic;

    fn quick() -> BenchConfig {
        BenchConfig {
            batches: vec![1],
            warmup: 1,
            repeats: 1,
            min_items: 1,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn single_batch_gives_six_rows() {
        let rows = run_bench(&quick()).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.self_check && r.ops_per_sec > 0.0));
    }

    #[test]
    fn f32_forward_self_checks() {
        let cfg = BenchConfig {
            precision: Precision::F32,
            batches: vec![50],
            ..quick()
        };
        for op in Op::ALL {
            assert!(bench_one(&cfg, op, Mode::Forward, 50).unwrap().self_check);
        }
    }

    #[test]
    fn analytic_matches_numeric() {
        for op in Op::ALL {
            for seed in 0..20 {
                let p = bench_params(op, 1, seed);
                check_analytic(&OpResidual(op), &p, ANALYTIC_TOLERANCE).unwrap();
            }
        }
    }

    #[test]
    fn f1_jacobian_at_example_point() {
        let p = ParamSet::vector(vec![0.1, 0.2, 0.3]);
        let j = crate::diff::numeric_jacobian(&OpResidual(Op::F1), &p).unwrap();
        assert!((j - DMatrix::identity(3, 3)).abs().max() < 1e-6);
    }
}
