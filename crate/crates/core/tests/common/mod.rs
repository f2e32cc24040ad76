//! Shared oracles for the integration tests and the acceptance harness.
#![allow(dead_code)]

use lieopt::lie::{Family, Kind, LieBatch};
use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Matrix exponential by scaling and squaring of a Taylor series.
///
/// Independent of the closed forms under test: the argument is scaled until
/// its norm is below 1/2, the series is summed to 30 terms (well past f64
/// precision at that norm), and the result is squared back.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = a.norm();
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = a * scale;
    let n = a.nrows();
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=30 {
        term = &term * &x / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Rotation vector with a uniformly random direction and norm in `[0, max_angle)`.
pub fn random_rotation_vector<R: Rng>(rng: &mut R, max_angle: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n * rng.random_range(0.0..max_angle);
        }
    }
}

/// `count` tangents of `family` with rotation norm below `max_angle`,
/// translations in `[-2, 2]^3` and log-scales in `[-1, 1]`.
pub fn random_tangents(family: Family, count: usize, max_angle: f64, seed: u64) -> LieBatch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dof = family.dof();
    let mut data = Vec::with_capacity(count * dof);
    for _ in 0..count {
        let phi = random_rotation_vector(&mut rng, max_angle);
        let rho = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        let sigma: f64 = rng.random_range(-1.0..1.0);
        match family {
            Family::SO3 => data.extend_from_slice(phi.as_slice()),
            Family::SE3 => {
                data.extend_from_slice(rho.as_slice());
                data.extend_from_slice(phi.as_slice());
            }
            Family::Sim3 => {
                data.extend_from_slice(rho.as_slice());
                data.extend_from_slice(phi.as_slice());
                data.push(sigma);
            }
            Family::RxSO3 => {
                data.extend_from_slice(phi.as_slice());
                data.push(sigma);
            }
        }
    }
    LieBatch::from_vec(Kind::Algebra(family), vec![count], data).expect("sizes match")
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Brute-force minimiser of a scalar function on `[lo, hi]` with `n` samples,
/// refined by a second grid around the best sample.
pub fn grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let search = |lo: f64, hi: f64| -> f64 {
        let step = (hi - lo) / (n - 1) as f64;
        (0..n)
            .map(|i| lo + step * i as f64)
            .map(|x| (x, f(x)))
            .fold((lo, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
            .0
    };
    let coarse = search(lo, hi);
    let step = (hi - lo) / (n - 1) as f64;
    search(coarse - step, coarse + step)
}
