use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::normal::{NormalEquations, SystemMatrix};
use crate::{Error, Result};

/// Relative jitter `1e-12 * trace(A) / n` added on the first Cholesky retry.
const JITTER_BASE: f64 = 1e-12;
const JITTER_ATTEMPTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinearSolver {
    Cholesky,
    /// Jacobi-preconditioned conjugate gradient.
    Pcg { tol: f64, max_iter: usize },
}

impl LinearSolver {
    pub fn solve(&self, eqs: &NormalEquations) -> Result<DVector<f64>> {
        match *self {
            LinearSolver::Cholesky => solve_cholesky(eqs),
            LinearSolver::Pcg { tol, max_iter } => solve_pcg(eqs, tol, max_iter),
        }
    }

    pub fn from_name(name: &str, tol: f64, max_iter: usize) -> Result<Self, String> {
        match name {
            "cholesky" => Ok(LinearSolver::Cholesky),
            "pcg" if tol > 0.0 => Ok(LinearSolver::Pcg { tol, max_iter }),
            "pcg" => Err(format!("pcg tolerance must be positive, got {tol}")),
            other => Err(format!("unknown solver '{other}' (cholesky, pcg)")),
        }
    }
}

impl fmt::Display for LinearSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinearSolver::Cholesky => write!(f, "cholesky"),
            LinearSolver::Pcg { tol, .. } => write!(f, "pcg({tol:e})"),
        }
    }
}

impl FromStr for LinearSolver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s, 1e-10, 1000)
    }
}

/// Dense Cholesky with jitter escalation on failure. Sparse systems are
/// densified first.
pub fn solve_cholesky(eqs: &NormalEquations) -> Result<DVector<f64>> {
    let a = match &eqs.a {
        SystemMatrix::Dense(m) => m.clone(),
        SystemMatrix::Sparse(m) => m.to_dense(),
    };
    let n = a.nrows();
    if eqs.b.len() != n {
        return Err(Error::Length {
            expected: n,
            found: eqs.b.len(),
        });
    }
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c.solve(&eqs.b));
    }
    let mut jitter = JITTER_BASE * a.trace().abs() / n as f64;
    for _ in 0..JITTER_ATTEMPTS {
        let damped = &a + DMatrix::identity(n, n) * jitter;
        if let Some(c) = Cholesky::new(damped) {
            log::debug!("cholesky succeeded with jitter {jitter:e}");
            return Ok(c.solve(&eqs.b));
        }
        jitter *= 10.0;
    }
    Err(Error::Solver(format!(
        "matrix is not positive definite after {JITTER_ATTEMPTS} jitter attempts"
    )))
}

/// Jacobi-preconditioned conjugate gradient; stops when
/// `|A x - b| <= tol * |b|`.
pub fn solve_pcg(eqs: &NormalEquations, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let n = eqs.a.dim();
    if eqs.b.len() != n {
        return Err(Error::Length {
            expected: n,
            found: eqs.b.len(),
        });
    }
    let b_norm = eqs.b.norm();
    let mut x = DVector::zeros(n);
    if b_norm == 0.0 {
        return Ok(x);
    }
    let inv_diag = eqs
        .a
        .diagonal()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 });
    let target = tol * b_norm;
    let mut r = eqs.b.clone();
    let mut z = r.component_mul(&inv_diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..max_iter {
        let ap = eqs.a.mul_vec(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::Solver(format!("non-positive curvature {pap:e} in pcg")));
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= target {
            // recursive residual drifts; confirm against the true one
            let true_res = (&eqs.b - eqs.a.mul_vec(&x)).norm();
            if true_res <= target {
                return Ok(x);
            }
            r = &eqs.b - eqs.a.mul_vec(&x);
        }
        z = r.component_mul(&inv_diag);
        let rz_next = r.dot(&z);
        p = &z + &p * (rz_next / rz);
        rz = rz_next;
    }
    let residual = (&eqs.b - eqs.a.mul_vec(&x)).norm();
    if residual <= target {
        return Ok(x);
    }
    Err(Error::NoConvergence {
        residual,
        iterations: max_iter,
    })
}
