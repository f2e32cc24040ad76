use nalgebra::{DMatrix, DVector};

use super::kernel::Kernel;
use super::sparse::{CsrMatrix, TripletBuilder};
use crate::{Error, Result};

/// Floor applied to zero Hessian diagonal entries before damping.
pub const DIAGONAL_FLOOR: f64 = 1e-12;

/// Columns `col..col + values.ncols()` of an item's Jacobian.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianBlock {
    pub col: usize,
    pub values: DMatrix<f64>,
}

/// One item of the weighted least-squares objective.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub residual: DVector<f64>,
    /// Non-zero column blocks of the `d x n` Jacobian.
    pub jacobian: Vec<JacobianBlock>,
    pub weight: DMatrix<f64>,
    /// `r^T W r`.
    pub cost: f64,
}

impl ResidualBlock {
    pub fn new(residual: DVector<f64>, jacobian: Vec<JacobianBlock>, weight: DMatrix<f64>) -> Self {
        let cost = if weight.shape() == (residual.len(), residual.len()) {
            weighted_cost(&residual, &weight)
        } else {
            f64::NAN
        };
        ResidualBlock {
            residual,
            jacobian,
            weight,
            cost,
        }
    }

    /// Block with a full dense Jacobian.
    pub fn dense(residual: DVector<f64>, jacobian: DMatrix<f64>, weight: DMatrix<f64>) -> Self {
        Self::new(residual, vec![JacobianBlock { col: 0, values: jacobian }], weight)
    }

    pub fn dense_jacobian(&self, n: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.residual.len(), n);
        for b in &self.jacobian {
            let mut view = out.view_mut((0, b.col), (b.values.nrows(), b.values.ncols()));
            view += &b.values;
        }
        out
    }
}

pub fn weighted_cost(r: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    r.dot(&(w * r))
}

/// First-order robust correction: `R <- sqrt(rho'(c)) R`, `J <- sqrt(rho'(c)) J`.
pub fn correct_fast_triggs(block: &ResidualBlock, kernel: &Kernel) -> Result<ResidualBlock> {
    let (_, d) = kernel.apply(block.cost)?;
    if !(d > 0.0) {
        return Err(Error::Corrector(d));
    }
    if d == 1.0 {
        return Ok(block.clone());
    }
    let s = d.sqrt();
    let residual = &block.residual * s;
    let jacobian = block
        .jacobian
        .iter()
        .map(|b| JacobianBlock {
            col: b.col,
            values: &b.values * s,
        })
        .collect();
    Ok(ResidualBlock::new(residual, jacobian, block.weight.clone()))
}

#[derive(Clone, Debug, PartialEq)]
pub enum SystemMatrix {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl SystemMatrix {
    pub fn dim(&self) -> usize {
        match self {
            SystemMatrix::Dense(m) => m.nrows(),
            SystemMatrix::Sparse(m) => m.dim(),
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            SystemMatrix::Dense(m) => m * x,
            SystemMatrix::Sparse(m) => m.mul_vec(x),
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            SystemMatrix::Dense(m) => m.diagonal(),
            SystemMatrix::Sparse(m) => m.diagonal(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SystemMatrix::Dense(m) => m.clone(),
            SystemMatrix::Sparse(m) => m.to_dense(),
        }
    }

    fn add_diagonal(&mut self, d: &DVector<f64>) {
        match self {
            SystemMatrix::Dense(m) => {
                for i in 0..m.nrows() {
                    m[(i, i)] += d[i];
                }
            }
            SystemMatrix::Sparse(m) => m.add_diagonal(d),
        }
    }
}

/// `A delta = b` with `A = sum(H_i + lambda diag(H_i))`, `b = -sum(J_i^T W_i R_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalEquations {
    pub a: SystemMatrix,
    pub b: DVector<f64>,
    /// `diag(sum H_i)` with zeros floored at [`DIAGONAL_FLOOR`].
    pub damping_diag: DVector<f64>,
    pub lambda: f64,
}

impl NormalEquations {
    /// Same system with a different damping factor.
    pub fn with_damping(&self, lambda: f64) -> NormalEquations {
        let mut a = self.a.clone();
        a.add_diagonal(&(&self.damping_diag * (lambda - self.lambda)));
        NormalEquations {
            a,
            b: self.b.clone(),
            damping_diag: self.damping_diag.clone(),
            lambda,
        }
    }

    /// Reduction of the quadratic model, `delta^T (lambda D delta + b)`.
    pub fn predicted_reduction(&self, delta: &DVector<f64>) -> f64 {
        let damped = self.damping_diag.component_mul(delta) * self.lambda;
        delta.dot(&(damped + &self.b))
    }
}

fn check_block(block: &ResidualBlock, n: usize) -> Result<()> {
    let d = block.residual.len();
    if block.weight.nrows() != d || block.weight.ncols() != d {
        return Err(Error::Length {
            expected: d,
            found: block.weight.nrows(),
        });
    }
    for jb in &block.jacobian {
        if jb.values.nrows() != d {
            return Err(Error::Length {
                expected: d,
                found: jb.values.nrows(),
            });
        }
        if jb.col + jb.values.ncols() > n {
            return Err(Error::Length {
                expected: n,
                found: jb.col + jb.values.ncols(),
            });
        }
    }
    Ok(())
}

fn finish(a: SystemMatrix, b: DVector<f64>, lambda: f64) -> NormalEquations {
    let damping_diag = a.diagonal().map(|v| if v > 0.0 { v } else { DIAGONAL_FLOOR });
    let eqs = NormalEquations {
        a,
        b,
        damping_diag,
        lambda: 0.0,
    };
    if lambda == 0.0 {
        eqs
    } else {
        eqs.with_damping(lambda)
    }
}

/// Dense assembly over `n` tangent coordinates.
pub fn build_normal_equations(blocks: &[ResidualBlock], n: usize, lambda: f64) -> Result<NormalEquations> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("damping must be non-negative, got {lambda}")));
    }
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for block in blocks {
        check_block(block, n)?;
        let wr = &block.weight * &block.residual;
        for jb in &block.jacobian {
            let g = jb.values.tr_mul(&wr);
            let mut seg = b.rows_mut(jb.col, g.len());
            seg -= &g;
            let wj = &block.weight * &jb.values;
            for ja in &block.jacobian {
                let h = ja.values.tr_mul(&wj);
                let mut view = a.view_mut((ja.col, jb.col), (h.nrows(), h.ncols()));
                view += &h;
            }
        }
    }
    Ok(finish(SystemMatrix::Dense(a), b, lambda))
}

/// Sparse (CSR) assembly for large, block-sparse problems.
pub fn build_normal_equations_sparse(
    blocks: &[ResidualBlock],
    n: usize,
    lambda: f64,
) -> Result<NormalEquations> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("damping must be non-negative, got {lambda}")));
    }
    let mut triplets = TripletBuilder::new(n);
    let mut b = DVector::zeros(n);
    for block in blocks {
        check_block(block, n)?;
        let wr = &block.weight * &block.residual;
        for jb in &block.jacobian {
            let g = jb.values.tr_mul(&wr);
            let mut seg = b.rows_mut(jb.col, g.len());
            seg -= &g;
            let wj = &block.weight * &jb.values;
            for ja in &block.jacobian {
                triplets.add_block(ja.col, jb.col, &ja.values.tr_mul(&wj));
            }
        }
    }
    Ok(finish(SystemMatrix::Sparse(triplets.build()), b, lambda))
}
