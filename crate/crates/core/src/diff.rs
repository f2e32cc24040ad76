//! Tangent-space Jacobians of functions over manifold-valued parameters.
//!
//! Increments are applied on the left everywhere: a group parameter `g`
//! moves to `Exp(delta) * g`, a vector parameter to `v + delta`. Numerical
//! Jacobians use central differences with step `cbrt(eps) * max(1, |x_k|)`,
//! where `x_k` is the vector entry being probed and zero for a group
//! coordinate (the left chart is centred on the current element).
//!
//! The batched path requires the user function to be callable from several
//! threads at once.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::lie::element::{Element, Tangent};
use crate::lie::{Family, Kind, LieBatch};
use crate::{Error, Result};

/// Relative tolerance used when an analytic Jacobian is validated.
pub const ANALYTIC_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub enum Param {
    Group(LieBatch<f64>),
    Vector(Vec<f64>),
}

impl Param {
    pub fn tangent_dim(&self) -> usize {
        match self {
            Param::Group(g) => g.len() * g.kind().family().dof(),
            Param::Vector(v) => v.len(),
        }
    }
}

/// Where a tangent coordinate lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Group {
        param: usize,
        item: usize,
        axis: usize,
        family: Family,
    },
    Vector {
        param: usize,
        index: usize,
    },
}

/// Ordered parameters; the tangent vector concatenates each parameter's
/// coordinates, group elements item by item.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
    offsets: Vec<usize>,
}

impl ParamSet {
    pub fn new(params: Vec<Param>) -> Result<Self> {
        for p in &params {
            if let Param::Group(g) = p {
                if !g.kind().is_group() {
                    return Err(Error::InvalidKind {
                        found: g.kind(),
                        expected: "a group kind",
                    });
                }
            }
        }
        let mut offsets = Vec::with_capacity(params.len() + 1);
        let mut acc = 0;
        for p in &params {
            offsets.push(acc);
            acc += p.tangent_dim();
        }
        offsets.push(acc);
        Ok(ParamSet { params, offsets })
    }

    pub fn group(g: LieBatch<f64>) -> Result<Self> {
        Self::new(vec![Param::Group(g)])
    }

    pub fn vector(v: Vec<f64>) -> Self {
        Self::new(vec![Param::Vector(v)]).expect("vector parameters are always valid")
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn param(&self, index: usize) -> &Param {
        &self.params[index]
    }

    /// Convenience accessor for a group parameter.
    pub fn group_param(&self, index: usize) -> Option<&LieBatch<f64>> {
        match &self.params[index] {
            Param::Group(g) => Some(g),
            Param::Vector(_) => None,
        }
    }

    pub fn vector_param(&self, index: usize) -> Option<&[f64]> {
        match &self.params[index] {
            Param::Vector(v) => Some(v),
            Param::Group(_) => None,
        }
    }

    pub fn tangent_dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Tangent offset of parameter `index`.
    pub fn offset(&self, index: usize) -> usize {
        self.offsets[index]
    }

    fn slot(&self, coord: usize) -> Slot {
        let param = self.offsets.partition_point(|&o| o <= coord) - 1;
        let local = coord - self.offsets[param];
        match &self.params[param] {
            Param::Group(g) => {
                let family = g.kind().family();
                Slot::Group {
                    param,
                    item: local / family.dof(),
                    axis: local % family.dof(),
                    family,
                }
            }
            Param::Vector(_) => Slot::Vector {
                param,
                index: local,
            },
        }
    }

    /// Left-perturbation update: vectors add, groups become `Exp(d) * g`.
    pub fn retract(&self, delta: &[f64]) -> Result<ParamSet> {
        let mut out = self.clone();
        out.retract_in_place(delta)?;
        Ok(out)
    }

    pub fn retract_in_place(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.tangent_dim() {
            return Err(Error::Length {
                expected: self.tangent_dim(),
                found: delta.len(),
            });
        }
        for (p, off) in self.params.iter_mut().zip(&self.offsets) {
            match p {
                Param::Vector(v) => {
                    for (x, d) in v.iter_mut().zip(&delta[*off..]) {
                        *x += d;
                    }
                }
                Param::Group(g) => {
                    let family = g.kind().family();
                    let dof = family.dof();
                    for k in 0..g.len() {
                        let d = &delta[off + k * dof..off + (k + 1) * dof];
                        if d.iter().all(|v| *v == 0.0) {
                            continue;
                        }
                        let item = g.item_mut(k);
                        let step = Element::exp(family, &Tangent::load(family, d));
                        step.compose(&Element::load(family, item)).store(family, item);
                    }
                }
            }
        }
        Ok(())
    }

    /// Central-difference step for one tangent coordinate.
    pub fn step_size(&self, coord: usize) -> f64 {
        let base = f64::EPSILON.cbrt();
        match self.slot(coord) {
            Slot::Vector { param, index } => match &self.params[param] {
                Param::Vector(v) => base * v[index].abs().max(1.0),
                Param::Group(_) => unreachable!(),
            },
            Slot::Group { .. } => base,
        }
    }

    /// Evaluates `f` with coordinate `coord` moved by `h`, then restores the
    /// touched storage bitwise.
    pub fn with_probe<R>(&mut self, coord: usize, h: f64, f: impl FnOnce(&ParamSet) -> R) -> R {
        match self.slot(coord) {
            Slot::Vector { param, index } => {
                let Param::Vector(v) = &mut self.params[param] else {
                    unreachable!()
                };
                let saved = v[index];
                v[index] = saved + h;
                let out = f(self);
                let Param::Vector(v) = &mut self.params[param] else {
                    unreachable!()
                };
                v[index] = saved;
                out
            }
            Slot::Group {
                param,
                item,
                axis,
                family,
            } => {
                let Param::Group(g) = &mut self.params[param] else {
                    unreachable!()
                };
                let mut saved = [0.0; 8];
                let size = family.group_size();
                saved[..size].copy_from_slice(g.item(item));
                let mut d = [0.0; 7];
                d[axis] = h;
                let step = Element::exp(family, &Tangent::load(family, &d[..family.dof()]));
                let slot = g.item_mut(item);
                step.compose(&Element::load(family, slot)).store(family, slot);
                let out = f(self);
                let Param::Group(g) = &mut self.params[param] else {
                    unreachable!()
                };
                g.item_mut(item).copy_from_slice(&saved[..size]);
                out
            }
        }
    }

    /// Common batch length of all parameters: group batch length, and for
    /// vectors the number of equal per-item slices (must divide evenly).
    pub fn batch_len(&self) -> Result<usize> {
        let mut batch = None;
        for p in &self.params {
            if let Param::Group(g) = p {
                match batch {
                    None => batch = Some(g.len()),
                    Some(b) if b != g.len() => {
                        return Err(Error::Length {
                            expected: b,
                            found: g.len(),
                        })
                    }
                    _ => {}
                }
            }
        }
        let batch = match batch {
            Some(b) => b,
            None => return Ok(1),
        };
        for p in &self.params {
            if let Param::Vector(v) = p {
                if batch == 0 || v.len() % batch != 0 {
                    return Err(Error::Length {
                        expected: batch,
                        found: v.len(),
                    });
                }
            }
        }
        Ok(batch)
    }

    /// Tangent coordinates owned by batch item `k` (of `batch` items).
    pub fn item_coords(&self, k: usize, batch: usize) -> Vec<usize> {
        let mut coords = Vec::new();
        for (p, off) in self.params.iter().zip(&self.offsets) {
            let per = p.tangent_dim() / batch;
            coords.extend(off + k * per..off + (k + 1) * per);
        }
        coords
    }

    /// The parameters of batch item `k` as a standalone single-item set.
    pub fn item(&self, k: usize, batch: usize) -> ParamSet {
        let params = self
            .params
            .iter()
            .map(|p| match p {
                Param::Group(g) => Param::Group(
                    LieBatch::from_vec(g.kind(), vec![1], g.item(k).to_vec())
                        .expect("item slice has the kind's size"),
                ),
                Param::Vector(v) => {
                    let per = v.len() / batch;
                    Param::Vector(v[k * per..(k + 1) * per].to_vec())
                }
            })
            .collect();
        ParamSet::new(params).expect("kinds already validated")
    }
}

/// A residual function over a [`ParamSet`], optionally with an analytic
/// Jacobian (rows = residual entries, columns = tangent coordinates).
pub trait Residual: Sync {
    fn eval(&self, params: &ParamSet) -> Result<Vec<f64>>;

    fn analytic_jacobian(&self, _params: &ParamSet) -> Option<Result<DMatrix<f64>>> {
        None
    }
}

impl<F> Residual for F
where
    F: Fn(&ParamSet) -> Result<Vec<f64>> + Sync,
{
    fn eval(&self, params: &ParamSet) -> Result<Vec<f64>> {
        self(params)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum JacobianMatrix {
    Dense(DMatrix<f64>),
    /// One `d x n_item` block per batch item; `columns[k]` maps block `k`'s
    /// columns to global tangent coordinates. Block `k` covers rows
    /// `k*d..(k+1)*d`.
    BlockDiagonal {
        blocks: Vec<DMatrix<f64>>,
        columns: Vec<Vec<usize>>,
        cols: usize,
    },
}

impl JacobianMatrix {
    pub fn rows(&self) -> usize {
        match self {
            JacobianMatrix::Dense(m) => m.nrows(),
            JacobianMatrix::BlockDiagonal { blocks, .. } => blocks.iter().map(|b| b.nrows()).sum(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            JacobianMatrix::Dense(m) => m.ncols(),
            JacobianMatrix::BlockDiagonal { cols, .. } => *cols,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            JacobianMatrix::Dense(m) => m.clone(),
            JacobianMatrix::BlockDiagonal {
                blocks,
                columns,
                cols,
            } => {
                let mut out = DMatrix::zeros(self.rows(), *cols);
                let mut row = 0;
                for (b, c) in blocks.iter().zip(columns) {
                    for (j, &col) in c.iter().enumerate() {
                        for i in 0..b.nrows() {
                            out[(row + i, col)] = b[(i, j)];
                        }
                    }
                    row += b.nrows();
                }
                out
            }
        }
    }

    pub fn blocks(&self) -> Option<&[DMatrix<f64>]> {
        match self {
            JacobianMatrix::Dense(_) => None,
            JacobianMatrix::BlockDiagonal { blocks, .. } => Some(blocks),
        }
    }
}

/// Central-difference columns for `coords`, probing `scratch` in place.
pub fn central_columns<F>(scratch: &mut ParamSet, coords: &[usize], mut eval: F) -> Result<DMatrix<f64>>
where
    F: FnMut(&ParamSet) -> Result<Vec<f64>>,
{
    let mut out: Option<DMatrix<f64>> = None;
    for (j, &coord) in coords.iter().enumerate() {
        let h = scratch.step_size(coord);
        let plus = scratch.with_probe(coord, h, &mut eval)?;
        let minus = scratch.with_probe(coord, -h, &mut eval)?;
        if plus.len() != minus.len() {
            return Err(Error::Length {
                expected: plus.len(),
                found: minus.len(),
            });
        }
        if plus.iter().chain(&minus).any(|v| !v.is_finite()) {
            return Err(Error::Evaluation { probe: coord });
        }
        let m = out.get_or_insert_with(|| DMatrix::zeros(plus.len(), coords.len()));
        if m.nrows() != plus.len() {
            return Err(Error::Length {
                expected: m.nrows(),
                found: plus.len(),
            });
        }
        for i in 0..plus.len() {
            m[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(out.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

/// Central-difference Jacobian over every tangent coordinate.
pub fn numeric_jacobian<R: Residual + ?Sized>(f: &R, params: &ParamSet) -> Result<DMatrix<f64>> {
    let coords: Vec<usize> = (0..params.tangent_dim()).collect();
    let mut scratch = params.clone();
    let m = central_columns(&mut scratch, &coords, |p| f.eval(p))?;
    if coords.is_empty() {
        let rows = f.eval(params)?.len();
        return Ok(DMatrix::zeros(rows, 0));
    }
    Ok(m)
}

/// Dense Jacobian: the analytic one when `f` provides it, else central
/// differences.
pub fn jacobian_dense<R: Residual + ?Sized>(f: &R, params: &ParamSet) -> Result<JacobianMatrix> {
    match f.analytic_jacobian(params) {
        Some(j) => j.map(JacobianMatrix::Dense),
        None => numeric_jacobian(f, params).map(JacobianMatrix::Dense),
    }
}

/// Frobenius relative difference `|a - b| / max(|a|, |b|)`.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// Compares the analytic Jacobian of `f` with central differences and
/// returns the relative error, or an error above `tolerance`.
pub fn check_analytic<R: Residual + ?Sized>(f: &R, params: &ParamSet, tolerance: f64) -> Result<f64> {
    let numeric = numeric_jacobian(f, params)?;
    let analytic = match f.analytic_jacobian(params) {
        Some(j) => j?,
        None => return Ok(0.0),
    };
    if analytic.shape() != numeric.shape() {
        return Err(Error::Length {
            expected: numeric.len(),
            found: analytic.len(),
        });
    }
    let relative = relative_error(&analytic, &numeric);
    if relative > tolerance {
        return Err(Error::JacobianMismatch { relative });
    }
    Ok(relative)
}

/// Per-item Jacobian blocks of a batched function.
///
/// `f(k, params)` returns item `k`'s residual and may only read item `k`'s
/// parameters. With `validate`, each item is spot-checked by probing its
/// neighbour's first coordinate; any change in item `k`'s residual is a
/// contract violation. Blocks are computed in parallel on the current rayon
/// pool; every probe restores its storage exactly, so the result does not
/// depend on the schedule.
pub fn jacobian_batched<F>(f: &F, params: &ParamSet, validate: bool) -> Result<JacobianMatrix>
where
    F: Fn(usize, &ParamSet) -> Result<Vec<f64>> + Sync,
{
    jacobian_batched_items(f, params, params.batch_len()?, validate)
}

/// [`jacobian_batched`] with an explicit batch length, for parameter sets
/// made only of vectors (each split into `batch` equal per-item slices).
pub fn jacobian_batched_items<F>(f: &F, params: &ParamSet, batch: usize, validate: bool) -> Result<JacobianMatrix>
where
    F: Fn(usize, &ParamSet) -> Result<Vec<f64>> + Sync,
{
    for p in params.params() {
        let mismatch = match p {
            Param::Group(g) => g.len() != batch,
            Param::Vector(v) => batch == 0 || v.len() % batch != 0,
        };
        if mismatch {
            return Err(Error::Length {
                expected: batch,
                found: p.tangent_dim(),
            });
        }
    }
    let columns: Vec<Vec<usize>> = (0..batch).map(|k| params.item_coords(k, batch)).collect();
    let blocks = (0..batch)
        .into_par_iter()
        .map_init(
            || params.clone(),
            |scratch, k| -> Result<DMatrix<f64>> {
                let block = central_columns(scratch, &columns[k], |p| f(k, p))?;
                if validate && batch > 1 {
                    let base = f(k, scratch)?;
                    let other = columns[(k + 1) % batch].first().copied();
                    if let Some(coord) = other {
                        let h = scratch.step_size(coord);
                        let probed = scratch.with_probe(coord, h, |p| f(k, p))?;
                        if probed != base {
                            return Err(Error::ContractViolation { item: k });
                        }
                    }
                }
                Ok(block)
            },
        )
        .collect::<Result<Vec<_>>>()?;
    Ok(JacobianMatrix::BlockDiagonal {
        blocks,
        columns,
        cols: params.tangent_dim(),
    })
}

/// Helper for building a single-group parameter set of one kind.
pub fn group_params(kind: Kind, data: Vec<f64>, shape: Vec<usize>) -> Result<ParamSet> {
    ParamSet::group(LieBatch::from_vec(kind, shape, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{hat, PointBatch};
    use nalgebra::Vector3;
    use std::f64::consts::FRAC_PI_2;

    const SO3: Kind = Kind::Group(Family::SO3);
    const SO3_ALG: Kind = Kind::Algebra(Family::SO3);

    fn rotation_params(shape: &[usize], seed: u64) -> ParamSet {
        ParamSet::group(LieBatch::random_group(SO3, shape, 1.0, seed).unwrap()).unwrap()
    }

    #[test]
    fn retract_zero_is_noop() {
        let p = rotation_params(&[3], 1);
        assert_eq!(p.retract(&[0.0; 9]).unwrap(), p);
    }

    #[test]
    fn retract_identity_by_quarter_turn() {
        let p = ParamSet::group(LieBatch::identity(SO3, &[])).unwrap();
        let q = p.retract(&[FRAC_PI_2, 0.0, 0.0]).unwrap();
        let expected = LieBatch::single(SO3_ALG, &[FRAC_PI_2, 0.0, 0.0]).unwrap().exp().unwrap();
        assert_eq!(q.group_param(0).unwrap().as_slice(), expected.as_slice());
    }

    #[test]
    fn retract_back_and_forth() {
        let p = ParamSet::new(vec![
            Param::Group(LieBatch::random_group(Kind::Group(Family::SE3), &[2], 1.0, 4).unwrap()),
            Param::Vector(vec![1.0, -2.0]),
        ])
        .unwrap();
        let delta: Vec<f64> = (0..14).map(|i| 0.1 * (i as f64 - 6.5)).collect();
        let neg: Vec<f64> = delta.iter().map(|d| -d).collect();
        let back = p.retract(&delta).unwrap().retract(&neg).unwrap();
        for (a, b) in back.params().iter().zip(p.params()) {
            let (a, b) = match (a, b) {
                (Param::Group(a), Param::Group(b)) => (a.as_slice().to_vec(), b.as_slice().to_vec()),
                (Param::Vector(a), Param::Vector(b)) => (a.clone(), b.clone()),
                _ => unreachable!(),
            };
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!(matches!(p.retract(&[0.0; 3]), Err(Error::Length { .. })));
    }

    #[test]
    fn identity_function_jacobian() {
        let p = ParamSet::vector(vec![0.5, -1.0, 2.0]);
        let f = |p: &ParamSet| Ok(p.vector_param(0).unwrap().to_vec());
        let j = jacobian_dense(&f, &p).unwrap().to_dense();
        assert!((j - DMatrix::identity(3, 3)).abs().max() < 1e-10);
    }

    #[test]
    fn exp_log_round_trip_jacobian_is_identity() {
        let p = ParamSet::vector(vec![0.1, 0.2, 0.3]);
        let f = |p: &ParamSet| {
            let x = LieBatch::single(SO3_ALG, p.vector_param(0).unwrap())?;
            Ok(x.exp()?.log()?.into_vec())
        };
        let j = jacobian_dense(&f, &p).unwrap().to_dense();
        assert!((j - DMatrix::identity(3, 3)).abs().max() < 1e-6);
    }

    #[test]
    fn rotation_action_jacobian_is_minus_hat() {
        let p = ParamSet::group(LieBatch::identity(SO3, &[])).unwrap();
        let p0 = [0.0, 1.0, 0.0];
        let f = |p: &ParamSet| Ok(p.group_param(0).unwrap().act(&PointBatch::single(p0))?.as_slice().to_vec());
        let j = jacobian_dense(&f, &p).unwrap().to_dense();
        let expected = -hat(&Vector3::new(0.0, 1.0, 0.0));
        for r in 0..3 {
            for c in 0..3 {
                assert!((j[(r, c)] - expected[(r, c)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn non_finite_output_reports_probe() {
        let p = ParamSet::vector(vec![0.0, 1.0]);
        let f = |p: &ParamSet| {
            let v = p.vector_param(0).unwrap();
            Ok(vec![if v[1] > 1.0 { f64::NAN } else { v[0] }])
        };
        assert!(matches!(
            jacobian_dense(&f, &p),
            Err(Error::Evaluation { probe: 1 })
        ));
    }

    struct Squares;

    impl Residual for Squares {
        fn eval(&self, p: &ParamSet) -> Result<Vec<f64>> {
            Ok(p.vector_param(0).unwrap().iter().map(|x| x * x).collect())
        }

        fn analytic_jacobian(&self, p: &ParamSet) -> Option<Result<DMatrix<f64>>> {
            let v = p.vector_param(0).unwrap();
            let d: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
            Some(Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d))))
        }
    }

    #[test]
    fn analytic_hook_is_used_and_validated() {
        let p = ParamSet::vector(vec![1.5, -0.5]);
        let j = jacobian_dense(&Squares, &p).unwrap().to_dense();
        assert_eq!(j[(0, 0)], 3.0);
        assert!(check_analytic(&Squares, &p, ANALYTIC_TOLERANCE).unwrap() < 1e-8);
    }

    fn rotate_item(p0: [f64; 3]) -> impl Fn(usize, &ParamSet) -> Result<Vec<f64>> + Sync {
        move |k, p| {
            let g = p.group_param(0).unwrap();
            let e = Element::load(Family::SO3, g.item(k));
            Ok(e.act(&Vector3::from(p0)).as_slice().to_vec())
        }
    }

    #[test]
    fn batched_single_item_equals_dense() {
        let p = rotation_params(&[1], 7);
        let f = rotate_item([0.3, -1.0, 2.0]);
        let batched = jacobian_batched(&f, &p, true).unwrap().to_dense();
        let dense = jacobian_dense(&|q: &ParamSet| f(0, q), &p).unwrap().to_dense();
        assert_eq!(batched, dense);
    }

    #[test]
    fn batched_blocks_are_independent() {
        let p = rotation_params(&[2], 8);
        let f = rotate_item([1.0, 2.0, 3.0]);
        let j = jacobian_batched(&f, &p, true).unwrap();
        assert_eq!(j.blocks().unwrap().len(), 2);
        // off-block entries from a full dense difference
        let full = |q: &ParamSet| {
            let mut out = f(0, q)?;
            out.extend(f(1, q)?);
            Ok(out)
        };
        let dense = numeric_jacobian(&full, &p).unwrap();
        for r in 0..3 {
            for c in 3..6 {
                assert!(dense[(r, c)].abs() < 1e-12);
                assert!(dense[(r + 3, c - 3)].abs() < 1e-12);
            }
        }
        assert!((dense - j.to_dense()).abs().max() < 1e-12);
    }

    #[test]
    fn doubling_batch_keeps_blocks() {
        let g = LieBatch::random_group(SO3, &[1], 1.0, 9).unwrap();
        let mut data = g.as_slice().to_vec();
        data.extend_from_slice(g.as_slice());
        let p1 = ParamSet::group(g).unwrap();
        let p2 = group_params(SO3, data, vec![2]).unwrap();
        let f = rotate_item([0.5, 0.5, -1.0]);
        let j1 = jacobian_batched(&f, &p1, false).unwrap();
        let j2 = jacobian_batched(&f, &p2, false).unwrap();
        let b1 = j1.blocks().unwrap();
        let b2 = j2.blocks().unwrap();
        assert_eq!(b2.len(), 2);
        assert_eq!(b2[0], b1[0]);
        assert_eq!(b2[1], b1[0]);
    }

    #[test]
    fn cross_item_dependence_is_detected() {
        let p = rotation_params(&[3], 10);
        let f = |k: usize, p: &ParamSet| {
            let g = p.group_param(0).unwrap();
            let next = g.item((k + 1) % 3);
            Ok(vec![g.item(k)[0] + next[0]])
        };
        assert!(matches!(
            jacobian_batched(&f, &p, true),
            Err(Error::ContractViolation { .. })
        ));
    }

    #[test]
    fn halving_step_barely_changes_jacobian() {
        let p = ParamSet::vector(vec![0.7, -0.3]);
        let f = |p: &ParamSet| {
            let v = p.vector_param(0).unwrap();
            Ok(vec![v[0].sin() * v[1].exp(), v[0] * v[0] * v[1]])
        };
        let j = numeric_jacobian(&f, &p).unwrap();
        let mut scratch = p.clone();
        let mut half = DMatrix::zeros(2, 2);
        for c in 0..2 {
            let h = scratch.step_size(c) / 2.0;
            let plus = scratch.with_probe(c, h, f).unwrap();
            let minus = scratch.with_probe(c, -h, f).unwrap();
            for r in 0..2 {
                half[(r, c)] = (plus[r] - minus[r]) / (2.0 * h);
            }
        }
        assert!(relative_error(&j, &half) < 1e-5);
    }
}
