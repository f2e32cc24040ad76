use nalgebra::{DMatrix, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::element::{Element, Tangent};
use super::kind::{Family, Kind};
use super::scalar::{Precision, Real};
use super::so3::quat_norm;
use crate::{Error, Result};

/// Maximum quaternion norm deviation accepted by `log_map` before the element
/// is reported as corrupt.
pub const CORRUPT_NORM_DEVIATION: f64 = 1e-3;

/// Batched Lie group or Lie algebra values.
///
/// `data` is contiguous, `prod(shape) * kind.item_size()` long. An empty
/// shape holds a single element.
#[derive(Clone, Debug, PartialEq)]
pub struct LieBatch<T: Real = f64> {
    kind: Kind,
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Batched 3D points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointBatch<T: Real = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Trailing-dimension broadcast of two batch shapes.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(Error::Shape(a.to_vec(), b.to_vec())),
        };
    }
    Ok(out)
}

/// Flat index into an operand of shape `src` for every element of `out`.
fn broadcast_index(src: &[usize], out: &[usize]) -> Vec<usize> {
    let total = numel(out);
    if src == out {
        return (0..total).collect();
    }
    if numel(src) == 1 {
        return vec![0; total];
    }
    let pad = out.len() - src.len();
    // strides of src laid over out's dims; broadcast dims get stride 0
    let mut strides = vec![0usize; out.len()];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        strides[pad + i] = if src[i] == 1 { 0 } else { acc };
        acc *= src[i];
    }
    let mut idx = Vec::with_capacity(total);
    let mut counter = vec![0usize; out.len()];
    for _ in 0..total {
        idx.push(counter.iter().zip(&strides).map(|(c, s)| c * s).sum());
        for d in (0..out.len()).rev() {
            counter[d] += 1;
            if counter[d] < out[d] {
                break;
            }
            counter[d] = 0;
        }
    }
    idx
}

fn broadcast_pair(a: &[usize], b: &[usize]) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let out = broadcast_shapes(a, b)?;
    let ia = broadcast_index(a, &out);
    let ib = broadcast_index(b, &out);
    Ok((out, ia, ib))
}

fn require_group(kind: Kind) -> Result<Family> {
    match kind {
        Kind::Group(f) => Ok(f),
        found => Err(Error::InvalidKind {
            found,
            expected: "a group kind",
        }),
    }
}

fn require_algebra(kind: Kind) -> Result<Family> {
    match kind {
        Kind::Algebra(f) => Ok(f),
        found => Err(Error::InvalidKind {
            found,
            expected: "an algebra kind",
        }),
    }
}

impl<T: Real> LieBatch<T> {
    /// Wraps raw data. Only the length is checked; see [`LieBatch::validate`].
    pub fn from_vec(kind: Kind, shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected = numel(&shape) * kind.item_size();
        if data.len() != expected {
            return Err(Error::Length {
                expected,
                found: data.len(),
            });
        }
        Ok(LieBatch { kind, shape, data })
    }

    /// A single element.
    pub fn single(kind: Kind, item: &[T]) -> Result<Self> {
        Self::from_vec(kind, Vec::new(), item.to_vec())
    }

    pub fn identity(kind: Kind, shape: &[usize]) -> Self {
        let size = kind.item_size();
        let n = numel(shape);
        let mut data = vec![T::zero(); n * size];
        if let Kind::Group(family) = kind {
            let id = Element::<T>::identity();
            for item in data.chunks_exact_mut(size) {
                id.store(family, item);
            }
        }
        LieBatch {
            kind,
            shape: shape.to_vec(),
            data,
        }
    }

    /// I.i.d. normal entries scaled by `sigma`; deterministic for a given seed.
    pub fn random_tangent(kind: Kind, shape: &[usize], sigma: f64, seed: u64) -> Result<Self> {
        require_algebra(kind)?;
        if !(sigma >= 0.0) {
            return Err(Error::Domain(format!("sigma must be non-negative, got {sigma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = numel(shape) * kind.item_size();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(sigma * z)
            })
            .collect();
        Ok(LieBatch {
            kind,
            shape: shape.to_vec(),
            data,
        })
    }

    /// `exp_map(random_tangent(..))` of the paired algebra kind.
    pub fn random_group(kind: Kind, shape: &[usize], sigma: f64, seed: u64) -> Result<Self> {
        require_group(kind)?;
        Self::random_tangent(kind.paired(), shape, sigma, seed)?.exp()
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        numel(&self.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn item(&self, index: usize) -> &[T] {
        let size = self.kind.item_size();
        &self.data[index * size..(index + 1) * size]
    }

    pub fn item_mut(&mut self, index: usize) -> &mut [T] {
        let size = self.kind.item_size();
        &mut self.data[index * size..(index + 1) * size]
    }

    pub fn items(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.kind.item_size())
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if numel(&shape) != self.len() {
            return Err(Error::Shape(self.shape, shape));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Checks the stored-value invariants: unit quaternions within `8 eps`
    /// and positive scales for group kinds, finite entries everywhere.
    pub fn validate(&self) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite entry in item {}",
                pos / self.kind.item_size()
            )));
        }
        if let Kind::Group(family) = self.kind {
            let tol = 8.0 * T::machine_eps().to_f64();
            for (index, item) in self.items().enumerate() {
                let e = Element::load(family, item);
                let deviation = (quat_norm(&e.q).to_f64() - 1.0).abs();
                if deviation > tol {
                    return Err(Error::CorruptElement { index, deviation });
                }
                if family.has_scale() && !(e.s > T::zero()) {
                    return Err(Error::Domain(format!("item {index}: scale must be positive")));
                }
            }
        }
        Ok(())
    }

    /// Renormalises every quaternion sub-block.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        if let Kind::Group(family) = self.kind {
            let size = self.kind.item_size();
            for item in out.data.chunks_exact_mut(size) {
                let mut e = Element::load(family, item);
                e.q = super::so3::quat_normalize(&e.q);
                e.store(family, item);
            }
        }
        out
    }

    /// Exponential map, algebra kind -> paired group kind.
    pub fn exp(&self) -> Result<Self> {
        let family = require_algebra(self.kind)?;
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite tangent in item {}",
                pos / self.kind.item_size()
            )));
        }
        let out_size = family.group_size();
        let mut data = vec![T::zero(); self.len() * out_size];
        for (item, out) in self.items().zip(data.chunks_exact_mut(out_size)) {
            Element::exp(family, &Tangent::load(family, item)).store(family, out);
        }
        Ok(LieBatch {
            kind: Kind::Group(family),
            shape: self.shape.clone(),
            data,
        })
    }

    /// Principal logarithm, group kind -> paired algebra kind.
    pub fn log(&self) -> Result<Self> {
        let family = require_group(self.kind)?;
        let out_size = family.dof();
        let mut data = vec![T::zero(); self.len() * out_size];
        for (index, (item, out)) in self.items().zip(data.chunks_exact_mut(out_size)).enumerate() {
            let e = Element::load(family, item);
            let deviation = (quat_norm(&e.q).to_f64() - 1.0).abs();
            if !(deviation <= CORRUPT_NORM_DEVIATION) {
                return Err(Error::CorruptElement { index, deviation });
            }
            if family.has_scale() && !(e.s > T::zero()) {
                return Err(Error::Domain(format!("item {index}: scale must be positive")));
            }
            let x = e
                .log(family)
                .ok_or_else(|| Error::Domain(format!("item {index}: singular logarithm")))?;
            x.store(family, out);
        }
        Ok(LieBatch {
            kind: Kind::Algebra(family),
            shape: self.shape.clone(),
            data,
        })
    }

    /// Group product `self * other`, broadcast over batch shapes.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let family = require_group(self.kind)?;
        if other.kind != self.kind {
            return Err(Error::KindMismatch(self.kind, other.kind));
        }
        let size = family.group_size();
        let (shape, ia, ib) = broadcast_pair(&self.shape, &other.shape)?;
        let mut data = vec![T::zero(); ia.len() * size];
        for ((a, b), out) in ia.iter().zip(&ib).zip(data.chunks_exact_mut(size)) {
            let ea = Element::load(family, self.item(*a));
            let eb = Element::load(family, other.item(*b));
            ea.compose(&eb).store(family, out);
        }
        Ok(LieBatch {
            kind: self.kind,
            shape,
            data,
        })
    }

    pub fn inverse(&self) -> Result<Self> {
        let family = require_group(self.kind)?;
        let mut out = self.clone();
        let size = family.group_size();
        for item in out.data.chunks_exact_mut(size) {
            Element::load(family, item).inverse().store(family, item);
        }
        Ok(out)
    }

    /// Group action on points, broadcast over batch shapes.
    pub fn act(&self, points: &PointBatch<T>) -> Result<PointBatch<T>> {
        let family = require_group(self.kind)?;
        let (shape, ia, ib) = broadcast_pair(&self.shape, &points.shape)?;
        let mut data = vec![T::zero(); ia.len() * 3];
        for ((g, p), out) in ia.iter().zip(&ib).zip(data.chunks_exact_mut(3)) {
            let e = Element::load(family, self.item(*g));
            let r = e.act(&points.point(*p));
            out.copy_from_slice(r.as_slice());
        }
        Ok(PointBatch { shape, data })
    }

    /// One square matrix per element: 3x3 for SO3/RxSO3, 4x4 for SE3/Sim3.
    pub fn to_matrix(&self) -> Result<Vec<DMatrix<T>>> {
        let family = require_group(self.kind)?;
        Ok(self
            .items()
            .map(|item| Element::load(family, item).to_matrix(family))
            .collect())
    }

    /// Matrix (hat) form of every algebra element.
    pub fn hat_matrix(&self) -> Result<Vec<DMatrix<T>>> {
        let family = require_algebra(self.kind)?;
        Ok(self
            .items()
            .map(|item| Tangent::load(family, item).hat_matrix(family))
            .collect())
    }

    /// Lossless conversion into the other precision's storage.
    pub fn cast<U: Real>(&self) -> LieBatch<U> {
        LieBatch {
            kind: self.kind,
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.to_f64())).collect(),
        }
    }
}

impl<T: Real> PointBatch<T> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected = numel(&shape) * 3;
        if data.len() != expected {
            return Err(Error::Length {
                expected,
                found: data.len(),
            });
        }
        Ok(PointBatch { shape, data })
    }

    pub fn single(p: [T; 3]) -> Self {
        PointBatch {
            shape: Vec::new(),
            data: p.to_vec(),
        }
    }

    pub fn random(shape: &[usize], sigma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..numel(shape) * 3)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(sigma * z)
            })
            .collect();
        PointBatch {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        numel(&self.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn point(&self, index: usize) -> Vector3<T> {
        Vector3::new(
            self.data[3 * index],
            self.data[3 * index + 1],
            self.data[3 * index + 2],
        )
    }
}

/// Free-function form of [`LieBatch::exp`].
pub fn exp_map<T: Real>(x: &LieBatch<T>) -> Result<LieBatch<T>> {
    x.exp()
}

/// Free-function form of [`LieBatch::log`].
pub fn log_map<T: Real>(g: &LieBatch<T>) -> Result<LieBatch<T>> {
    g.log()
}

pub fn compose<T: Real>(a: &LieBatch<T>, b: &LieBatch<T>) -> Result<LieBatch<T>> {
    a.compose(b)
}

pub fn inverse<T: Real>(g: &LieBatch<T>) -> Result<LieBatch<T>> {
    g.inverse()
}

pub fn act<T: Real>(g: &LieBatch<T>, p: &PointBatch<T>) -> Result<PointBatch<T>> {
    g.act(p)
}

pub fn to_matrix<T: Real>(g: &LieBatch<T>) -> Result<Vec<DMatrix<T>>> {
    g.to_matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    const SO3: Kind = Kind::Group(Family::SO3);
    const SO3_ALG: Kind = Kind::Algebra(Family::SO3);
    const SE3: Kind = Kind::Group(Family::SE3);

    fn quarter_turn_x() -> LieBatch {
        LieBatch::single(SO3_ALG, &[FRAC_PI_2, 0.0, 0.0]).unwrap().exp().unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn exp_examples() {
        let id = LieBatch::single(SO3_ALG, &[0.0, 0.0, 0.0]).unwrap().exp().unwrap();
        assert_eq!(id.as_slice(), &[0.0, 0.0, 0.0, 1.0]);
        assert_close(
            quarter_turn_x().as_slice(),
            &[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2],
            1e-15,
        );
        let tiny = LieBatch::single(SO3_ALG, &[1e-10, 0.0, 0.0]).unwrap().exp().unwrap();
        assert_close(tiny.as_slice(), &[5e-11, 0.0, 0.0, 1.0], 1e-15);
    }

    #[test]
    fn exp_rejects_group_and_non_finite() {
        let g = LieBatch::<f64>::identity(SO3, &[]);
        assert!(matches!(g.exp(), Err(Error::InvalidKind { .. })));
        let bad = LieBatch::single(SO3_ALG, &[f64::NAN, 0.0, 0.0]).unwrap();
        assert!(matches!(bad.exp(), Err(Error::Domain(_))));
    }

    #[test]
    fn log_examples() {
        let id = LieBatch::<f64>::identity(SO3, &[]).log().unwrap();
        assert_eq!(id.as_slice(), &[0.0, 0.0, 0.0]);
        let g = LieBatch::single(SO3, &[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2]).unwrap();
        assert_close(g.log().unwrap().as_slice(), &[FRAC_PI_2, 0.0, 0.0], 1e-15);
        let neg = LieBatch::single(SO3, &[0.0, 0.0, 0.0, -1.0]).unwrap();
        let x = neg.log().unwrap();
        let n: f64 = x.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(n <= PI);
    }

    #[test]
    fn log_rejects_corrupt_quaternion() {
        let g = LieBatch::single(SO3, &[0.0, 0.0, 0.0, 1.01]).unwrap();
        assert!(matches!(g.log(), Err(Error::CorruptElement { index: 0, .. })));
        let alg = LieBatch::single(SO3_ALG, &[0.0; 3]).unwrap();
        assert!(matches!(alg.log(), Err(Error::InvalidKind { .. })));
    }

    #[test]
    fn compose_examples() {
        let r = quarter_turn_x();
        let half = r.compose(&r).unwrap();
        assert_close(half.as_slice(), &[1.0, 0.0, 0.0, 0.0], 1e-15);
        let id = r.compose(&r.inverse().unwrap()).unwrap();
        assert_close(id.as_slice(), &[0.0, 0.0, 0.0, 1.0], 1e-15);
        let left = LieBatch::identity(SO3, &[]).compose(&r).unwrap();
        assert_eq!(left, r);
    }

    #[test]
    fn compose_errors() {
        let a = LieBatch::<f64>::identity(SO3, &[2]);
        let b = LieBatch::<f64>::identity(SE3, &[2]);
        assert!(matches!(a.compose(&b), Err(Error::KindMismatch(..))));
        let c = LieBatch::<f64>::identity(SO3, &[3]);
        assert!(matches!(a.compose(&c), Err(Error::Shape(..))));
    }

    #[test]
    fn compose_broadcasts() {
        let a = LieBatch::<f64>::random_group(SO3, &[4, 1], 1.0, 1).unwrap();
        let b = LieBatch::<f64>::random_group(SO3, &[3], 1.0, 2).unwrap();
        let c = a.compose(&b).unwrap();
        assert_eq!(c.shape(), &[4, 3]);
        for i in 0..4 {
            for j in 0..3 {
                let ai = LieBatch::single(SO3, a.item(i)).unwrap();
                let bj = LieBatch::single(SO3, b.item(j)).unwrap();
                assert_eq!(c.item(i * 3 + j), ai.compose(&bj).unwrap().as_slice());
            }
        }
        // a batch of one broadcasts against anything
        let one = LieBatch::<f64>::identity(SO3, &[1]);
        assert_eq!(one.compose(&b).unwrap().shape(), &[3]);
    }

    #[test]
    fn inverse_examples() {
        let id = LieBatch::<f64>::identity(SE3, &[]);
        assert_eq!(id.inverse().unwrap(), id);
        let g = LieBatch::single(SE3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_close(
            g.inverse().unwrap().as_slice(),
            &[-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            0.0,
        );
    }

    #[test]
    fn act_examples() {
        let p = PointBatch::single([1.0, 2.0, 3.0]);
        let out = LieBatch::identity(SO3, &[]).act(&p).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 2.0, 3.0]);
        let out = quarter_turn_x().act(&PointBatch::single([0.0, 1.0, 0.0])).unwrap();
        assert_close(out.as_slice(), &[0.0, 0.0, 1.0], 1e-15);
        let g = LieBatch::single(SE3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let out = g.act(&PointBatch::single([0.0, 0.0, 0.0])).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 0.0, 0.0]);
        let alg = LieBatch::single(SO3_ALG, &[0.0; 3]).unwrap();
        assert!(matches!(alg.act(&p), Err(Error::InvalidKind { .. })));
        let two = PointBatch::from_vec(vec![2], vec![0.0; 6]).unwrap();
        let three = LieBatch::<f64>::identity(SO3, &[3]);
        assert!(matches!(three.act(&two), Err(Error::Shape(..))));
    }

    #[test]
    fn to_matrix_examples() {
        let m = LieBatch::<f64>::identity(SO3, &[]).to_matrix().unwrap();
        assert_eq!(m[0], DMatrix::identity(3, 3));
        let flip = LieBatch::single(SO3, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let m = &flip.to_matrix().unwrap()[0];
        assert_eq!(*m, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0, -1.0])));
        let scaled = LieBatch::single(Kind::Group(Family::RxSO3), &[0.0, 0.0, 0.0, 1.0, 2.0]).unwrap();
        assert_eq!(scaled.to_matrix().unwrap()[0], DMatrix::identity(3, 3) * 2.0);
        let se3 = LieBatch::<f64>::identity(SE3, &[]).to_matrix().unwrap();
        assert_eq!(se3[0].nrows(), 4);
    }

    #[test]
    fn random_constructors() {
        let z = LieBatch::<f64>::random_tangent(SO3_ALG, &[5], 0.0, 3).unwrap();
        assert!(z.as_slice().iter().all(|v| *v == 0.0));
        let g = LieBatch::<f64>::random_group(SO3, &[5], 0.0, 3).unwrap();
        assert_eq!(g, LieBatch::identity(SO3, &[5]));
        let a = LieBatch::<f64>::random_tangent(SO3_ALG, &[7], 1.0, 11).unwrap();
        let b = LieBatch::<f64>::random_tangent(SO3_ALG, &[7], 1.0, 11).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert!(LieBatch::<f64>::random_tangent(SO3_ALG, &[1], -1.0, 0).is_err());
        assert!(LieBatch::<f64>::random_group(SO3_ALG, &[1], 1.0, 0).is_err());
    }

    #[test]
    fn validate_checks_norm_and_scale() {
        let g = LieBatch::<f64>::random_group(Kind::Group(Family::Sim3), &[10], 1.0, 5).unwrap();
        g.validate().unwrap();
        let bad = LieBatch::single(Kind::Group(Family::RxSO3), &[0.0, 0.0, 0.0, 1.0, -1.0]).unwrap();
        assert!(bad.validate().is_err());
        let off = LieBatch::single(SO3, &[0.0, 0.0, 0.0, 1.0 + 1e-9]).unwrap();
        assert!(off.validate().is_err());
        off.normalized().validate().unwrap();
    }

    #[test]
    fn f32_round_trip() {
        let x = LieBatch::<f32>::random_tangent(Kind::Algebra(Family::SE3), &[100], 0.5, 9).unwrap();
        let y = x.exp().unwrap().log().unwrap();
        for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
            assert!((a - b).abs() < 1e-4);
        }
        assert_eq!(y.precision(), Precision::F32);
    }
}
