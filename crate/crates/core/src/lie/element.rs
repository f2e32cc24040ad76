//! Single-element group and algebra values.
//!
//! All four families are handled through one similarity representation
//! `(t, q, s)`: SO3 has `t = 0, s = 1`, SE3 has `s = 1`, RxSO3 has `t = 0`.
//! Those neutral entries are exact, so composing through the general
//! formulas is bitwise identical to the specialised ones.

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::kind::Family;
use super::scalar::Real;
use super::so3::{
    exp_quat, hat, log_quat, quat_conj, quat_identity, quat_mul, quat_normalize, quat_rotate,
    quat_to_matrix, v_inverse, v_matrix,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Element<T: Real> {
    pub t: Vector3<T>,
    pub q: [T; 4],
    pub s: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tangent<T: Real> {
    pub rho: Vector3<T>,
    pub phi: Vector3<T>,
    pub sigma: T,
}

impl<T: Real> Element<T> {
    pub fn identity() -> Self {
        Element {
            t: Vector3::zeros(),
            q: quat_identity(),
            s: T::one(),
        }
    }

    pub fn load(family: Family, item: &[T]) -> Self {
        let o = family.quat_offset();
        let q = [item[o], item[o + 1], item[o + 2], item[o + 3]];
        let t = if family.has_translation() {
            Vector3::new(item[0], item[1], item[2])
        } else {
            Vector3::zeros()
        };
        let s = if family.has_scale() { item[o + 4] } else { T::one() };
        Element { t, q, s }
    }

    pub fn store(&self, family: Family, out: &mut [T]) {
        let o = family.quat_offset();
        if family.has_translation() {
            out[0] = self.t.x;
            out[1] = self.t.y;
            out[2] = self.t.z;
        }
        out[o..o + 4].copy_from_slice(&self.q);
        if family.has_scale() {
            out[o + 4] = self.s;
        }
    }

    /// Group product with quaternion renormalisation.
    pub fn compose(&self, other: &Self) -> Self {
        Element {
            t: self.t + quat_rotate(&self.q, &other.t) * self.s,
            q: quat_normalize(&quat_mul(&self.q, &other.q)),
            s: self.s * other.s,
        }
    }

    pub fn inverse(&self) -> Self {
        let q = quat_normalize(&quat_conj(&self.q));
        let s = T::one() / self.s;
        Element {
            t: -quat_rotate(&q, &self.t) * s,
            q,
            s,
        }
    }

    pub fn act(&self, p: &Vector3<T>) -> Vector3<T> {
        quat_rotate(&self.q, p) * self.s + self.t
    }

    pub fn rotation(&self) -> Matrix3<T> {
        quat_to_matrix(&self.q)
    }

    /// 3x3 for SO3/RxSO3, 4x4 homogeneous for SE3/Sim3.
    pub fn to_matrix(&self, family: Family) -> DMatrix<T> {
        let sr = self.rotation() * self.s;
        let dim = family.matrix_dim();
        let mut m = DMatrix::identity(dim, dim);
        m.view_mut((0, 0), (3, 3)).copy_from(&sr);
        if dim == 4 {
            m.view_mut((0, 3), (3, 1)).copy_from(&self.t);
        }
        m
    }

    pub fn exp(family: Family, x: &Tangent<T>) -> Self {
        let q = exp_quat(&x.phi);
        match family {
            Family::SO3 => Element {
                t: Vector3::zeros(),
                q,
                s: T::one(),
            },
            Family::SE3 => Element {
                t: v_matrix(&x.phi) * x.rho,
                q,
                s: T::one(),
            },
            Family::RxSO3 => Element {
                t: Vector3::zeros(),
                q,
                s: x.sigma.exp(),
            },
            Family::Sim3 => Element {
                t: similarity_w(&x.phi, x.sigma) * x.rho,
                q,
                s: x.sigma.exp(),
            },
        }
    }

    /// Principal logarithm. Returns `None` when the translation map is
    /// singular (only possible for a Sim3 element with rotation angle 2*pi*k
    /// and unit scale, which the principal branch never produces).
    pub fn log(&self, family: Family) -> Option<Tangent<T>> {
        let phi = log_quat(&self.q);
        let x = match family {
            Family::SO3 => Tangent {
                rho: Vector3::zeros(),
                phi,
                sigma: T::zero(),
            },
            Family::SE3 => Tangent {
                rho: v_inverse(&phi) * self.t,
                phi,
                sigma: T::zero(),
            },
            Family::RxSO3 => Tangent {
                rho: Vector3::zeros(),
                phi,
                sigma: self.s.ln(),
            },
            Family::Sim3 => {
                let sigma = self.s.ln();
                let w = similarity_w(&phi, sigma).try_inverse()?;
                Tangent {
                    rho: w * self.t,
                    phi,
                    sigma,
                }
            }
        };
        Some(x)
    }
}

impl<T: Real> Tangent<T> {
    pub fn zero() -> Self {
        Tangent {
            rho: Vector3::zeros(),
            phi: Vector3::zeros(),
            sigma: T::zero(),
        }
    }

    pub fn load(family: Family, item: &[T]) -> Self {
        let mut x = Tangent::zero();
        match family {
            Family::SO3 => x.phi = Vector3::new(item[0], item[1], item[2]),
            Family::SE3 => {
                x.rho = Vector3::new(item[0], item[1], item[2]);
                x.phi = Vector3::new(item[3], item[4], item[5]);
            }
            Family::Sim3 => {
                x.rho = Vector3::new(item[0], item[1], item[2]);
                x.phi = Vector3::new(item[3], item[4], item[5]);
                x.sigma = item[6];
            }
            Family::RxSO3 => {
                x.phi = Vector3::new(item[0], item[1], item[2]);
                x.sigma = item[3];
            }
        }
        x
    }

    pub fn store(&self, family: Family, out: &mut [T]) {
        match family {
            Family::SO3 => out[..3].copy_from_slice(self.phi.as_slice()),
            Family::SE3 => {
                out[..3].copy_from_slice(self.rho.as_slice());
                out[3..6].copy_from_slice(self.phi.as_slice());
            }
            Family::Sim3 => {
                out[..3].copy_from_slice(self.rho.as_slice());
                out[3..6].copy_from_slice(self.phi.as_slice());
                out[6] = self.sigma;
            }
            Family::RxSO3 => {
                out[..3].copy_from_slice(self.phi.as_slice());
                out[3] = self.sigma;
            }
        }
    }

    /// Matrix (hat) form of the algebra element: 3x3 `sigma I + hat(phi)` for
    /// so3/rxso3, 4x4 `[[sigma I + hat(phi), rho], [0, 0]]` for se3/sim3.
    pub fn hat_matrix(&self, family: Family) -> DMatrix<T> {
        let dim = family.matrix_dim();
        let mut m = DMatrix::zeros(dim, dim);
        let top = hat(&self.phi) + Matrix3::identity() * self.sigma;
        m.view_mut((0, 0), (3, 3)).copy_from(&top);
        if dim == 4 {
            m.view_mut((0, 3), (3, 1)).copy_from(&self.rho);
        }
        m
    }
}

/// `M_k(sigma) = integral_0^1 s^k e^(sigma s) ds` for k = 0..=6.
fn exp_moments<T: Real>(sigma: T) -> [T; 7] {
    let mut m = [T::zero(); 7];
    if sigma.abs() <= T::one() {
        // sum_j sigma^j / (j! (k + j + 1))
        for (k, mk) in m.iter_mut().enumerate() {
            let mut term = T::one();
            let mut sum = T::zero();
            for j in 0..40 {
                let add = term / T::lit((k + j + 1) as f64);
                sum += add;
                if add.abs() <= T::machine_eps() * sum.abs() {
                    break;
                }
                term = term * sigma / T::lit((j + 1) as f64);
            }
            *mk = sum;
        }
    } else {
        let e = sigma.exp();
        m[0] = sigma.exp_m1() / sigma;
        for k in 1..7 {
            m[k] = (e - T::lit(k as f64) * m[k - 1]) / sigma;
        }
    }
    m
}

/// Translation map of the similarity exponential,
/// `W = integral_0^1 exp(s (sigma I + hat(phi))) ds = a0 I + c1 hat + c2 hat^2`.
pub fn similarity_w<T: Real>(phi: &Vector3<T>, sigma: T) -> Matrix3<T> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let (a0, c1, c2) = if theta < T::series_threshold() {
        let m = exp_moments(sigma);
        let t4 = theta2 * theta2;
        (
            m[0],
            m[1] - theta2 / T::lit(6.0) * m[3] + t4 / T::lit(120.0) * m[5],
            m[2] / T::lit(2.0) - theta2 / T::lit(24.0) * m[4] + t4 / T::lit(720.0) * m[6],
        )
    } else {
        let a0 = if sigma == T::zero() {
            T::one()
        } else {
            sigma.exp_m1() / sigma
        };
        let e = sigma.exp();
        let (st, ct) = (theta.sin(), theta.cos());
        let den = sigma * sigma + theta2;
        let int_sin = (e * (sigma * st - theta * ct) + theta) / den;
        let int_cos = (e * (sigma * ct + theta * st) - sigma) / den;
        (a0, int_sin / theta, (a0 - int_cos) / theta2)
    };
    let k = hat(phi);
    Matrix3::identity() * a0 + k * c1 + k * k * c2
}
