//! Rotation primitives on unit quaternions stored `(x, y, z, w)`.
//!
//! Every closed form that divides by a power of the rotation angle has a
//! truncated series companion. The exponential switches at machine epsilon;
//! the `V`, `V^-1` and right-Jacobian series switch at `eps^(1/4)` because
//! their `1/theta^3` terms lose precision well before `theta` reaches `eps`.

use nalgebra::{Matrix3, Vector3};

use super::scalar::Real;

pub type Quat<T> = [T; 4];

#[inline]
pub fn quat_identity<T: Real>() -> Quat<T> {
    [T::zero(), T::zero(), T::zero(), T::one()]
}

/// Hamilton product `a * b`.
#[inline]
pub fn quat_mul<T: Real>(a: &Quat<T>, b: &Quat<T>) -> Quat<T> {
    let [ax, ay, az, aw] = *a;
    let [bx, by, bz, bw] = *b;
    [
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ]
}

#[inline]
pub fn quat_conj<T: Real>(q: &Quat<T>) -> Quat<T> {
    [-q[0], -q[1], -q[2], q[3]]
}

#[inline]
pub fn quat_norm<T: Real>(q: &Quat<T>) -> T {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

#[inline]
pub fn quat_normalize<T: Real>(q: &Quat<T>) -> Quat<T> {
    let n = quat_norm(q);
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// Rotates `p` by `q`: `p + 2w (u x p) + 2 u x (u x p)`.
///
/// The expression is even in `q`, so `q` and `-q` give bitwise-equal results.
#[inline]
pub fn quat_rotate<T: Real>(q: &Quat<T>, p: &Vector3<T>) -> Vector3<T> {
    let u = Vector3::new(q[0], q[1], q[2]);
    let two = T::lit(2.0);
    let uxp = u.cross(p) * two;
    p + uxp * q[3] + u.cross(&uxp)
}

pub fn quat_to_matrix<T: Real>(q: &Quat<T>) -> Matrix3<T> {
    let [x, y, z, w] = *q;
    let one = T::one();
    let two = T::lit(2.0);
    Matrix3::new(
        one - two * (y * y + z * z),
        two * (x * y - z * w),
        two * (x * z + y * w),
        two * (x * y + z * w),
        one - two * (x * x + z * z),
        two * (y * z - x * w),
        two * (x * z - y * w),
        two * (y * z + x * w),
        one - two * (x * x + y * y),
    )
}

/// Exponential map so3 -> unit quaternion, with the Taylor branch below `eps`.
pub fn exp_quat<T: Real>(phi: &Vector3<T>) -> Quat<T> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let half = T::lit(0.5);
    let (gamma, w) = if theta > T::machine_eps() {
        (
            (theta * half).sin() / theta,
            (theta * half).cos(),
        )
    } else {
        let theta4 = theta2 * theta2;
        (
            half - theta2 / T::lit(48.0) + theta4 / T::lit(3840.0),
            T::one() - theta2 / T::lit(8.0) + theta4 / T::lit(384.0),
        )
    };
    [phi.x * gamma, phi.y * gamma, phi.z * gamma, w]
}

/// Principal logarithm of a unit quaternion; `q` and `-q` map to the same
/// rotation vector (the quaternion is first flipped to `w >= 0`).
pub fn log_quat<T: Real>(q: &Quat<T>) -> Vector3<T> {
    let (v, w) = if q[3] < T::zero() {
        (Vector3::new(-q[0], -q[1], -q[2]), -q[3])
    } else {
        (Vector3::new(q[0], q[1], q[2]), q[3])
    };
    let n2 = v.norm_squared();
    let n = n2.sqrt();
    let scale = if n < T::series_threshold() {
        // 2 atan(n / w) / n = (2 / w) (1 - x^2 / 3 + x^4 / 5), x = n / w
        let x2 = n2 / (w * w);
        T::lit(2.0) / w * (T::one() - x2 / T::lit(3.0) + x2 * x2 / T::lit(5.0))
    } else {
        T::lit(2.0) * n.atan2(w) / n
    };
    v * scale
}

/// Skew-symmetric matrix with `hat(x) * y = x.cross(y)`.
#[inline]
pub fn hat<T: Real>(x: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -x.z, x.y, x.z, z, -x.x, -x.y, x.x, z)
}

#[inline]
pub fn vee<T: Real>(m: &Matrix3<T>) -> Vector3<T> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Coefficients `((1 - cos t) / t^2, (t - sin t) / t^3)`.
pub(crate) fn v_coefficients<T: Real>(theta2: T) -> (T, T) {
    if theta2.sqrt() < T::series_threshold() {
        let theta4 = theta2 * theta2;
        (
            T::lit(0.5) - theta2 / T::lit(24.0) + theta4 / T::lit(720.0),
            T::lit(1.0 / 6.0) - theta2 / T::lit(120.0) + theta4 / T::lit(5040.0),
        )
    } else {
        let theta = theta2.sqrt();
        let s = (theta * T::lit(0.5)).sin();
        (
            T::lit(2.0) * s * s / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    }
}

/// `V(phi) = I + (1 - cos t)/t^2 hat + (t - sin t)/t^3 hat^2`, which is also
/// the left Jacobian of SO3.
pub fn v_matrix<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    let (b, c) = v_coefficients(phi.norm_squared());
    let k = hat(phi);
    Matrix3::identity() + k * b + k * k * c
}

/// Coefficient `(1 - t sin t / (2 (1 - cos t))) / t^2` of `hat^2` in `V^-1`.
pub(crate) fn v_inverse_coefficient<T: Real>(theta2: T) -> T {
    let theta = theta2.sqrt();
    if theta < T::series_threshold() {
        T::lit(1.0 / 12.0) + theta2 / T::lit(720.0) + theta2 * theta2 / T::lit(30240.0)
    } else {
        let half = theta * T::lit(0.5);
        (T::one() - half * half.cos() / half.sin()) / theta2
    }
}

/// `V(phi)^-1 = I - hat/2 + e hat^2`; also the inverse left Jacobian.
pub fn v_inverse<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    let e = v_inverse_coefficient(phi.norm_squared());
    let k = hat(phi);
    Matrix3::identity() - k * T::lit(0.5) + k * k * e
}

/// Right Jacobian `Jr(phi) = I - (1 - cos t)/t^2 hat + (t - sin t)/t^3 hat^2`.
pub fn right_jacobian<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    let (b, c) = v_coefficients(phi.norm_squared());
    let k = hat(phi);
    Matrix3::identity() - k * b + k * k * c
}

/// Left Jacobian, `Jl(phi) = Jr(-phi)`.
pub fn left_jacobian<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    v_matrix(phi)
}

pub fn left_jacobian_inverse<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    v_inverse(phi)
}

pub fn right_jacobian_inverse<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    v_inverse(&-phi)
}
