//! Closed-form SE3 Jacobians in `(rho, phi)` ordering.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use super::element::Element;
use super::scalar::Real;
use super::so3::{hat, left_jacobian, left_jacobian_inverse};

/// Coupling block `Q(rho, phi)` of the SE3 left Jacobian.
fn q_block<T: Real>(rho: &Vector3<T>, phi: &Vector3<T>) -> Matrix3<T> {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let (c1, c2, c3) = if theta < T::series_threshold() {
        (
            T::lit(1.0 / 6.0) - theta2 / T::lit(120.0),
            T::lit(1.0 / 24.0) - theta2 / T::lit(720.0),
            T::lit(1.0 / 120.0) - theta2 / T::lit(2520.0),
        )
    } else {
        let (s, c) = (theta.sin(), theta.cos());
        let t3 = theta2 * theta;
        let t4 = theta2 * theta2;
        let two = T::lit(2.0);
        (
            (theta - s) / t3,
            (theta2 + two * c - two) / (two * t4),
            (two * theta - T::lit(3.0) * s + theta * c) / (two * t4 * theta),
        )
    };
    let p = hat(phi);
    let r = hat(rho);
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    r * T::lit(0.5) + (pr + rp + prp) * c1 + (p * pr + rp * p - prp * T::lit(3.0)) * c2
        + (prp * p + p * prp) * c3
}

fn split<T: Real>(xi: &Vector6<T>) -> (Vector3<T>, Vector3<T>) {
    (
        Vector3::new(xi[0], xi[1], xi[2]),
        Vector3::new(xi[3], xi[4], xi[5]),
    )
}

/// Left Jacobian of SE3: `Exp(xi + d) ~ Exp(Jl d) Exp(xi)`.
pub fn se3_left_jacobian<T: Real>(xi: &Vector6<T>) -> Matrix6<T> {
    let (rho, phi) = split(xi);
    let jl = left_jacobian(&phi);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&jl);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&jl);
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&q_block(&rho, &phi));
    out
}

pub fn se3_left_jacobian_inverse<T: Real>(xi: &Vector6<T>) -> Matrix6<T> {
    let (rho, phi) = split(xi);
    let jl_inv = left_jacobian_inverse(&phi);
    let q = q_block(&rho, &phi);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&jl_inv);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&jl_inv);
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-jl_inv * q * jl_inv));
    out
}

/// Right Jacobian of SE3, `Jr(xi) = Jl(-xi)`: `Log(Exp(xi) Exp(d)) ~ xi + Jr^-1 d`.
pub fn se3_right_jacobian<T: Real>(xi: &Vector6<T>) -> Matrix6<T> {
    se3_left_jacobian(&-xi)
}

pub fn se3_right_jacobian_inverse<T: Real>(xi: &Vector6<T>) -> Matrix6<T> {
    se3_left_jacobian_inverse(&-xi)
}

/// Adjoint of an SE3 element: `g Exp(d) g^-1 = Exp(Ad_g d)`.
pub fn se3_adjoint<T: Real>(g: &Element<T>) -> Matrix6<T> {
    let r = g.rotation();
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(hat(&g.t) * r));
    out
}
