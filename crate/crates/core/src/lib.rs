//! Batched Lie groups with numerically stable exponential and logarithm maps,
//! tangent-space Jacobians, and a damped Gauss-Newton (Levenberg-Marquardt)
//! stack with robust kernels, applied to SE3 pose graphs and IMU
//! preintegration.
//!
//! Conventions used throughout the crate:
//!
//! * quaternions are stored `(x, y, z, w)`;
//! * SE3 items are `(tx, ty, tz, qx, qy, qz, qw)`, Sim3 appends the scale,
//!   RxSO3 is `(qx, qy, qz, qw, s)`;
//! * tangents put translation first: se3 is `(rho, phi)`, sim3 is
//!   `(rho, phi, sigma)`, rxso3 is `(phi, sigma)`;
//! * increments are applied on the left, `g <- Exp(delta) * g`.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// `support` lists coordinate ranges; a single range is a valid list.
#![allow(clippy::single_range_in_vec_init)]

pub mod bench;
pub mod demo;
pub mod diff;
mod error;
pub mod imu;
pub mod lie;
pub mod optim;
pub mod pose_graph;

pub use error::{Error, Result};
