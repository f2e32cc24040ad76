//! Batched Lie groups and algebras: SO3, SE3, Sim3 and RxSO3.

mod batch;
pub mod element;
pub mod jacobians;
mod kind;
mod scalar;
pub mod so3;

pub use batch::{
    act, broadcast_shapes, compose, exp_map, inverse, log_map, to_matrix, LieBatch, PointBatch,
    CORRUPT_NORM_DEVIATION,
};
pub use kind::{Family, Kind};
pub use scalar::{Precision, Real};
pub use so3::{hat, right_jacobian as right_jacobian_so3};
