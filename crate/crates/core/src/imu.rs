//! IMU preintegration with first-order covariance propagation.
//!
//! Rotation errors are right perturbations, `dR_true = dR Exp(dphi)`, and the
//! 9x9 covariance is ordered `(dphi, dv, dp)`. Noise densities are
//! continuous-time; one step of length `dt` injects white noise with
//! variance `sigma^2 / dt`.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::lie::so3::{exp_quat, hat, quat_identity, quat_mul, quat_normalize, quat_rotate, quat_to_matrix, right_jacobian};
use crate::{Error, Result};

pub type Matrix9 = SMatrix<f64, 9, 9>;
pub type Quat = [f64; 4];

/// Standard gravity in a z-up world frame.
pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuNoise {
    /// Gyroscope noise density, rad/s/sqrt(Hz).
    pub gyro: f64,
    /// Accelerometer noise density, m/s^2/sqrt(Hz).
    pub accel: f64,
}

impl ImuNoise {
    pub fn new(gyro: f64, accel: f64) -> Result<Self> {
        if !(gyro >= 0.0 && accel >= 0.0) {
            return Err(Error::Domain(format!(
                "noise densities must be non-negative, got gyro {gyro}, accel {accel}"
            )));
        }
        Ok(ImuNoise { gyro, accel })
    }

    pub fn zero() -> Self {
        ImuNoise { gyro: 0.0, accel: 0.0 }
    }
}

/// Accumulated motion since the start of preintegration.
#[derive(Clone, Debug, PartialEq)]
pub struct PreintState {
    pub delta_t: f64,
    pub delta_r: Quat,
    pub delta_v: Vector3<f64>,
    pub delta_p: Vector3<f64>,
    pub cov: Matrix9,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
}

impl Default for PreintState {
    fn default() -> Self {
        PreintState::new(Vector3::zeros(), Vector3::zeros())
    }
}

impl PreintState {
    pub fn new(gyro_bias: Vector3<f64>, accel_bias: Vector3<f64>) -> Self {
        PreintState {
            delta_t: 0.0,
            delta_r: quat_identity(),
            delta_v: Vector3::zeros(),
            delta_p: Vector3::zeros(),
            cov: Matrix9::zeros(),
            gyro_bias,
            accel_bias,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_matrix(&self.delta_r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: Quat,
}

impl Default for NavState {
    fn default() -> Self {
        NavState {
            p: Vector3::zeros(),
            v: Vector3::zeros(),
            q: quat_identity(),
        }
    }
}

/// One left-point Euler step.
pub fn integrate_step(
    s: &PreintState,
    omega: &Vector3<f64>,
    accel: &Vector3<f64>,
    dt: f64,
    noise: &ImuNoise,
) -> Result<PreintState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if omega.iter().chain(accel.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("IMU measurements must be finite".into()));
    }
    let w = omega - s.gyro_bias;
    let a = accel - s.accel_bias;
    let r = s.rotation_matrix();
    let ra = quat_rotate(&s.delta_r, &a);
    let dt2 = dt * dt;
    let step = exp_quat(&(w * dt));

    let mut out = s.clone();
    out.delta_p = s.delta_p + s.delta_v * dt + ra * (0.5 * dt2);
    out.delta_v = s.delta_v + ra * dt;
    out.delta_r = quat_normalize(&quat_mul(&s.delta_r, &step));
    out.delta_t = s.delta_t + dt;

    let r_hat_a = r * hat(&a);
    let mut a_mat = Matrix9::identity();
    a_mat.fixed_view_mut::<3, 3>(0, 0).copy_from(&quat_to_matrix(&step).transpose());
    a_mat.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-r_hat_a * dt));
    a_mat.fixed_view_mut::<3, 3>(6, 0).copy_from(&(-r_hat_a * (0.5 * dt2)));
    a_mat.fixed_view_mut::<3, 3>(6, 3).copy_from(&(Matrix3::identity() * dt));

    let mut b_g = SMatrix::<f64, 9, 3>::zeros();
    b_g.fixed_view_mut::<3, 3>(0, 0).copy_from(&(right_jacobian(&(w * dt)) * dt));
    let mut b_a = SMatrix::<f64, 9, 3>::zeros();
    b_a.fixed_view_mut::<3, 3>(3, 0).copy_from(&(r * dt));
    b_a.fixed_view_mut::<3, 3>(6, 0).copy_from(&(r * (0.5 * dt2)));

    let qg = noise.gyro * noise.gyro / dt;
    let qa = noise.accel * noise.accel / dt;
    let cov = a_mat * s.cov * a_mat.transpose()
        + b_g * b_g.transpose() * qg
        + b_a * b_a.transpose() * qa;
    out.cov = (cov + cov.transpose()) * 0.5;
    Ok(out)
}

/// Left fold of [`integrate_step`] over equal-length series.
pub fn integrate_batch(
    s: &PreintState,
    omegas: &[Vector3<f64>],
    accels: &[Vector3<f64>],
    dts: &[f64],
    noise: &ImuNoise,
) -> Result<PreintState> {
    if omegas.len() != accels.len() || omegas.len() != dts.len() {
        return Err(Error::Length {
            expected: omegas.len(),
            found: if accels.len() != omegas.len() { accels.len() } else { dts.len() },
        });
    }
    let mut out = s.clone();
    for ((w, a), dt) in omegas.iter().zip(accels).zip(dts) {
        out = integrate_step(&out, w, a, *dt, noise)?;
    }
    Ok(out)
}

/// Applies preintegrated deltas to a starting navigation state.
pub fn predict(x0: &NavState, s: &PreintState, gravity: &Vector3<f64>) -> NavState {
    let t = s.delta_t;
    NavState {
        q: quat_normalize(&quat_mul(&x0.q, &s.delta_r)),
        v: x0.v + gravity * t + quat_rotate(&x0.q, &s.delta_v),
        p: x0.p + x0.v * t + gravity * (0.5 * t * t) + quat_rotate(&x0.q, &s.delta_p),
    }
}
