use std::fmt;

use nalgebra::RealField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Precision {
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("unknown precision '{other}' (expected f32 or f64)")),
        }
    }
}

/// Floating point scalar usable in batched Lie computations.
pub trait Real: RealField + Copy + Default + fmt::Display + Send + Sync + 'static {
    const PRECISION: Precision;

    fn lit(v: f64) -> Self;

    fn to_f64(self) -> f64;

    /// Smallest `eps` with `1 + eps != 1`.
    fn machine_eps() -> Self;

    /// `eps^(1/4)`, the switch-over angle for the series that divide by `theta^3`.
    fn series_threshold() -> Self;
}

impl Real for f64 {
    const PRECISION: Precision = Precision::F64;

    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    #[inline]
    fn machine_eps() -> Self {
        f64::EPSILON
    }

    #[inline]
    fn series_threshold() -> Self {
        // f64::EPSILON.powf(0.25)
        1.220_703_125e-4
    }
}

impl Real for f32 {
    const PRECISION: Precision = Precision::F32;

    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn machine_eps() -> Self {
        f32::EPSILON
    }

    #[inline]
    fn series_threshold() -> Self {
        // f32::EPSILON.powf(0.25)
        0.018_581_36
    }
}
