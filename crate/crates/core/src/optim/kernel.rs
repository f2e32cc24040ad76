use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Robust kernel applied to the squared cost `c = r^T W r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    Trivial,
    Huber(f64),
    Cauchy(f64),
}

impl Kernel {
    /// Returns `(rho(c), rho'(c))`.
    pub fn apply(&self, c: f64) -> Result<(f64, f64)> {
        if !(c >= 0.0) {
            return Err(Error::Domain(format!("kernel input must be non-negative, got {c}")));
        }
        Ok(match *self {
            Kernel::Trivial => (c, 1.0),
            Kernel::Huber(delta) => {
                let d2 = delta * delta;
                if c <= d2 {
                    (c, 1.0)
                } else {
                    let root = c.sqrt();
                    (2.0 * delta * root - d2, delta / root)
                }
            }
            Kernel::Cauchy(delta) => {
                let d2 = delta * delta;
                (d2 * (c / d2).ln_1p(), 1.0 / (1.0 + c / d2))
            }
        })
    }

    /// Builds a kernel from its CLI name and width.
    pub fn from_name(name: &str, delta: f64) -> Result<Self, String> {
        let kind: KernelName = name.parse()?;
        if kind != KernelName::Trivial && !(delta > 0.0) {
            return Err(format!("kernel width must be positive, got {delta}"));
        }
        Ok(match kind {
            KernelName::Trivial => Kernel::Trivial,
            KernelName::Huber => Kernel::Huber(delta),
            KernelName::Cauchy => Kernel::Cauchy(delta),
        })
    }
}

pub fn apply_kernel(kernel: &Kernel, c: f64) -> Result<(f64, f64)> {
    kernel.apply(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelName {
    Trivial,
    Huber,
    Cauchy,
}

impl FromStr for KernelName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trivial" => Ok(KernelName::Trivial),
            "huber" => Ok(KernelName::Huber),
            "cauchy" => Ok(KernelName::Cauchy),
            other => Err(format!("unknown kernel '{other}' (trivial, huber, cauchy)")),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Trivial => write!(f, "trivial"),
            Kernel::Huber(d) => write!(f, "huber({d})"),
            Kernel::Cauchy(d) => write!(f, "cauchy({d})"),
        }
    }
}
