use std::fmt;

pub const LAMBDA_MIN: f64 = 1e-12;
pub const LAMBDA_MAX: f64 = 1e12;

/// Damping update rule applied after every trial step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Strategy {
    /// Fixed damping; a step is kept only if it lowers the loss.
    Constant { damping: f64 },
    /// Halve the damping on very good steps, double it on poor ones.
    Adaptive {
        damping: f64,
        up: f64,
        down: f64,
        high: f64,
        low: f64,
    },
    /// Nielsen's rule with rejection multiplier `nu`.
    TrustRegion { damping: f64, nu: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub lambda: f64,
    pub accept: bool,
}

impl Strategy {
    pub fn constant(damping: f64) -> Self {
        Strategy::Constant { damping }
    }

    pub fn adaptive(damping: f64) -> Self {
        Strategy::Adaptive {
            damping,
            up: 2.0,
            down: 2.0,
            high: 0.75,
            low: 0.25,
        }
    }

    pub fn trust_region(damping: f64) -> Self {
        Strategy::TrustRegion { damping, nu: 2.0 }
    }

    pub fn from_name(name: &str, damping: f64) -> Result<Self, String> {
        if !(damping > 0.0) {
            return Err(format!("damping must be positive, got {damping}"));
        }
        match name {
            "constant" => Ok(Self::constant(damping)),
            "adaptive" => Ok(Self::adaptive(damping)),
            "trust-region" | "trustregion" => Ok(Self::trust_region(damping)),
            other => Err(format!("unknown strategy '{other}' (constant, adaptive, trust-region)")),
        }
    }

    pub fn initial_damping(&self) -> f64 {
        match *self {
            Strategy::Constant { damping }
            | Strategy::Adaptive { damping, .. }
            | Strategy::TrustRegion { damping, .. } => clamp(damping),
        }
    }

    /// Decides on a trial step with gain ratio `gain` taken at damping
    /// `lambda`, returning the next damping.
    ///
    /// The gain ratio is positive exactly when the loss decreased, since the
    /// predicted reduction of a damped step is never negative.
    pub fn update(&mut self, lambda: f64, gain: f64) -> Decision {
        let accept = gain > 0.0;
        let next = match self {
            Strategy::Constant { .. } => lambda,
            Strategy::Adaptive {
                up, down, high, low, ..
            } => {
                if gain > *high {
                    lambda / *down
                } else if gain < *low {
                    lambda * *up
                } else {
                    lambda
                }
            }
            Strategy::TrustRegion { nu, .. } => {
                if accept {
                    *nu = 2.0;
                    let t = 2.0 * gain - 1.0;
                    lambda * (1.0 / 3.0f64).max(1.0 - t * t * t)
                } else {
                    let scaled = lambda * *nu;
                    *nu *= 2.0;
                    scaled
                }
            }
        };
        Decision {
            lambda: clamp(next),
            accept,
        }
    }
}

/// Free-function form of [`Strategy::update`].
pub fn strategy_update(strategy: &mut Strategy, lambda: f64, gain: f64) -> Decision {
    strategy.update(lambda, gain)
}

fn clamp(lambda: f64) -> f64 {
    lambda.clamp(LAMBDA_MIN, LAMBDA_MAX)
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Constant { damping } => write!(f, "constant({damping:e})"),
            Strategy::Adaptive { damping, .. } => write!(f, "adaptive({damping:e})"),
            Strategy::TrustRegion { damping, .. } => write!(f, "trust-region({damping:e})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trust_region_examples() {
        let mut s = Strategy::trust_region(1.0);
        let d = s.update(0.9, 1.0);
        assert!(d.accept);
        assert!((d.lambda - 0.3).abs() < 1e-15);

        let mut s = Strategy::trust_region(1.0);
        let d = s.update(0.5, -0.5);
        assert!(!d.accept);
        assert_eq!(d.lambda, 1.0);
        assert_eq!(s, Strategy::TrustRegion { damping: 1.0, nu: 4.0 });
        // accepted step resets nu
        s.update(1.0, 0.5);
        assert_eq!(s, Strategy::TrustRegion { damping: 1.0, nu: 2.0 });
    }

    #[test]
    fn constant_keeps_damping() {
        let mut s = Strategy::constant(1e-4);
        let d = s.update(1e-4, 0.3);
        assert_eq!(d, Decision { lambda: 1e-4, accept: true });
        assert!(!s.update(1e-4, -1.0).accept);
    }

    #[test]
    fn adaptive_rules() {
        let mut s = Strategy::adaptive(1.0);
        assert_eq!(s.update(1.0, 0.9), Decision { lambda: 0.5, accept: true });
        assert_eq!(s.update(1.0, 0.5), Decision { lambda: 1.0, accept: true });
        assert_eq!(s.update(1.0, 0.1), Decision { lambda: 2.0, accept: true });
        assert_eq!(s.update(1.0, -0.1), Decision { lambda: 2.0, accept: false });
    }

    #[test]
    fn damping_is_clamped() {
        let mut s = Strategy::adaptive(1.0);
        assert_eq!(s.update(1e12, -1.0).lambda, LAMBDA_MAX);
        assert_eq!(s.update(1e-12, 1.0).lambda, LAMBDA_MIN);
        assert_eq!(Strategy::constant(0.0).initial_damping(), LAMBDA_MIN);
        assert!(Strategy::from_name("dogleg", 1.0).is_err());
    }
}
