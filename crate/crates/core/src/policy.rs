use serde::{Deserialize, Serialize};

use crate::boundary::Boundary;
use crate::model::{waterfill_raw, ModelParams};
use crate::scalar::{lit, Real};

/// Data power rule. Powers are total powers in diffusion units (N times the
/// per-channel-use power).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataRule<T> {
    WaterFilling { lambda: T },
    OnOff { mu0: T, p0: T },
}

impl<T: Real> DataRule<T> {
    #[inline]
    pub fn power(&self, u: T, theta: T, params: &ModelParams<T>) -> T {
        match *self {
            DataRule::WaterFilling { lambda } => {
                params.n() * waterfill_raw(u, theta.max(lit(1e-12)), lambda, params.sigma_z2)
            }
            DataRule::OnOff { mu0, p0 } => {
                if u > mu0 {
                    p0
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn is_well_formed(&self) -> bool {
        match *self {
            DataRule::WaterFilling { lambda } => lambda.is_finite() && lambda > T::zero(),
            DataRule::OnOff { mu0, p0 } => {
                mu0.is_finite() && mu0 >= T::zero() && p0.is_finite() && p0 >= T::zero()
            }
        }
    }
}

/// Pilot switching boundary plus data rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    pub boundary: Boundary<T>,
    pub data_rule: DataRule<T>,
}

impl<T: Real> Policy<T> {
    pub fn new(boundary: Boundary<T>, data_rule: DataRule<T>) -> Self {
        Self { boundary, data_rule }
    }

    /// Train at peak power iff theta >= boundary(mu_hat). Ties train.
    #[inline]
    pub fn trains(&self, mu_hat: T, theta: T) -> bool {
        theta >= self.boundary.theta_at(mu_hat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::GridSpec;

    #[test]
    fn ties_train() {
        let g = GridSpec { k: 10, u_max: 5.0 };
        let pol = Policy::new(Boundary::vertical(0.5, 1.0, &g), DataRule::WaterFilling { lambda: 1.0 });
        assert!(pol.trains(2.0, 0.5));
        assert!(!pol.trains(2.0, 0.4999));
    }

    #[test]
    fn onoff_power_is_a_step() {
        let p = ModelParams::<f64>::default();
        let r = DataRule::OnOff { mu0: 1.0, p0: 3.0 };
        assert_eq!(r.power(1.0, 0.5, &p), 0.0);
        assert_eq!(r.power(1.01, 0.5, &p), 3.0);
        assert!(!DataRule::OnOff { mu0: -1.0, p0: 3.0 }.is_well_formed());
        assert!(!DataRule::WaterFilling { lambda: 0.0 }.is_well_formed());
    }
}
