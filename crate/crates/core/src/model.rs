//! Channel and system constants, the achievable-rate bound, the Lagrangian
//! and the water-filling data power.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct ModelParams<T> {
    pub sigma_h2: T,
    pub sigma_z2: T,
    pub rho: T,
    /// Channel uses per time unit (N).
    pub n_scale: usize,
    /// Symbols per coherence block (M).
    pub m_block: usize,
    pub eps_max: T,
    pub p_av: T,
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        Self {
            sigma_h2: T::one(),
            sigma_z2: T::one(),
            rho: T::one(),
            n_scale: 1000,
            m_block: 5,
            eps_max: lit(15.0),
            p_av: T::one(),
        }
    }
}

impl<T: Real> ModelParams<T> {
    pub fn n(&self) -> T {
        from_usize(self.n_scale)
    }

    pub fn m(&self) -> T {
        from_usize(self.m_block)
    }

    /// Block duration in time units, M/N.
    pub fn dt(&self) -> T {
        self.m() / self.n()
    }

    /// Correlation between adjacent blocks, 1 - rho*dt.
    pub fn r(&self) -> T {
        T::one() - self.rho * self.dt()
    }

    /// Every violated invariant, in a fixed order. Empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let pos = |x: T| x.is_finite() && x > T::zero();
        if !pos(self.sigma_h2) {
            v.push("channel variance must be positive".to_string());
        }
        if !pos(self.sigma_z2) {
            v.push("noise variance must be positive".to_string());
        }
        if !pos(self.rho) {
            v.push("decay rate must be positive".to_string());
        }
        if self.n_scale == 0 {
            v.push("N must be a positive integer".to_string());
        }
        if self.m_block == 0 {
            v.push("M must be a positive integer".to_string());
        }
        if self.m_block > self.n_scale {
            v.push("M must not exceed N".to_string());
        }
        if !pos(self.eps_max) {
            v.push("peak training power must be positive".to_string());
        }
        if !(self.p_av.is_finite() && self.p_av >= T::zero()) {
            v.push("average power must be nonnegative".to_string());
        }
        if v.is_empty() {
            let r = self.r();
            if !(r > T::zero() && r < T::one()) {
                v.push("correlation 1 - rho*M/N must lie in (0, 1)".to_string());
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }
}

/// Markov control state: squared estimate magnitude and error variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState<T> {
    pub mu_hat: T,
    pub theta: T,
}

fn check_nonneg<T: Real>(name: &str, x: T) -> Result<()> {
    if !x.is_finite() || x < T::zero() {
        return domain(format!("{name} must be finite and nonnegative, got {x}"));
    }
    Ok(())
}

fn check_pos<T: Real>(name: &str, x: T) -> Result<()> {
    if !x.is_finite() || x <= T::zero() {
        return domain(format!("{name} must be finite and positive, got {x}"));
    }
    Ok(())
}

/// Rate lower bound log(1 + P mu / (P theta + sz2)), nats per channel use.
pub fn rate<T: Real>(p: T, mu_hat: T, theta: T, sigma_z2: T) -> Result<T> {
    check_nonneg("power", p)?;
    check_nonneg("mu_hat", mu_hat)?;
    check_nonneg("theta", theta)?;
    check_nonneg("sigma_z2", sigma_z2)?;
    if p == T::zero() || mu_hat == T::zero() {
        return Ok(T::zero());
    }
    Ok((p * mu_hat / (p * theta + sigma_z2)).ln_1p())
}

/// N * rate(P/N, ...) written without the division so it stays accurate for large N.
#[inline]
pub(crate) fn scaled_rate_raw<T: Real>(p: T, u: T, theta: T, n: T, sigma_z2: T) -> T {
    if p <= T::zero() || u <= T::zero() {
        return T::zero();
    }
    n * (p * u / (p * theta + n * sigma_z2)).ln_1p()
}

pub fn scaled_rate<T: Real>(p_total: T, mu_hat: T, theta: T, params: &ModelParams<T>) -> Result<T> {
    rate(p_total / params.n(), mu_hat, theta, params.sigma_z2)?;
    Ok(scaled_rate_raw(p_total, mu_hat, theta, params.n(), params.sigma_z2))
}

#[inline]
pub(crate) fn waterfill_raw<T: Real>(mu_hat: T, theta: T, lambda: T, sz2: T) -> T {
    let ls = lambda * sz2;
    if mu_hat <= ls {
        return T::zero();
    }
    let two = lit::<T>(2.0);
    let four = lit::<T>(4.0);
    let disc = ls * ls * mu_hat * mu_hat + four * lambda * mu_hat * theta * sz2 * (mu_hat + theta);
    let p = two * sz2 * (mu_hat - ls) / (disc.sqrt() + ls * (two * theta + mu_hat));
    p.max(T::zero())
}

/// Per-channel-use data power maximizing rate - lambda*P. Rationalized form of
/// the positive root so that it stays accurate as theta -> 0.
pub fn waterfill_power<T: Real>(mu_hat: T, theta: T, lambda: T, sigma_z2: T) -> Result<T> {
    check_pos("lambda", lambda)?;
    check_pos("theta", theta)?;
    check_nonneg("mu_hat", mu_hat)?;
    check_pos("sigma_z2", sigma_z2)?;
    Ok(waterfill_raw(mu_hat, theta, lambda, sigma_z2))
}

/// Average training power that holds the error variance at `theta`:
/// 2 rho sz2 (sh2 - theta) / theta^2.
#[inline]
pub fn training_power<T: Real>(theta: T, params: &ModelParams<T>) -> T {
    lit::<T>(2.0) * params.rho * params.sigma_z2 * (params.sigma_h2 - theta) / (theta * theta)
}

/// d/dtheta of `training_power`.
#[inline]
pub(crate) fn training_power_dtheta<T: Real>(theta: T, params: &ModelParams<T>) -> T {
    -lit::<T>(2.0) * params.rho * params.sigma_z2 * (lit::<T>(2.0) * params.sigma_h2 - theta)
        / (theta * theta * theta)
}

#[inline]
pub(crate) fn lagrangian_raw<T: Real>(p: T, u: T, theta: T, lambda: T, params: &ModelParams<T>) -> T {
    scaled_rate_raw(p, u, theta, params.n(), params.sigma_z2) - lambda * (p + training_power(theta, params))
}

/// Partial derivative in theta of N R(P/N, u, theta) at fixed P.
#[inline]
pub(crate) fn scaled_rate_dtheta<T: Real>(p: T, u: T, theta: T, n: T, sz2: T) -> T {
    if p <= T::zero() || u <= T::zero() {
        return T::zero();
    }
    let a = p * theta + n * sz2;
    -n * p * p * u / ((a + p * u) * a)
}

#[inline]
pub(crate) fn lagrangian_dtheta_raw<T: Real>(
    p: T,
    u: T,
    theta: T,
    lambda: T,
    params: &ModelParams<T>,
) -> T {
    scaled_rate_dtheta(p, u, theta, params.n(), params.sigma_z2)
        - lambda * training_power_dtheta(theta, params)
}

fn check_lagrangian_inputs<T: Real>(p: T, u: T, theta: T, lambda: T) -> Result<()> {
    check_nonneg("power", p)?;
    check_nonneg("u", u)?;
    check_pos("theta", theta)?;
    if !lambda.is_finite() || lambda < T::zero() {
        return domain(format!("lambda must be finite and nonnegative, got {lambda}"));
    }
    Ok(())
}

/// N R(P/N, u, theta) - lambda (P + training_power(theta)).
pub fn lagrangian<T: Real>(p: T, u: T, theta: T, lambda: T, params: &ModelParams<T>) -> Result<T> {
    check_lagrangian_inputs(p, u, theta, lambda)?;
    Ok(lagrangian_raw(p, u, theta, lambda, params))
}

pub fn lagrangian_dtheta<T: Real>(
    p: T,
    u: T,
    theta: T,
    lambda: T,
    params: &ModelParams<T>,
) -> Result<T> {
    check_lagrangian_inputs(p, u, theta, lambda)?;
    Ok(lagrangian_dtheta_raw(p, u, theta, lambda, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(n: usize, rho: f64) -> ModelParams<f64> {
        ModelParams { n_scale: n, m_block: 1, rho, ..Default::default() }
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate(1.0, 0.0, 0.3, 1.0).unwrap(), 0.0);
        assert_relative_eq!(rate(1.0, 1.0, 0.0, 1.0).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(rate(2.0, 1.0, 0.5, 1.0).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert!(rate(-1.0, 1.0, 0.5, 1.0).is_err());
        assert!(rate(1.0, f64::NAN, 0.5, 1.0).is_err());
    }

    #[test]
    fn scaled_rate_examples() {
        let p = unit(1000, 1.0);
        assert_eq!(scaled_rate(0.0, 1.0, 0.2, &p).unwrap(), 0.0);
        assert_relative_eq!(scaled_rate(10.0, 1.0, 0.0, &p).unwrap(), 1000.0 * 1.01f64.ln(), max_relative = 1e-12);
        let p1 = unit(1, 1.0);
        assert_relative_eq!(
            scaled_rate(0.7, 1.3, 0.2, &p1).unwrap(),
            rate(0.7, 1.3, 0.2, 1.0).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn waterfill_examples() {
        assert_eq!(waterfill_power(0.4, 0.3, 0.5, 1.0).unwrap(), 0.0);
        assert_relative_eq!(waterfill_power(2.0, 1e-9, 0.5, 1.0).unwrap(), 1.5, max_relative = 1e-6);
        assert_relative_eq!(waterfill_power(4.0, 1.0, 1.0, 1.0).unwrap(), 0.3798, epsilon = 1e-4);
        assert!(waterfill_power(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(waterfill_power(1.0, 0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn waterfill_satisfies_first_order_condition() {
        let (mu, th, lam) = (3.0, 0.4, 0.7);
        let p = waterfill_power(mu, th, lam, 1.0).unwrap();
        let d = (th + mu) / (p * (th + mu) + 1.0) - th / (p * th + 1.0);
        assert_relative_eq!(d, lam, max_relative = 1e-12);
    }

    #[test]
    fn lagrangian_examples() {
        let p = ModelParams { n_scale: 1, m_block: 1, ..Default::default() };
        assert_eq!(lagrangian(0.0, 2.0, 1.0, 0.3, &p).unwrap(), 0.0);
        assert_relative_eq!(
            lagrangian(1.0, 1.0, 0.5, 0.1, &p).unwrap(),
            (1.0f64 + 1.0 / 1.5).ln() - 0.5,
            max_relative = 1e-12
        );
        assert_relative_eq!(lagrangian_dtheta(0.0, 1.0, 0.5, 1.0, &p).unwrap(), 24.0, max_relative = 1e-12);
        assert_relative_eq!(lagrangian_dtheta(1.0, 1.0, 1.0, 0.0, &p).unwrap(), -1.0 / 6.0, max_relative = 1e-12);
        assert!(lagrangian(1.0, 1.0, 0.0, 0.1, &p).is_err());
    }

    #[test]
    fn lambda_zero_is_scaled_rate() {
        let p = unit(50, 1.0);
        assert_relative_eq!(
            lagrangian(3.0, 1.2, 0.4, 0.0, &p).unwrap(),
            scaled_rate(3.0, 1.2, 0.4, &p).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn params_invariants() {
        let p = ModelParams::<f64>::default();
        assert!(p.validate().is_ok());
        assert_relative_eq!(p.dt(), 0.005);
        let bad = ModelParams { eps_max: 0.0, ..p };
        assert!(bad.violations().iter().any(|m| m == "peak training power must be positive"));
        let bad = ModelParams { m_block: 2000, ..p };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let p = waterfill_power(4.0f32, 1.0, 1.0, 1.0).unwrap();
        assert!((p - 0.3798).abs() < 1e-3);
    }
}
