//! Switching boundaries theta_eps(u) on a grid over [0, U_T] and the closed-form
//! quantities attached to them.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{training_power, ModelParams};
use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Free,
    Vertical,
}

/// Uniform grid of `k` intervals on [0, u_max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub k: usize,
    pub u_max: T,
}

impl<T: Real> GridSpec<T> {
    /// K = 500 intervals on [0, 5 sigma_h^2].
    pub fn default_for(params: &ModelParams<T>) -> Self {
        Self { k: 500, u_max: lit::<T>(5.0) * params.sigma_h2 }
    }

    pub fn step(&self) -> T {
        self.u_max / from_usize(self.k)
    }

    pub fn points(&self) -> Vec<T> {
        let h = self.step();
        (0..=self.k).map(|i| from_usize::<T>(i) * h).collect()
    }

    pub fn halved(&self) -> Self {
        Self { k: 2 * self.k, u_max: self.u_max }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Boundary<T> {
    pub grid: Vec<T>,
    pub theta: Vec<T>,
    pub kind: BoundaryKind,
    pub sigma_h2: T,
}

impl<T: Real> Boundary<T> {
    pub fn new(grid: Vec<T>, theta: Vec<T>, kind: BoundaryKind, sigma_h2: T) -> Result<Self> {
        if grid.len() < 2 || grid.len() != theta.len() {
            return domain("boundary needs at least two points and matching lengths");
        }
        if grid[0] != T::zero() {
            return domain("boundary grid must start at u = 0");
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("boundary grid must be strictly increasing");
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return domain("boundary values must be finite");
        }
        Ok(Self { grid, theta, kind, sigma_h2 })
    }

    pub fn vertical(theta_v: T, sigma_h2: T, grid: &GridSpec<T>) -> Self {
        Self {
            grid: grid.points(),
            theta: vec![theta_v; grid.k + 1],
            kind: BoundaryKind::Vertical,
            sigma_h2,
        }
    }

    /// Constant boundary that is not required to satisfy the policy invariants
    /// (useful for always-train / never-train reference policies).
    pub fn constant(value: T, sigma_h2: T, grid: &GridSpec<T>) -> Self {
        Self::vertical(value, sigma_h2, grid)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn u_max(&self) -> T {
        *self.grid.last().unwrap()
    }

    pub fn terminal(&self) -> T {
        *self.theta.last().unwrap()
    }

    /// Linear interpolation; the terminal value is used beyond the grid.
    pub fn theta_at(&self, u: T) -> T {
        let n = self.grid.len();
        if u <= self.grid[0] {
            return self.theta[0];
        }
        if u >= self.grid[n - 1] {
            return self.theta[n - 1];
        }
        let j = self.grid.partition_point(|&g| g <= u);
        let (u0, u1) = (self.grid[j - 1], self.grid[j]);
        let w = (u - u0) / (u1 - u0);
        self.theta[j - 1] + w * (self.theta[j] - self.theta[j - 1])
    }

    /// Violated invariants for a pilot boundary under `params`.
    pub fn violations(&self, params: &ModelParams<T>) -> Vec<String> {
        let mut v = Vec::new();
        let ts = theta_star(params).unwrap_or(T::zero());
        let tol = lit::<T>(1e-9);
        for (k, &t) in self.theta.iter().enumerate() {
            if t < ts - tol || t >= self.sigma_h2 {
                v.push(format!("theta at index {k} = {t} outside [theta*, sigma_h2)"));
                break;
            }
        }
        if self.kind == BoundaryKind::Free {
            if let Some(k) = self.theta.windows(2).position(|w| w[1] > w[0] + tol) {
                v.push(format!("free boundary increases at index {k}"));
            }
        }
        for k in 1..self.len() - 1 {
            let d = (self.theta[k + 1] - self.theta[k - 1]) / (self.grid[k + 1] - self.grid[k - 1]);
            if self.sigma_h2 - self.theta[k] + self.grid[k] * d < -tol {
                v.push(format!("derivative condition fails at index {k}"));
                break;
            }
        }
        v
    }
}

/// Lowest steady error variance reachable with permanent peak training.
pub fn theta_star<T: Real>(params: &ModelParams<T>) -> Result<T> {
    if !(params.eps_max > T::zero()) {
        return domain("peak training power must be positive");
    }
    let gamma = params.eps_max / (params.rho * params.sigma_z2);
    let two_s = lit::<T>(2.0) * params.sigma_h2;
    // (sqrt(1 + 2 sh2 g) - 1)/g, rationalized
    Ok(two_s / ((T::one() + two_s * gamma).sqrt() + T::one()))
}

fn theta_inf_gap<T: Real>(theta: T, lambda: T, params: &ModelParams<T>) -> (T, T) {
    let two = lit::<T>(2.0);
    let lhs = two * lambda * params.rho * params.sigma_z2 * (two * params.sigma_h2 - theta) / (theta * theta);
    let x = lit::<T>(4.0) * theta / (lambda * params.sigma_z2);
    let s = (T::one() + x).sqrt();
    let rhs = params.n() * x / ((s + T::one()) * (s + T::one()));
    (lhs, rhs)
}

/// Large-u limit of the free boundary for water-filling data power.
pub fn theta_inf<T: Real>(lambda: T, params: &ModelParams<T>) -> Result<T> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return domain(format!("lambda must be positive, got {lambda}"));
    }
    let f = |t: T| {
        let (l, r) = theta_inf_gap(t, lambda, params);
        l - r
    };
    let mut lo = params.sigma_h2 * lit(1e-12);
    let mut hi = lit::<T>(2.0) * params.sigma_h2;
    if !(f(lo) > T::zero() && f(hi) < T::zero()) {
        return Err(Error::Bracket(format!("theta_inf has no sign change for lambda = {lambda}")));
    }
    for _ in 0..400 {
        let mid = lo + (hi - lo) / lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (f(lo).abs(), f(hi).abs());
    Ok(if flo <= fhi { lo } else { hi })
}

/// Relative residual of the theta_inf equation at `theta`.
pub fn theta_inf_residual<T: Real>(theta: T, lambda: T, params: &ModelParams<T>) -> T {
    let (l, r) = theta_inf_gap(theta, lambda, params);
    ((l - r) / r).abs()
}

/// Steady probability of training when the estimate is `u`.
pub fn prob_train<T: Real>(boundary: &Boundary<T>, u: T, params: &ModelParams<T>) -> Result<T> {
    if !(u >= T::zero()) {
        return domain("estimate value must be nonnegative");
    }
    let t = boundary.theta_at(u);
    let p = training_power(t, params) / params.eps_max;
    if p > T::one() + lit(1e-12) {
        return Err(Error::Infeasible(format!(
            "training probability {p} exceeds one at u = {u}; peak power too small for this boundary"
        )));
    }
    Ok(p)
}
