//! Steady-state density of the channel estimate under a switching boundary
//! and expectations against it.
//!
//! With d(u) = sigma_h2 - theta(u) and I(u) the integral of 1/d from 0, the
//! density is exp(-I)/d, so the mass of a grid interval is exactly
//! exp(-I_k) - exp(-I_{k+1}). I is accumulated by the trapezoid rule. Inside
//! an interval the density is treated as exponential and the integrand as
//! linear, which keeps the rule accurate where sigma_h2 - theta is tiny and
//! the mass piles up at the left end. Beyond U_T the boundary is flat and the
//! density is an exponential tail.

use crate::boundary::Boundary;
use crate::error::{domain, Result};
use crate::model::{training_power, ModelParams};
use crate::scalar::{from_usize, lit, Real};

const TAIL_SPAN: f64 = 50.0;
const TAIL_PANELS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyPdf<T> {
    pub grid: Vec<T>,
    pub density: Vec<T>,
    /// I(u_k), the integral of 1/(sigma_h2 - theta) from 0 to u_k.
    pub exponent: Vec<T>,
    /// Probability mass beyond U_T.
    pub tail_mass: T,
    /// Mean excess of the exponential tail, sigma_h2 - theta(U_T).
    pub tail_scale: T,
}

impl<T: Real> SteadyPdf<T> {
    pub fn interval_masses(&self) -> Vec<T> {
        self.exponent.windows(2).map(|w| (-w[0]).exp() - (-w[1]).exp()).collect()
    }

    pub fn total_mass(&self) -> T {
        self.interval_masses().into_iter().fold(T::zero(), |a, b| a + b) + self.tail_mass
    }

    /// Pr{estimate > u}.
    pub fn survival(&self, u: T) -> T {
        (-exponent_between(&self.grid, &self.exponent, self.tail_scale, u)).exp()
    }

    pub fn cdf(&self, u: T) -> T {
        T::one() - self.survival(u)
    }

    pub fn density_at(&self, u: T, boundary: &Boundary<T>) -> T {
        let d = boundary.sigma_h2 - boundary.theta_at(u);
        self.survival(u) / d
    }
}

fn gaps<T: Real>(b: &Boundary<T>) -> Result<Vec<T>> {
    let mut d = Vec::with_capacity(b.len());
    for (k, &t) in b.theta.iter().enumerate() {
        let g = b.sigma_h2 - t;
        if !(g > T::zero()) {
            return domain(format!("boundary value {t} at index {k} is not below sigma_h2"));
        }
        d.push(g);
    }
    Ok(d)
}

/// Cumulative integral of 1/(sigma_h2 - theta) on the grid (trapezoid rule).
pub fn cumulative_exponent<T: Real>(b: &Boundary<T>) -> Result<Vec<T>> {
    let d = gaps(b)?;
    let half = lit::<T>(0.5);
    let mut out = Vec::with_capacity(d.len());
    let mut acc = T::zero();
    out.push(acc);
    for k in 0..d.len() - 1 {
        acc = acc + half * (b.grid[k + 1] - b.grid[k]) * (d[k].recip() + d[k + 1].recip());
        out.push(acc);
    }
    Ok(out)
}

/// I(u) for any u >= 0, consistent with the grid accumulation.
pub(crate) fn exponent_between<T: Real>(grid: &[T], exponent: &[T], tail_scale: T, u: T) -> T {
    let n = grid.len();
    if u <= T::zero() {
        return T::zero();
    }
    if u >= grid[n - 1] {
        return exponent[n - 1] + (u - grid[n - 1]) / tail_scale;
    }
    let j = grid.partition_point(|&g| g <= u) - 1;
    // linear in u inside a grid interval
    let w = (u - grid[j]) / (grid[j + 1] - grid[j]);
    exponent[j] + w * (exponent[j + 1] - exponent[j])
}

pub fn steady_pdf<T: Real>(b: &Boundary<T>) -> Result<SteadyPdf<T>> {
    let d = gaps(b)?;
    let exponent = cumulative_exponent(b)?;
    let density = exponent.iter().zip(&d).map(|(&i, &g)| (-i).exp() / g).collect();
    let tail_mass = (-*exponent.last().unwrap()).exp();
    Ok(SteadyPdf { grid: b.grid.clone(), density, exponent, tail_mass, tail_scale: *d.last().unwrap() })
}

/// E[g(X)] for X ~ Exp(1) on [0, 50]: Simpson panels with weights that are
/// exact for quadratic g against the exponential weight.
pub(crate) fn exp_average<T: Real>(g: impl Fn(T) -> T) -> T {
    let n = TAIL_PANELS;
    let h = TAIL_SPAN / n as f64;
    let e2 = (-2.0 * h).exp();
    let m0 = -(-2.0 * h).exp_m1();
    let m1 = m0 - 2.0 * h * e2;
    let m2 = 2.0 * m1 - 4.0 * h * h * e2;
    let w = [
        lit::<T>((m2 - 3.0 * h * m1 + 2.0 * h * h * m0) / (2.0 * h * h)),
        lit::<T>(-(m2 - 2.0 * h * m1) / (h * h)),
        lit::<T>((m2 - h * m1) / (2.0 * h * h)),
    ];
    let hx = lit::<T>(h);
    let mut s = T::zero();
    let mut g0 = g(T::zero());
    for p in 0..n / 2 {
        let a = from_usize::<T>(2 * p) * hx;
        let g1 = g(a + hx);
        let g2 = g(a + hx + hx);
        s = s + (-a).exp() * (w[0] * g0 + w[1] * g1 + w[2] * g2);
        g0 = g2;
    }
    s
}

/// E[g(U, theta(U))] under the steady density, with `g` evaluated at grid
/// points and, past U_T, on the flat terminal boundary.
pub fn expectation<T: Real>(b: &Boundary<T>, g: impl Fn(T, T) -> T) -> Result<T> {
    let exponent = cumulative_exponent(b)?;
    Ok(expectation_with(b, &exponent, g))
}

/// Weights for one grid interval whose exponent increment is `x`: the
/// survival ratio E = exp(-x) and the share `phi` of the interval mass that a
/// linear integrand assigns to the right end point, for a density that decays
/// exponentially across the interval.
#[inline]
pub(crate) fn interval_weights<T: Real>(x: T) -> (T, T) {
    let e = (-x).exp();
    let phi = if x < lit(1e-3) {
        lit::<T>(0.5) - x / lit(12.0) + x * x * x / lit(720.0)
    } else {
        x.recip() - x.exp_m1().recip()
    };
    (e, phi)
}

pub(crate) fn expectation_with<T: Real>(b: &Boundary<T>, exponent: &[T], g: impl Fn(T, T) -> T) -> T {
    let mut s = T::zero();
    let mut surv = T::one();
    let mut g0 = g(b.grid[0], b.theta[0]);
    for k in 0..b.len() - 1 {
        let (e, phi) = interval_weights(exponent[k + 1] - exponent[k]);
        let g1 = g(b.grid[k + 1], b.theta[k + 1]);
        s = s + surv * (T::one() - e) * ((T::one() - phi) * g0 + phi * g1);
        surv = surv * e;
        g0 = g1;
    }
    let ut = b.u_max();
    let tt = b.terminal();
    let d = b.sigma_h2 - tt;
    s + surv * exp_average(|x| g(ut + d * x, tt))
}

/// E[g(U, theta(U)); U > threshold] under the steady density.
pub fn expectation_above<T: Real>(b: &Boundary<T>, threshold: T, g: impl Fn(T, T) -> T) -> Result<T> {
    let exponent = cumulative_exponent(b)?;
    Ok(expectation_above_with(b, &exponent, threshold, g))
}

pub(crate) fn expectation_above_with<T: Real>(
    b: &Boundary<T>,
    exponent: &[T],
    threshold: T,
    g: impl Fn(T, T) -> T,
) -> T {
    if threshold <= T::zero() {
        return expectation_with(b, exponent, g);
    }
    let tt = b.terminal();
    let d = b.sigma_h2 - tt;
    let ut = b.u_max();
    if threshold >= ut {
        let i0 = exponent[exponent.len() - 1] + (threshold - ut) / d;
        return (-i0).exp() * exp_average(|x| g(threshold + d * x, tt));
    }
    let j = b.grid.partition_point(|&x| x <= threshold) - 1;
    let i0 = exponent_between(&b.grid, exponent, d, threshold);
    let t0 = b.theta_at(threshold);
    let mut surv = (-i0).exp();
    let mut s = T::zero();
    let mut g0 = g(threshold, t0);
    let mut prev_i = i0;
    for k in j..b.len() - 1 {
        let (e, phi) = interval_weights(exponent[k + 1] - prev_i);
        let g1 = g(b.grid[k + 1], b.theta[k + 1]);
        s = s + surv * (T::one() - e) * ((T::one() - phi) * g0 + phi * g1);
        surv = surv * e;
        g0 = g1;
        prev_i = exponent[k + 1];
    }
    s + surv * exp_average(|x| g(ut + d * x, tt))
}

/// Average training power under the steady density.
pub fn avg_training_power<T: Real>(b: &Boundary<T>, params: &ModelParams<T>) -> Result<T> {
    expectation(b, |_, t| training_power(t, params))
}
