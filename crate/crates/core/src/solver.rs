//! Optimized switching boundaries: the backward recursion for the free
//! boundary, multiplier calibration against the power budget, and the
//! optimized vertical baseline.
//!
//! Writing d = sigma_h2 - theta and L for the Lagrangian, the stationarity
//! condition reads Phi(u, theta(u)) = W(u) with Phi = L + d L_theta and
//! W(u) = integral over v > u of L(v) exp(-int_u^v 1/d) / d(v) dv. W obeys the
//! one-interval recursion W_k = (1 - E) <L>_k + E W_{k+1}, so the boundary is
//! found from U_T down to 0 by solving one scalar equation per grid point.

use serde::{Deserialize, Serialize};

use crate::boundary::{theta_inf, theta_star, Boundary, BoundaryKind, GridSpec};
use crate::error::{Error, Result};
use crate::model::{
    scaled_rate_dtheta, scaled_rate_raw, training_power, training_power_dtheta, waterfill_raw, ModelParams,
};
use crate::pdf::{
    cumulative_exponent, exp_average, expectation_above_with, expectation_with, exponent_between, interval_weights,
};
use crate::policy::DataRule;
use crate::scalar::{from_usize, lit, Real};

const SCAN_POINTS: usize = 64;
const MAX_FIXED_POINT: usize = 100;

/// Pointwise Lagrangian of the constrained rate problem for a given data rule
/// and power price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective<T> {
    pub rule: DataRule<T>,
    pub lambda: T,
    /// Charge one pilot symbol of the M in a trained block against the rate.
    pub overhead_m: Option<usize>,
}

impl<T: Real> Objective<T> {
    pub fn water_filling(lambda: T) -> Self {
        Self { rule: DataRule::WaterFilling { lambda }, lambda, overhead_m: None }
    }

    pub fn on_off(mu0: T, p0: T, lambda: T) -> Self {
        Self { rule: DataRule::OnOff { mu0, p0 }, lambda, overhead_m: None }
    }

    pub fn with_overhead(mut self, m: usize) -> Self {
        self.overhead_m = Some(m);
        self
    }

    pub fn with_lambda(mut self, lambda: T) -> Self {
        self.lambda = lambda;
        if let DataRule::WaterFilling { .. } = self.rule {
            self.rule = DataRule::WaterFilling { lambda };
        }
        self
    }

    /// Overhead factor 1 - eps(theta)/(eps_max M) and its theta derivative.
    #[inline]
    pub fn factor(&self, theta: T, params: &ModelParams<T>) -> (T, T) {
        match self.overhead_m {
            None => (T::one(), T::zero()),
            Some(m) => {
                let c = params.eps_max * from_usize::<T>(m);
                (
                    T::one() - training_power(theta, params) / c,
                    -training_power_dtheta(theta, params) / c,
                )
            }
        }
    }

    /// Data power in diffusion units. With overhead, water-filling runs at
    /// the effective price lambda / factor.
    #[inline]
    pub fn power(&self, u: T, theta: T, params: &ModelParams<T>) -> T {
        match (self.rule, self.overhead_m) {
            (DataRule::WaterFilling { lambda }, Some(_)) => {
                let (g, _) = self.factor(theta, params);
                if g <= T::zero() {
                    T::zero()
                } else {
                    params.n() * waterfill_raw(u, theta.max(lit(1e-12)), lambda / g, params.sigma_z2)
                }
            }
            (rule, _) => rule.power(u, theta, params),
        }
    }

    /// Rate contribution at (u, theta), overhead included when enabled.
    #[inline]
    pub fn rate(&self, u: T, theta: T, params: &ModelParams<T>) -> T {
        let p = self.power(u, theta, params);
        let (g, _) = self.factor(theta, params);
        g * scaled_rate_raw(p, u, theta, params.n(), params.sigma_z2)
    }

    #[inline]
    pub fn value(&self, u: T, theta: T, params: &ModelParams<T>) -> T {
        let p = self.power(u, theta, params);
        let (g, _) = self.factor(theta, params);
        g * scaled_rate_raw(p, u, theta, params.n(), params.sigma_z2)
            - self.lambda * (p + training_power(theta, params))
    }

    /// Partial derivative in theta at fixed data power (for water-filling the
    /// power term drops out because the power is a pointwise maximizer).
    #[inline]
    pub fn dtheta(&self, u: T, theta: T, params: &ModelParams<T>) -> T {
        let p = self.power(u, theta, params);
        let (g, dg) = self.factor(theta, params);
        let n = params.n();
        let mut d = g * scaled_rate_dtheta(p, u, theta, n, params.sigma_z2)
            - self.lambda * training_power_dtheta(theta, params);
        if dg != T::zero() {
            d = d + dg * scaled_rate_raw(p, u, theta, n, params.sigma_z2);
        }
        d
    }

    #[inline]
    pub fn phi(&self, u: T, theta: T, params: &ModelParams<T>) -> T {
        self.value(u, theta, params) + (params.sigma_h2 - theta) * self.dtheta(u, theta, params)
    }

    /// Boundary value used past U_T, before clipping at theta*.
    pub fn terminal_theta(&self, params: &ModelParams<T>, u_max: T) -> Result<T> {
        let two = lit::<T>(2.0);
        match (self.rule, self.overhead_m) {
            (DataRule::WaterFilling { lambda }, None) => theta_inf(lambda, params),
            (DataRule::OnOff { p0, .. }, None) => {
                // large-u limit of dtheta = 0
                let n = params.n();
                let f = |t: T| {
                    two * self.lambda * params.rho * params.sigma_z2 * (two * params.sigma_h2 - t) / (t * t * t)
                        - n * p0 / (p0 * t + n * params.sigma_z2)
                };
                bisect_decreasing(f, params.sigma_h2 * lit(1e-9), two * params.sigma_h2)
            }
            _ => {
                let f = |t: T| self.dtheta(u_max, t, params);
                let lo = theta_star(params)?;
                let hi = params.sigma_h2 * (T::one() - lit(1e-9));
                if f(lo) <= T::zero() {
                    Ok(lo)
                } else if f(hi) >= T::zero() {
                    Ok(hi)
                } else {
                    bisect_decreasing(f, lo, hi)
                }
            }
        }
    }
}

fn bisect_decreasing<T: Real>(f: impl Fn(T) -> T, mut lo: T, mut hi: T) -> Result<T> {
    if !(f(lo) > T::zero() && f(hi) < T::zero()) {
        return Err(Error::Bracket("terminal boundary equation has no sign change".into()));
    }
    for _ in 0..300 {
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
    Ok(lo + (hi - lo) / lit(2.0))
}

/// Solved boundary together with the recursion by-products.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySolution<T> {
    pub boundary: Boundary<T>,
    pub objective: Objective<T>,
    /// W(u_k): right-hand side of the stationarity condition.
    pub w: Vec<T>,
    /// Unclipped terminal value (theta_inf for water-filling).
    pub theta_terminal: T,
    /// Grid points where the scalar equation had no root; the neighbor value was reused.
    pub flagged: Vec<usize>,
    /// Grid points held at theta*.
    pub clipped: Vec<usize>,
}

impl<T: Real> BoundarySolution<T> {
    /// No flagged points and a nonnegative value at u = 0.
    pub fn is_regular(&self) -> bool {
        self.flagged.is_empty() && self.w[0] >= T::zero()
    }
}

/// Steady averages of a boundary and data rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRate<T> {
    pub rate: T,
    pub data_power: T,
    pub training_power: T,
}

impl<T: Real> PowerRate<T> {
    pub fn total_power(&self) -> T {
        self.data_power + self.training_power
    }
}

pub fn evaluate_objective<T: Real>(
    boundary: &Boundary<T>,
    objective: &Objective<T>,
    params: &ModelParams<T>,
) -> Result<PowerRate<T>> {
    let ex = cumulative_exponent(boundary)?;
    let training = expectation_with(boundary, &ex, |_, t| training_power(t, params));
    Ok(match objective.rule {
        DataRule::OnOff { mu0, p0 } => {
            let d = boundary.sigma_h2 - boundary.terminal();
            let q = (-exponent_between(&boundary.grid, &ex, d, mu0)).exp();
            let on = Objective { rule: DataRule::OnOff { mu0: T::zero(), p0 }, ..*objective };
            PowerRate {
                rate: expectation_above_with(boundary, &ex, mu0, |u, t| on.rate(u, t, params)),
                data_power: p0 * q,
                training_power: training,
            }
        }
        DataRule::WaterFilling { .. } => PowerRate {
            rate: expectation_with(boundary, &ex, |u, t| objective.rate(u, t, params)),
            data_power: expectation_with(boundary, &ex, |u, t| objective.power(u, t, params)),
            training_power: training,
        },
    })
}

enum Root<T> {
    Found(T),
    Clipped(T),
    None,
}

struct Scan<T> {
    pts: Vec<T>,
}

impl<T: Real> Scan<T> {
    fn new(lo: T, hi: T) -> Self {
        let pts = (0..=SCAN_POINTS)
            .map(|i| lo + (hi - lo) * from_usize::<T>(i) / from_usize::<T>(SCAN_POINTS))
            .collect();
        Self { pts }
    }

    /// Root of phi(theta) = target, choosing the sign change nearest `near`.
    fn solve(&self, phi: impl Fn(T) -> T, target: T, near: T) -> Root<T> {
        let vals: Vec<T> = self.pts.iter().map(|&t| phi(t) - target).collect();
        let mut best: Option<usize> = None;
        for i in 0..SCAN_POINTS {
            if (vals[i] <= T::zero()) != (vals[i + 1] <= T::zero()) || vals[i] == T::zero() {
                let mid = (self.pts[i] + self.pts[i + 1]) / lit(2.0);
                let better = match best {
                    None => true,
                    Some(j) => {
                        let mj = (self.pts[j] + self.pts[j + 1]) / lit(2.0);
                        (mid - near).abs() < (mj - near).abs()
                    }
                };
                if better {
                    best = Some(i);
                }
            }
        }
        let Some(i) = best else {
            return if vals[0] < T::zero() { Root::Clipped(self.pts[0]) } else { Root::None };
        };
        let (mut a, mut b) = (self.pts[i], self.pts[i + 1]);
        let pos_a = vals[i] > T::zero();
        let tol = lit::<T>(1e-12);
        while b - a > tol {
            let m = a + (b - a) / lit(2.0);
            if m <= a || m >= b {
                break;
            }
            if (phi(m) - target > T::zero()) == pos_a {
                a = m;
            } else {
                b = m;
            }
        }
        Root::Found(a + (b - a) / lit(2.0))
    }
}

/// Backward recursion for an arbitrary objective on a uniform grid.
pub fn solve_boundary<T: Real>(
    objective: &Objective<T>,
    params: &ModelParams<T>,
    grid: &GridSpec<T>,
) -> Result<BoundarySolution<T>> {
    params.validate()?;
    if grid.k < 2 || !(grid.u_max > T::zero()) {
        return Err(Error::Config("grid needs at least two intervals and positive U_T".into()));
    }
    let sh = params.sigma_h2;
    let ts = theta_star(params)?;
    if !(ts < sh) {
        return Err(Error::Infeasible("theta* is not below sigma_h2".into()));
    }
    let u = grid.points();
    let k_max = grid.k;
    let h = grid.step();
    let half = lit::<T>(0.5);
    let eps = lit::<T>(1e-9) * sh;
    let lo = ts + eps;
    let hi = sh - eps;
    let scan = Scan::new(lo, hi);

    let t_term = objective.terminal_theta(params, grid.u_max)?;
    let mut theta = vec![T::zero(); k_max + 1];
    let mut w = vec![T::zero(); k_max + 1];
    let mut clipped = Vec::new();
    let mut flagged = Vec::new();

    let tk = t_term.max(ts).min(hi);
    if tk <= ts {
        clipped.push(k_max);
    }
    theta[k_max] = tk;
    let dk = sh - tk;
    let ut = grid.u_max;
    w[k_max] = exp_average(|x| objective.value(ut + dk * x, tk, params));

    for k in (0..k_max).rev() {
        let uk = u[k];
        let t1 = theta[k + 1];
        let l1 = objective.value(u[k + 1], t1, params);
        let w1 = w[k + 1];
        let inv1 = (sh - t1).recip();
        let wk = |t: T| {
            let (e, phi) = interval_weights(half * h * ((sh - t).recip() + inv1));
            let lk = objective.value(uk, t, params);
            (T::one() - e) * ((T::one() - phi) * lk + phi * l1) + e * w1
        };
        let phi_k = |t: T| objective.phi(uk, t, params);
        let mut t = t1;
        let mut clip = false;
        let mut ok = false;
        for _ in 0..MAX_FIXED_POINT {
            match scan.solve(phi_k, wk(t), t1) {
                Root::Found(tn) => {
                    clip = false;
                    let done = (tn - t).abs() < lit(1e-11);
                    t = tn;
                    if done {
                        ok = true;
                        break;
                    }
                }
                Root::Clipped(_) => {
                    let done = clip;
                    clip = true;
                    t = ts;
                    if done {
                        ok = true;
                        break;
                    }
                }
                Root::None => {
                    t = t1;
                    flagged.push(k);
                    ok = true;
                    break;
                }
            }
        }
        if !ok {
            flagged.push(k);
        }
        if clip {
            clipped.push(k);
        }
        theta[k] = t;
        w[k] = wk(t);
    }
    flagged.sort_unstable();
    clipped.sort_unstable();
    Ok(BoundarySolution {
        boundary: Boundary { grid: u, theta, kind: BoundaryKind::Free, sigma_h2: sh },
        objective: *objective,
        w,
        theta_terminal: t_term,
        flagged,
        clipped,
    })
}

/// Free boundary for water-filling data power at price `lambda`.
pub fn solve_free_boundary<T: Real>(
    lambda: T,
    params: &ModelParams<T>,
    grid: &GridSpec<T>,
) -> Result<BoundarySolution<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    solve_boundary(&Objective::water_filling(lambda), params, grid)
}

/// Relative residual of the stationarity condition at each grid point,
/// with the right-hand integral recomputed on a grid refined `refine` times
/// by plain trapezoid quadrature. `None` at the end points and at clipped or
/// flagged points, where the condition is not imposed.
pub fn stationarity_residuals<T: Real>(
    sol: &BoundarySolution<T>,
    params: &ModelParams<T>,
    refine: usize,
) -> Vec<Option<T>> {
    let b = &sol.boundary;
    let obj = &sol.objective;
    let sh = b.sigma_h2;
    let k_max = b.len() - 1;
    let half = lit::<T>(0.5);
    let r = refine.max(1);

    // tail value by trapezoid on [0, 60] in the exponential variable
    let tk = b.terminal();
    let dk = sh - tk;
    let ut = b.u_max();
    let nt = 6000usize;
    let hx = lit::<T>(60.0) / from_usize(nt);
    let mut tail = T::zero();
    for i in 0..=nt {
        let x = from_usize::<T>(i) * hx;
        let wgt = if i == 0 || i == nt { half } else { T::one() };
        tail = tail + wgt * obj.value(ut + dk * x, tk, params) * (-x).exp();
    }
    let mut rhs = vec![T::zero(); k_max + 1];
    rhs[k_max] = tail * hx;

    for k in (0..k_max).rev() {
        let (ua, ub) = (b.grid[k], b.grid[k + 1]);
        let (ta, tb) = (b.theta[k], b.theta[k + 1]);
        let hf = (ub - ua) / from_usize(r);
        let mut acc = rhs[k + 1];
        for j in (0..r).rev() {
            let s0 = from_usize::<T>(j) / from_usize(r);
            let s1 = from_usize::<T>(j + 1) / from_usize(r);
            let (v0, v1) = (ua + (ub - ua) * s0, ua + (ub - ua) * s1);
            let (t0, t1) = (ta + (tb - ta) * s0, ta + (tb - ta) * s1);
            let (d0, d1) = (sh - t0, sh - t1);
            let e = (-(half * hf * (d0.recip() + d1.recip()))).exp();
            let f0 = obj.value(v0, t0, params) / d0;
            let f1 = obj.value(v1, t1, params) * e / d1;
            acc = half * hf * (f0 + f1) + e * acc;
        }
        rhs[k] = acc;
    }
    (0..=k_max)
        .map(|k| {
            if k == 0 || k == k_max || sol.clipped.binary_search(&k).is_ok() || sol.flagged.binary_search(&k).is_ok() {
                return None;
            }
            let lhs = obj.phi(b.grid[k], b.theta[k], params);
            let scale = lhs.abs().max(rhs[k].abs());
            Some(if scale > T::zero() { (lhs - rhs[k]).abs() / scale } else { T::zero() })
        })
        .collect()
}

/// Result of the u = 0 identity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta0Check<T> {
    pub residual: T,
    /// R >= lambda * P_av, required for the identity to have a solution.
    pub rate_covers_price: bool,
}

/// |(sh2 - theta0)^2/theta0^3 - (R/lambda - P_av)/(4 rho sz2)| relative to the left side.
pub fn check_theta0_identity<T: Real>(
    boundary: &Boundary<T>,
    lambda: T,
    params: &ModelParams<T>,
    r_bar: T,
) -> Theta0Check<T> {
    let t0 = boundary.theta[0];
    let lhs = (params.sigma_h2 - t0).powi(2) / t0.powi(3);
    let rhs = (r_bar / lambda - params.p_av) / (lit::<T>(4.0) * params.rho * params.sigma_z2);
    Theta0Check { residual: (lhs - rhs).abs() / lhs, rate_covers_price: r_bar >= lambda * params.p_av }
}

/// Average scaled rate with water-filling data power at price `lambda`.
pub fn achievable_rate<T: Real>(boundary: &Boundary<T>, lambda: T, params: &ModelParams<T>) -> Result<T> {
    let ex = cumulative_exponent(boundary)?;
    let obj = Objective::water_filling(lambda);
    Ok(expectation_with(boundary, &ex, |u, t| obj.rate(u, t, params)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BoundaryFamily<T> {
    Free,
    Vertical { theta_v: T },
}

/// Outcome of fitting the multiplier to the power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated<T> {
    pub lambda: T,
    pub solution: BoundarySolution<T>,
    pub stats: PowerRate<T>,
    /// Total power was nonincreasing in lambda over every evaluated iterate.
    pub monotone: bool,
    /// |total power - budget| / budget of the returned solution.
    pub power_gap: T,
}

const LAMBDA_MIN: f64 = 1e-6;
const LAMBDA_MAX: f64 = 1e6;

/// Fit the multiplier of a boundary family generated by `family(lambda)` so
/// that total power equals `p_av`: bracket expansion on a log scale, then
/// geometric bisection. Total power is assumed nonincreasing in lambda; the
/// assumption is checked over all iterates and reported in `monotone`. Where
/// the recursion reuses neighbor values the power can jump, in which case the
/// iterate closest to the budget is returned and `power_gap` says how close.
pub fn calibrate_objective<T: Real>(
    family: impl Fn(T) -> Objective<T>,
    params: &ModelParams<T>,
    grid: &GridSpec<T>,
    p_av: T,
    rel_tol: T,
) -> Result<Calibrated<T>> {
    if !(p_av > T::zero()) {
        return Err(Error::Domain("average power must be positive".into()));
    }
    let lmin = lit::<T>(LAMBDA_MIN);
    let lmax = lit::<T>(LAMBDA_MAX);
    let mut seen: Vec<(T, T)> = Vec::new();
    let mut best: Option<(T, BoundarySolution<T>, PowerRate<T>)> = None;
    let mut run = |lam: T| -> Result<T> {
        let obj = family(lam);
        let sol = solve_boundary(&obj, params, grid)?;
        let st = evaluate_objective(&sol.boundary, &obj, params)?;
        let p = st.total_power();
        seen.push((lam, p));
        let gap = ((p - p_av) / p_av).abs();
        let better = match &best {
            None => true,
            Some((_, _, b)) => gap < ((b.total_power() - p_av) / p_av).abs(),
        };
        if better {
            best = Some((lam, sol, st));
        }
        Ok(p)
    };
    let close = |p: T| ((p - p_av) / p_av).abs() < rel_tol;

    let two = lit::<T>(2.0);
    let mut lam = T::one();
    let p1 = run(lam)?;
    let (mut lo, mut hi);
    if close(p1) {
        lo = lam;
        hi = lam;
    } else if p1 > p_av {
        lo = lam;
        loop {
            lam = lam * two;
            if lam > lmax {
                return Err(Error::Bracket("power stays above budget for lambda up to 1e6".into()));
            }
            if run(lam)? <= p_av {
                hi = lam;
                break;
            }
            lo = lam;
        }
    } else {
        hi = lam;
        loop {
            lam = lam / two;
            if lam < lmin {
                return Err(Error::Bracket("power stays below budget for lambda down to 1e-6".into()));
            }
            if run(lam)? >= p_av {
                lo = lam;
                break;
            }
            hi = lam;
        }
    }
    for _ in 0..200 {
        if hi / lo < T::one() + lit(1e-13) {
            break;
        }
        let m = (lo * hi).sqrt();
        let p = run(m)?;
        if close(p) {
            break;
        }
        if p > p_av {
            lo = m;
        } else {
            hi = m;
        }
    }
    let mut sorted = seen.clone();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let monotone = sorted.windows(2).all(|w| w[1].1 <= w[0].1 * (T::one() + lit(1e-9)) + lit(1e-12));
    let (lambda, solution, stats) = best.expect("at least one iterate");
    let power_gap = ((stats.total_power() - p_av) / p_av).abs();
    Ok(Calibrated { lambda, solution, stats, monotone, power_gap })
}

/// Vertical boundary with the water-filling price fitted so that data plus
/// training power equals `params.p_av`.
pub fn calibrate_vertical<T: Real>(
    theta_v: T,
    params: &ModelParams<T>,
    grid: &GridSpec<T>,
) -> Result<(T, Boundary<T>, PowerRate<T>)> {
    let b = Boundary::vertical(theta_v, params.sigma_h2, grid);
    let eps_v = training_power(theta_v, params);
    let target = params.p_av - eps_v;
    if !(target > T::zero()) {
        return Err(Error::Infeasible(format!(
            "training power {eps_v} of vertical boundary leaves no data power"
        )));
    }
    let ex = cumulative_exponent(&b)?;
    let data = |lam: T| {
        let o = Objective::water_filling(lam);
        expectation_with(&b, &ex, |u, t| o.power(u, t, params))
    };
    let (mut lo, mut hi) = (lit::<T>(LAMBDA_MIN), lit::<T>(LAMBDA_MAX));
    if data(lo) < target || data(hi) > target {
        return Err(Error::Bracket("vertical multiplier outside [1e-6, 1e6]".into()));
    }
    for _ in 0..200 {
        let m = (lo * hi).sqrt();
        if data(m) > target {
            lo = m;
        } else {
            hi = m;
        }
        if hi / lo < T::one() + lit(1e-13) {
            break;
        }
    }
    let lam = (lo * hi).sqrt();
    let o = Objective::water_filling(lam);
    let st = PowerRate {
        rate: expectation_with(&b, &ex, |u, t| o.rate(u, t, params)),
        data_power: data(lam),
        training_power: eps_v,
    };
    Ok((lam, b, st))
}

/// Multiplier fitted to `params.p_av` for the given boundary family.
pub fn calibrate_lambda<T: Real>(
    params: &ModelParams<T>,
    family: BoundaryFamily<T>,
    grid: &GridSpec<T>,
) -> Result<(T, Boundary<T>)> {
    match family {
        BoundaryFamily::Free => {
            let c = calibrate_objective(Objective::water_filling, params, grid, params.p_av, lit(1e-6))?;
            Ok((c.lambda, c.solution.boundary))
        }
        BoundaryFamily::Vertical { theta_v } => {
            let (l, b, _) = calibrate_vertical(theta_v, params, grid)?;
            Ok((l, b))
        }
    }
}

/// Smallest vertical level whose training power fits in the budget.
pub fn vertical_floor<T: Real>(params: &ModelParams<T>) -> Result<T> {
    let ts = theta_star(params)?;
    let c = lit::<T>(2.0) * params.rho * params.sigma_z2;
    let pa = params.p_av;
    // pa t^2 + c t - c sh2 = 0
    let t = lit::<T>(2.0) * c * params.sigma_h2 / (c + (c * c + lit::<T>(4.0) * pa * c * params.sigma_h2).sqrt());
    Ok(t.max(ts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerticalOptimum<T> {
    pub theta_v: T,
    pub lambda: T,
    pub rate: T,
    pub boundary: Boundary<T>,
}

/// Golden-section search over theta_v of the calibrated water-filling rate.
pub fn optimize_vertical<T: Real>(params: &ModelParams<T>, grid: &GridSpec<T>) -> Result<VerticalOptimum<T>> {
    let sh = params.sigma_h2;
    let lo = vertical_floor(params)? + lit::<T>(1e-9) * sh;
    let hi = sh * (T::one() - lit(1e-9));
    let rate_at = |t: T| calibrate_vertical(t, params, grid).map(|(_, _, s)| s.rate).unwrap_or(T::zero());
    let t = golden_max(rate_at, lo, hi, lit::<T>(1e-4) * sh);
    let (lambda, boundary, st) = calibrate_vertical(t, params, grid)?;
    Ok(VerticalOptimum { theta_v: t, lambda, rate: st.rate, boundary })
}

/// Maximizer of a unimodal function on [a, b] to within `tol`.
pub fn golden_max<T: Real>(f: impl Fn(T) -> T, mut a: T, mut b: T, tol: T) -> T {
    let g = (lit::<T>(5.0).sqrt() - T::one()) / lit(2.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / lit(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(rho: f64, p_av: f64) -> ModelParams<f64> {
        ModelParams { rho, p_av, ..Default::default() }
    }

    fn grid() -> GridSpec<f64> {
        GridSpec { k: 200, u_max: 5.0 }
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let x = golden_max(|x: f64| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-9);
        assert_relative_eq!(x, 0.3, epsilon = 1e-8);
    }

    #[test]
    fn vertical_floor_spends_whole_budget() {
        let p = params(1.0, 3.0);
        let t = vertical_floor(&p).unwrap();
        assert_relative_eq!(training_power(t, &p), 3.0, max_relative = 1e-12);
        // budget above peak training: floor is theta*
        let q = params(2.0, 100.0);
        assert_eq!(vertical_floor(&q).unwrap(), theta_star(&q).unwrap());
    }

    #[test]
    fn calibrated_free_boundary_meets_budget() {
        let p = params(2.0, 2.0);
        let c = calibrate_objective(Objective::water_filling, &p, &grid(), 2.0, 1e-8).unwrap();
        assert!(c.power_gap < 1e-6, "{}", c.power_gap);
        let th = &c.solution.boundary.theta;
        assert!(th.windows(2).all(|w| w[1] <= w[0]));
        let ts = theta_star(&p).unwrap();
        assert!(th.iter().all(|&t| t >= ts && t < 1.0));
        let r = achievable_rate(&c.solution.boundary, c.lambda, &p).unwrap();
        assert_relative_eq!(r, c.stats.rate, max_relative = 1e-12);
    }

    #[test]
    fn regular_solution_satisfies_theta0_identity() {
        let p = params(0.5, 10.0);
        let c = calibrate_objective(Objective::water_filling, &p, &grid(), 10.0, 1e-8).unwrap();
        assert!(c.solution.is_regular());
        let id = check_theta0_identity(&c.solution.boundary, c.lambda, &p, c.stats.rate);
        assert!(id.rate_covers_price);
        assert!(id.residual < 1e-2, "{}", id.residual);
    }

    #[test]
    fn free_boundary_beats_best_vertical() {
        let p = params(1.0, 2.0);
        let c = calibrate_objective(Objective::water_filling, &p, &grid(), 2.0, 1e-8).unwrap();
        let v = optimize_vertical(&p, &grid()).unwrap();
        assert!(c.stats.rate > v.rate);
        let (_, _, st) = calibrate_vertical(v.theta_v, &p, &grid()).unwrap();
        assert_relative_eq!(st.total_power(), 2.0, max_relative = 1e-9);
    }

    #[test]
    fn terminal_value_follows_large_u_limit() {
        let p = params(1.0, 2.0);
        let sol = solve_free_boundary(0.5, &p, &grid()).unwrap();
        assert_relative_eq!(sol.theta_terminal, theta_inf(0.5, &p).unwrap(), max_relative = 1e-9);
        assert!(solve_free_boundary(0.0, &p, &grid()).is_err());
    }

    #[test]
    fn stationarity_holds_away_from_clipping() {
        let p = ModelParams { rho: 0.5, p_av: 10.0, ..Default::default() };
        let sol = solve_free_boundary(0.1, &p, &GridSpec { k: 400, u_max: 5.0 }).unwrap();
        let worst = stationarity_residuals(&sol, &p, 4).into_iter().flatten().fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn overhead_factor_is_one_at_prior() {
        let p = ModelParams { m_block: 1, ..Default::default() };
        let o = Objective::water_filling(1.0).with_overhead(1);
        assert_relative_eq!(o.factor(1.0, &p).0, 1.0, epsilon = 1e-15);
        let ts = theta_star(&p).unwrap();
        assert_relative_eq!(o.factor(ts, &p).0, 0.0, epsilon = 1e-12);
    }
}
