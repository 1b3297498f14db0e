//! On-off data power: threshold, on-power and the log N growth of the rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{Boundary, BoundaryKind, GridSpec};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::pdf::{cumulative_exponent, expectation_above_with, expectation_with, exponent_between};
use crate::policy::DataRule;
use crate::scalar::{from_usize, lit, Real};
use crate::solver::{calibrate_objective, golden_max, vertical_floor, Objective};

const MAX_ROUNDS: usize = 20;
const ROUND_TOL: f64 = 1e-5;
const MU0_SCAN: usize = 120;

/// Transmit at `p0` when the estimate exceeds `mu0`, otherwise stay silent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnOffRule<T> {
    pub mu0: T,
    pub p0: T,
}

impl<T: Real> OnOffRule<T> {
    pub fn data_rule(&self) -> DataRule<T> {
        DataRule::OnOff { mu0: self.mu0, p0: self.p0 }
    }
}

fn check_mu0<T: Real>(mu0: T) -> Result<()> {
    if mu0 >= T::zero() {
        Ok(())
    } else {
        Err(Error::Domain(format!("threshold must be nonnegative, got {mu0}")))
    }
}

/// Integral of 1/(sigma_h^2 - theta(u)) over [0, mu0].
fn exponent_at<T: Real>(b: &Boundary<T>, mu0: T) -> Result<T> {
    check_mu0(mu0)?;
    let ex = cumulative_exponent(b)?;
    Ok(exponent_between(&b.grid, &ex, b.sigma_h2 - b.terminal(), mu0))
}

/// Probability that the estimate exceeds `mu0` in steady state.
pub fn transmit_prob<T: Real>(b: &Boundary<T>, mu0: T) -> Result<T> {
    Ok((-exponent_at(b, mu0)?).exp())
}

/// Harmonic mean of sigma_h^2 - theta along [0, mu0].
pub fn harmonic_mean<T: Real>(b: &Boundary<T>, mu0: T) -> Result<T> {
    if !(mu0 > T::zero()) {
        return Err(Error::Domain(format!("threshold must be positive, got {mu0}")));
    }
    Ok(mu0 / exponent_at(b, mu0)?)
}

/// Power left for data once the average training power is paid.
fn data_budget<T: Real>(b: &Boundary<T>, ex: &[T], params: &ModelParams<T>) -> Result<T> {
    let eps = expectation_with(b, ex, |_, t| crate::model::training_power(t, params));
    let a = params.p_av - eps;
    if a > T::zero() {
        Ok(a)
    } else {
        Err(Error::Infeasible(format!("average training power {eps} uses the whole budget {}", params.p_av)))
    }
}

/// Rate with the on-power fixed by the budget, P0 = (P_av - eps_avg)/q.
pub fn onoff_rate<T: Real>(b: &Boundary<T>, mu0: T, params: &ModelParams<T>) -> Result<T> {
    onoff_rate_with(b, mu0, params, None)
}

/// As [`onoff_rate`], optionally charging pilot symbols against the rate for block length `m`.
pub fn onoff_rate_with<T: Real>(
    b: &Boundary<T>,
    mu0: T,
    params: &ModelParams<T>,
    overhead_m: Option<usize>,
) -> Result<T> {
    check_mu0(mu0)?;
    let ex = cumulative_exponent(b)?;
    let a = data_budget(b, &ex, params)?;
    let q = (-exponent_between(&b.grid, &ex, b.sigma_h2 - b.terminal(), mu0)).exp();
    if !(q > T::zero()) {
        return Ok(T::zero());
    }
    // only evaluated above the threshold, where the power is on
    let obj = Objective::on_off(T::zero(), a / q, T::zero());
    let obj = match overhead_m {
        Some(m) => obj.with_overhead(m),
        None => obj,
    };
    if overhead_m.is_some() {
        let bad = b.theta.iter().any(|&t| obj.factor(t, params).0 < T::zero());
        if bad {
            return Err(Error::Domain("training power exceeds eps_max M; overhead factor is negative".into()));
        }
    }
    Ok(expectation_above_with(b, &ex, mu0, |u, t| obj.rate(u, t, params)))
}

/// Closed-form lower and upper bounds on [`onoff_rate`].
pub fn rate_bounds<T: Real>(b: &Boundary<T>, mu0: T, params: &ModelParams<T>) -> Result<(T, T)> {
    check_mu0(mu0)?;
    let ex = cumulative_exponent(b)?;
    let a = data_budget(b, &ex, params)?;
    let q = (-exponent_between(&b.grid, &ex, b.sigma_h2 - b.terminal(), mu0)).exp();
    let n = params.n();
    let nq = n * q;
    let szq = params.sigma_z2 * nq;
    let lower = nq * (a * mu0 / (a * b.sigma_h2 + szq)).ln_1p();
    let upper = nq * (a * (mu0 + b.sigma_h2) / szq).ln_1p();
    Ok((lower, upper))
}

/// Rate gained per unit of extra on-power, averaged over the on region.
pub fn marginal_price<T: Real>(
    b: &Boundary<T>,
    rule: &OnOffRule<T>,
    params: &ModelParams<T>,
    overhead_m: Option<usize>,
) -> Result<T> {
    let ex = cumulative_exponent(b)?;
    let q = (-exponent_between(&b.grid, &ex, b.sigma_h2 - b.terminal(), rule.mu0)).exp();
    let obj = Objective::on_off(T::zero(), rule.p0, T::zero());
    let obj = match overhead_m {
        Some(m) => obj.with_overhead(m),
        None => obj,
    };
    let n = params.n();
    let nz = n * params.sigma_z2;
    let p = rule.p0;
    let dr = |u: T, t: T| {
        obj.factor(t, params).0 * n * nz * u / ((p * t + nz) * (p * t + p * u + nz))
    };
    Ok(expectation_above_with(b, &ex, rule.mu0, dr) / q)
}

/// Best threshold for a fixed boundary.
pub fn best_threshold<T: Real>(
    b: &Boundary<T>,
    params: &ModelParams<T>,
    overhead_m: Option<usize>,
) -> Result<(T, T)> {
    let ex = cumulative_exponent(b)?;
    data_budget(b, &ex, params)?;
    let ut = b.u_max();
    let h = ut / exponent_between(&b.grid, &ex, b.sigma_h2 - b.terminal(), ut);
    let hi = lit::<T>(3.0) * h * params.n().ln().max(T::one());
    let f = |m: T| onoff_rate_with(b, m, params, overhead_m).unwrap_or(T::zero());
    let step = hi / from_usize(MU0_SCAN);
    let mut k_best = 0;
    let mut r_best = f(T::zero());
    for k in 1..=MU0_SCAN {
        let r = f(step * from_usize(k));
        if r > r_best {
            r_best = r;
            k_best = k;
        }
    }
    let lo = step * from_usize(k_best.saturating_sub(1));
    let up = step * from_usize(k_best + 1);
    let m = golden_max(f, lo, up, step * lit(1e-4));
    let r = f(m);
    Ok(if r >= r_best { (m, r) } else { (step * from_usize(k_best), r_best) })
}

/// Hold the boundary at its value at `mu0` for every larger estimate.
pub fn flatten_beyond<T: Real>(b: &Boundary<T>, mu0: T) -> Boundary<T> {
    let level = b.theta_at(mu0);
    let mut out = b.clone();
    for (u, t) in out.grid.iter().zip(out.theta.iter_mut()) {
        if *u > mu0 {
            *t = level;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnOffOptimum<T> {
    pub boundary: Boundary<T>,
    pub rule: OnOffRule<T>,
    pub rate: T,
    /// Price of the last accepted boundary solve; None if the vertical start was never improved.
    pub lambda: Option<T>,
    pub rounds: usize,
    /// Rate of the best vertical boundary with its best threshold.
    pub vertical_rate: T,
}

fn finish<T: Real>(b: Boundary<T>, mu0: T, rate: T, params: &ModelParams<T>) -> Result<(Boundary<T>, OnOffRule<T>, T)> {
    let ex = cumulative_exponent(&b)?;
    let a = data_budget(&b, &ex, params)?;
    let q = (-exponent_between(&b.grid, &ex, b.sigma_h2 - b.terminal(), mu0)).exp();
    Ok((b, OnOffRule { mu0, p0: a / q }, rate))
}

/// Vertical boundary with the best level and threshold.
pub fn optimize_vertical_onoff<T: Real>(
    params: &ModelParams<T>,
    grid: &GridSpec<T>,
    overhead_m: Option<usize>,
) -> Result<(Boundary<T>, T, T)> {
    let sh = params.sigma_h2;
    let lo = vertical_floor(params)? + lit::<T>(1e-6) * sh;
    let hi = sh * (T::one() - lit(1e-9));
    let score = |t: T| {
        best_threshold(&Boundary::vertical(t, sh, grid), params, overhead_m)
            .map(|(_, r)| r)
            .unwrap_or(T::zero())
    };
    let t = golden_max(score, lo, hi, lit::<T>(1e-4) * sh);
    let b = Boundary::vertical(t, sh, grid);
    let (mu0, r) = best_threshold(&b, params, overhead_m)?;
    Ok((b, mu0, r))
}

/// Alternate between the best threshold for a boundary and the boundary solved for that threshold.
pub fn optimize_onoff<T: Real>(params: &ModelParams<T>, grid: &GridSpec<T>) -> Result<OnOffOptimum<T>> {
    optimize_onoff_with(params, grid, None)
}

pub fn optimize_onoff_with<T: Real>(
    params: &ModelParams<T>,
    grid: &GridSpec<T>,
    overhead_m: Option<usize>,
) -> Result<OnOffOptimum<T>> {
    params.validate()?;
    if !(params.p_av > T::zero()) {
        return Err(Error::Domain("average power must be positive".into()));
    }
    let (vb, vmu, vrate) = optimize_vertical_onoff(params, grid, overhead_m)?;
    let with_m = |o: Objective<T>| match overhead_m {
        Some(m) => o.with_overhead(m),
        None => o,
    };
    let mut out = alternate(params, grid, overhead_m, (vb, vmu, vrate), None)?;
    // second start: the water-filling free boundary with its best threshold
    let wf = calibrate_objective(|l| with_m(Objective::water_filling(l)), params, grid, params.p_av, lit(1e-8));
    if let Ok(wf) = wf {
        let b = wf.solution.boundary;
        if let Ok((mu0, r)) = best_threshold(&b, params, overhead_m) {
            let alt = alternate(params, grid, overhead_m, (b, mu0, r), Some(wf.lambda))?;
            if alt.rate > out.rate {
                out = OnOffOptimum { rounds: out.rounds + alt.rounds, ..alt };
            } else {
                out.rounds += alt.rounds;
            }
        }
    }
    out.vertical_rate = vrate;
    Ok(out)
}

/// Boundary, threshold and rate.
type Candidate<T> = (Boundary<T>, T, T);

fn alternate<T: Real>(
    params: &ModelParams<T>,
    grid: &GridSpec<T>,
    overhead_m: Option<usize>,
    start: (Boundary<T>, T, T),
    start_lambda: Option<T>,
) -> Result<OnOffOptimum<T>> {
    let vrate = start.2;
    let mut best = start;
    let mut lambda = start_lambda;
    let mut rounds = 0;
    let with_m = |o: Objective<T>| match overhead_m {
        Some(m) => o.with_overhead(m),
        None => o,
    };
    // re-solve the boundary for the current threshold and on-power, then re-pick the threshold
    let attempt = |obj: Objective<T>, mu0: T| -> Option<Candidate<T>> {
        let sol = crate::solver::solve_boundary(&obj, params, grid).ok()?;
        let mut nb = flatten_beyond(&sol.boundary, mu0);
        nb.kind = BoundaryKind::Free;
        let (nmu, _) = best_threshold(&nb, params, overhead_m).ok()?;
        let nb = flatten_beyond(&nb, nmu);
        let r = onoff_rate_with(&nb, nmu, params, overhead_m).ok()?;
        Some((nb, nmu, r))
    };
    for _ in 0..MAX_ROUNDS {
        rounds += 1;
        let (b, mu0, _) = &best;
        let (_, rule, _) = finish(b.clone(), *mu0, T::zero(), params)?;
        let price = marginal_price(b, &rule, params, overhead_m)?;
        let mut cand = attempt(with_m(Objective::on_off(rule.mu0, rule.p0, price)), rule.mu0).map(|c| (c, price));
        let improves = |c: &Option<(Candidate<T>, T)>| {
            matches!(c, Some(((_, _, r), _)) if *r > best.2 * (T::one() + lit(ROUND_TOL)))
        };
        if !improves(&cand) {
            // fall back to the price that meets the budget with the on-power held fixed
            let family = |lam: T| with_m(Objective::on_off(rule.mu0, rule.p0, lam));
            if let Ok(cal) = calibrate_objective(family, params, grid, params.p_av, lit(1e-8)) {
                cand = attempt(with_m(Objective::on_off(rule.mu0, rule.p0, cal.lambda)), rule.mu0)
                    .map(|c| (c, cal.lambda));
            }
        }
        if !improves(&cand) {
            break;
        }
        let (c, lam) = cand.unwrap();
        best = c;
        lambda = Some(lam);
    }
    let (boundary, rule, rate) = finish(best.0, best.1, best.2, params)?;
    Ok(OnOffOptimum { boundary, rule, rate, lambda, rounds, vertical_rate: vrate })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow<T> {
    pub n: usize,
    pub mu0: T,
    pub rate: T,
    pub rate_over_log_n: T,
}

/// Optimized on-off threshold and rate for each N.
pub fn growth_diagnostic<T: Real>(params: &ModelParams<T>, n_values: &[usize]) -> Result<Vec<GrowthRow<T>>> {
    if n_values.is_empty() {
        return Err(Error::Config("growth sweep needs at least one N".into()));
    }
    n_values
        .par_iter()
        .map(|&n| {
            let p = ModelParams { n_scale: n, ..*params };
            let grid = GridSpec::default_for(&p);
            let opt = optimize_onoff(&p, &grid)?;
            let ln = from_usize::<T>(n).ln();
            Ok(GrowthRow { n, mu0: opt.rule.mu0, rate: opt.rate, rate_over_log_n: opt.rate / ln })
        })
        .collect()
}
