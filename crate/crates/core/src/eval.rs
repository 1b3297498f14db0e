//! Monte Carlo evaluation of switching policies on the discrete system.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{theta_star, Boundary};
use crate::error::{Error, Result};
use crate::kalman::{burn_in, simulate_with, TraceRecord};
use crate::model::{scaled_rate_raw, training_power, ModelParams};
use crate::pdf::{expectation, expectation_above};
use crate::policy::{DataRule, Policy};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Mean over seeds with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Across-sample mean and standard error; the error is NaN for fewer than two samples.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self { mean: f64::NAN, std_error: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, std_error: f64::NAN };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { mean, std_error: (var / n).sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Half-width of the collapse tube.
    pub eta: f64,
    pub bins: usize,
    /// Histogram range [0, hist_max]; an overflow bin collects the rest.
    pub hist_max: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { eta: 0.05, bins: 100, hist_max: 5.0 }
    }
}

/// Distance from a state to the curve theta_eps(u) united with the theta*
/// segment that starts where the boundary first reaches theta*.
#[derive(Debug, Clone)]
pub struct Tube<T> {
    boundary: Boundary<T>,
    theta_star: T,
    segment_from: Option<T>,
}

impl<T: Real> Tube<T> {
    pub fn new(boundary: &Boundary<T>, params: &ModelParams<T>) -> Result<Self> {
        let ts = theta_star(params)?;
        let tol = lit::<T>(1e-9);
        let segment_from = boundary.theta.iter().position(|&t| t <= ts + tol).map(|k| boundary.grid[k]);
        Ok(Self { boundary: boundary.clone(), theta_star: ts, segment_from })
    }

    pub fn distance(&self, mu_hat: T, theta: T) -> T {
        let d = (theta - self.boundary.theta_at(mu_hat)).abs();
        match self.segment_from {
            Some(u) if mu_hat >= u => d.min((theta - self.theta_star).abs()),
            _ => d,
        }
    }
}

/// Fraction of post-burn-in blocks further than `eta` from the tube.
pub fn collapse_fraction<T: Real>(
    trace: &[TraceRecord<T>],
    boundary: &Boundary<T>,
    eta: T,
    params: &ModelParams<T>,
) -> Result<T> {
    if !(eta > T::zero()) {
        return Err(Error::Domain("eta must be positive".into()));
    }
    let tube = Tube::new(boundary, params)?;
    let skip = burn_in(trace.len());
    let kept = &trace[skip..];
    if kept.is_empty() {
        return Ok(T::zero());
    }
    let out = kept.iter().filter(|r| tube.distance(r.mu_hat, r.theta) > eta).count();
    Ok(from_usize::<T>(out) / from_usize(kept.len()))
}

/// Steady-state accumulation for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStats {
    pub seed: u64,
    pub blocks: usize,
    pub avg_rate: f64,
    pub avg_data_power: f64,
    pub avg_train_power: f64,
    pub train_fraction: f64,
    pub collapse_fraction: f64,
    pub bin_counts: Vec<u64>,
    pub bin_trained: Vec<u64>,
    pub overflow: u64,
}

pub fn run_seed<T: Real>(
    params: &ModelParams<T>,
    policy: &Policy<T>,
    n_blocks: usize,
    seed: u64,
    opts: &EvalOptions,
) -> Result<SeedStats> {
    let tube = Tube::new(&policy.boundary, params)?;
    let skip = burn_in(n_blocks);
    let bins = opts.bins.max(1);
    let width = opts.hist_max / bins as f64;
    let eta: T = lit(opts.eta);
    let eps_max = to_f64(params.eps_max);
    let (mut rate, mut data, mut trained, mut out, mut kept) = (0.0f64, 0.0f64, 0u64, 0u64, 0u64);
    let mut counts = vec![0u64; bins];
    let mut tr = vec![0u64; bins];
    let mut overflow = 0u64;
    simulate_with(params, policy, n_blocks, seed, |r| {
        if (r.block as usize) < skip {
            return;
        }
        kept += 1;
        rate += to_f64(r.rate);
        data += to_f64(r.data_power);
        if r.trained {
            trained += 1;
        }
        if tube.distance(r.mu_hat, r.theta) > eta {
            out += 1;
        }
        let mu = to_f64(r.mu_hat);
        let b = (mu / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1;
            if r.trained {
                tr[b as usize] += 1;
            }
        } else {
            overflow += 1;
        }
    })?;
    let k = kept.max(1) as f64;
    Ok(SeedStats {
        seed,
        blocks: kept as usize,
        avg_rate: rate / k,
        avg_data_power: data / k,
        avg_train_power: eps_max * trained as f64 / k,
        train_fraction: trained as f64 / k,
        collapse_fraction: out as f64 / k,
        bin_counts: counts,
        bin_trained: tr,
        overflow,
    })
}

/// Aggregated Monte Carlo statistics over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub seeds: usize,
    pub blocks_per_seed: usize,
    pub avg_rate: Estimate,
    pub avg_data_power: Estimate,
    pub avg_train_power: Estimate,
    pub train_fraction: Estimate,
    pub eta: f64,
    pub collapse_fraction: Estimate,
    pub bin_width: f64,
    /// Pooled histogram density of the estimate per bin.
    pub empirical_pdf: Vec<f64>,
    pub overflow_mass: f64,
    /// Pooled training fraction per bin with across-seed standard errors.
    pub bin_train_fraction: Vec<Estimate>,
    pub bin_counts: Vec<u64>,
    pub per_seed: Vec<SeedStats>,
}

impl SimStats {
    pub fn avg_total_power(&self) -> f64 {
        self.avg_data_power.mean + self.avg_train_power.mean
    }
}

pub fn aggregate(per_seed: Vec<SeedStats>, opts: &EvalOptions) -> SimStats {
    let col = |f: fn(&SeedStats) -> f64| Estimate::from_samples(&per_seed.iter().map(f).collect::<Vec<_>>());
    let bins = opts.bins.max(1);
    let width = opts.hist_max / bins as f64;
    let mut pooled = vec![0u64; bins];
    let mut overflow = 0u64;
    let mut total = 0u64;
    for s in &per_seed {
        for (p, c) in pooled.iter_mut().zip(&s.bin_counts) {
            *p += c;
        }
        overflow += s.overflow;
        total += s.blocks as u64;
    }
    let tot = total.max(1) as f64;
    let bin_train_fraction = (0..bins)
        .map(|b| {
            let fr: Vec<f64> = per_seed
                .iter()
                .filter(|s| s.bin_counts[b] > 0)
                .map(|s| s.bin_trained[b] as f64 / s.bin_counts[b] as f64)
                .collect();
            let pooled_tr: u64 = per_seed.iter().map(|s| s.bin_trained[b]).sum();
            let e = Estimate::from_samples(&fr);
            Estimate {
                mean: if pooled[b] > 0 { pooled_tr as f64 / pooled[b] as f64 } else { f64::NAN },
                std_error: e.std_error,
            }
        })
        .collect();
    SimStats {
        seeds: per_seed.len(),
        blocks_per_seed: per_seed.first().map(|s| s.blocks).unwrap_or(0),
        avg_rate: col(|s| s.avg_rate),
        avg_data_power: col(|s| s.avg_data_power),
        avg_train_power: col(|s| s.avg_train_power),
        train_fraction: col(|s| s.train_fraction),
        eta: opts.eta,
        collapse_fraction: col(|s| s.collapse_fraction),
        bin_width: width,
        empirical_pdf: pooled.iter().map(|&c| c as f64 / (tot * width)).collect(),
        overflow_mass: overflow as f64 / tot,
        bin_train_fraction,
        bin_counts: pooled,
        per_seed,
    }
}

pub fn evaluate_policy_with<T: Real>(
    params: &ModelParams<T>,
    policy: &Policy<T>,
    n_blocks: usize,
    seeds: &[u64],
    opts: &EvalOptions,
) -> Result<SimStats> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let per: Result<Vec<SeedStats>> =
        seeds.par_iter().map(|&s| run_seed(params, policy, n_blocks, s, opts)).collect();
    Ok(aggregate(per?, opts))
}

pub fn evaluate_policy<T: Real>(
    params: &ModelParams<T>,
    policy: &Policy<T>,
    n_blocks: usize,
    seeds: &[u64],
) -> Result<SimStats> {
    let opts = EvalOptions { hist_max: to_f64(policy.boundary.u_max()), ..Default::default() };
    evaluate_policy_with(params, policy, n_blocks, seeds, &opts)
}

/// Kolmogorov-Smirnov distance between samples and a continuous CDF.
pub fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Rate with one pilot symbol per trained block charged as overhead.
pub fn overhead_rate<T: Real>(boundary: &Boundary<T>, data_rule: &DataRule<T>, params: &ModelParams<T>) -> Result<T> {
    params.validate()?;
    let cap = params.eps_max * params.m();
    for (k, &t) in boundary.theta.iter().enumerate() {
        if training_power(t, params) > cap * (T::one() + lit(1e-12)) {
            return Err(Error::Domain(format!("overhead factor negative at grid index {k}")));
        }
    }
    let g = |rule: DataRule<T>| {
        move |u: T, t: T| {
            let p = rule.power(u, t, params);
            (T::one() - training_power(t, params) / cap) * scaled_rate_raw(p, u, t, params.n(), params.sigma_z2)
        }
    };
    match *data_rule {
        // integrate only the on region so the step at mu0 is not smeared
        DataRule::OnOff { mu0, p0 } => expectation_above(boundary, mu0, g(DataRule::OnOff { mu0: T::zero(), p0 })),
        rule => expectation(boundary, g(rule)),
    }
}

/// Paired comparison of every policy against the first one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub stats: Vec<SimStats>,
    /// Per-seed rate differences (policy i minus policy 0), i >= 1.
    pub rate_difference: Vec<Estimate>,
    pub power_difference: Vec<Estimate>,
}

/// Evaluate policies on common random numbers (identical seeds).
pub fn compare_policies<T: Real>(
    params: &ModelParams<T>,
    policies: &[Policy<T>],
    n_blocks: usize,
    seeds: &[u64],
) -> Result<Comparison> {
    if policies.len() < 2 {
        return Err(Error::Config("comparison needs at least two policies".into()));
    }
    let stats: Result<Vec<SimStats>> =
        policies.iter().map(|p| evaluate_policy(params, p, n_blocks, seeds)).collect();
    let stats = stats?;
    let diff = |f: fn(&SeedStats) -> f64| -> Vec<Estimate> {
        stats[1..]
            .iter()
            .map(|s| {
                let d: Vec<f64> =
                    s.per_seed.iter().zip(&stats[0].per_seed).map(|(a, b)| f(a) - f(b)).collect();
                Estimate::from_samples(&d)
            })
            .collect()
    };
    let rate_difference = diff(|s| s.avg_rate);
    let power_difference = diff(|s| s.avg_data_power + s.avg_train_power);
    Ok(Comparison { stats, rate_difference, power_difference })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::GridSpec;
    use crate::solver::achievable_rate;
    use approx::assert_relative_eq;

    fn rec(mu_hat: f64, theta: f64) -> TraceRecord<f64> {
        TraceRecord { block: 0, mu_hat, theta, trained: false, data_power: 0.0, rate: 0.0 }
    }

    #[test]
    fn estimate_of_three_samples() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0]);
        assert_eq!(e.mean, 2.0);
        assert_relative_eq!(e.std_error, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert!(Estimate::from_samples(&[4.0]).std_error.is_nan());
        assert!(Estimate::from_samples(&[]).mean.is_nan());
    }

    #[test]
    fn ks_of_exact_quantiles() {
        let n = 1000;
        let mut xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_distance(&mut xs, |x| x.clamp(0.0, 1.0));
        assert_relative_eq!(d, 0.5 / n as f64, epsilon = 1e-12);
    }

    #[test]
    fn tube_includes_theta_star_segment() {
        let p = ModelParams::<f64> { rho: 2.0, ..Default::default() };
        let g = GridSpec { k: 100, u_max: 5.0 };
        let pts = g.points();
        // boundary reaches theta* = 0.4 at u = 2
        let th: Vec<f64> = pts.iter().map(|&u: &f64| (0.8 - 0.2 * u).max(0.4)).collect();
        let b = Boundary::new(pts, th, crate::boundary::BoundaryKind::Free, 1.0).unwrap();
        let tube = Tube::new(&b, &p).unwrap();
        assert_relative_eq!(tube.distance(1.0, 0.7), 0.1, epsilon = 1e-12);
        assert_relative_eq!(tube.distance(3.0, 0.45), 0.05, epsilon = 1e-12);
        let trace: Vec<_> = (0..20_000).map(|i| if i % 4 == 0 { rec(1.0, 0.9) } else { rec(1.0, 0.6) }).collect();
        let f = collapse_fraction(&trace, &b, 0.05, &p).unwrap();
        assert_relative_eq!(f, 0.25, epsilon = 1e-3);
        assert!(collapse_fraction(&trace, &b, 0.0, &p).is_err());
    }

    #[test]
    fn overhead_vanishes_for_long_blocks() {
        let p = ModelParams::<f64> { n_scale: 1_000_000, m_block: 100_000, p_av: 2.0, ..Default::default() };
        let g = GridSpec { k: 200, u_max: 5.0 };
        let b = Boundary::vertical(0.6, 1.0, &g);
        let with = overhead_rate(&b, &DataRule::WaterFilling { lambda: 0.5 }, &p).unwrap();
        let without = achievable_rate(&b, 0.5, &p).unwrap();
        assert!(with < without);
        assert_relative_eq!(with, without, max_relative = 1e-4);
    }

    #[test]
    fn overhead_rejects_boundary_below_theta_star() {
        let p = ModelParams::<f64> { rho: 2.0, m_block: 1, ..Default::default() };
        let g = GridSpec { k: 20, u_max: 5.0 };
        let b = Boundary::constant(0.3, 1.0, &g);
        assert!(overhead_rate(&b, &DataRule::WaterFilling { lambda: 1.0 }, &p).is_err());
    }

    #[test]
    fn comparison_needs_two_policies() {
        let p = ModelParams::<f64>::default();
        let g = GridSpec { k: 20, u_max: 5.0 };
        let pol = Policy::new(Boundary::vertical(0.5, 1.0, &g), DataRule::WaterFilling { lambda: 1.0 });
        assert!(compare_policies(&p, std::slice::from_ref(&pol), 100, &[1]).is_err());
        let c = compare_policies(&p, &[pol.clone(), pol], 20_000, &[1, 2]).unwrap();
        assert_eq!(c.rate_difference[0].mean, 0.0);
    }
}
