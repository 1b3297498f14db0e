//! Discrete-time Gauss-Markov channel with a per-block Kalman estimator.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{scaled_rate_raw, ModelParams};
use crate::policy::Policy;
use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState<T> {
    pub h_hat: Complex<T>,
    pub theta: T,
}

impl<T: Real> KalmanState<T> {
    /// No information: zero estimate, prior variance.
    pub fn prior(sigma_h2: T) -> Self {
        Self { h_hat: Complex::new(T::zero(), T::zero()), theta: sigma_h2 }
    }

    pub fn mu_hat(&self) -> T {
        self.h_hat.norm_sqr()
    }
}

/// Unit-variance circularly symmetric complex Gaussian stream.
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn draw<T: Real>(&mut self) -> Complex<T> {
        let re: f64 = StandardNormal.sample(&mut self.rng);
        let im: f64 = StandardNormal.sample(&mut self.rng);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Complex::new(lit(re * s), lit(im * s))
    }
}

#[inline]
fn channel_step_raw<T: Real>(h: Complex<T>, r: T, sigma_h: T, w: Complex<T>) -> Complex<T> {
    h * r + w * ((T::one() - r * r).sqrt() * sigma_h)
}

/// h' = r h + sqrt(1 - r^2) sigma_h w.
pub fn channel_step<T: Real>(h: Complex<T>, r: T, sigma_h2: T, w: Complex<T>) -> Result<Complex<T>> {
    if !(r >= T::zero() && r <= T::one()) {
        return domain(format!("correlation must lie in [0, 1], got {r}"));
    }
    if !(sigma_h2 >= T::zero()) {
        return domain("channel variance must be nonnegative");
    }
    Ok(channel_step_raw(h, r, sigma_h2.sqrt(), w))
}

#[inline]
fn kalman_step_raw<T: Real>(
    state: KalmanState<T>,
    pilot_energy: T,
    h_true: Complex<T>,
    r: T,
    params: &ModelParams<T>,
    noise: Complex<T>,
) -> KalmanState<T> {
    let theta_p = r * r * state.theta + (T::one() - r * r) * params.sigma_h2;
    let h_p = state.h_hat * r;
    if pilot_energy <= T::zero() {
        return KalmanState { h_hat: h_p, theta: theta_p };
    }
    let a = pilot_energy.sqrt();
    let sz2 = params.sigma_z2;
    let y = h_true * a + noise * sz2.sqrt();
    let denom = pilot_energy * theta_p + sz2;
    let gain = a * theta_p / denom;
    KalmanState { h_hat: h_p + (y - h_p * a) * gain, theta: sz2 * theta_p / denom }
}

/// One block: predict with the Gauss-Markov correlation, then update with a
/// single pilot of energy eps_block * M (no update when eps_block = 0).
pub fn kalman_step<T: Real>(
    state: KalmanState<T>,
    eps_block: T,
    h_true: Complex<T>,
    params: &ModelParams<T>,
    noise: Complex<T>,
) -> Result<KalmanState<T>> {
    params.validate()?;
    if !(eps_block >= T::zero()) || !eps_block.is_finite() {
        return domain("block training energy must be finite and nonnegative");
    }
    if !(state.theta > T::zero() && state.theta <= params.sigma_h2 * (T::one() + lit(1e-12))) {
        return domain(format!("error variance {} outside (0, sigma_h2]", state.theta));
    }
    Ok(kalman_step_raw(state, eps_block * params.m(), h_true, params.r(), params, noise))
}

/// One recorded block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord<T> {
    pub block: u64,
    pub mu_hat: T,
    pub theta: T,
    pub trained: bool,
    pub data_power: T,
    pub rate: T,
}

/// Number of leading blocks excluded from steady-state statistics.
pub fn burn_in(n_blocks: usize) -> usize {
    (n_blocks / 10).max(10_000).min(n_blocks)
}

/// Run the discrete system, calling `sink` for each block.
///
/// Per block the pilot decision uses the state left by the previous block;
/// the channel then moves, the estimator updates, and data power and rate use
/// the updated state. Two complex draws are consumed per block, channel
/// innovation first, so policies compared on one seed share their channel.
pub fn simulate_with<T: Real>(
    params: &ModelParams<T>,
    policy: &Policy<T>,
    n_blocks: usize,
    seed: u64,
    mut sink: impl FnMut(&TraceRecord<T>),
) -> Result<()> {
    params.validate()?;
    if n_blocks == 0 {
        return Err(Error::Config("at least one block is required".into()));
    }
    if !policy.data_rule.is_well_formed() {
        return Err(Error::Config("data rule parameters must be positive".into()));
    }
    let mut noise = NoiseStream::new(seed);
    let r = params.r();
    let sigma_h = params.sigma_h2.sqrt();
    let pilot = params.eps_max * params.dt();
    let n = params.n();
    let mut h: Complex<T> = noise.draw::<T>() * sigma_h;
    let mut st = KalmanState::prior(params.sigma_h2);
    for i in 0..n_blocks {
        let trained = policy.trains(st.mu_hat(), st.theta);
        let w = noise.draw();
        let z = noise.draw();
        h = channel_step_raw(h, r, sigma_h, w);
        st = kalman_step_raw(st, if trained { pilot } else { T::zero() }, h, r, params, z);
        let mu = st.mu_hat();
        let p = policy.data_rule.power(mu, st.theta, params);
        sink(&TraceRecord {
            block: i as u64,
            mu_hat: mu,
            theta: st.theta,
            trained,
            data_power: p,
            rate: scaled_rate_raw(p, mu, st.theta, n, params.sigma_z2),
        });
    }
    Ok(())
}

pub fn simulate_trace<T: Real>(
    params: &ModelParams<T>,
    policy: &Policy<T>,
    n_blocks: usize,
    seed: u64,
) -> Result<Vec<TraceRecord<T>>> {
    let mut out = Vec::with_capacity(n_blocks);
    simulate_with(params, policy, n_blocks, seed, |r| out.push(*r))?;
    Ok(out)
}

/// Error-variance recursion with training power `eps` (diffusion units)
/// applied in every block; entry i is the variance after i blocks.
pub fn theta_recursion<T: Real>(params: &ModelParams<T>, eps: T, theta0: T, n_blocks: usize) -> Vec<T> {
    let r = params.r();
    let e = eps * params.dt();
    let sz2 = params.sigma_z2;
    let mut out = Vec::with_capacity(n_blocks + 1);
    let mut t = theta0;
    out.push(t);
    for _ in 0..n_blocks {
        let tp = r * r * t + (T::one() - r * r) * params.sigma_h2;
        t = sz2 * tp / (e * tp + sz2);
        out.push(t);
    }
    out
}

/// Classical RK4 for d theta/dt = 2 rho (sh2 - theta) - eps theta^2 / sz2;
/// entry i is the value at time i * t_end / steps.
pub fn integrate_theta_ode<T: Real>(params: &ModelParams<T>, eps: T, theta0: T, t_end: T, steps: usize) -> Vec<T> {
    let two = lit::<T>(2.0);
    let f = |t: T| two * params.rho * (params.sigma_h2 - t) - eps * t * t / params.sigma_z2;
    let h = t_end / from_usize(steps);
    let mut out = Vec::with_capacity(steps + 1);
    let mut t = theta0;
    out.push(t);
    for _ in 0..steps {
        let k1 = f(t);
        let k2 = f(t + h / two * k1);
        let k3 = f(t + h / two * k2);
        let k4 = f(t + h * k3);
        t = t + h / lit(6.0) * (k1 + two * k2 + two * k3 + k4);
        out.push(t);
    }
    out
}
