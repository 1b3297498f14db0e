//! Adaptive pilot and data power control for correlated Rayleigh fading.
//!
//! The scalar type is generic; `f64` aliases are exported at the crate root.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod error;
pub mod eval;
pub mod io;
pub mod kalman;
pub mod model;
pub mod onoff;
pub mod pdf;
pub mod policy;
pub mod scalar;
pub mod solver;

pub use boundary::{prob_train, theta_inf, theta_star, Boundary, BoundaryKind, GridSpec};
pub use error::{Error, Result};
pub use io::{read_boundary, write_boundary, BoundaryHeader};
pub use kalman::{
    burn_in, channel_step, integrate_theta_ode, kalman_step, simulate_trace, simulate_with, theta_recursion,
    KalmanState, TraceRecord,
};
pub use model::{
    lagrangian, lagrangian_dtheta, rate, scaled_rate, training_power, waterfill_power, ModelParams, SystemState,
};
pub use onoff::{
    best_threshold, flatten_beyond, marginal_price, growth_diagnostic, harmonic_mean, onoff_rate, onoff_rate_with, optimize_onoff,
    optimize_onoff_with, optimize_vertical_onoff, rate_bounds, transmit_prob, GrowthRow, OnOffOptimum, OnOffRule,
};
pub use pdf::{avg_training_power, expectation, expectation_above, steady_pdf, SteadyPdf};
pub use policy::{DataRule, Policy};
pub use scalar::Real;
pub use solver::{
    achievable_rate, calibrate_lambda, calibrate_objective, calibrate_vertical, check_theta0_identity,
    evaluate_objective, optimize_vertical, solve_boundary, solve_free_boundary, stationarity_residuals,
    BoundaryFamily, BoundarySolution, Calibrated, Objective, PowerRate, Theta0Check, VerticalOptimum,
};

pub type ModelParams64 = ModelParams<f64>;
pub type ModelParams32 = ModelParams<f32>;
pub type Boundary64 = Boundary<f64>;
pub type Boundary32 = Boundary<f32>;
pub type GridSpec64 = GridSpec<f64>;
pub type Policy64 = Policy<f64>;
pub type DataRule64 = DataRule<f64>;
pub type SteadyPdf64 = SteadyPdf<f64>;
pub type Objective64 = Objective<f64>;
pub type OnOffRule64 = OnOffRule<f64>;
pub use eval::{
    collapse_fraction, compare_policies, evaluate_policy, evaluate_policy_with, ks_distance, overhead_rate, Comparison,
    Estimate, EvalOptions, SimStats,
};
