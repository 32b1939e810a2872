//! Optimization of a probability distribution over a finite catalog of
//! strategic parameters ("arms") under a primary metric and guardrail
//! constraints, from sparse noisy per-arm observations.
//!
//! Each round samples arms from a smoothed pmf, folds the importance-weighted
//! observations into a running mean of the metric matrix, and takes an
//! exponentiated-gradient step on `p -> f(mean * p)`. The averaged iterate is
//! the returned solution.
//!
//! ```
//! use pasto::environment::setting_a;
//! use pasto::{pasto_run, PastoConfig};
//!
//! let (mut env, objective) = setting_a(7);
//! let cfg = PastoConfig { gamma: 0.05, ..PastoConfig::for_arms(2, 200, 7) };
//! let (p_bar, trajectory) = pasto_run(&mut env, &objective, &cfg).unwrap();
//! assert_eq!(trajectory.horizon(), 200);
//! assert!((p_bar.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
//! ```

// NaN must fail these checks, hence `!(x > 0.0)` in validation code.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod environment;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod objective;
pub mod optimizer;
pub mod types;

pub use baselines::{
    dominance_check, grid_oracle_k2, prob_oracle, single_best_oracle, sscgd_run, BetaSchedule,
    Dominance, SscgdConfig,
};
pub use environment::{relative_gain, Environment, SimulatedEnv};
pub use error::{Error, Result};
pub use estimator::{build_uhat, pasto_gradient, VhatState};
pub use objective::{objective_grad, objective_value};
pub use optimizer::{kl_proximal_step, pasto_run, smooth_pmf};
pub use types::{
    CapPolicy, EpsilonSchedule, Guardrail, GuardrailKind, MetricMatrix, Objective, Observation,
    PastoConfig, Pmf, Trajectory, WeightVector,
};
