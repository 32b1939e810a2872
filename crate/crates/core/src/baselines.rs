//! Comparison points for the optimizer: the best single arm, the noiseless
//! probabilistic optimum, and the stochastic compositional gradient baseline
//! that tracks the inner value `mu p` directly instead of averaging `U_t`.

use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{check_dim, Error, Result};
use crate::objective::{mixture_value, objective_grad, objective_value};
use crate::optimizer::{run_loop, DirectionTracker, LoopOptions};
use crate::types::{MetricMatrix, Objective, PastoConfig, Pmf, Trajectory};

/// Iteration budget for the probabilistic oracle.
pub const DEFAULT_ORACLE_ITERS: usize = 10_000;
/// Resolution of the one-dimensional two-arm grid oracle.
pub const K2_GRID_STEP: f64 = 1e-4;
/// Slack allowed when checking that mixing never loses to the best arm.
pub const DOMINANCE_TOL: f64 = 1e-9;

/// Best one-hot pmf. Ties go to the lowest arm index; hard barriers allowed.
pub fn single_best_oracle(mu: &MetricMatrix, obj: &Objective) -> Result<(usize, f64)> {
    obj.check_metrics(mu.num_metrics())?;
    let mut best = (0, f64::NEG_INFINITY);
    for arm in 0..mu.num_arms() {
        let value = objective_value(obj, &mu.column(arm))?;
        if value > best.1 || arm == 0 {
            best = (arm, value);
        }
    }
    Ok(best)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Exact-gradient exponentiated ascent on a concave function of `p`.
///
/// The step size adapts by backtracking: it doubles after an accepted step
/// and halves until the value does not decrease. Vertices are evaluated too,
/// so boundary optima that multiplicative updates only approach
/// asymptotically are still returned exactly.
fn maximize_on_simplex<V, G>(k: usize, iters: usize, value: V, grad: G) -> Result<(Pmf, f64)>
where
    V: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut best_p = Pmf::uniform(k)?.into_vec();
    let mut best = value(&best_p)?;
    for arm in 0..k {
        let e = Pmf::one_hot(k, arm)?.into_vec();
        let v = value(&e)?;
        if v > best {
            best = v;
            best_p = e;
        }
    }

    let mut logits = vec![0.0; k];
    let mut p = softmax(&logits);
    let mut current = value(&p)?;
    let mut step = f64::NAN;
    for _ in 0..iters {
        let g = grad(&p)?;
        let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if scale == 0.0 {
            break;
        }
        if step.is_nan() {
            step = 1.0 / scale;
        }
        let mut accepted = false;
        for _ in 0..80 {
            let trial: Vec<f64> = logits.iter().zip(&g).map(|(l, gi)| l + step * gi).collect();
            let q = softmax(&trial);
            let v = value(&q)?;
            if v >= current {
                logits = trial;
                p = q;
                current = v;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if current > best {
            best = current;
            best_p.clone_from(&p);
        }
        step *= 2.0;
        // keep logits bounded; the pmf only depends on differences
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        logits.iter_mut().for_each(|l| *l = (*l - top).max(-700.0));
    }
    Ok((Pmf::new(best_p)?, best))
}

/// Noiseless probabilistic optimum `max_p f(mu p)` over the simplex.
pub fn prob_oracle(mu: &MetricMatrix, obj: &Objective, iters: usize) -> Result<(Pmf, f64)> {
    if !obj.is_differentiable() {
        return Err(Error::NonDifferentiableObjective);
    }
    obj.check_metrics(mu.num_metrics())?;
    maximize_on_simplex(
        mu.num_arms(),
        iters,
        |p| mixture_value(obj, mu, p),
        |p| mu.transpose_mul(&objective_grad(obj, &mu.mix(p)?)?),
    )
}

/// Maximizer of `sum_s f(mus[s] p)`, the comparator for regret under a
/// time-varying ground truth.
pub fn prob_oracle_sum(mus: &[MetricMatrix], obj: &Objective, iters: usize) -> Result<(Pmf, f64)> {
    let first = mus.first().ok_or(Error::EmptyVector)?;
    if !obj.is_differentiable() {
        return Err(Error::NonDifferentiableObjective);
    }
    obj.check_metrics(first.num_metrics())?;
    for mu in mus {
        first.same_shape(mu)?;
    }
    maximize_on_simplex(
        first.num_arms(),
        iters,
        |p| mus.iter().map(|mu| mixture_value(obj, mu, p)).sum(),
        |p| {
            let mut acc = vec![0.0; p.len()];
            for mu in mus {
                let g = mu.transpose_mul(&objective_grad(obj, &mu.mix(p)?)?)?;
                acc.iter_mut().zip(g).for_each(|(a, v)| *a += v);
            }
            Ok(acc)
        },
    )
}

/// Exhaustive search over `p = [a, 1 - a]` on a `1e-4` grid. Works for hard
/// barriers as well as soft penalties.
pub fn grid_oracle_k2(mu: &MetricMatrix, obj: &Objective) -> Result<(Pmf, f64)> {
    check_dim("two-arm grid oracle", 2, mu.num_arms())?;
    let steps = (1.0 / K2_GRID_STEP).round() as usize;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..=steps {
        let a = i as f64 / steps as f64;
        let v = mixture_value(obj, mu, &[a, 1.0 - a])?;
        if v > best.1 {
            best = (a, v);
        }
    }
    Ok((Pmf::new(vec![best.0, 1.0 - best.0])?, best.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dominance {
    pub prob_value: f64,
    pub det_value: f64,
    pub gap: f64,
}

/// Compares the probabilistic and single-best optima. Hard-barrier
/// objectives are only supported for two arms.
pub fn dominance_check(mu: &MetricMatrix, obj: &Objective) -> Result<Dominance> {
    let (_, det_value) = single_best_oracle(mu, obj)?;
    let prob_value = if obj.is_differentiable() {
        prob_oracle(mu, obj, DEFAULT_ORACLE_ITERS)?.1
    } else if mu.num_arms() == 2 {
        grid_oracle_k2(mu, obj)?.1
    } else {
        return Err(Error::NonDifferentiableObjective);
    };
    let gap = if prob_value == det_value {
        0.0
    } else {
        prob_value - det_value
    };
    if !(prob_value >= det_value - DOMINANCE_TOL) {
        return Err(Error::InvalidObjective(format!(
            "probabilistic optimum {prob_value} below single-best {det_value}"
        )));
    }
    Ok(Dominance {
        prob_value,
        det_value,
        gap,
    })
}

/// Weight `beta_t` of the newest sample in the tracked inner value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSchedule {
    /// `t^(-exponent)`.
    Power {
        exponent: f64,
    },
    Constant {
        beta: f64,
    },
}

impl Default for BetaSchedule {
    /// Two-timescale default `t^(-3/4)`.
    fn default() -> Self {
        BetaSchedule::Power { exponent: 0.75 }
    }
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            BetaSchedule::Power { exponent } => exponent.is_finite() && exponent >= 0.0,
            BetaSchedule::Constant { beta } => beta > 0.0 && beta <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid beta schedule {self:?}"
            )))
        }
    }

    pub fn at(&self, t: usize) -> f64 {
        match *self {
            BetaSchedule::Power { exponent } => (t as f64).powf(-exponent),
            BetaSchedule::Constant { beta } => beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SscgdConfig {
    /// Shared loop settings; `prior` and `prior_weight` are ignored.
    pub base: PastoConfig,
    pub beta: BetaSchedule,
}

struct InnerValueTracker {
    beta: BetaSchedule,
    z: Option<Vec<f64>>,
    t: usize,
}

impl DirectionTracker for InnerValueTracker {
    fn update(&mut self, uhat: MetricMatrix, p: &Pmf, obj: &Objective) -> Result<(Vec<f64>, f64)> {
        self.t += 1;
        let sample = uhat.mix(p.probs())?;
        let z = match self.z.take() {
            None => sample,
            Some(prev) => {
                let b = self.beta.at(self.t);
                prev.iter()
                    .zip(&sample)
                    .map(|(zp, s)| (1.0 - b) * zp + b * s)
                    .collect()
            }
        };
        let g = uhat.transpose_mul(&objective_grad(obj, &z)?)?;
        let value = objective_value(obj, &z)?;
        self.z = Some(z);
        Ok((g, value))
    }
}

/// Same loop as the main optimizer, but the direction is
/// `U_t^T grad f(z_t)` with `z_t = (1 - beta_t) z_{t-1} + beta_t U_t p_t`.
pub fn sscgd_run<E: Environment + ?Sized>(
    env: &mut E,
    obj: &Objective,
    cfg: &SscgdConfig,
) -> Result<(Pmf, Trajectory)> {
    cfg.beta.validate()?;
    let mut tracker = InnerValueTracker {
        beta: cfg.beta,
        z: None,
        t: 0,
    };
    run_loop(env, obj, &cfg.base, &mut tracker, LoopOptions::default())
}
