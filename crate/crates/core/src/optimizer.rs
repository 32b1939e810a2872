//! The main loop: smoothed sampling, querying, estimate update and a
//! KL-proximal (exponentiated-gradient) step, returning the averaged iterate.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::environment::Environment;
use crate::error::{check_dim, Error, Result};
use crate::estimator::{aggregate_uhat, pasto_gradient, resolve_cap, VhatState};
use crate::objective::{mixture_value, objective_value};
use crate::types::{
    IterationRecord, MetricMatrix, Objective, Observation, PastoConfig, Pmf, Trajectory,
    WeightVector,
};

/// `|gamma * g_k|` above this is counted as a potential overflow hazard.
pub const LARGE_STEP_THRESHOLD: f64 = 30.0;

/// Mixes the normalized weights with the uniform pmf: every entry ends up at
/// least `eps / K`.
pub fn smooth_pmf(w: &WeightVector, eps: f64) -> Result<Pmf> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    let k = w.len() as f64;
    let sum: f64 = w.weights().iter().sum();
    let floor = eps / k;
    Pmf::new(
        w.weights()
            .iter()
            .map(|wi| (1.0 - eps) * wi / sum + floor)
            .collect(),
    )
}

fn check_step(w: &WeightVector, g: &[f64], gamma: f64) -> Result<()> {
    check_dim("gradient", w.len(), g.len())?;
    if let Some(index) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "step size must be positive, got {gamma}"
        )));
    }
    Ok(())
}

/// `w_k <- w_k * exp(gamma * g_k)`, rescaled so the largest weight is one.
/// The rescale leaves the induced pmf unchanged.
pub fn kl_proximal_step(w: &WeightVector, g: &[f64], gamma: f64) -> Result<WeightVector> {
    check_step(w, g, gamma)?;
    let logs: Vec<f64> = w
        .weights()
        .iter()
        .zip(g)
        .map(|(wi, gi)| wi.ln() + gamma * gi)
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    WeightVector::new(
        logs.iter()
            .map(|l| (l - top).exp().max(f64::MIN_POSITIVE))
            .collect(),
    )
}

/// The same step without rescaling; overflows on long runs.
pub(crate) fn kl_step_unscaled(w: &WeightVector, g: &[f64], gamma: f64) -> Result<WeightVector> {
    check_step(w, g, gamma)?;
    WeightVector::new(
        w.weights()
            .iter()
            .zip(g)
            .map(|(wi, gi)| wi * (gamma * gi).exp())
            .collect(),
    )
}

/// Turns one round's sparse estimate into a search direction.
pub(crate) trait DirectionTracker {
    /// Returns `(g_t, objective on the tracked estimate)`.
    fn update(&mut self, uhat: MetricMatrix, p: &Pmf, obj: &Objective) -> Result<(Vec<f64>, f64)>;
}

struct HistoryAverage(VhatState);

impl DirectionTracker for HistoryAverage {
    fn update(&mut self, uhat: MetricMatrix, p: &Pmf, obj: &Objective) -> Result<(Vec<f64>, f64)> {
        self.0.absorb(std::slice::from_ref(&uhat))?;
        let mean = self.0.mean();
        let g = pasto_gradient(mean, p, obj)?;
        let value = objective_value(obj, &mean.mix(p.probs())?)?;
        Ok((g, value))
    }
}

#[derive(Clone, Copy)]
pub(crate) struct LoopOptions {
    pub rescale: bool,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions { rescale: true }
    }
}

/// Draws `q` arms i.i.d. from `p` and queries the environment for each.
fn query_round<E: Environment + ?Sized>(
    env: &mut E,
    p: &Pmf,
    q: usize,
    t: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Observation>> {
    let dist = WeightedIndex::new(p.probs())
        .map_err(|e| Error::InvalidConfig(format!("cannot sample from pmf: {e}")))?;
    (0..q)
        .map(|_| {
            let arm = dist.sample(rng);
            let metrics = env.query(arm, t)?;
            check_dim("environment observation", env.num_metrics(), metrics.len())?;
            Ok(Observation {
                arm,
                metrics,
                sample_prob: p.probs()[arm],
            })
        })
        .collect()
}

pub(crate) fn run_loop<E, D>(
    env: &mut E,
    obj: &Objective,
    cfg: &PastoConfig,
    tracker: &mut D,
    opts: LoopOptions,
) -> Result<(Pmf, Trajectory)>
where
    E: Environment + ?Sized,
    D: DirectionTracker,
{
    let (k, m) = (env.num_arms(), env.num_metrics());
    cfg.validate(k, m)?;
    obj.check_metrics(m)?;
    if !obj.is_differentiable() {
        return Err(Error::NonDifferentiableObjective);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut w = WeightVector::ones(k)?;
    let mut max_abs_seen = 0.0f64;
    let mut records = Vec::with_capacity(cfg.horizon);
    let mut large_step_count = 0;

    for t in 1..=cfg.horizon {
        let eps = cfg.epsilon.at(t);
        let p = smooth_pmf(&w, eps)?;
        let observations = query_round(env, &p, cfg.parallel_q, t, &mut rng)?;
        for o in &observations {
            max_abs_seen = o.metrics.iter().fold(max_abs_seen, |a, v| a.max(v.abs()));
        }
        let cap = resolve_cap(cfg.cap, max_abs_seen, k, eps);
        let uhat = aggregate_uhat(&observations, k, m, cap)?;
        let (g, vhat_objective) = tracker.update(uhat, &p, obj)?;

        if g.iter()
            .any(|gi| (cfg.gamma * gi).abs() > LARGE_STEP_THRESHOLD)
        {
            if large_step_count == 0 {
                log::warn!(
                    "step gamma * g exceeded {LARGE_STEP_THRESHOLD} at t = {t}; consider a smaller gamma or cap"
                );
            }
            large_step_count += 1;
        }
        w = if opts.rescale {
            kl_proximal_step(&w, &g, cfg.gamma)?
        } else {
            kl_step_unscaled(&w, &g, cfg.gamma)?
        };

        let true_objective = match env.ground_truth(t) {
            Some(mu) => Some(mixture_value(obj, &mu, p.probs())?),
            None => None,
        };
        records.push(IterationRecord {
            t,
            epsilon: eps,
            p,
            observations,
            gradient: g,
            vhat_objective,
            true_objective,
        });
    }

    let p_bar = Pmf::mean(records.iter().map(|r| &r.p))?;
    Ok((
        p_bar.clone(),
        Trajectory {
            records,
            p_bar,
            large_step_count,
        },
    ))
}

/// Runs the history-averaged optimizer for `cfg.horizon` rounds.
///
/// Deterministic given `cfg.rng_seed` and the environment's own seed.
pub fn pasto_run<E: Environment + ?Sized>(
    env: &mut E,
    obj: &Objective,
    cfg: &PastoConfig,
) -> Result<(Pmf, Trajectory)> {
    let vhat = VhatState::new(
        cfg.prior.clone(),
        cfg.prior_weight,
        env.num_metrics(),
        env.num_arms(),
    )?;
    run_loop(
        env,
        obj,
        cfg,
        &mut HistoryAverage(vhat),
        LoopOptions::default(),
    )
}

#[cfg(test)]
pub(crate) fn pasto_run_unscaled<E: Environment + ?Sized>(
    env: &mut E,
    obj: &Objective,
    cfg: &PastoConfig,
) -> Result<(Pmf, Trajectory)> {
    let vhat = VhatState::new(
        cfg.prior.clone(),
        cfg.prior_weight,
        env.num_metrics(),
        env.num_arms(),
    )?;
    run_loop(
        env,
        obj,
        cfg,
        &mut HistoryAverage(vhat),
        LoopOptions { rescale: false },
    )
}
