//! Replica execution and cross-replica aggregation.

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{
    prob_oracle, prob_oracle_sum, single_best_oracle, sscgd_run, DEFAULT_ORACLE_ITERS,
};
use crate::environment::{relative_gain, Environment};
use crate::objective::mixture_value;
use crate::optimizer::pasto_run;
use crate::types::{MetricMatrix, Objective, Pmf, Trajectory};

use super::config::{ExperimentConfig, ReplicaAlgorithm};
use super::stats::{mean, nearest_rank};
use super::HarnessError;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "PASTO_THREADS";

/// Per-replica series, sampled at the experiment's recorded iterations.
/// Entries are `None` when the quantity is undefined for the environment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaSummary {
    pub replica: usize,
    pub rng_seed: u64,
    /// `f(mu_t p_t)`.
    pub objective: Vec<Option<f64>>,
    /// `f(mu_t p_bar_t)`.
    pub objective_pbar: Vec<Option<f64>>,
    /// Cumulative regret against the best fixed pmf in hindsight.
    pub regret: Vec<Option<f64>>,
    pub relative_gain: Vec<Option<f64>>,
    pub p_bar: Pmf,
    /// `min_t (min_k p_t[k] - eps_t / K)`.
    pub min_floor_margin: f64,
    pub large_step_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub t: usize,
    pub mean_obj: Option<f64>,
    pub p25_obj: Option<f64>,
    pub p75_obj: Option<f64>,
    pub mean_obj_pbar: Option<f64>,
    pub mean_regret: Option<f64>,
    pub mean_relative_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub algorithm: &'static str,
    pub gamma: f64,
    pub parallel_q: usize,
    pub epsilon: crate::types::EpsilonSchedule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<crate::baselines::BetaSchedule>,
    pub min_floor_margin: f64,
    pub large_step_count: usize,
    pub version: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub config: ExperimentConfig,
    pub recorded_t: Vec<usize>,
    pub rows: Vec<AggregateRow>,
    /// Per-arm mean of the final averaged iterate over replicas.
    pub mean_final_p_bar: Vec<f64>,
    pub replicas: Vec<ReplicaSummary>,
    pub metadata: RunMetadata,
}

/// Iterations that appear in the output: multiples of `record_every`, plus
/// the horizon.
pub fn recorded_iterations(horizon: usize, record_every: usize) -> Vec<usize> {
    let mut ts: Vec<usize> = (1..=horizon).filter(|t| t % record_every == 0).collect();
    if ts.last() != Some(&horizon) {
        ts.push(horizon);
    }
    ts
}

/// Runs replica `r` of `cfg` and reduces its trajectory to a summary.
pub fn run_replica(cfg: &ExperimentConfig, r: usize) -> Result<ReplicaSummary, HarnessError> {
    let mut setup = cfg.build_replica(r)?;
    let traj = run_algorithm(&mut *setup.env, &setup.objective, &setup.algorithm)?;
    summarize(
        cfg,
        r,
        setup.algorithm.base().rng_seed,
        &*setup.env,
        &setup.objective,
        &traj,
    )
}

/// Dispatches to the configured optimizer.
pub fn run_algorithm(
    env: &mut (dyn Environment + Send),
    obj: &Objective,
    algorithm: &ReplicaAlgorithm,
) -> Result<Trajectory, HarnessError> {
    let (_, traj) = match algorithm {
        ReplicaAlgorithm::Pasto(c) => pasto_run(env, obj, c)?,
        ReplicaAlgorithm::Sscgd(c) => sscgd_run(env, obj, c)?,
    };
    Ok(traj)
}

/// Reference values for regret and relative gain.
enum Comparator {
    Stationary {
        mu: MetricMatrix,
        f_star: f64,
        /// `(f_single, f_prob)` when the gap is large enough to normalize by.
        gain_anchor: Option<(f64, f64)>,
    },
    /// Ground truth varies with `t`; the running averages of `mu` and the
    /// fixed pmf maximizing the sum of `f(avg_s p)`.
    Drifting {
        averages: Vec<MetricMatrix>,
        p_star: Pmf,
    },
}

fn comparator(
    env: &dyn Environment,
    obj: &Objective,
    horizon: usize,
) -> Result<Option<Comparator>, HarnessError> {
    if env.ground_truth(1).is_none() {
        return Ok(None);
    }
    if env.is_stationary() {
        let mu = env.ground_truth(1).expect("checked above").into_owned();
        let (_, f_star) = prob_oracle(&mu, obj, DEFAULT_ORACLE_ITERS)?;
        let (_, f_single) = single_best_oracle(&mu, obj)?;
        let gain_anchor = (f_star - f_single > 1e-9).then_some((f_single, f_star));
        return Ok(Some(Comparator::Stationary {
            mu,
            f_star,
            gain_anchor,
        }));
    }
    let mut averages = Vec::with_capacity(horizon);
    let mut sum: Option<MetricMatrix> = None;
    for t in 1..=horizon {
        let mu = env.ground_truth(t).ok_or_else(|| {
            HarnessError::Runtime(crate::Error::EnvironmentFailure(format!(
                "ground truth missing at t = {t}"
            )))
        })?;
        let acc = match sum.take() {
            None => mu.into_owned(),
            Some(mut acc) => {
                acc.same_shape(&mu)?;
                for (a, v) in acc.as_mut_slice().iter_mut().zip(mu.as_slice()) {
                    *a += v;
                }
                acc
            }
        };
        let mut avg = acc.clone();
        avg.as_mut_slice().iter_mut().for_each(|v| *v /= t as f64);
        averages.push(avg);
        sum = Some(acc);
    }
    let (p_star, _) = prob_oracle_sum(&averages, obj, DEFAULT_ORACLE_ITERS)?;
    Ok(Some(Comparator::Drifting { averages, p_star }))
}

fn summarize(
    cfg: &ExperimentConfig,
    replica: usize,
    rng_seed: u64,
    env: &dyn Environment,
    obj: &Objective,
    traj: &Trajectory,
) -> Result<ReplicaSummary, HarnessError> {
    let k = traj.p_bar.len() as f64;
    let min_floor_margin = traj
        .records
        .iter()
        .map(|r| r.p.min_prob() - r.epsilon / k)
        .fold(f64::INFINITY, f64::min);

    let recorded = recorded_iterations(traj.horizon(), cfg.record_every);
    let n = recorded.len();
    let mut summary = ReplicaSummary {
        replica,
        rng_seed,
        objective: vec![None; n],
        objective_pbar: vec![None; n],
        regret: vec![None; n],
        relative_gain: vec![None; n],
        p_bar: traj.p_bar.clone(),
        min_floor_margin,
        large_step_count: traj.large_step_count,
    };
    if !cfg.report_true_objective {
        return Ok(summary);
    }
    let Some(reference) = comparator(env, obj, traj.horizon())? else {
        return Ok(summary);
    };

    let mut cumulative = 0.0;
    let mut p_sum = vec![0.0; traj.p_bar.len()];
    let mut slot = 0;
    for record in &traj.records {
        let t = record.t;
        p_sum
            .iter_mut()
            .zip(record.p.probs())
            .for_each(|(a, v)| *a += v);
        let instant = match &reference {
            Comparator::Stationary { mu, f_star, .. } => {
                f_star - mixture_value(obj, mu, record.p.probs())?
            }
            Comparator::Drifting { averages, p_star } => {
                let avg = &averages[t - 1];
                mixture_value(obj, avg, p_star.probs())?
                    - mixture_value(obj, avg, record.p.probs())?
            }
        };
        cumulative += instant;
        if slot < n && recorded[slot] == t {
            let p_bar_t: Vec<f64> = p_sum.iter().map(|v| v / t as f64).collect();
            let mu_t = env.ground_truth(t).expect("ground truth checked");
            let f_pbar = mixture_value(obj, &mu_t, &p_bar_t)?;
            summary.objective[slot] = record.true_objective;
            summary.objective_pbar[slot] = Some(f_pbar);
            summary.regret[slot] = Some(cumulative);
            if let Comparator::Stationary {
                gain_anchor: Some((f_single, f_prob)),
                ..
            } = &reference
            {
                summary.relative_gain[slot] = Some(relative_gain(f_pbar, *f_single, *f_prob)?);
            }
            slot += 1;
        }
    }
    Ok(summary)
}

fn aggregate(recorded: &[usize], replicas: &[ReplicaSummary]) -> Vec<AggregateRow> {
    let column = |i: usize, pick: fn(&ReplicaSummary) -> &Vec<Option<f64>>| -> Vec<f64> {
        replicas.iter().filter_map(|s| pick(s)[i]).collect()
    };
    recorded
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let obj = column(i, |s| &s.objective);
            AggregateRow {
                t,
                mean_obj: mean(&obj),
                p25_obj: nearest_rank(&obj, 25.0),
                p75_obj: nearest_rank(&obj, 75.0),
                mean_obj_pbar: mean(&column(i, |s| &s.objective_pbar)),
                mean_regret: mean(&column(i, |s| &s.regret)),
                mean_relative_gain: mean(&column(i, |s| &s.relative_gain)),
            }
        })
        .collect()
}

/// Worker count from `PASTO_THREADS`, falling back to rayon's default.
pub fn threads_from_env() -> Result<Option<usize>, HarnessError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(HarnessError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

/// Runs every replica, honouring `PASTO_THREADS`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultBundle, HarnessError> {
    run_experiment_with_threads(cfg, threads_from_env()?)
}

/// Runs every replica on a pool of `threads` workers (rayon's default when
/// `None`). Output does not depend on the worker count.
pub fn run_experiment_with_threads(
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ResultBundle, HarnessError> {
    cfg.validate()?;
    if !cfg.objective()?.is_differentiable() {
        return Err(HarnessError::Config(
            "optimizers need a differentiable objective; use soft_square guardrails".into(),
        ));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Runtime(crate::Error::InvalidConfig(e.to_string())))?;
    let replicas: Vec<ReplicaSummary> = pool.install(|| {
        (0..cfg.replicas)
            .into_par_iter()
            .map(|r| run_replica(cfg, r))
            .collect::<Result<_, _>>()
    })?;

    let recorded_t = recorded_iterations(cfg.horizon, cfg.record_every);
    let rows = aggregate(&recorded_t, &replicas);
    let k = replicas[0].p_bar.len();
    let mean_final_p_bar = (0..k)
        .map(|a| replicas.iter().map(|s| s.p_bar.probs()[a]).sum::<f64>() / replicas.len() as f64)
        .collect();
    let algorithm = cfg.base_algorithm(0);
    let base = algorithm.base();
    let metadata = RunMetadata {
        algorithm: cfg.algorithm.name(),
        gamma: base.gamma,
        parallel_q: base.parallel_q,
        epsilon: base.epsilon,
        beta: match &algorithm {
            ReplicaAlgorithm::Sscgd(c) => Some(c.beta),
            ReplicaAlgorithm::Pasto(_) => None,
        },
        min_floor_margin: replicas
            .iter()
            .map(|s| s.min_floor_margin)
            .fold(f64::INFINITY, f64::min),
        large_step_count: replicas.iter().map(|s| s.large_step_count).sum(),
        version: env!("CARGO_PKG_VERSION"),
    };
    Ok(ResultBundle {
        config: cfg.clone(),
        recorded_t,
        rows,
        mean_final_p_bar,
        replicas,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_json_str(text, "test").unwrap()
    }

    #[test]
    fn recorded_grid() {
        assert_eq!(recorded_iterations(1, 1), vec![1]);
        assert_eq!(recorded_iterations(1, 10), vec![1]);
        assert_eq!(recorded_iterations(25, 10), vec![10, 20, 25]);
        assert_eq!(recorded_iterations(20, 10), vec![10, 20]);
    }

    #[test]
    fn stationary_regret_is_nonnegative_and_monotone() {
        let c = cfg(r#"{"environment":{"kind":"setting_a"},
            "algorithm":{"kind":"pasto","gamma":0.05},
            "horizon":300,"replicas":4,"record_every":7,"seed":3}"#);
        let bundle = run_experiment_with_threads(&c, Some(2)).unwrap();
        for s in &bundle.replicas {
            let mut prev = 0.0;
            for r in &s.regret {
                let r = r.unwrap();
                assert!(r >= prev - 1e-6, "{r} < {prev}");
                prev = r;
            }
            assert!(s.min_floor_margin >= -1e-12);
        }
        for row in &bundle.rows {
            let (lo, hi) = (row.p25_obj.unwrap(), row.p75_obj.unwrap());
            assert!(lo <= hi);
        }
        // setting A's single-best value is 0 and the soft optimum 1.0125
        let s = &bundle.replicas[0];
        let last = s.objective_pbar.len() - 1;
        let r = s.relative_gain[last].unwrap();
        assert!((r - s.objective_pbar[last].unwrap() / 1.0125).abs() < 1e-6);
    }

    #[test]
    fn drift_disables_relative_gain_and_keeps_regret() {
        let c = cfg(r#"{"environment":{"kind":"setting_a"},
            "drift":{"amplitude":0.5,"period":50},
            "algorithm":{"kind":"pasto","gamma":0.05},
            "horizon":120,"replicas":2,"record_every":40,"seed":1}"#);
        let bundle = run_experiment_with_threads(&c, Some(1)).unwrap();
        for s in &bundle.replicas {
            assert!(s.relative_gain.iter().all(Option::is_none));
            assert!(s.regret.iter().all(Option::is_some));
        }
        assert_eq!(bundle.rows.len(), 3);
        assert!(bundle.rows[0].mean_relative_gain.is_none());
    }

    #[test]
    fn ground_truth_reporting_can_be_disabled() {
        let c = cfg(r#"{"environment":{"kind":"setting_a"},
            "algorithm":{"kind":"sscgd"},
            "horizon":10,"replicas":2,"report_true_objective":false}"#);
        let bundle = run_experiment_with_threads(&c, Some(1)).unwrap();
        assert!(bundle
            .rows
            .iter()
            .all(|r| r.mean_obj.is_none() && r.mean_regret.is_none()));
        assert_eq!(
            bundle.metadata.beta,
            Some(crate::baselines::BetaSchedule::default())
        );
        let total: f64 = bundle.mean_final_p_bar.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hard_barrier_objective_is_a_config_error() {
        let c = cfg(r#"{"environment":{"kind":"setting_a"},
            "objective":{"primary":0,"guardrails":[{"metric":1,"threshold":0,"kind":"hard_barrier"}]},
            "algorithm":{"kind":"pasto"},"horizon":3}"#);
        assert!(matches!(run_experiment(&c), Err(HarnessError::Config(_))));
    }
}
