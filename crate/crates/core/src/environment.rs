//! Simulated online systems: a fixed ground-truth metric matrix plus i.i.d.
//! Gaussian query noise, the two synthetic study settings, and a drift wrapper
//! for time-varying ground truth.

use std::borrow::Cow;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baselines::{prob_oracle, single_best_oracle, DEFAULT_ORACLE_ITERS};
use crate::error::{Error, Result};
use crate::types::{Guardrail, MetricMatrix, Objective};

/// Noise variance of the two-arm illustrating setting.
pub const SETTING_A_NOISE_VARIANCE: f64 = 5.0;
pub const SETTING_A_PARALLEL_Q: usize = 1;
pub const SETTING_B_PARALLEL_Q: usize = 10;
pub const SETTING_B_THRESHOLD: f64 = 0.5;
/// Penalty used by every guardrail in the synthetic studies.
pub const STUDY_LAMBDA: f64 = 5.0;

/// Anything that can be queried for one noisy metric vector per arm.
pub trait Environment {
    fn num_arms(&self) -> usize;
    fn num_metrics(&self) -> usize;
    /// Noisy observation of `arm` at 1-based round `t`.
    fn query(&mut self, arm: usize, t: usize) -> Result<Vec<f64>>;
    /// Expected metrics at round `t`, when known.
    fn ground_truth(&self, t: usize) -> Option<Cow<'_, MetricMatrix>>;
    fn is_stationary(&self) -> bool {
        true
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn num_arms(&self) -> usize {
        (**self).num_arms()
    }
    fn num_metrics(&self) -> usize {
        (**self).num_metrics()
    }
    fn query(&mut self, arm: usize, t: usize) -> Result<Vec<f64>> {
        (**self).query(arm, t)
    }
    fn ground_truth(&self, t: usize) -> Option<Cow<'_, MetricMatrix>> {
        (**self).ground_truth(t)
    }
    fn is_stationary(&self) -> bool {
        (**self).is_stationary()
    }
}

/// Stationary environment: `query(k) = mu[:, k] + N(0, sigma^2)` per entry.
#[derive(Debug, Clone)]
pub struct SimulatedEnv {
    mu: MetricMatrix,
    sigma: f64,
    rng: ChaCha8Rng,
}

impl SimulatedEnv {
    pub fn new(mu: MetricMatrix, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise std must be finite and nonnegative, got {sigma}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(SimulatedEnv { mu, sigma, rng })
    }

    pub fn mu(&self) -> &MetricMatrix {
        &self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Environment for SimulatedEnv {
    fn num_arms(&self) -> usize {
        self.mu.num_arms()
    }

    fn num_metrics(&self) -> usize {
        self.mu.num_metrics()
    }

    fn query(&mut self, arm: usize, _t: usize) -> Result<Vec<f64>> {
        if arm >= self.mu.num_arms() {
            return Err(Error::ArmOutOfRange {
                arm,
                arms: self.mu.num_arms(),
            });
        }
        let mut out = self.mu.column(arm);
        if self.sigma > 0.0 {
            for v in &mut out {
                let z: f64 = self.rng.sample(StandardNormal);
                *v += self.sigma * z;
            }
        }
        Ok(out)
    }

    fn ground_truth(&self, _t: usize) -> Option<Cow<'_, MetricMatrix>> {
        Some(Cow::Borrowed(&self.mu))
    }
}

/// Adds `amplitude * sin(2 pi t / period)` to every arm of one metric row.
#[derive(Debug, Clone)]
pub struct Drifting<E> {
    inner: E,
    metric: usize,
    amplitude: f64,
    period: f64,
}

impl<E: Environment> Drifting<E> {
    pub fn new(inner: E, metric: usize, amplitude: f64, period: f64) -> Result<Self> {
        if metric >= inner.num_metrics() {
            return Err(Error::InvalidConfig(format!(
                "drift metric {metric} out of range"
            )));
        }
        if !(amplitude.is_finite() && period.is_finite() && period > 0.0) {
            return Err(Error::InvalidConfig(
                "drift needs a finite amplitude and a positive period".into(),
            ));
        }
        Ok(Drifting {
            inner,
            metric,
            amplitude,
            period,
        })
    }

    pub fn shift(&self, t: usize) -> f64 {
        self.amplitude * (2.0 * PI * t as f64 / self.period).sin()
    }
}

impl<E: Environment> Environment for Drifting<E> {
    fn num_arms(&self) -> usize {
        self.inner.num_arms()
    }

    fn num_metrics(&self) -> usize {
        self.inner.num_metrics()
    }

    fn query(&mut self, arm: usize, t: usize) -> Result<Vec<f64>> {
        let mut v = self.inner.query(arm, t)?;
        v[self.metric] += self.shift(t);
        Ok(v)
    }

    fn ground_truth(&self, t: usize) -> Option<Cow<'_, MetricMatrix>> {
        let mut mu = self.inner.ground_truth(t)?.into_owned();
        let shift = self.shift(t);
        for arm in 0..mu.num_arms() {
            mu.set(self.metric, arm, mu.get(self.metric, arm) + shift);
        }
        Some(Cow::Owned(mu))
    }

    fn is_stationary(&self) -> bool {
        self.amplitude == 0.0 && self.inner.is_stationary()
    }
}

/// Two arms, primary `[2, 0]`, guardrail `[-2, 2]`, soft penalty at `c = 0`.
pub fn setting_a_mu() -> MetricMatrix {
    MetricMatrix::from_rows(vec![vec![2.0, 0.0], vec![-2.0, 2.0]]).expect("static matrix")
}

pub fn setting_a_objective() -> Objective {
    Objective::new(0, vec![Guardrail::soft(1, 0.0, STUDY_LAMBDA)]).expect("static objective")
}

/// Setting A with noise variance 5.
pub fn setting_a(seed: u64) -> (SimulatedEnv, Objective) {
    setting_a_with_sigma(SETTING_A_NOISE_VARIANCE.sqrt(), seed)
}

pub fn setting_a_with_sigma(sigma: f64, seed: u64) -> (SimulatedEnv, Objective) {
    let env = SimulatedEnv::new(setting_a_mu(), sigma, seed).expect("valid sigma");
    (env, setting_a_objective())
}

/// Three metrics, entries i.i.d. uniform in `[-1, 1]`.
pub fn setting_b_mu(k: usize, seed: u64) -> Result<MetricMatrix> {
    if k < 2 {
        return Err(Error::InvalidConfig(
            "setting B needs at least two arms".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..3)
        .map(|_| (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    MetricMatrix::from_rows(rows)
}

pub fn setting_b_objective() -> Objective {
    Objective::new(
        0,
        vec![
            Guardrail::soft(1, SETTING_B_THRESHOLD, STUDY_LAMBDA),
            Guardrail::soft(2, SETTING_B_THRESHOLD, STUDY_LAMBDA),
        ],
    )
    .expect("static objective")
}

pub fn setting_b(k: usize, seed: u64, sigma: f64) -> Result<(SimulatedEnv, Objective)> {
    let env = SimulatedEnv::new(setting_b_mu(k, seed)?, sigma, seed)?;
    Ok((env, setting_b_objective()))
}

/// Maximum number of redraws when filtering setting-B instances by oracle gap.
pub const SETTING_B_MAX_REDRAWS: u64 = 10_000;

/// Setting B instance whose probabilistic-vs-single optimum gap exceeds
/// `min_gap`. Candidates are drawn with seeds `seed, seed + 1, ...`.
pub fn setting_b_with_min_gap(
    k: usize,
    seed: u64,
    sigma: f64,
    min_gap: f64,
) -> Result<(SimulatedEnv, Objective)> {
    let obj = setting_b_objective();
    for attempt in 0..SETTING_B_MAX_REDRAWS {
        let s = seed.wrapping_add(attempt);
        let mu = setting_b_mu(k, s)?;
        let (_, det) = single_best_oracle(&mu, &obj)?;
        let (_, prob) = prob_oracle(&mu, &obj, DEFAULT_ORACLE_ITERS)?;
        if prob - det > min_gap {
            return Ok((SimulatedEnv::new(mu, sigma, s)?, obj));
        }
    }
    Err(Error::InvalidConfig(format!(
        "no setting B instance with gap above {min_gap} in {SETTING_B_MAX_REDRAWS} draws"
    )))
}

/// Signed progress from the single-best optimum (0) to the probabilistic
/// optimum (1).
pub fn relative_gain(f_now: f64, f_single: f64, f_prob_opt: f64) -> Result<f64> {
    let gap = f_prob_opt - f_single;
    if !(gap > 1e-9) {
        return Err(Error::DegenerateGap { gap });
    }
    Ok((f_now - f_single) / gap)
}
