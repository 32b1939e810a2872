//! JSON experiment description. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BetaSchedule, SscgdConfig};
use crate::environment::{
    setting_a_mu, setting_a_objective, setting_b, setting_b_objective, setting_b_with_min_gap,
    Drifting, Environment, SimulatedEnv, SETTING_A_NOISE_VARIANCE, SETTING_A_PARALLEL_Q,
    SETTING_B_PARALLEL_Q,
};
use crate::types::{CapPolicy, EpsilonSchedule, MetricMatrix, Objective, PastoConfig};

use super::seed::{derive_seed, replica_seed, SeedStream};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// Two arms, objective with a soft guardrail at zero.
    SettingA {
        #[serde(default = "default_noise_variance")]
        noise_variance: f64,
    },
    /// Fresh uniform instance per replica, three metrics.
    SettingB {
        k: usize,
        sigma: f64,
        /// Redraw instances until the oracle gap exceeds this.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_oracle_gap: Option<f64>,
    },
    Custom {
        mu: MetricMatrix,
        sigma: f64,
    },
}

fn default_noise_variance() -> f64 {
    SETTING_A_NOISE_VARIANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub amplitude: f64,
    pub period: f64,
    /// Drifting metric row; defaults to the objective's primary metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `0.1 / K`.
    TenthOverArms,
    /// `1 / sqrt(T)`.
    InverseSqrtHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSize {
    Fixed(f64),
    Rule(StepRule),
}

impl Default for StepSize {
    fn default() -> Self {
        StepSize::Rule(StepRule::TenthOverArms)
    }
}

impl StepSize {
    pub fn resolve(&self, k: usize, horizon: usize) -> f64 {
        match *self {
            StepSize::Fixed(g) => g,
            StepSize::Rule(StepRule::TenthOverArms) => 0.1 / k as f64,
            StepSize::Rule(StepRule::InverseSqrtHorizon) => 1.0 / (horizon as f64).sqrt(),
        }
    }
}

fn default_prior_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Pasto {
        #[serde(default)]
        gamma: StepSize,
        #[serde(default)]
        epsilon: EpsilonSchedule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parallel_q: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prior: Option<MetricMatrix>,
        #[serde(default = "default_prior_weight")]
        prior_weight: f64,
        #[serde(default)]
        cap: CapPolicy,
    },
    Sscgd {
        #[serde(default)]
        gamma: StepSize,
        #[serde(default)]
        epsilon: EpsilonSchedule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parallel_q: Option<usize>,
        #[serde(default)]
        cap: CapPolicy,
        #[serde(default)]
        beta: BetaSchedule,
    },
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmSpec::Pasto { .. } => "pasto",
            AlgorithmSpec::Sscgd { .. } => "sscgd",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
    Both,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    /// Overrides the environment's default objective; required for `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<Objective>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSpec>,
    pub algorithm: AlgorithmSpec,
    pub horizon: usize,
    #[serde(default = "one")]
    pub replicas: usize,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "yes")]
    pub report_true_objective: bool,
    #[serde(default)]
    pub format: OutputFormat,
}

/// The concrete optimizer settings for one replica.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplicaAlgorithm {
    Pasto(PastoConfig),
    Sscgd(SscgdConfig),
}

impl ReplicaAlgorithm {
    pub fn base(&self) -> &PastoConfig {
        match self {
            ReplicaAlgorithm::Pasto(c) => c,
            ReplicaAlgorithm::Sscgd(c) => &c.base,
        }
    }
}

/// Everything needed to execute one replica.
pub struct ReplicaSetup {
    pub env: Box<dyn Environment + Send>,
    pub objective: Objective,
    pub algorithm: ReplicaAlgorithm,
}

/// Config-level line/column anchored parse error message.
fn parse_error(source: &str, e: &serde_json::Error) -> HarnessError {
    HarnessError::Config(format!("{source}:{}:{}: {e}", e.line(), e.column()))
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str, source: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| parse_error(source, &e))?;
        cfg.validate()
            .map_err(|e| HarnessError::Config(format!("{source}: {e}")))?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("{}: cannot read config: {e}", path.display()))
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    fn arms_and_metrics(&self) -> (usize, usize) {
        match &self.environment {
            EnvironmentSpec::SettingA { .. } => (2, 2),
            EnvironmentSpec::SettingB { k, .. } => (*k, 3),
            EnvironmentSpec::Custom { mu, .. } => (mu.num_arms(), mu.num_metrics()),
        }
    }

    pub fn objective(&self) -> Result<Objective, HarnessError> {
        match (&self.objective, &self.environment) {
            (Some(o), _) => Ok(o.clone()),
            (None, EnvironmentSpec::SettingA { .. }) => Ok(setting_a_objective()),
            (None, EnvironmentSpec::SettingB { .. }) => Ok(setting_b_objective()),
            (None, EnvironmentSpec::Custom { .. }) => Err(HarnessError::Config(
                "custom environments need an explicit objective".into(),
            )),
        }
    }

    fn default_parallel_q(&self) -> usize {
        match self.environment {
            EnvironmentSpec::SettingA { .. } => SETTING_A_PARALLEL_Q,
            EnvironmentSpec::SettingB { k, .. } => SETTING_B_PARALLEL_Q.min(k),
            EnvironmentSpec::Custom { .. } => 1,
        }
    }

    /// Optimizer settings with every default resolved; `rng_seed` is filled
    /// in per replica.
    pub fn base_algorithm(&self, rng_seed: u64) -> ReplicaAlgorithm {
        let (k, _) = self.arms_and_metrics();
        let q_default = self.default_parallel_q();
        match &self.algorithm {
            AlgorithmSpec::Pasto {
                gamma,
                epsilon,
                parallel_q,
                prior,
                prior_weight,
                cap,
            } => ReplicaAlgorithm::Pasto(PastoConfig {
                horizon: self.horizon,
                gamma: gamma.resolve(k, self.horizon),
                epsilon: *epsilon,
                parallel_q: parallel_q.unwrap_or(q_default),
                prior: prior.clone(),
                prior_weight: *prior_weight,
                cap: *cap,
                rng_seed,
            }),
            AlgorithmSpec::Sscgd {
                gamma,
                epsilon,
                parallel_q,
                cap,
                beta,
            } => ReplicaAlgorithm::Sscgd(SscgdConfig {
                base: PastoConfig {
                    horizon: self.horizon,
                    gamma: gamma.resolve(k, self.horizon),
                    epsilon: *epsilon,
                    parallel_q: parallel_q.unwrap_or(q_default),
                    prior: None,
                    prior_weight: 0.0,
                    cap: *cap,
                    rng_seed,
                },
                beta: *beta,
            }),
        }
    }

    /// Structural checks that do not need to draw any instance.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.replicas == 0 {
            return bad("replicas must be positive".into());
        }
        if self.record_every == 0 {
            return bad("record_every must be positive".into());
        }
        match &self.environment {
            EnvironmentSpec::SettingA { noise_variance } => {
                if !(noise_variance.is_finite() && *noise_variance >= 0.0) {
                    return bad("noise_variance must be finite and nonnegative".into());
                }
            }
            EnvironmentSpec::SettingB {
                k,
                sigma,
                min_oracle_gap,
            } => {
                if *k < 2 {
                    return bad("setting_b needs k >= 2".into());
                }
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return bad("sigma must be finite and nonnegative".into());
                }
                if let Some(g) = min_oracle_gap {
                    if !g.is_finite() {
                        return bad("min_oracle_gap must be finite".into());
                    }
                }
            }
            EnvironmentSpec::Custom { sigma, .. } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return bad("sigma must be finite and nonnegative".into());
                }
            }
        }
        let (k, m) = self.arms_and_metrics();
        let objective = self.objective()?;
        objective
            .check_metrics(m)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(d) = &self.drift {
            if d.metric.is_some_and(|i| i >= m) {
                return bad("drift metric out of range".into());
            }
            if !(d.amplitude.is_finite() && d.period.is_finite() && d.period > 0.0) {
                return bad("drift needs a finite amplitude and a positive period".into());
            }
        }
        let algorithm = self.base_algorithm(0);
        algorithm
            .base()
            .validate(k, m)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if let ReplicaAlgorithm::Sscgd(c) = &algorithm {
            c.beta
                .validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Builds replica `r`: environment, objective and optimizer settings, all
    /// seeded from `replica_seed(seed, r)`.
    pub fn build_replica(&self, r: usize) -> Result<ReplicaSetup, HarnessError> {
        let base_seed = replica_seed(self.seed, r as u64);
        let env_seed = derive_seed(base_seed, SeedStream::Environment);
        let objective = self.objective()?;
        let sim = match &self.environment {
            EnvironmentSpec::SettingA { noise_variance } => {
                SimulatedEnv::new(setting_a_mu(), noise_variance.sqrt(), env_seed)?
            }
            EnvironmentSpec::SettingB {
                k,
                sigma,
                min_oracle_gap,
            } => match min_oracle_gap {
                Some(gap) => setting_b_with_min_gap(*k, env_seed, *sigma, *gap)?.0,
                None => setting_b(*k, env_seed, *sigma)?.0,
            },
            EnvironmentSpec::Custom { mu, sigma } => {
                SimulatedEnv::new(mu.clone(), *sigma, env_seed)?
            }
        };
        let env: Box<dyn Environment + Send> = match &self.drift {
            Some(d) => Box::new(Drifting::new(
                sim,
                d.metric.unwrap_or(objective.primary()),
                d.amplitude,
                d.period,
            )?),
            None => Box::new(sim),
        };
        Ok(ReplicaSetup {
            env,
            objective,
            algorithm: self.base_algorithm(derive_seed(base_seed, SeedStream::Algorithm)),
        })
    }

    /// Sets a dotted `path` (e.g. `algorithm.gamma`) to `value`, then
    /// re-parses and re-validates the whole config.
    pub fn with_override(
        &self,
        path: &str,
        value: serde_json::Value,
    ) -> Result<Self, HarnessError> {
        let mut root = self.to_json_value();
        let mut slot = &mut root;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = slot.as_object_mut().ok_or_else(|| {
                HarnessError::Config(format!(
                    "--param {path}: `{}` is not an object",
                    parts[..i].join(".")
                ))
            })?;
            if i + 1 == parts.len() {
                obj.insert((*part).to_string(), value);
                break;
            }
            slot = obj.entry(*part).or_insert_with(|| serde_json::json!({}));
        }
        let text = serde_json::to_string(&root).expect("json value serializes");
        Self::from_json_str(&text, &format!("--param {path}"))
    }
}
