//! Value types shared across the optimizer, the baselines and the harness.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Sums within this distance of one are left untouched so that re-wrapping
/// an existing pmf is bit-exact.
const RENORMALIZE_SLACK: f64 = 1e-12;

fn validate_entries(raw: &[f64]) -> Result<()> {
    if raw.is_empty() {
        return Err(Error::EmptyVector);
    }
    for (index, &value) in raw.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteEntry { index });
        }
        if value < 0.0 {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    Ok(())
}

/// Probability mass function over `K` arms.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Pmf(Vec<f64>);

impl Pmf {
    /// Normalizes `raw` into a pmf. Accepts any finite, nonnegative vector
    /// with a positive sum.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        validate_entries(&raw)?;
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::ZeroSum);
        }
        if (sum - 1.0).abs() <= RENORMALIZE_SLACK {
            return Ok(Pmf(raw));
        }
        Ok(Pmf(raw.into_iter().map(|v| v / sum).collect()))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyVector);
        }
        Ok(Pmf(vec![1.0 / k as f64; k]))
    }

    pub fn one_hot(k: usize, arm: usize) -> Result<Self> {
        if arm >= k {
            return Err(Error::ArmOutOfRange { arm, arms: k });
        }
        let mut v = vec![0.0; k];
        v[arm] = 1.0;
        Ok(Pmf(v))
    }

    /// Arithmetic mean of a non-empty sequence of equal-length pmfs.
    pub fn mean<'a, I>(pmfs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Pmf>,
    {
        let mut acc: Option<Vec<f64>> = None;
        let mut n = 0usize;
        for p in pmfs {
            let acc = acc.get_or_insert_with(|| vec![0.0; p.len()]);
            check_dim("pmf mean", acc.len(), p.len())?;
            for (a, v) in acc.iter_mut().zip(p.probs()) {
                *a += v;
            }
            n += 1;
        }
        let acc = acc.ok_or(Error::EmptyVector)?;
        Pmf::new(acc.into_iter().map(|v| v / n as f64).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min_prob(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl<'de> Deserialize<'de> for Pmf {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(d)?;
        Pmf::new(raw).map_err(serde::de::Error::custom)
    }
}

/// Unnormalized exponentiated-gradient weights. Only the direction matters:
/// `w` and `c * w` induce the same pmf for any `c > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(index) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidWeight { index });
        }
        Ok(WeightVector(weights))
    }

    pub fn ones(k: usize) -> Result<Self> {
        Self::new(vec![1.0; k])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_pmf(&self) -> Pmf {
        let sum: f64 = self.0.iter().sum();
        Pmf(self.0.iter().map(|w| w / sum).collect())
    }
}

/// `M x K` matrix of per-arm metrics, stored row-major: one row per metric,
/// one column per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MetricMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyVector);
        }
        Ok(MetricMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if m == 0 || k == 0 {
            return Err(Error::EmptyVector);
        }
        let mut data = Vec::with_capacity(m * k);
        for row in rows {
            check_dim("metric matrix row", k, row.len())?;
            data.extend(row);
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { index });
        }
        Ok(MetricMatrix {
            rows: m,
            cols: k,
            data,
        })
    }

    /// Number of metrics `M`.
    pub fn num_metrics(&self) -> usize {
        self.rows
    }

    /// Number of arms `K`.
    pub fn num_arms(&self) -> usize {
        self.cols
    }

    pub fn get(&self, metric: usize, arm: usize) -> f64 {
        self.data[metric * self.cols + arm]
    }

    pub fn set(&mut self, metric: usize, arm: usize, value: f64) {
        self.data[metric * self.cols + arm] = value;
    }

    pub fn row(&self, metric: usize) -> &[f64] {
        &self.data[metric * self.cols..(metric + 1) * self.cols]
    }

    pub fn column(&self, arm: usize) -> Vec<f64> {
        (0..self.rows).map(|m| self.get(m, arm)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn same_shape(&self, other: &MetricMatrix) -> Result<()> {
        check_dim("matrix rows", self.rows, other.rows)?;
        check_dim("matrix columns", self.cols, other.cols)
    }

    /// `self * p`: the pmf-weighted mixture of arm columns, one value per metric.
    pub fn mix(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_dim("mixture weights", self.cols, p.len())?;
        Ok(self
            .data
            .chunks(self.cols)
            .map(|row| row.iter().zip(p).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `self^T * v`: one value per arm.
    pub fn transpose_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim("transpose product", self.rows, v.len())?;
        let mut out = vec![0.0; self.cols];
        for (row, &coef) in self.data.chunks(self.cols).zip(v) {
            if coef == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * coef;
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

impl Serialize for MetricMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for MetricMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        MetricMatrix::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// How a guardrail metric below its threshold is penalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GuardrailKind {
    /// Subtracts `lambda * min(0, y - c)^2`.
    SoftSquare { lambda: f64 },
    /// Objective becomes negative infinity when `y < c`.
    HardBarrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawGuardrailKind {
    SoftSquare,
    HardBarrier,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGuardrail {
    metric: usize,
    threshold: f64,
    kind: RawGuardrailKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGuardrail", into = "RawGuardrail")]
pub struct Guardrail {
    pub metric: usize,
    pub threshold: f64,
    pub kind: GuardrailKind,
}

impl TryFrom<RawGuardrail> for Guardrail {
    type Error = Error;

    fn try_from(raw: RawGuardrail) -> Result<Self> {
        let kind = match (raw.kind, raw.lambda) {
            (RawGuardrailKind::SoftSquare, Some(lambda)) => GuardrailKind::SoftSquare { lambda },
            (RawGuardrailKind::SoftSquare, None) => {
                return Err(Error::InvalidObjective(format!(
                    "soft guardrail on metric {} needs a lambda",
                    raw.metric
                )))
            }
            (RawGuardrailKind::HardBarrier, None) => GuardrailKind::HardBarrier,
            (RawGuardrailKind::HardBarrier, Some(_)) => {
                return Err(Error::InvalidObjective(format!(
                    "hard barrier on metric {} takes no lambda",
                    raw.metric
                )))
            }
        };
        Ok(Guardrail {
            metric: raw.metric,
            threshold: raw.threshold,
            kind,
        })
    }
}

impl From<Guardrail> for RawGuardrail {
    fn from(g: Guardrail) -> Self {
        let (kind, lambda) = match g.kind {
            GuardrailKind::SoftSquare { lambda } => (RawGuardrailKind::SoftSquare, Some(lambda)),
            GuardrailKind::HardBarrier => (RawGuardrailKind::HardBarrier, None),
        };
        RawGuardrail {
            metric: g.metric,
            threshold: g.threshold,
            kind,
            lambda,
        }
    }
}

impl Guardrail {
    pub fn soft(metric: usize, threshold: f64, lambda: f64) -> Self {
        Guardrail {
            metric,
            threshold,
            kind: GuardrailKind::SoftSquare { lambda },
        }
    }

    pub fn hard(metric: usize, threshold: f64) -> Self {
        Guardrail {
            metric,
            threshold,
            kind: GuardrailKind::HardBarrier,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObjective {
    primary: usize,
    #[serde(default)]
    guardrails: Vec<Guardrail>,
}

/// Primary metric to maximize plus guardrail constraints on other metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawObjective", into = "RawObjective")]
pub struct Objective {
    primary: usize,
    guardrails: Vec<Guardrail>,
}

impl TryFrom<RawObjective> for Objective {
    type Error = Error;

    fn try_from(raw: RawObjective) -> Result<Self> {
        Objective::new(raw.primary, raw.guardrails)
    }
}

impl From<Objective> for RawObjective {
    fn from(o: Objective) -> Self {
        RawObjective {
            primary: o.primary,
            guardrails: o.guardrails,
        }
    }
}

impl Objective {
    pub fn new(primary: usize, guardrails: Vec<Guardrail>) -> Result<Self> {
        let mut seen = vec![primary];
        for g in &guardrails {
            if seen.contains(&g.metric) {
                return Err(Error::InvalidObjective(format!(
                    "metric {} used more than once",
                    g.metric
                )));
            }
            seen.push(g.metric);
            if !g.threshold.is_finite() {
                return Err(Error::InvalidObjective(format!(
                    "threshold for metric {} is not finite",
                    g.metric
                )));
            }
            if let GuardrailKind::SoftSquare { lambda } = g.kind {
                if !(lambda.is_finite() && lambda >= 0.0) {
                    return Err(Error::InvalidObjective(format!(
                        "penalty for metric {} must be finite and nonnegative",
                        g.metric
                    )));
                }
            }
        }
        Ok(Objective {
            primary,
            guardrails,
        })
    }

    /// Objective with no guardrails: `f(z) = z[primary]`.
    pub fn linear(primary: usize) -> Self {
        Objective {
            primary,
            guardrails: Vec::new(),
        }
    }

    pub fn primary(&self) -> usize {
        self.primary
    }

    pub fn guardrails(&self) -> &[Guardrail] {
        &self.guardrails
    }

    pub fn is_differentiable(&self) -> bool {
        self.guardrails
            .iter()
            .all(|g| matches!(g.kind, GuardrailKind::SoftSquare { .. }))
    }

    /// Copy with every hard barrier turned into a soft square penalty.
    pub fn softened(&self, lambda: f64) -> Result<Self> {
        let guardrails = self
            .guardrails
            .iter()
            .map(|g| match g.kind {
                GuardrailKind::HardBarrier => Guardrail::soft(g.metric, g.threshold, lambda),
                _ => *g,
            })
            .collect();
        Objective::new(self.primary, guardrails)
    }

    /// Checks that every referenced metric exists in an `M`-metric problem.
    pub fn check_metrics(&self, m: usize) -> Result<()> {
        let max = self
            .guardrails
            .iter()
            .map(|g| g.metric)
            .chain(std::iter::once(self.primary))
            .max()
            .unwrap_or(0);
        if max >= m {
            return Err(Error::InvalidObjective(format!(
                "metric index {max} out of range for {m} metrics"
            )));
        }
        Ok(())
    }
}

/// Exploration schedule `eps_t`, realized values clamped into `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsilonSchedule {
    /// `G / sqrt(t)`.
    TheoryGt {
        g: f64,
    },
    /// `a / sqrt(t + b)`.
    PaperSim {
        a: f64,
        b: f64,
    },
    Constant {
        eps: f64,
    },
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule::PaperSim { a: 0.1, b: 10.0 }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            EpsilonSchedule::TheoryGt { g } => g.is_finite() && g > 0.0,
            EpsilonSchedule::PaperSim { a, b } => {
                a.is_finite() && a > 0.0 && b.is_finite() && b >= 0.0
            }
            EpsilonSchedule::Constant { eps } => eps > 0.0 && eps < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid smoothing schedule {self:?}"
            )))
        }
    }

    /// Smoothing level at iteration `t >= 1`.
    pub fn at(&self, t: usize) -> f64 {
        let t = t as f64;
        let raw = match *self {
            EpsilonSchedule::TheoryGt { g } => g / t.sqrt(),
            EpsilonSchedule::PaperSim { a, b } => a / (t + b).sqrt(),
            EpsilonSchedule::Constant { eps } => eps,
        };
        raw.clamp(f64::MIN_POSITIVE, 1.0)
    }
}

/// Bound applied to importance-weighted entries of the sparse estimator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CapPolicy {
    /// `max |observed metric| * K / eps_t`, using the running max over the run.
    #[default]
    Auto,
    Fixed {
        cap: f64,
    },
    Unbounded,
}

/// Inputs for a single optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct PastoConfig {
    pub horizon: usize,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub parallel_q: usize,
    pub prior: Option<MetricMatrix>,
    /// Pseudo-observation count given to `prior` (a zero matrix when absent).
    pub prior_weight: f64,
    pub cap: CapPolicy,
    pub rng_seed: u64,
}

impl PastoConfig {
    /// Defaults used by the simulation study: `gamma = 0.1 / K`, the
    /// `0.1 / sqrt(t + 10)` smoothing schedule and a single query per round.
    pub fn for_arms(k: usize, horizon: usize, rng_seed: u64) -> Self {
        PastoConfig {
            horizon,
            gamma: 0.1 / k.max(1) as f64,
            epsilon: EpsilonSchedule::default(),
            parallel_q: 1,
            prior: None,
            prior_weight: 1.0,
            cap: CapPolicy::Auto,
            rng_seed,
        }
    }

    pub fn validate(&self, k: usize, m: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidConfig("gamma must be positive".into()));
        }
        self.epsilon.validate()?;
        if self.parallel_q == 0 || self.parallel_q > k {
            return Err(Error::InvalidConfig(format!(
                "parallel_q must lie in [1, {k}], got {}",
                self.parallel_q
            )));
        }
        if !(self.prior_weight.is_finite() && self.prior_weight >= 0.0) {
            return Err(Error::InvalidConfig(
                "prior_weight must be finite and nonnegative".into(),
            ));
        }
        if let Some(prior) = &self.prior {
            check_dim("prior metrics", m, prior.num_metrics())?;
            check_dim("prior arms", k, prior.num_arms())?;
        }
        match self.cap {
            CapPolicy::Fixed { cap } if !(cap > 0.0) => {
                Err(Error::InvalidConfig("cap must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// One noisy query of one arm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub arm: usize,
    pub metrics: Vec<f64>,
    /// Probability the arm had when it was drawn.
    pub sample_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub t: usize,
    pub epsilon: f64,
    pub p: Pmf,
    pub observations: Vec<Observation>,
    pub gradient: Vec<f64>,
    /// Objective on the optimizer's own estimate (history mean, or the
    /// tracked inner value for the compositional baseline).
    pub vhat_objective: f64,
    /// `f(mu_t p_t)` when the environment exposes its ground truth.
    pub true_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    pub p_bar: Pmf,
    /// Iterations where some `|gamma * g_k|` exceeded the overflow guard.
    pub large_step_count: usize,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    /// Running means `p_bar_t` for every `t`.
    pub fn running_means(&self) -> Vec<Pmf> {
        let k = self.p_bar.len();
        let mut acc = vec![0.0; k];
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                for (a, v) in acc.iter_mut().zip(r.p.probs()) {
                    *a += v;
                }
                let n = (i + 1) as f64;
                Pmf(acc.iter().map(|a| a / n).collect())
            })
            .collect()
    }
}
