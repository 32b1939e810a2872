//! Importance-weighted reward estimates and the history-averaged gradient.
//!
//! Each round produces a sparse matrix `U_t` whose only non-zero column is
//! the queried arm's observation divided by its sampling probability, so
//! `E[U_t] = mu`. The optimizer does not differentiate through `U_t` itself;
//! it differentiates through the running mean `V_t` of all `U_s`, which is
//! what keeps the compositional gradient `V_t^T grad f(V_t p_t)` stable.

use crate::error::{check_dim, Error, Result};
use crate::objective::objective_grad;
use crate::types::{CapPolicy, MetricMatrix, Objective, Observation, Pmf};

/// Sparse estimate from a single observation, entries clamped to `[-cap, cap]`.
pub fn build_uhat(obs: &Observation, k: usize, m: usize, cap: f64) -> Result<MetricMatrix> {
    if obs.arm >= k {
        return Err(Error::ArmOutOfRange {
            arm: obs.arm,
            arms: k,
        });
    }
    if !(obs.sample_prob > 0.0) {
        return Err(Error::ZeroProbability(obs.sample_prob));
    }
    check_dim("observation metrics", m, obs.metrics.len())?;
    let mut out = MetricMatrix::zeros(m, k)?;
    for (metric, &value) in obs.metrics.iter().enumerate() {
        out.set(metric, obs.arm, (value / obs.sample_prob).clamp(-cap, cap));
    }
    Ok(out)
}

/// Mean of the per-observation estimates from one round of parallel queries.
pub fn aggregate_uhat(
    observations: &[Observation],
    k: usize,
    m: usize,
    cap: f64,
) -> Result<MetricMatrix> {
    let mut out = MetricMatrix::zeros(m, k)?;
    if observations.is_empty() {
        return Err(Error::EmptyVector);
    }
    let scale = 1.0 / observations.len() as f64;
    for obs in observations {
        let u = build_uhat(obs, k, m, cap)?;
        for (o, v) in out.as_mut_slice().iter_mut().zip(u.as_slice()) {
            *o += v * scale;
        }
    }
    Ok(out)
}

/// Realized cap for one round: `max_abs * K / eps` under the automatic policy.
pub fn resolve_cap(policy: CapPolicy, max_abs_seen: f64, k: usize, eps: f64) -> f64 {
    match policy {
        CapPolicy::Auto => {
            let cap = max_abs_seen * k as f64 / eps;
            if cap > 0.0 {
                cap
            } else {
                // all observations so far were zero; nothing to clamp
                f64::INFINITY
            }
        }
        CapPolicy::Fixed { cap } => cap,
        CapPolicy::Unbounded => f64::INFINITY,
    }
}

/// Running mean of absorbed estimates, optionally seeded with a prior.
#[derive(Debug, Clone, PartialEq)]
pub struct VhatState {
    mean: MetricMatrix,
    count: f64,
}

impl VhatState {
    /// Starts from `prior` (or zeros) carrying `prior_weight` pseudo-observations.
    pub fn new(prior: Option<MetricMatrix>, prior_weight: f64, m: usize, k: usize) -> Result<Self> {
        if !(prior_weight.is_finite() && prior_weight >= 0.0) {
            return Err(Error::InvalidConfig(
                "prior_weight must be finite and nonnegative".into(),
            ));
        }
        let mean = match prior {
            Some(p) => {
                check_dim("prior metrics", m, p.num_metrics())?;
                check_dim("prior arms", k, p.num_arms())?;
                p
            }
            None => MetricMatrix::zeros(m, k)?,
        };
        Ok(VhatState {
            mean,
            count: prior_weight,
        })
    }

    pub fn mean(&self) -> &MetricMatrix {
        &self.mean
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    /// Absorbs one round. Several matrices are averaged first and enter the
    /// running mean with a combined weight of one.
    pub fn absorb(&mut self, uhats: &[MetricMatrix]) -> Result<()> {
        if uhats.is_empty() {
            return Err(Error::EmptyVector);
        }
        for u in uhats {
            self.mean.same_shape(u)?;
        }
        let n = uhats.len() as f64;
        let next = self.count + 1.0;
        let step = 1.0 / next;
        for (i, slot) in self.mean.as_mut_slice().iter_mut().enumerate() {
            let avg = uhats.iter().map(|u| u.as_slice()[i]).sum::<f64>() / n;
            *slot += (avg - *slot) * step;
        }
        self.count = next;
        Ok(())
    }
}

/// `vhat^T grad f(vhat p)`: the estimated gradient of `p -> f(mu p)`.
pub fn pasto_gradient(vhat: &MetricMatrix, p: &Pmf, obj: &Objective) -> Result<Vec<f64>> {
    check_dim("gradient pmf", vhat.num_arms(), p.len())?;
    let z = vhat.mix(p.probs())?;
    let grad_f = objective_grad(obj, &z)?;
    vhat.transpose_mul(&grad_f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Guardrail;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: Vec<Vec<f64>>) -> MetricMatrix {
        MetricMatrix::from_rows(rows).unwrap()
    }

    fn soft_a() -> Objective {
        Objective::new(0, vec![Guardrail::soft(1, 0.0, 5.0)]).unwrap()
    }

    #[test]
    fn uhat_examples() {
        let obs = Observation {
            arm: 0,
            metrics: vec![2.0, -2.0],
            sample_prob: 0.5,
        };
        let u = build_uhat(&obs, 2, 2, f64::INFINITY).unwrap();
        assert_eq!(u, mat(vec![vec![4.0, 0.0], vec![-4.0, 0.0]]));

        let zero = Observation {
            arm: 2,
            metrics: vec![0.0],
            sample_prob: 0.1,
        };
        assert_eq!(
            build_uhat(&zero, 3, 1, f64::INFINITY).unwrap(),
            mat(vec![vec![0.0, 0.0, 0.0]])
        );
    }

    #[test]
    fn uhat_is_capped_after_division() {
        let obs = Observation {
            arm: 1,
            metrics: vec![1.0, -1.0],
            sample_prob: 0.01,
        };
        let u = build_uhat(&obs, 2, 2, 10.0).unwrap();
        assert_eq!(u, mat(vec![vec![0.0, 10.0], vec![0.0, -10.0]]));
    }

    #[test]
    fn uhat_errors() {
        let mut obs = Observation {
            arm: 3,
            metrics: vec![1.0],
            sample_prob: 0.5,
        };
        assert_eq!(
            build_uhat(&obs, 3, 1, 1.0),
            Err(Error::ArmOutOfRange { arm: 3, arms: 3 })
        );
        obs.arm = 0;
        obs.sample_prob = 0.0;
        assert_eq!(
            build_uhat(&obs, 3, 1, 1.0),
            Err(Error::ZeroProbability(0.0))
        );
        obs.sample_prob = 0.5;
        assert!(build_uhat(&obs, 3, 2, 1.0).is_err());
    }

    #[test]
    fn auto_cap_never_binds_above_smoothing_floor() {
        // |metric| <= running max and p >= eps / K imply |metric| / p <= cap
        let cap = resolve_cap(CapPolicy::Auto, 3.0, 4, 0.2);
        assert!((cap - 60.0).abs() < 1e-12);
        assert_eq!(resolve_cap(CapPolicy::Auto, 0.0, 4, 0.2), f64::INFINITY);
        assert_eq!(
            resolve_cap(CapPolicy::Unbounded, 3.0, 4, 0.2),
            f64::INFINITY
        );
    }

    #[test]
    fn absorb_examples() {
        let a = mat(vec![vec![1.0, 2.0]]);
        let b = mat(vec![vec![3.0, -2.0]]);
        let mut s = VhatState::new(Some(a), 1.0, 1, 2).unwrap();
        s.absorb(std::slice::from_ref(&b)).unwrap();
        assert_eq!(s.mean(), &mat(vec![vec![2.0, 0.0]]));
        assert_eq!(s.count(), 2.0);

        let mut s = VhatState::new(None, 0.0, 1, 2).unwrap();
        s.absorb(std::slice::from_ref(&b)).unwrap();
        assert_eq!(s.mean(), &b);
        assert_eq!(s.count(), 1.0);
    }

    #[test]
    fn parallel_queries_count_once() {
        let mut s = VhatState::new(None, 0.0, 1, 2).unwrap();
        s.absorb(&[mat(vec![vec![2.0, 0.0]]), mat(vec![vec![0.0, 4.0]])])
            .unwrap();
        assert_eq!(s.mean(), &mat(vec![vec![1.0, 2.0]]));
        assert_eq!(s.count(), 1.0);
        assert!(s.absorb(&[]).is_err());
        assert!(s.absorb(&[mat(vec![vec![1.0]])]).is_err());
    }

    #[test]
    fn recursive_mean_matches_batch_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (m, k) = (3, 4);
        let prior = MetricMatrix::from_rows(
            (0..m)
                .map(|_| (0..k).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect(),
        )
        .unwrap();
        let mats: Vec<MetricMatrix> = (0..50)
            .map(|_| {
                MetricMatrix::from_rows(
                    (0..m)
                        .map(|_| (0..k).map(|_| rng.random_range(-50.0..50.0)).collect())
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let w0 = 1.0;
        let mut s = VhatState::new(Some(prior.clone()), w0, m, k).unwrap();
        for u in &mats {
            s.absorb(std::slice::from_ref(u)).unwrap();
        }
        for i in 0..m * k {
            let batch = (w0 * prior.as_slice()[i]
                + mats.iter().map(|u| u.as_slice()[i]).sum::<f64>())
                / (w0 + mats.len() as f64);
            assert!((s.mean().as_slice()[i] - batch).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_examples() {
        let mu = mat(vec![vec![2.0, 0.0], vec![-2.0, 2.0]]);
        let g = pasto_gradient(&mu, &Pmf::new(vec![0.5, 0.5]).unwrap(), &soft_a()).unwrap();
        assert_eq!(g, vec![2.0, 0.0]);

        let p = Pmf::new(vec![0.9, 0.1]).unwrap();
        let g = pasto_gradient(&mu, &p, &soft_a()).unwrap();
        // z = [1.8, -1.6]; grad f = [1, 16]; mu^T grad f computed by hand
        let grad_f = [1.0, -2.0 * 5.0 * (-1.6f64)];
        let by_hand = [
            mu.get(0, 0) * grad_f[0] + mu.get(1, 0) * grad_f[1],
            mu.get(0, 1) * grad_f[0] + mu.get(1, 1) * grad_f[1],
        ];
        for (a, b) in g.iter().zip(by_hand) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((g[0] + 30.0).abs() < 1e-12 && (g[1] - 32.0).abs() < 1e-12);

        let lin = Objective::linear(1);
        assert_eq!(pasto_gradient(&mu, &p, &lin).unwrap(), mu.row(1).to_vec());
    }

    proptest! {
        #[test]
        fn absorb_order_independent(
            vals in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 4), 2..20),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mats: Vec<MetricMatrix> =
                vals.iter().map(|v| mat(vec![v[..2].to_vec(), v[2..].to_vec()])).collect();
            let mut shuffled = mats.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut a = VhatState::new(None, 1.0, 2, 2).unwrap();
            let mut b = a.clone();
            for u in &mats { a.absorb(std::slice::from_ref(u)).unwrap(); }
            for u in &shuffled { b.absorb(std::slice::from_ref(u)).unwrap(); }
            for (x, y) in a.mean().as_slice().iter().zip(b.mean().as_slice()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn uhat_has_one_nonzero_column(
            arm in 0usize..5,
            metrics in proptest::collection::vec(0.1f64..5.0, 3),
            p in 0.01f64..1.0,
        ) {
            let obs = Observation { arm, metrics, sample_prob: p };
            let u = build_uhat(&obs, 5, 3, f64::INFINITY).unwrap();
            for col in 0..5 {
                let nz = u.column(col).iter().any(|v| *v != 0.0);
                prop_assert_eq!(nz, col == arm);
            }
        }
    }
}
