//! Penalty-form objectives `f(z) = z[primary] - sum_g penalty_g(z[g])`.
//!
//! Soft guardrails subtract `lambda * min(0, z[g] - c)^2`; hard barriers send
//! the value to negative infinity when `z[g] < c`. A metric sitting exactly on
//! its threshold is feasible.

use crate::error::{check_dim, Error, Result};
use crate::types::{GuardrailKind, Objective};

/// Evaluates `f(z)` for a vector of `M` aggregate metrics.
pub fn objective_value(obj: &Objective, z: &[f64]) -> Result<f64> {
    obj.check_metrics(z.len())?;
    let mut value = z[obj.primary()];
    for g in obj.guardrails() {
        let shortfall = (z[g.metric] - g.threshold).min(0.0);
        match g.kind {
            GuardrailKind::SoftSquare { lambda } => value -= lambda * shortfall * shortfall,
            GuardrailKind::HardBarrier => {
                if z[g.metric] < g.threshold {
                    return Ok(f64::NEG_INFINITY);
                }
            }
        }
    }
    Ok(value)
}

/// Gradient of `f` with respect to `z`. Only defined for soft objectives.
pub fn objective_grad(obj: &Objective, z: &[f64]) -> Result<Vec<f64>> {
    if !obj.is_differentiable() {
        return Err(Error::NonDifferentiableObjective);
    }
    obj.check_metrics(z.len())?;
    let mut grad = vec![0.0; z.len()];
    grad[obj.primary()] = 1.0;
    for g in obj.guardrails() {
        if let GuardrailKind::SoftSquare { lambda } = g.kind {
            // zero at and above the kink
            let shortfall = (z[g.metric] - g.threshold).min(0.0);
            grad[g.metric] = -2.0 * lambda * shortfall;
        }
    }
    Ok(grad)
}

/// `f(mu p)`, the objective of a mixture.
pub fn mixture_value(obj: &Objective, mu: &crate::types::MetricMatrix, p: &[f64]) -> Result<f64> {
    check_dim("mixture weights", mu.num_arms(), p.len())?;
    objective_value(obj, &mu.mix(p)?)
}
