//! Explicit spectral-gap lower bound
//!   ¼ · min(1/(8αR²), β/(36α)),
//!   R = max(√(2/β), 192α/√β, 48√(α/β), r₀).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundInputs {
    pub alpha: f64,
    pub beta: f64,
    pub r0: f64,
}

impl LowerBoundInputs {
    pub fn radius(&self) -> f64 {
        let LowerBoundInputs { alpha, beta, r0 } = *self;
        (2.0 / beta).sqrt().max(192.0 * alpha / beta.sqrt()).max(48.0 * (alpha / beta).sqrt()).max(r0)
    }
}

pub fn gap_lower_bound(inp: &LowerBoundInputs) -> Result<f64> {
    let ok = |x: f64| x > 0.0 && x.is_finite();
    if !(ok(inp.alpha) && ok(inp.beta) && ok(inp.r0)) {
        return invalid("alpha, beta and r0 must be positive and finite");
    }
    let r = inp.radius();
    Ok(0.25 * (1.0 / (8.0 * inp.alpha * r * r)).min(inp.beta / (36.0 * inp.alpha)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub bound: f64,
    pub bound_over_lambda: f64,
    /// 1/(32 C₁ r₀²)
    pub limit: f64,
}

/// α = C₁/λ, β = C₂λ.
pub fn lower_bound_sweep(c1: f64, c2: f64, r0: f64, lambdas: &[f64]) -> Result<Vec<SweepRow>> {
    if !(c1 > 0.0 && c2 > 0.0) {
        return invalid("C1 and C2 must be positive");
    }
    lambdas
        .iter()
        .map(|&lambda| {
            if !(lambda > 0.0) {
                return invalid("lambda must be positive");
            }
            let bound = gap_lower_bound(&LowerBoundInputs { alpha: c1 / lambda, beta: c2 * lambda, r0 })?;
            Ok(SweepRow { lambda, bound, bound_over_lambda: bound / lambda, limit: 1.0 / (32.0 * c1 * r0 * r0) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values() {
        let b = gap_lower_bound(&LowerBoundInputs { alpha: 1.0, beta: 1.0, r0: 1.0 }).unwrap();
        assert_eq!(b, 0.25 / 294912.0);
        let b = gap_lower_bound(&LowerBoundInputs { alpha: 1.0, beta: 1.0, r0: 1000.0 }).unwrap();
        assert!((b - 3.125e-8).abs() < 1e-20);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(gap_lower_bound(&LowerBoundInputs { alpha: 0.0, beta: 1.0, r0: 1.0 }).is_err());
        assert!(gap_lower_bound(&LowerBoundInputs { alpha: 1.0, beta: -1.0, r0: 1.0 }).is_err());
    }
}
