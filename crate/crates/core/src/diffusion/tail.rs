//! Empirical tail of ρ = 1 + max_t Y and its Gaussian-type fit.
//!
//! log P(ρ ≥ r) is regressed on (r − ρ₀)², ρ₀ = 1 + d the starting value of
//! ρ, over the range where the estimate is reliable. The fitted slope should
//! scale linearly in λ; C₂ = −slope/λ.

use serde::Serialize;

use super::sde::RadialPathEnsemble;
use crate::error::{invalid, Result};
use crate::operators::fit_slope;

/// Probabilities used in the fit.
pub const FIT_RANGE: (f64, f64) = (1e-3, 0.1);
/// Fewer exceedances than this are reported as unreliable.
pub const MIN_EXCEEDANCES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub r: f64,
    pub count: usize,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailTable {
    pub lambda: f64,
    pub rho0: f64,
    pub rows: Vec<TailRow>,
    /// slope of log P against (r − ρ₀)²
    pub slope: f64,
    pub c2: f64,
    pub fit_points: usize,
    /// radii with fewer than [`MIN_EXCEEDANCES`] exceedances
    pub sparse: Vec<f64>,
}

pub fn empirical_tail(ens: &RadialPathEnsemble, r_grid: &[f64]) -> Result<TailTable> {
    if r_grid.is_empty() || r_grid.iter().any(|r| !r.is_finite()) {
        return invalid("radius grid must be non-empty and finite");
    }
    let rho = ens.rho();
    let total = rho.len() as f64;
    let rho0 = 1.0 + ens.config.start;
    let rows: Vec<TailRow> = r_grid
        .iter()
        .map(|&r| {
            let count = rho.iter().filter(|x| **x >= r).count();
            TailRow { r, count, prob: count as f64 / total }
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|row| row.r > rho0 && row.prob >= FIT_RANGE.0 && row.prob <= FIT_RANGE.1)
        .map(|row| ((row.r - rho0).powi(2), row.prob.ln()))
        .collect();
    let slope = fit_slope(&pts);
    let sparse = rows.iter().filter(|row| row.count < MIN_EXCEEDANCES).map(|row| row.r).collect();
    Ok(TailTable { lambda: ens.config.lambda, rho0, rows, slope, c2: -slope / ens.config.lambda, fit_points: pts.len(), sparse })
}

/// Evenly spaced radii from ρ₀ to ρ₀ + span.
pub fn default_grid(start: f64, span: f64, count: usize) -> Vec<f64> {
    let rho0 = 1.0 + start;
    (0..count).map(|i| rho0 + span * i as f64 / (count - 1).max(1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::sde::{simulate_radial_pair, SdeConfig};
    use crate::radial::{build_profile, Preset};

    #[test]
    fn below_start_probability_is_one() {
        let p = build_profile(&Preset::Flat).unwrap();
        let cfg = SdeConfig { n: 3, lambda: 4.0, start: 1.0, steps: 100, paths: 200, seed: 1, keep_paths: false };
        let e = simulate_radial_pair(&p, &cfg).unwrap();
        let t = empirical_tail(&e, &[0.5, 1.9, 2.0]).unwrap();
        assert!(t.rows.iter().all(|r| r.prob == 1.0));
    }
}
