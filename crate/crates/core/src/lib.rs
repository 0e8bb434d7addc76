//! Numerical laboratory for spectral gaps of Ornstein–Uhlenbeck type operators
//! on finite-dimensional weighted spaces and on pinned path spaces over
//! rotationally symmetric manifolds.
//!
//! Layout:
//! - [`radial`] radial profiles, distance Hessian, H³ heat kernel
//! - [`jacobi`] Jacobi / Riccati integration along the minimal geodesic
//! - [`operators`] discretized S, T, S⁻¹, (S⁻¹)* and σ₁
//! - [`semiclassical`] finite-difference gaps of weighted Dirichlet forms
//! - [`diffusion`] radial SDE, bridge sampler, trial quotients, gap bounds

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod jacobi;
pub mod linalg;
pub mod operators;
pub mod quad;
pub mod radial;
pub mod semiclassical;

pub use diffusion::bounds::{gap_lower_bound, LowerBoundInputs};
pub use diffusion::bridge::{BridgeConfig, BridgeEnsemble, Space};
pub use diffusion::sde::{RadialPathEnsemble, SdeConfig};
pub use error::{GapError, Result};
pub use jacobi::{GeodesicData, JacobiSolution};
pub use operators::{GridSpec, OperatorSet};
pub use radial::{AssumptionReport, Preset, RadialProfile};
pub use semiclassical::{GapResult, PotentialKind, WeightedPotential};

/// Fixed 12-significant-digit rendering used by every exported table.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.11e}")
}
