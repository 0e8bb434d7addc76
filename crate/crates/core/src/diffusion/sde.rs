//! The radial process Y of Brownian motion with generator Δ/(2λ) started at
//! distance d from the pole, and its comparison process Z̃.
//!
//! With X = √λ·Y,
//!   dX = dB + (n−1)/2 · (1/X + φ′(Y)/√λ) dt,
//!   dZ̃ = dB + (n−1)/2 · (1/Z̃ + ‖φ′‖∞/√λ) dt,
//! driven by the same increments. Each step treats the 1/X term implicitly,
//! X⁺ − (n−1)Δt/(2X⁺) = a, which keeps X⁺ > 0 and is monotone in a, so the
//! ordering X ≤ Z̃ is preserved step by step.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::radial::RadialProfile;

/// Below this value a path is flagged as having touched the positivity floor.
pub const POSITIVITY_FLOOR: f64 = 1e-6;
/// Dominance tolerance for √λY ≤ Z̃.
pub const DOMINANCE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SdeConfig {
    pub n: usize,
    pub lambda: f64,
    /// d(z₀, y₀)
    pub start: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    /// keep full Y and Z̃ paths (memory P·(m+1)·16 bytes)
    pub keep_paths: bool,
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return invalid("n must be at least 3");
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return invalid("lambda must be positive");
        }
        if !(self.start > 0.0) {
            return invalid("start radius must be positive");
        }
        if self.steps == 0 || self.paths == 0 {
            return invalid("steps and paths must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathSummary {
    pub max_y: f64,
    pub min_x: f64,
    pub final_y: f64,
    /// steps where √λY > Z̃ + tolerance
    pub violations: u32,
    /// max over steps of √λY − Z̃
    pub max_excess: f64,
    pub floor_hit: bool,
}

#[derive(Clone, Debug)]
pub struct RadialPathEnsemble {
    pub config: SdeConfig,
    pub sup_phi_prime: f64,
    pub summaries: Vec<PathSummary>,
    /// row-major P × (m+1) when kept
    pub y: Option<Vec<f64>>,
    pub z: Option<Vec<f64>>,
}

struct PathOut {
    summary: PathSummary,
    y: Vec<f64>,
    z: Vec<f64>,
}

fn implicit_step(a: f64, c: f64) -> f64 {
    // positive root of x² − a x − c = 0, written to avoid cancellation for a < 0
    let disc = (a * a + 4.0 * c).sqrt();
    if a >= 0.0 {
        0.5 * (a + disc)
    } else {
        2.0 * c / (disc - a)
    }
}

fn run_path(profile: &RadialProfile, cfg: &SdeConfig, sup: f64, index: usize) -> Result<PathOut> {
    let mut rng = super::stream_rng(cfg.seed, index as u64);
    let dt = 1.0 / cfg.steps as f64;
    let sdt = dt.sqrt();
    let sl = cfg.lambda.sqrt();
    let half_n = 0.5 * (cfg.n as f64 - 1.0);
    let c = half_n * dt;
    let mut x = sl * cfg.start;
    let mut z = x;
    let mut s = PathSummary {
        max_y: cfg.start,
        min_x: x,
        final_y: cfg.start,
        violations: 0,
        max_excess: x - z,
        floor_hit: false,
    };
    let (mut ys, mut zs) = if cfg.keep_paths {
        (Vec::with_capacity(cfg.steps + 1), Vec::with_capacity(cfg.steps + 1))
    } else {
        (Vec::new(), Vec::new())
    };
    if cfg.keep_paths {
        ys.push(cfg.start);
        zs.push(z / sl);
    }
    for _ in 0..cfg.steps {
        let db: f64 = StandardNormal.sample(&mut rng);
        let db = db * sdt;
        let drift_phi = profile.phi_deriv(1, x / sl)?;
        x = implicit_step(x + db + half_n * drift_phi / sl * dt, c);
        z = implicit_step(z + db + half_n * sup / sl * dt, c);
        let y = x / sl;
        s.max_y = s.max_y.max(y);
        s.min_x = s.min_x.min(x);
        s.max_excess = s.max_excess.max(x - z);
        if x > z + DOMINANCE_TOL {
            s.violations += 1;
        }
        if x < POSITIVITY_FLOOR {
            s.floor_hit = true;
        }
        if cfg.keep_paths {
            ys.push(y);
            zs.push(z / sl);
        }
    }
    s.final_y = x / sl;
    Ok(PathOut { summary: s, y: ys, z: zs })
}

pub fn simulate_radial_pair(profile: &RadialProfile, cfg: &SdeConfig) -> Result<RadialPathEnsemble> {
    cfg.validate()?;
    // the process stays within a few units of the start with overwhelming probability
    let sup = profile.sup_phi_prime(cfg.start + 20.0 / cfg.lambda.sqrt() + 10.0);
    let outs = (0..cfg.paths)
        .into_par_iter()
        .map(|i| run_path(profile, cfg, sup, i))
        .collect::<Result<Vec<_>>>()?;
    let summaries = outs.iter().map(|o| o.summary).collect();
    let (y, z) = if cfg.keep_paths {
        (Some(outs.iter().flat_map(|o| o.y.iter().copied()).collect()), Some(outs.iter().flat_map(|o| o.z.iter().copied()).collect()))
    } else {
        (None, None)
    };
    Ok(RadialPathEnsemble { config: cfg.clone(), sup_phi_prime: sup, summaries, y, z })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DominanceReport {
    pub paths: usize,
    pub violating_paths: usize,
    pub violating_steps: u64,
    pub max_excess: f64,
    pub floor_hits: usize,
}

impl RadialPathEnsemble {
    pub fn dominance(&self) -> DominanceReport {
        DominanceReport {
            paths: self.summaries.len(),
            violating_paths: self.summaries.iter().filter(|s| s.violations > 0).count(),
            violating_steps: self.summaries.iter().map(|s| s.violations as u64).sum(),
            max_excess: self.summaries.iter().map(|s| s.max_excess).fold(f64::NEG_INFINITY, f64::max),
            floor_hits: self.summaries.iter().filter(|s| s.floor_hit).count(),
        }
    }

    /// ρ = 1 + max_t Y per path
    pub fn rho(&self) -> Vec<f64> {
        self.summaries.iter().map(|s| 1.0 + s.max_y).collect()
    }

    /// Little-endian dump: magic "OUGP", u32 version 1, u64 m, u64 P, f64 λ,
    /// then Y as P rows of m+1 f64 values, then Z̃ in the same layout.
    pub fn write_raw<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let (Some(y), Some(z)) = (&self.y, &self.z) else {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "paths were not kept"));
        };
        out.write_all(b"OUGP")?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&(self.config.steps as u64).to_le_bytes())?;
        out.write_all(&(self.config.paths as u64).to_le_bytes())?;
        out.write_all(&self.config.lambda.to_le_bytes())?;
        for v in y.iter().chain(z.iter()) {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::{build_profile, Preset};

    fn cfg(lambda: f64, paths: usize) -> SdeConfig {
        SdeConfig { n: 3, lambda, start: 1.0, steps: 200, paths, seed: 7, keep_paths: true }
    }

    #[test]
    fn implicit_step_solves_quadratic() {
        for a in [-3.0, -1e-3, 0.0, 0.4, 5.0] {
            let c = 0.01;
            let x = implicit_step(a, c);
            assert!(x > 0.0);
            assert!((x - c / x - a).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn flat_processes_coincide() {
        let p = build_profile(&Preset::Flat).unwrap();
        let e = simulate_radial_pair(&p, &cfg(4.0, 50)).unwrap();
        assert_eq!(e.y, e.z);
        assert_eq!(e.dominance().max_excess, 0.0);
    }

    #[test]
    fn raw_dump_layout() {
        let p = build_profile(&Preset::Flat).unwrap();
        let e = simulate_radial_pair(&p, &cfg(4.0, 3)).unwrap();
        let mut buf = Vec::new();
        e.write_raw(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"OUGP");
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 8 + 2 * 3 * 201 * 8);
        let first = f64::from_le_bytes(buf[32..40].try_into().unwrap());
        assert_eq!(first, 1.0);
    }

    #[test]
    fn rejects_low_dimension() {
        let p = build_profile(&Preset::Flat).unwrap();
        let mut c = cfg(4.0, 3);
        c.n = 2;
        assert!(simulate_radial_pair(&p, &c).unwrap_err().is_input());
    }
}
