//! Trial functionals on bridge samples: the Rayleigh quotient of
//! F = √λ Σ⟨φ(t_{k−½}), Δb_k⟩ and the Poincaré check with (S⁻¹)*.
//!
//! Δb_k is the discrete anti-development: the logarithm of x_k at x_{k−1}
//! read in a frame carried by slice-to-slice parallel transport, with E₁ at x₀
//! pointing to the pole. In constant curvature K the H-derivative of F is
//!   G_k = √λ φ_k + √λ (Σ_{j>k} τ_j + ½τ_k),  τ_j = K(Φ_j − Φ_jᵀ)Δb_j,
//!   Φ_j = Σ_{l>j} φ_l Δb_lᵀ + ½ φ_j Δb_jᵀ,
//! projected to mean zero, and ℰ(F,F) ≈ Σ_k |G_k|²/m.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use super::bridge::{ess_batch, hyperboloid, jackknife_se, lorentz, BridgeEnsemble, Point, Space};
use crate::error::{invalid, Result};
use crate::operators::{OperatorSet, TrialMode};

type V4 = [f64; 4];

fn add4(a: &V4, b: &V4, s: f64) -> V4 {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]]
}

/// log_x y on the hyperboloid.
fn h3_log(x: &V4, y: &V4) -> V4 {
    let d = super::bridge::h3_distance(x, y);
    let c = -lorentz(x, y);
    let f = if d < 1e-8 { 1.0 } else { d / d.sinh() };
    let v = add4(y, x, -c);
    [f * v[0], f * v[1], f * v[2], f * v[3]]
}

/// Parallel transport of v ∈ T_x to T_y along the geodesic.
fn h3_transport(x: &V4, y: &V4, v: &V4) -> V4 {
    let coef = lorentz(y, v) / (1.0 - lorentz(x, y));
    let s = add4(x, y, 1.0);
    add4(v, &s, coef)
}

/// Increments Δb_k (k = 1..m) and the transported frame at every slice.
pub struct AntiDevelopment {
    pub db: Vec<Vector3<f64>>,
    /// frame[k][a] is E_a at slice k; in ℝ³ only the spatial part is used
    pub frames: Vec<[V4; 3]>,
}

pub fn anti_development(space: Space, path: &[Point]) -> AntiDevelopment {
    let m = path.len() - 1;
    match space {
        Space::Flat3 => {
            let frame = [[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
            let db = (1..=m)
                .map(|k| {
                    let d = [path[k][0] - path[k - 1][0], path[k][1] - path[k - 1][1], path[k][2] - path[k - 1][2]];
                    Vector3::new(-d[0], d[1], d[2])
                })
                .collect();
            AntiDevelopment { db, frames: vec![frame; m + 1] }
        }
        Space::H3 => {
            let pts: Vec<V4> = path.iter().map(hyperboloid).collect();
            // x₀ = (d, 0, 0) in normal coordinates; −∂_r points at the pole
            let r0 = path[0][0].hypot(path[0][1]).hypot(path[0][2]);
            let dir = [path[0][0] / r0, path[0][1] / r0, path[0][2] / r0];
            let e1 = [-r0.sinh(), -r0.cosh() * dir[0], -r0.cosh() * dir[1], -r0.cosh() * dir[2]];
            let mut frame = [e1, [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
            let mut frames = Vec::with_capacity(m + 1);
            let mut db = Vec::with_capacity(m);
            frames.push(frame);
            for k in 1..=m {
                let v = h3_log(&pts[k - 1], &pts[k]);
                db.push(Vector3::new(lorentz(&v, &frame[0]), lorentz(&v, &frame[1]), lorentz(&v, &frame[2])));
                for e in frame.iter_mut() {
                    *e = h3_transport(&pts[k - 1], &pts[k], e);
                }
                frames.push(frame);
            }
            AntiDevelopment { db, frames }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialQuotient {
    /// Var F
    pub variance: f64,
    /// E ℰ(F,F)
    pub energy: f64,
    pub quotient_over_lambda: f64,
    /// jackknife over chains
    pub se: f64,
    pub ess: f64,
    /// E Σ|G − G_lead|² / E Σ|G_lead|²: weight of the curvature correction
    pub curvature_share: f64,
}

struct PathTerms {
    f: f64,
    energy: f64,
    correction: f64,
    lead: f64,
}

fn path_terms(space: Space, lambda: f64, path: &[Point], phi: &[Vector3<f64>]) -> PathTerms {
    let m = path.len() - 1;
    let ad = anti_development(space, path);
    let k_curv = space.curvature();
    let sl = lambda.sqrt();
    let f = sl * (0..m).map(|k| phi[k].dot(&ad.db[k])).sum::<f64>();
    // τ_j from suffix sums of φ_l Δb_lᵀ
    let mut tau = vec![Vector3::zeros(); m];
    if k_curv != 0.0 {
        let mut suffix = Matrix3::zeros();
        for j in (0..m).rev() {
            let own = phi[j] * ad.db[j].transpose();
            let big_phi = suffix + own * 0.5;
            tau[j] = (big_phi - big_phi.transpose()) * ad.db[j] * k_curv;
            suffix += own;
        }
    }
    let mut g = vec![Vector3::zeros(); m];
    let mut tail = Vector3::zeros();
    for k in (0..m).rev() {
        g[k] = (phi[k] + tail + tau[k] * 0.5) * sl;
        tail += tau[k];
    }
    let mean_g = g.iter().fold(Vector3::zeros(), |a, b| a + b) / m as f64;
    let mean_lead = phi.iter().fold(Vector3::zeros(), |a, b| a + b) / m as f64;
    let mut energy = 0.0;
    let mut correction = 0.0;
    let mut lead = 0.0;
    for k in 0..m {
        let gk = g[k] - mean_g;
        let lk = (phi[k] - mean_lead) * sl;
        energy += gk.norm_squared();
        correction += (gk - lk).norm_squared();
        lead += lk.norm_squared();
    }
    PathTerms { f, energy: energy / m as f64, correction, lead }
}

/// Monte-Carlo Rayleigh quotient of F_φ divided by λ.
pub fn rayleigh_trial<P: Fn(f64) -> Vec<f64>>(bridge: &BridgeEnsemble, phi: P) -> Result<TrialQuotient> {
    let cfg = &bridge.config;
    let m = cfg.m;
    let phis: Vec<Vector3<f64>> = (1..=m)
        .map(|k| {
            let v = phi((k as f64 - 0.5) / m as f64);
            if v.len() != 3 {
                return Err(crate::error::GapError::InvalidInput("trial mode must have 3 components".into()));
            }
            Ok(Vector3::new(v[0], v[1], v[2]))
        })
        .collect::<Result<_>>()?;
    if phis.iter().all(|v| v.norm() == 0.0) {
        return invalid("trial mode vanishes");
    }
    let terms: Vec<PathTerms> = bridge.paths.iter().map(|p| path_terms(cfg.space, cfg.lambda, p, &phis)).collect();
    let per = cfg.samples;
    let stat = |keep: &[usize]| {
        let mut n = 0.0;
        let (mut s1, mut s2, mut se) = (0.0, 0.0, 0.0);
        for &c in keep {
            for t in &terms[c * per..(c + 1) * per] {
                n += 1.0;
                s1 += t.f;
                s2 += t.f * t.f;
                se += t.energy;
            }
        }
        let mean = s1 / n;
        let var = (s2 / n - mean * mean) * n / (n - 1.0);
        (se / n) / (cfg.lambda * var)
    };
    let all: Vec<usize> = (0..cfg.chains).collect();
    let quotient = stat(&all);
    let se = jackknife_se(cfg.chains, stat);
    let n = terms.len() as f64;
    let fmean = terms.iter().map(|t| t.f).sum::<f64>() / n;
    let variance = terms.iter().map(|t| (t.f - fmean).powi(2)).sum::<f64>() / (n - 1.0);
    let energy = terms.iter().map(|t| t.energy).sum::<f64>() / n;
    let fs: Vec<f64> = terms.iter().map(|t| (t.f - fmean).powi(2)).collect();
    let ess = ess_batch(&fs, cfg.chains);
    let curvature_share =
        terms.iter().map(|t| t.correction).sum::<f64>() / terms.iter().map(|t| t.lead).sum::<f64>().max(f64::MIN_POSITIVE);
    Ok(TrialQuotient { variance, energy, quotient_over_lambda: quotient, se, ess, curvature_share })
}

pub fn rayleigh_trial_mode(bridge: &BridgeEnsemble, mode: &TrialMode) -> Result<TrialQuotient> {
    if mode.n != 3 {
        return invalid("trial mode must be built for n = 3");
    }
    rayleigh_trial(bridge, |t| mode.eval(t))
}

/// Cylinder functions of the slice at t = ½.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum CylinderFn {
    Constant(f64),
    /// ⟨a, b(½)⟩ in the anti-developed frame
    Linear([f64; 3]),
    /// distance from the pole at t = ½
    MidRadius,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoincareRecord {
    /// λ Var F
    pub lhs: f64,
    /// E(‖(S⁻¹)* D₀F′‖ + η‖D₀F′‖)²
    pub rhs: f64,
    pub margin: f64,
    pub se: f64,
    pub violated: bool,
}

/// λ Var F ≤ E(‖(S⁻¹)* D₀F′‖ + η‖D₀F′‖)² with D₀F′ = v(1_{t<½} − ½), v the
/// gradient of F at the midpoint slice read in the transported frame.
pub fn poincare_check(bridge: &BridgeEnsemble, f: CylinderFn, ops: &OperatorSet, eta: f64) -> Result<PoincareRecord> {
    let cfg = &bridge.config;
    if !cfg.m.is_multiple_of(2) {
        return invalid("m must be even so that t = ½ is a slice");
    }
    if ops.grid.n != 3 {
        return invalid("operators must act on 3 components");
    }
    if !(eta >= 0.0) {
        return invalid("eta must be non-negative");
    }
    let half = cfg.m / 2;
    let n = 3;
    // columns (S⁻¹)* e_a (1_{t<½} − ½) and their Gram matrix
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            let mut v = vec![0.0; ops.dim()];
            for (i, t) in ops.t.iter().enumerate() {
                v[i * n + a] = if *t < 0.5 { 0.5 } else { -0.5 };
            }
            ops.apply_s_inv_star(&v)
        })
        .collect();
    let mut gram = Matrix3::zeros();
    for a in 0..n {
        for b in 0..n {
            gram[(a, b)] = ops.inner(&cols[a], &cols[b]);
        }
    }
    let step_norm = {
        let mut v = vec![0.0; ops.dim()];
        for (i, t) in ops.t.iter().enumerate() {
            v[i * n] = if *t < 0.5 { 0.5 } else { -0.5 };
        }
        ops.norm(&v)
    };
    let samples: Vec<(f64, f64)> = bridge
        .paths
        .iter()
        .map(|p| {
            let (value, grad) = match f {
                CylinderFn::Constant(c) => (c, Vector3::zeros()),
                CylinderFn::Linear(a) => {
                    let ad = anti_development(cfg.space, p);
                    let b = ad.db[..half].iter().fold(Vector3::zeros(), |s, x| s + x);
                    let a = Vector3::new(a[0], a[1], a[2]);
                    (a.dot(&b), a)
                }
                CylinderFn::MidRadius => {
                    let u = p[half];
                    let r = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
                    let ad = anti_development(cfg.space, p);
                    let fr = ad.frames[half];
                    let g = match cfg.space {
                        Space::Flat3 => {
                            let gr = [0.0, u[0] / r, u[1] / r, u[2] / r];
                            Vector3::new(lorentz(&gr, &fr[0]), lorentz(&gr, &fr[1]), lorentz(&gr, &fr[2]))
                        }
                        Space::H3 => {
                            let x = hyperboloid(&u);
                            let gr = add4(&[-1.0, 0.0, 0.0, 0.0], &x, r.cosh());
                            let gr = [gr[0] / r.sinh(), gr[1] / r.sinh(), gr[2] / r.sinh(), gr[3] / r.sinh()];
                            Vector3::new(lorentz(&gr, &fr[0]), lorentz(&gr, &fr[1]), lorentz(&gr, &fr[2]))
                        }
                    };
                    (r, g)
                }
            };
            let a_norm = (grad.transpose() * gram * grad)[(0, 0)].max(0.0).sqrt();
            let rhs = (a_norm + eta * step_norm * grad.norm()).powi(2);
            (value, rhs)
        })
        .collect();
    let per = cfg.samples;
    let lambda = cfg.lambda;
    let stat = |keep: &[usize]| {
        let mut n = 0.0;
        let (mut s1, mut s2, mut r) = (0.0, 0.0, 0.0);
        for &c in keep {
            for (v, rhs) in &samples[c * per..(c + 1) * per] {
                n += 1.0;
                s1 += v;
                s2 += v * v;
                r += rhs;
            }
        }
        let mean = s1 / n;
        let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
        (lambda * var, r / n)
    };
    let all: Vec<usize> = (0..cfg.chains).collect();
    let (lhs, rhs) = stat(&all);
    let se = jackknife_se(cfg.chains, |k| {
        let (l, r) = stat(k);
        r - l
    });
    let margin = rhs - lhs;
    let violated = margin < -3.0 * se.max(0.0) - 1e-12;
    Ok(PoincareRecord { lhs, rhs, margin, se, violated })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transport_preserves_frame() {
        let path: Vec<Point> = vec![[1.0, 0.0, 0.0], [0.8, 0.1, -0.05], [0.5, 0.2, 0.1], [0.0, 0.0, 0.0]];
        let ad = anti_development(Space::H3, &path);
        for (k, fr) in ad.frames.iter().enumerate() {
            let x = hyperboloid(&path[k]);
            for a in 0..3 {
                assert!(lorentz(&fr[a], &x).abs() < 1e-12);
                for b in 0..3 {
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((lorentz(&fr[a], &fr[b]) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn radial_geodesic_has_radial_increments() {
        let path: Vec<Point> = (0..=8).map(|k| [1.0 - k as f64 / 8.0, 0.0, 0.0]).collect();
        for space in [Space::Flat3, Space::H3] {
            let ad = anti_development(space, &path);
            for db in &ad.db {
                assert!((db[0] - 0.125).abs() < 1e-12);
                assert!(db[1].abs() < 1e-14 && db[2].abs() < 1e-14);
            }
        }
    }
}
