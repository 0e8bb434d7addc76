//! Rotationally symmetric metrics dr² + f(r)²dΘ² with f(r) = r·e^{φ(r)}.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, GapError, Result};

/// Bernoulli numbers B_2, B_4, ..., B_20.
const BERNOULLI: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Below this value of √a·r the hyperbolic profile is evaluated by its Taylor series.
const SERIES_CUTOFF: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "lowercase")]
pub enum Preset {
    Flat,
    Hyperbolic { a: f64 },
    Mixture { weights: Vec<f64>, components: Vec<Preset> },
    /// φ sampled on a uniform grid starting at r = 0.
    Custom { grid: Vec<(f64, f64)> },
}

impl Preset {
    pub fn tag(&self) -> String {
        match self {
            Preset::Flat => "flat".into(),
            Preset::Hyperbolic { a } => format!("hyperbolic({a})"),
            Preset::Mixture { .. } => "mixture".into(),
            Preset::Custom { .. } => "custom".into(),
        }
    }
}

#[derive(Clone, Debug)]
enum Shape {
    Flat,
    Hyperbolic { a: f64 },
    Mixture(Vec<(f64, RadialProfile)>),
    Custom { h: f64, values: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct RadialProfile {
    preset: Preset,
    shape: Shape,
}

/// Checked on a geometric grid; see [`validate_assumption_c`] for the thresholds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub preset: String,
    pub r_min: f64,
    pub r_max: f64,
    pub grid_size: usize,
    pub c1: bool,
    pub c2: bool,
    pub c3: bool,
    pub inf_rphi: f64,
    pub sup_derivs: [f64; 4],
}

pub fn build_profile(preset: &Preset) -> Result<RadialProfile> {
    let shape = match preset {
        Preset::Flat => Shape::Flat,
        Preset::Hyperbolic { a } => {
            if !(*a > 0.0) || !a.is_finite() {
                return invalid(format!("hyperbolic parameter must be positive, got {a}"));
            }
            Shape::Hyperbolic { a: *a }
        }
        Preset::Mixture { weights, components } => {
            if weights.is_empty() || weights.len() != components.len() {
                return invalid("mixture needs one weight per component");
            }
            let total: f64 = weights.iter().sum();
            if weights.iter().any(|w| !(*w > 0.0)) || (total - 1.0).abs() > 1e-12 {
                return invalid("mixture weights must be positive and sum to 1");
            }
            let parts = weights
                .iter()
                .zip(components)
                .map(|(w, c)| build_profile(c).map(|p| (*w, p)))
                .collect::<Result<Vec<_>>>()?;
            Shape::Mixture(parts)
        }
        Preset::Custom { grid } => {
            if grid.len() < 5 {
                return invalid("custom profile needs at least 5 grid points");
            }
            if grid[0].0 != 0.0 {
                return invalid("custom grid must start at r = 0");
            }
            let h = grid[1].0;
            if !(h > 0.0) {
                return invalid("custom grid spacing must be positive");
            }
            for (i, (r, v)) in grid.iter().enumerate() {
                if (r - i as f64 * h).abs() > 1e-9 * h.max(1.0) * (i as f64 + 1.0) || !v.is_finite() {
                    return invalid("custom grid must be uniform with finite values");
                }
            }
            Shape::Custom { h, values: grid.iter().map(|p| p.1).collect() }
        }
    };
    Ok(RadialProfile { preset: preset.clone(), shape })
}

fn hyp_series_coeff(n: usize) -> f64 {
    // log(sinh x / x) = Σ 2^{2n} B_{2n} / (2n (2n)!) x^{2n}
    let two_n = 2 * n;
    let mut fact = 1.0;
    for i in 1..=two_n {
        fact *= i as f64;
    }
    2f64.powi(two_n as i32) * BERNOULLI[n - 1] / (two_n as f64 * fact)
}

fn falling(p: usize, k: usize) -> f64 {
    (0..k).map(|i| (p - i) as f64).product()
}

fn hyp_deriv(a: f64, k: usize, r: f64) -> f64 {
    let s = a.sqrt();
    let x = s * r;
    if x < SERIES_CUTOFF {
        let mut acc = 0.0;
        for n in 1..=BERNOULLI.len() {
            let p = 2 * n;
            if p < k {
                continue;
            }
            acc += hyp_series_coeff(n) * a.powi(n as i32) * falling(p, k) * r.powi((p - k) as i32);
        }
        return acc;
    }
    let coth = 1.0 / x.tanh();
    let csch = if x > 700.0 { 0.0 } else { 1.0 / x.sinh() };
    let csch2 = csch * csch;
    match k {
        0 => {
            let e = (-2.0 * x).exp();
            x + (1.0 - e).ln() - std::f64::consts::LN_2 - x.ln()
        }
        1 => s * (coth - 1.0 / x),
        2 => s * s * (1.0 / (x * x) - csch2),
        3 => s.powi(3) * (2.0 * csch2 * coth - 2.0 / x.powi(3)),
        4 => s.powi(4) * (6.0 / x.powi(4) - 2.0 * csch2 * (2.0 * coth * coth + csch2)),
        _ => unreachable!(),
    }
}

impl RadialProfile {
    pub fn preset(&self) -> &Preset {
        &self.preset
    }

    pub fn phi(&self, r: f64) -> f64 {
        self.eval(0, r)
    }

    /// k-th derivative of φ, k ∈ {1, 2, 3, 4}. Custom profiles use centered
    /// differences with step equal to the grid spacing.
    pub fn phi_deriv(&self, k: usize, r: f64) -> Result<f64> {
        if !(1..=4).contains(&k) {
            return invalid(format!("derivative order {k} not available"));
        }
        Ok(self.eval(k, r))
    }

    fn eval(&self, k: usize, r: f64) -> f64 {
        match &self.shape {
            Shape::Flat => 0.0,
            Shape::Hyperbolic { a } => hyp_deriv(*a, k, r.abs()) * if k % 2 == 1 && r < 0.0 { -1.0 } else { 1.0 },
            Shape::Mixture(parts) => parts.iter().map(|(w, p)| w * p.eval(k, r)).sum(),
            Shape::Custom { h, values } => {
                let v = |x: f64| interp_even(*h, values, x);
                match k {
                    0 => v(r),
                    1 => (v(r + h) - v(r - h)) / (2.0 * h),
                    2 => (v(r + h) - 2.0 * v(r) + v(r - h)) / (h * h),
                    3 => (v(r + 2.0 * h) - 2.0 * v(r + h) + 2.0 * v(r - h) - v(r - 2.0 * h)) / (2.0 * h.powi(3)),
                    4 => {
                        (v(r + 2.0 * h) - 4.0 * v(r + h) + 6.0 * v(r) - 4.0 * v(r - h) + v(r - 2.0 * h)) / h.powi(4)
                    }
                    _ => unreachable!(),
                }
            }
        }
    }

    /// φ′(r)/r, continuous at r = 0 where it equals φ″(0).
    pub fn phi_prime_over_r(&self, r: f64) -> f64 {
        match &self.shape {
            Shape::Flat => 0.0,
            Shape::Hyperbolic { a } if a.sqrt() * r < SERIES_CUTOFF => (1..=BERNOULLI.len())
                .map(|n| hyp_series_coeff(n) * a.powi(n as i32) * (2 * n) as f64 * r.powi(2 * n as i32 - 2))
                .sum(),
            Shape::Mixture(parts) => parts.iter().map(|(w, p)| w * p.phi_prime_over_r(r)).sum(),
            _ if r < 1e-6 => self.eval(2, r),
            _ => self.eval(1, r) / r,
        }
    }

    pub fn f(&self, r: f64) -> f64 {
        r * self.phi(r).exp()
    }

    /// Supremum of |φ′| over [0, r_max], exact for the presets.
    pub fn sup_phi_prime(&self, r_max: f64) -> f64 {
        match &self.shape {
            Shape::Flat => 0.0,
            Shape::Hyperbolic { a } => a.sqrt(),
            Shape::Mixture(parts) => parts.iter().map(|(w, p)| w * p.sup_phi_prime(r_max)).sum(),
            Shape::Custom { h, .. } => {
                let n = (r_max / h).ceil() as usize * 4 + 1;
                (0..n).map(|i| self.eval(1, r_max * i as f64 / (n - 1) as f64).abs()).fold(0.0, f64::max)
            }
        }
    }
}

/// Local cubic interpolation on a uniform grid with the even extension φ(−r) = φ(r).
fn interp_even(h: f64, values: &[f64], r: f64) -> f64 {
    let n = values.len() as isize;
    let x = r.abs() / h;
    let at = |i: isize| values[i.unsigned_abs().min(n as usize - 1)];
    let mut i0 = x.floor() as isize - 1;
    if i0 + 3 > n - 1 {
        i0 = n - 4;
    }
    let mut acc = 0.0;
    for a in 0..4 {
        let xa = (i0 + a) as f64;
        let mut l = 1.0;
        for b in 0..4 {
            if a != b {
                let xb = (i0 + b) as f64;
                l *= (x - xb) / (xa - xb);
            }
        }
        acc += l * at(i0 + a);
    }
    acc
}

/// Evaluates the three Assumption C proxies on a geometric grid in
/// [r_max·1e−6, r_max]:
/// - c1: every sampled |φ^{(k)}|, k = 1..4, is finite and below 1e12;
/// - c2: max of |φ′(r)|/r over the lowest decade is at most twice its max over
///   the next decade (plus 1e−8);
/// - c3: min of r·φ′(r) is above −1/2.
pub fn validate_assumption_c(profile: &RadialProfile, r_max: f64, grid_size: usize) -> Result<AssumptionReport> {
    if !(r_max > 0.0) {
        return invalid("r_max must be positive");
    }
    if grid_size < 64 {
        return invalid("grid_size must be at least 64");
    }
    let r_min = r_max * 1e-6;
    let ratio = (r_max / r_min).ln();
    let grid: Vec<f64> =
        (0..grid_size).map(|j| r_min * (ratio * j as f64 / (grid_size - 1) as f64).exp()).collect();

    let mut sup = [0.0f64; 4];
    let mut inf_rphi = f64::INFINITY;
    let mut low = 0.0f64;
    let mut next = 0.0f64;
    for &r in &grid {
        for k in 1..=4 {
            let v = profile.phi_deriv(k, r)?.abs();
            sup[k - 1] = if v.is_finite() { sup[k - 1].max(v) } else { f64::INFINITY };
        }
        let d1 = profile.phi_deriv(1, r)?;
        inf_rphi = inf_rphi.min(r * d1);
        let q = (d1 / r).abs();
        if r <= 10.0 * r_min {
            low = low.max(q);
        } else if r <= 100.0 * r_min {
            next = next.max(q);
        }
    }
    Ok(AssumptionReport {
        preset: profile.preset.tag(),
        r_min,
        r_max,
        grid_size,
        c1: sup.iter().all(|s| s.is_finite() && *s < 1e12),
        c2: low.is_finite() && low <= 2.0 * next + 1e-8,
        c3: inf_rphi > -0.5,
        inf_rphi,
        sup_derivs: sup,
    })
}

/// Eigenvalues of ∇²(d²/2) at distance r: (radial, tangential).
pub fn hessian_k(profile: &RadialProfile, r: f64) -> Result<(f64, f64)> {
    if r < 0.0 || !r.is_finite() {
        return invalid("radius must be nonnegative");
    }
    if r == 0.0 {
        return Ok((1.0, 1.0));
    }
    Ok((1.0, 1.0 + r * profile.phi_deriv(1, r)?))
}

/// K(r) = −f″(r)/f(r) = −(2φ′/r + φ′² + φ″), with K(0) = −3φ″(0).
pub fn radial_curvature(profile: &RadialProfile, r: f64) -> Result<f64> {
    if r < 0.0 || !r.is_finite() {
        return invalid("radius must be nonnegative");
    }
    if r > 0.0 && profile.f(r) == 0.0 {
        return Err(GapError::InvalidInput(format!("f vanishes at r={r}")));
    }
    let d2 = profile.phi_deriv(2, r)?;
    if r == 0.0 {
        return Ok(-3.0 * d2);
    }
    let d1 = profile.phi_deriv(1, r)?;
    Ok(-(2.0 * profile.phi_prime_over_r(r) + d1 * d1 + d2))
}

/// Heat kernel of e^{tΔ/2} on H³ as a function of distance.
pub fn h3_heat_kernel(t: f64, r: f64) -> f64 {
    let ratio = if r < 1e-8 { 1.0 } else { r / r.sinh() };
    (2.0 * std::f64::consts::PI * t).powf(-1.5) * ratio * (-t / 2.0 - r * r / (2.0 * t)).exp()
}

/// ∫ p(t, r)·4π sinh²r dr over [0, ∞), which should be 1.
/// The range is cut where the Gaussian factor drops below e^{−60}.
pub fn h3_normalization(t: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return invalid(format!("time {t} must be positive"));
    }
    let upper = t + (t * t + 120.0 * t).sqrt();
    let rule = crate::quad::Composite::new(20);
    Ok(rule.integrate(0.0, upper, 200, |r| 4.0 * std::f64::consts::PI * r.sinh().powi(2) * h3_heat_kernel(t, r)))
}

/// ∂_r log p and ∂²_r log p for the H³ kernel.
pub fn h3_log_kernel_derivs(t: f64, r: f64) -> (f64, f64) {
    let coth = 1.0 / r.tanh();
    let csch = 1.0 / r.sinh();
    (1.0 / r - coth - r / t, csch * csch - 1.0 / (r * r) - 1.0 / t)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelResidual {
    pub t: f64,
    pub r: f64,
    pub grad: f64,
    pub radial_hess: f64,
    pub tangential_hess: f64,
}

pub fn h3_kernel_asymptotics(t_list: &[f64], r_list: &[f64]) -> Result<Vec<KernelResidual>> {
    let mut rows = Vec::with_capacity(t_list.len() * r_list.len());
    for &t in t_list {
        if !(t > 0.0 && t <= 1.0) {
            return invalid(format!("time {t} outside (0, 1]"));
        }
        for &r in r_list {
            if !(r > 0.0) {
                return invalid(format!("radius {r} must be positive"));
            }
            let (d1, d2) = h3_log_kernel_derivs(t, r);
            let coth = 1.0 / r.tanh();
            rows.push(KernelResidual {
                t,
                r,
                grad: (t * d1 + r).abs(),
                radial_hess: (t * d2 + 1.0).abs(),
                tangential_hess: (t * coth * d1 + r * coth).abs(),
            });
        }
    }
    Ok(rows)
}
