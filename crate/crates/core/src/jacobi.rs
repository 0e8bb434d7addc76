//! Jacobi fields, the Riccati equation for A(t) = tW′W⁻¹, and the derived
//! K, Ñ, N, M along the minimal geodesic from x₀ to the pole y₀.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{invalid, GapError, Result};
use crate::radial::{radial_curvature, RadialProfile};

pub type Mat = DMatrix<f64>;
type CurvatureFn = Arc<dyn Fn(f64) -> Mat + Send + Sync>;

const CONDITION_LIMIT: f64 = 1e12;

/// Curvature operator R(t) = R̄(·, ξ)ξ along c_{x₀,y₀}, scaled by d².
#[derive(Clone)]
pub struct GeodesicData {
    pub n: usize,
    pub d: f64,
    pub tag: String,
    /// index of the direction along the geodesic, when it is part of the frame
    pub radial_axis: Option<usize>,
    r: CurvatureFn,
}

impl std::fmt::Debug for GeodesicData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeodesicData").field("n", &self.n).field("d", &self.d).field("tag", &self.tag).finish()
    }
}

impl GeodesicData {
    pub fn new<F>(n: usize, d: f64, tag: impl Into<String>, r: F) -> Result<Self>
    where
        F: Fn(f64) -> Mat + Send + Sync + 'static,
    {
        if n == 0 || !(d > 0.0) {
            return invalid("need n >= 1 and d > 0");
        }
        let probe = r(0.5);
        if probe.nrows() != n || probe.ncols() != n {
            return invalid("curvature operator has wrong shape");
        }
        Ok(GeodesicData { n, d, tag: tag.into(), radial_axis: None, r: Arc::new(r) })
    }

    /// Sectional curvature κ: R = κd² on the n−1 directions orthogonal to ξ, 0 along ξ.
    pub fn constant_curvature(n: usize, d: f64, kappa: f64) -> Result<Self> {
        if n < 2 {
            return invalid("constant_curvature needs n >= 2 (radial plus orthogonal)");
        }
        let diag = Mat::from_fn(n, n, |i, j| if i == j && i > 0 { kappa * d * d } else { 0.0 });
        Self::new(n, d, format!("kappa={kappa}"), move |_| diag.clone()).map(|g| g.with_radial_axis(0))
    }

    /// Only the orthogonal block: R ≡ κd²·I on ℝⁿ.
    pub fn orthogonal_block(n: usize, d: f64, kappa: f64) -> Result<Self> {
        let diag = Mat::identity(n, n) * (kappa * d * d);
        Self::new(n, d, format!("orth-kappa={kappa}"), move |_| diag.clone())
    }

    /// Geodesic of length d ending at the pole of a rotationally symmetric metric.
    pub fn radial(profile: &RadialProfile, n: usize, d: f64) -> Result<Self> {
        if n < 2 {
            return invalid("radial geometry needs n >= 2");
        }
        let p = profile.clone();
        // validate once so the closure cannot fail later
        radial_curvature(&p, d)?;
        Self::new(n, d, profile.preset().tag(), move |t| {
            let k = radial_curvature(&p, ((1.0 - t) * d).max(0.0)).unwrap_or(f64::NAN);
            Mat::from_fn(n, n, |i, j| if i == j && i > 0 { d * d * k } else { 0.0 })
        })
        .map(|g| g.with_radial_axis(0))
    }

    pub fn with_radial_axis(mut self, axis: usize) -> Self {
        self.radial_axis = (axis < self.n).then_some(axis);
        self
    }

    pub fn r(&self, t: f64) -> Mat {
        (self.r)(t)
    }

    pub fn r_rev(&self, t: f64) -> Mat {
        (self.r)(1.0 - t)
    }
}

/// W, W′ on the uniform grid t_k = k/steps.
#[derive(Clone, Debug)]
pub struct JacobiFlow {
    pub t: Vec<f64>,
    pub w: Vec<Mat>,
    pub wp: Vec<Mat>,
}

pub fn condition(m: &Mat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn check_steps(steps: usize) -> Result<()> {
    if steps < 128 {
        return invalid(format!("steps must be at least 128, got {steps}"));
    }
    Ok(())
}

/// Classical RK4 for W″ + R^←(t)W = 0, W(0) = 0, W′(0) = I.
pub fn solve_jacobi(geo: &GeodesicData, steps: usize) -> Result<JacobiFlow> {
    check_steps(steps)?;
    let n = geo.n;
    let h = 1.0 / steps as f64;
    let mut w = Mat::zeros(n, n);
    let mut v = Mat::identity(n, n);
    let mut flow = JacobiFlow { t: vec![0.0], w: vec![w.clone()], wp: vec![v.clone()] };
    for k in 0..steps {
        let t = k as f64 * h;
        let r0 = geo.r_rev(t);
        let rm = geo.r_rev(t + 0.5 * h);
        let r1 = geo.r_rev(t + h);
        let k1w = v.clone();
        let k1v = -(&r0 * &w);
        let w2 = &w + &k1w * (0.5 * h);
        let k2w = &v + &k1v * (0.5 * h);
        let k2v = -(&rm * &w2);
        let w3 = &w + &k2w * (0.5 * h);
        let k3w = &v + &k2v * (0.5 * h);
        let k3v = -(&rm * &w3);
        let w4 = &w + &k3w * h;
        let k4w = &v + &k3v * h;
        let k4v = -(&r1 * &w4);
        w += (k1w + &k2w * 2.0 + &k3w * 2.0 + k4w) * (h / 6.0);
        v += (k1v + &k2v * 2.0 + &k3v * 2.0 + k4v) * (h / 6.0);
        let tn = (k + 1) as f64 * h;
        let cond = condition(&w);
        // det W > 0 until the first conjugate point; a step can jump over it
        if !cond.is_finite() || cond > CONDITION_LIMIT || w.determinant() <= 0.0 {
            return Err(GapError::ConjugatePoint { t: tn, cond });
        }
        flow.t.push(tn);
        flow.w.push(w.clone());
        flow.wp.push(v.clone());
    }
    Ok(flow)
}

/// A(t) on t_k = k/steps, with A′ from the right-hand side for Hermite interpolation.
#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    pub t: Vec<f64>,
    pub a: Vec<Mat>,
    pub ap: Vec<Mat>,
    r0: Mat,
}

fn riccati_rhs(geo: &GeodesicData, t: f64, a: &Mat) -> Mat {
    -(geo.r_rev(t) * t) - (a * a - a) / t
}

/// Integrates A′ = −tR^← − (A² − A)/t from t₀ = 1/steps, seeded with
/// A(t₀) = I − t₀²R^←(0)/3.
pub fn riccati_a(geo: &GeodesicData, steps: usize) -> Result<RiccatiSolution> {
    check_steps(steps)?;
    let n = geo.n;
    let h = 1.0 / steps as f64;
    let r0 = geo.r_rev(0.0);
    let id = Mat::identity(n, n);
    let mut a = &id - &r0 * (h * h / 3.0);
    let mut sol = RiccatiSolution {
        t: vec![0.0, h],
        a: vec![id.clone(), a.clone()],
        ap: vec![Mat::zeros(n, n), riccati_rhs(geo, h, &a)],
        r0,
    };
    for k in 1..steps {
        let t = k as f64 * h;
        let k1 = riccati_rhs(geo, t, &a);
        let k2 = riccati_rhs(geo, t + 0.5 * h, &(&a + &k1 * (0.5 * h)));
        let k3 = riccati_rhs(geo, t + 0.5 * h, &(&a + &k2 * (0.5 * h)));
        let k4 = riccati_rhs(geo, t + h, &(&a + &k3 * h));
        a += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let tn = (k + 1) as f64 * h;
        if !a.iter().all(|x| x.is_finite()) || a.norm() > 1e12 {
            return Err(GapError::RiccatiBlowUp(tn));
        }
        sol.t.push(tn);
        sol.ap.push(riccati_rhs(geo, tn, &a));
        sol.a.push(a.clone());
    }
    Ok(sol)
}

impl RiccatiSolution {
    fn steps(&self) -> usize {
        self.t.len() - 1
    }

    /// A(s) for s ∈ [0, 1]: series below the first step, cubic Hermite elsewhere.
    pub fn a_at(&self, s: f64) -> Mat {
        let steps = self.steps();
        let h = 1.0 / steps as f64;
        let n = self.r0.nrows();
        if s < h {
            return Mat::identity(n, n) - &self.r0 * (s * s / 3.0);
        }
        let k = ((s / h).floor() as usize).min(steps - 1);
        let u = (s - self.t[k]) / h;
        let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        let h10 = u * (1.0 - u) * (1.0 - u);
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = u * u * (u - 1.0);
        &self.a[k] * h00 + &self.ap[k] * (h10 * h) + &self.a[k + 1] * h01 + &self.ap[k + 1] * (h11 * h)
    }

    /// (I − A(s))/s, switching to sR^←(0)/3 below the first step.
    pub fn regular_part(&self, s: f64) -> Mat {
        let h = 1.0 / self.steps() as f64;
        let n = self.r0.nrows();
        if s < h {
            return &self.r0 * (s / 3.0);
        }
        (Mat::identity(n, n) - self.a_at(s)) / s
    }
}

/// Full backbone on t_k = k/steps. K at t = 1 is not finite and is stored as −∞·I.
#[derive(Clone, Debug)]
pub struct JacobiSolution {
    pub geo: GeodesicData,
    pub steps: usize,
    pub t: Vec<f64>,
    pub w: Vec<Mat>,
    pub wp: Vec<Mat>,
    pub a: Vec<Mat>,
    pub k: Vec<Mat>,
    pub n_tilde: Vec<Mat>,
    pub n_mat: Vec<Mat>,
    pub m: Vec<Mat>,
    /// max_k ‖M(t_k) − W(1−t_k)W(1)⁻¹‖_F
    pub m_consistency: f64,
    /// max_k ‖A(t_k) − t_kW′(t_k)W(t_k)⁻¹‖_F over t_k ≥ 0.01
    pub riccati_vs_direct: f64,
    /// max_k ‖D − Dᵀ‖_F for the direct D = t_kW′(t_k)W(t_k)⁻¹, t_k > 0. The
    /// Riccati A is symmetric by construction; D is symmetric only if the
    /// Jacobi flow is accurate.
    pub direct_symmetry: f64,
    riccati: RiccatiSolution,
}

pub fn build_knm(geo: &GeodesicData, steps: usize) -> Result<JacobiSolution> {
    let flow = solve_jacobi(geo, steps)?;
    let ric = riccati_a(geo, steps)?;
    let n = geo.n;
    let id = Mat::identity(n, n);
    let mut k_vals = Vec::with_capacity(steps + 1);
    let mut nt_vals = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let s = 1.0 - flow.t[i];
        if i == steps {
            k_vals.push(Mat::from_element(n, n, 0.0) - &id * f64::INFINITY);
        } else {
            k_vals.push(-ric.a_at(s) / s);
        }
        nt_vals.push(ric.regular_part(s));
    }

    let mut riccati_vs_direct: f64 = 0.0;
    let mut direct_symmetry: f64 = 0.0;
    for i in 1..=steps {
        let winv = flow.w[i].clone().try_inverse().ok_or(GapError::ConjugatePoint { t: flow.t[i], cond: f64::INFINITY })?;
        let direct = &flow.wp[i] * winv * flow.t[i];
        direct_symmetry = direct_symmetry.max((&direct - direct.transpose()).norm());
        if flow.t[i] >= 0.01 {
            riccati_vs_direct = riccati_vs_direct.max((&ric.a[i] - direct).norm());
        }
    }

    let mut sol = JacobiSolution {
        geo: geo.clone(),
        steps,
        t: flow.t.clone(),
        w: flow.w,
        wp: flow.wp,
        a: ric.a.clone(),
        k: k_vals,
        n_tilde: nt_vals,
        n_mat: Vec::new(),
        m: Vec::new(),
        m_consistency: 0.0,
        riccati_vs_direct,
        direct_symmetry,
        riccati: ric,
    };
    sol.n_mat = sol.n_at(&sol.t.clone());
    sol.m = sol.n_mat.iter().zip(&sol.t).map(|(nm, t)| nm * (1.0 - t)).collect();
    let w1inv = sol.w[steps].clone().try_inverse().ok_or(GapError::ConjugatePoint { t: 1.0, cond: f64::INFINITY })?;
    let mut worst: f64 = 0.0;
    for i in 0..=steps {
        let reference = &sol.w[steps - i] * &w1inv;
        worst = worst.max((&sol.m[i] - reference).norm());
    }
    sol.m_consistency = worst;
    Ok(sol)
}

impl JacobiSolution {
    pub fn a_at(&self, s: f64) -> Mat {
        self.riccati.a_at(s)
    }

    /// K(t) = −A(1−t)/(1−t), t < 1.
    pub fn k_at(&self, t: f64) -> Mat {
        let s = 1.0 - t;
        -self.riccati.a_at(s) / s
    }

    /// Ñ(t) = K(t) + I/(1−t), bounded on [0, 1].
    pub fn n_tilde_at(&self, t: f64) -> Mat {
        self.riccati.regular_part(1.0 - t)
    }

    pub fn r_at(&self, t: f64) -> Mat {
        self.geo.r(t)
    }

    /// N at ascending nodes in [0, 1], by RK4 for N′ = ÑN from N(0) = I with
    /// sub-steps no longer than 1/steps.
    pub fn n_at(&self, nodes: &[f64]) -> Vec<Mat> {
        let n = self.geo.n;
        let hmax = 1.0 / self.steps as f64;
        let mut out = Vec::with_capacity(nodes.len());
        let mut t = 0.0;
        let mut y = Mat::identity(n, n);
        for &target in nodes {
            let span = target - t;
            if span > 0.0 {
                let sub = (span / hmax).ceil().max(1.0) as usize;
                let h = span / sub as f64;
                for _ in 0..sub {
                    y = rk4_linear(|s| self.n_tilde_at(s), t, h, &y);
                    t += h;
                }
                t = target;
            }
            out.push(y.clone());
        }
        out
    }

    pub fn m_at(&self, nodes: &[f64]) -> Vec<Mat> {
        self.n_at(nodes).into_iter().zip(nodes).map(|(nm, t)| nm * (1.0 - t)).collect()
    }

    /// max_k ‖A(t_k) − A(t_k)ᵀ‖_F
    pub fn symmetry_defect(&self) -> f64 {
        self.a.iter().map(|a| (a - a.transpose()).norm()).fold(0.0, f64::max)
    }
}

/// One RK4 step of Y′ = G(t)Y.
pub(crate) fn rk4_linear<G: Fn(f64) -> Mat>(g: G, t: f64, h: f64, y: &Mat) -> Mat {
    let g0 = g(t);
    let gm = g(t + 0.5 * h);
    let g1 = g(t + h);
    let k1 = &g0 * y;
    let k2 = &gm * (y + &k1 * (0.5 * h));
    let k3 = &gm * (y + &k2 * (0.5 * h));
    let k4 = &g1 * (y + &k3 * h);
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// CSV rows: t, then A, K, N, M entries in row-major order.
pub fn export_rows(sol: &JacobiSolution) -> (Vec<String>, Vec<Vec<f64>>) {
    let n = sol.geo.n;
    let mut header = vec!["t".to_string()];
    for name in ["A", "K", "N", "M"] {
        for i in 0..n {
            for j in 0..n {
                header.push(format!("{name}{i}{j}"));
            }
        }
    }
    let rows = (0..=sol.steps)
        .map(|k| {
            let mut row = vec![sol.t[k]];
            for mat in [&sol.a[k], &sol.k[k], &sol.n_mat[k], &sol.m[k]] {
                for i in 0..n {
                    for j in 0..n {
                        row.push(mat[(i, j)]);
                    }
                }
            }
            row
        })
        .collect();
    (header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_is_trivial() {
        let geo = GeodesicData::constant_curvature(2, 1.0, 0.0).unwrap();
        let sol = build_knm(&geo, 256).unwrap();
        for (i, t) in sol.t.iter().enumerate() {
            assert!((&sol.w[i] - Mat::identity(2, 2) * *t).norm() < 1e-14);
            assert!((&sol.a[i] - Mat::identity(2, 2)).norm() < 1e-13);
            assert!(sol.n_tilde[i].norm() < 1e-12);
            assert!((&sol.n_mat[i] - Mat::identity(2, 2)).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_coarse_grids() {
        let geo = GeodesicData::constant_curvature(2, 1.0, -1.0).unwrap();
        assert!(solve_jacobi(&geo, 64).is_err());
    }

    #[test]
    fn conjugate_point_is_detected() {
        let geo = GeodesicData::constant_curvature(2, 3.3, 1.0).unwrap();
        assert!(matches!(solve_jacobi(&geo, 512), Err(GapError::ConjugatePoint { .. })));
    }
}
