//! Spectral gaps of ℰ^λ(F,F) = ∫|DF|² dν^λ, ν^λ ∝ e^{−λE}, on ℝ^N (N ≤ 2) by
//! finite differences, plus the quadrature-based ingredients: Laplace
//! constant, tail mass, GNS inequality, IMS localization, trial quotient.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GapError, Result};
use crate::linalg::{lanczos, sym_eigen, Which};
use crate::quad::Composite;

/// Quadrature boxes extend until e^{−λE} < e^{−60} on their boundary.
pub const OUTER_EXPONENT: f64 = 60.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "lowercase")]
pub enum PotentialKind {
    /// E = x²/2
    Ou,
    /// E = x²/2 + x⁴/4
    Quartic,
    /// E = Σ d_a x_a²/2
    Aniso { diag: Vec<f64> },
    /// E = Σ c_k x^k in one dimension
    Polynomial { coeffs: Vec<f64> },
}

impl PotentialKind {
    pub fn tag(&self) -> String {
        match self {
            PotentialKind::Ou => "ou".into(),
            PotentialKind::Quartic => "quartic".into(),
            PotentialKind::Aniso { diag } => {
                format!("aniso({})", diag.iter().map(|d| format!("{d}")).collect::<Vec<_>>().join(";"))
            }
            PotentialKind::Polynomial { coeffs } => {
                format!("poly({})", coeffs.iter().map(|d| format!("{d}")).collect::<Vec<_>>().join(";"))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct WeightedPotential {
    pub kind: PotentialKind,
    pub n: usize,
    pub hess0: DMatrix<f64>,
    sigma1: f64,
    bottom: DVector<f64>,
}

fn poly_eval(c: &[f64], x: f64) -> (f64, f64, f64) {
    let (mut p, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for ck in c.iter().rev() {
        d2 = d2 * x + d1;
        d1 = d1 * x + p;
        p = p * x + ck;
    }
    (p, d1, 2.0 * d2)
}

impl WeightedPotential {
    pub fn new(kind: PotentialKind) -> Result<Self> {
        let n = match &kind {
            PotentialKind::Ou | PotentialKind::Quartic => 1,
            PotentialKind::Aniso { diag } => {
                if diag.is_empty() || diag.len() > 2 {
                    return invalid("aniso potentials need 1 or 2 diagonal entries");
                }
                if diag.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
                    return invalid("aniso diagonal entries must be positive");
                }
                diag.len()
            }
            PotentialKind::Polynomial { coeffs } => {
                if coeffs.len() < 3 || coeffs.iter().any(|c| !c.is_finite()) {
                    return invalid("polynomial needs finite coefficients up to at least x²");
                }
                if coeffs[0] != 0.0 || coeffs[1] != 0.0 {
                    return invalid("polynomial must satisfy E(0) = 0 and E'(0) = 0");
                }
                if !(coeffs[2] > 0.0) {
                    return invalid("polynomial needs E''(0) > 0");
                }
                let top = coeffs.iter().rposition(|c| *c != 0.0).unwrap();
                if top % 2 != 0 || coeffs[top] < 0.0 {
                    return invalid("polynomial must have positive leading coefficient of even degree");
                }
                1
            }
        };
        let hess0 = match &kind {
            PotentialKind::Ou | PotentialKind::Quartic => DMatrix::from_element(1, 1, 1.0),
            PotentialKind::Aniso { diag } => DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
            PotentialKind::Polynomial { coeffs } => DMatrix::from_element(1, 1, 2.0 * coeffs[2]),
        };
        let (vals, vecs) = sym_eigen(hess0.clone());
        if !(vals[0] > 0.0) {
            return invalid("D²E(0) must be positive definite");
        }
        let mut bottom = vecs.column(0).into_owned();
        if bottom.iter().find(|x| x.abs() > 1e-12).is_some_and(|x| *x < 0.0) {
            bottom = -bottom;
        }
        let pot = WeightedPotential { kind, n, hess0, sigma1: vals[0], bottom };
        // E > 0 away from the origin on a sample
        for i in 1..=200 {
            let r = 10.0 * i as f64 / 200.0;
            for dir in pot.sample_dirs(16) {
                let x: Vec<f64> = dir.iter().map(|d| d * r).collect();
                if !(pot.e(&x) > 0.0) {
                    return invalid(format!("E is not positive at {x:?}; the origin must be the unique minimum"));
                }
            }
        }
        Ok(pot)
    }

    fn sample_dirs(&self, k: usize) -> Vec<Vec<f64>> {
        if self.n == 1 {
            vec![vec![1.0], vec![-1.0]]
        } else {
            (0..k)
                .map(|i| {
                    let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect()
        }
    }

    /// Smallest eigenvalue of D²E(0).
    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    pub fn bottom_vector(&self) -> &DVector<f64> {
        &self.bottom
    }

    pub fn e(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::Ou => 0.5 * x[0] * x[0],
            PotentialKind::Quartic => 0.5 * x[0] * x[0] + 0.25 * x[0].powi(4),
            PotentialKind::Aniso { diag } => diag.iter().zip(x).map(|(d, v)| 0.5 * d * v * v).sum(),
            PotentialKind::Polynomial { coeffs } => poly_eval(coeffs, x[0]).0,
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            PotentialKind::Ou => vec![x[0]],
            PotentialKind::Quartic => vec![x[0] + x[0].powi(3)],
            PotentialKind::Aniso { diag } => diag.iter().zip(x).map(|(d, v)| d * v).collect(),
            PotentialKind::Polynomial { coeffs } => vec![poly_eval(coeffs, x[0]).1],
        }
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        self.hess(x).trace()
    }

    pub fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            PotentialKind::Ou => DMatrix::from_element(1, 1, 1.0),
            PotentialKind::Quartic => DMatrix::from_element(1, 1, 1.0 + 3.0 * x[0] * x[0]),
            PotentialKind::Aniso { .. } => self.hess0.clone(),
            PotentialKind::Polynomial { coeffs } => DMatrix::from_element(1, 1, poly_eval(coeffs, x[0]).2),
        }
    }

    /// Marginal Gaussian widths √((D²E(0))⁻¹_aa / λ).
    pub fn widths(&self, lambda: f64) -> Vec<f64> {
        let inv = self.hess0.clone().try_inverse().expect("positive definite");
        (0..self.n).map(|a| (inv[(a, a)] / lambda).sqrt()).collect()
    }

    /// Half-widths of a box on whose boundary λE exceeds [`OUTER_EXPONENT`].
    pub fn outer_box(&self, lambda: f64, start: &[f64]) -> Vec<f64> {
        let mut half = start.to_vec();
        for _ in 0..60 {
            let min_b = self.min_on_box_boundary(&half);
            if lambda * min_b > OUTER_EXPONENT {
                break;
            }
            half.iter_mut().for_each(|h| *h *= 1.25);
        }
        half
    }

    fn min_on_box_boundary(&self, half: &[f64]) -> f64 {
        if self.n == 1 {
            return self.e(&[half[0]]).min(self.e(&[-half[0]]));
        }
        let k = 200;
        let mut best = f64::INFINITY;
        for i in 0..=k {
            let s = -1.0 + 2.0 * i as f64 / k as f64;
            for p in [
                [half[0], s * half[1]],
                [-half[0], s * half[1]],
                [s * half[0], half[1]],
                [s * half[0], -half[1]],
            ] {
                best = best.min(self.e(&p));
            }
        }
        best
    }

    /// min E on the sphere |x| = r.
    pub fn min_on_sphere(&self, r: f64) -> f64 {
        self.sample_dirs(720)
            .iter()
            .map(|d| self.e(&d.iter().map(|v| v * r).collect::<Vec<_>>()))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Realization {
    /// measure-weighted divergence form, Neumann boundary
    Divergence,
    /// ground-state transformed −Δ + λ²|∇E|²/4 − λΔE/2, Dirichlet boundary
    Schrodinger,
}

/// Box half-width in Gaussian widths and mesh points per width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Resolution {
    pub widths: f64,
    pub points_per_width: f64,
}

impl Resolution {
    pub fn default_for(n: usize) -> Self {
        if n == 1 {
            Resolution { widths: 8.0, points_per_width: 50.0 }
        } else {
            Resolution { widths: 8.0, points_per_width: 7.0 }
        }
    }

    pub fn refined(&self) -> Self {
        Resolution { points_per_width: 2.0 * self.points_per_width, ..*self }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapResult {
    pub lambda: f64,
    pub realization: Realization,
    /// lowest eigenvalue (0 in the continuum)
    pub e1: f64,
    /// spectral gap e₂^λ
    pub e2: f64,
    pub e2_over_lambda: f64,
    pub sigma1: f64,
    pub half_width: Vec<f64>,
    pub h: Vec<f64>,
    pub points: Vec<usize>,
    /// largest eigen-residual reported by the solver
    pub residual: f64,
    /// ν^λ mass outside the box
    pub outside_mass: f64,
}

struct FdGrid {
    half: Vec<f64>,
    h: Vec<f64>,
    pts: Vec<usize>,
    /// node coordinates per axis
    axes: Vec<Vec<f64>>,
}

impl FdGrid {
    fn size(&self) -> usize {
        self.pts.iter().product()
    }

    fn coords(&self, idx: usize) -> Vec<f64> {
        if self.pts.len() == 1 {
            vec![self.axes[0][idx]]
        } else {
            vec![self.axes[0][idx % self.pts[0]], self.axes[1][idx / self.pts[0]]]
        }
    }

    fn stride(&self, a: usize) -> usize {
        if a == 0 {
            1
        } else {
            self.pts[0]
        }
    }

    fn index_along(&self, idx: usize, a: usize) -> usize {
        if a == 0 {
            idx % self.pts[0]
        } else {
            idx / self.pts[0]
        }
    }
}

fn build_grid(pot: &WeightedPotential, lambda: f64, res: &Resolution, realization: Realization) -> FdGrid {
    let widths = pot.widths(lambda);
    let mut half = Vec::new();
    let mut h = Vec::new();
    let mut pts = Vec::new();
    let mut axes = Vec::new();
    for w in widths {
        let l = res.widths * w;
        let cells = (2.0 * res.widths * res.points_per_width).round().max(8.0) as usize;
        let step = 2.0 * l / cells as f64;
        let nodes: Vec<f64> = match realization {
            // cell centres; edges of the box carry no flux
            Realization::Divergence => (0..cells).map(|i| -l + (i as f64 + 0.5) * step).collect(),
            // interior vertices; u = 0 on the box boundary
            Realization::Schrodinger => (1..cells).map(|i| -l + i as f64 * step).collect(),
        };
        half.push(l);
        h.push(step);
        pts.push(nodes.len());
        axes.push(nodes);
    }
    FdGrid { half, h, pts, axes }
}

/// Symmetric FD matrix as (row, col, value) triplets, lower triangle included.
fn fd_triplets(pot: &WeightedPotential, lambda: f64, g: &FdGrid, realization: Realization) -> Vec<(usize, usize, f64)> {
    let size = g.size();
    let e: Vec<f64> = (0..size).map(|i| pot.e(&g.coords(i))).collect();
    let mut trip = Vec::with_capacity(size * (1 + 2 * g.pts.len()));
    for i in 0..size {
        let x = g.coords(i);
        let mut diag = 0.0;
        for a in 0..g.pts.len() {
            let h2 = g.h[a] * g.h[a];
            let pos = g.index_along(i, a);
            for (dir, exists) in [(-1i64, pos > 0), (1i64, pos + 1 < g.pts[a])] {
                match realization {
                    Realization::Divergence => {
                        if !exists {
                            continue;
                        }
                        let j = (i as i64 + dir * g.stride(a) as i64) as usize;
                        let mut mid = x.clone();
                        mid[a] += 0.5 * dir as f64 * g.h[a];
                        let ee = pot.e(&mid);
                        diag += (-lambda * (ee - e[i])).exp() / h2;
                        trip.push((i, j, -(-lambda * (ee - 0.5 * (e[i] + e[j]))).exp() / h2));
                    }
                    Realization::Schrodinger => {
                        diag += 1.0 / h2;
                        if exists {
                            let j = (i as i64 + dir * g.stride(a) as i64) as usize;
                            trip.push((i, j, -1.0 / h2));
                        }
                    }
                }
            }
        }
        if realization == Realization::Schrodinger {
            let gr = pot.grad(&x);
            let g2: f64 = gr.iter().map(|v| v * v).sum();
            diag += 0.25 * lambda * lambda * g2 - 0.5 * lambda * pot.laplacian(&x);
        }
        trip.push((i, i, diag));
    }
    trip
}

/// Mass of ν^λ outside the box [−L, L]^N.
fn outside_mass(pot: &WeightedPotential, lambda: f64, half: &[f64]) -> f64 {
    let outer = pot.outer_box(lambda, half);
    let widths = pot.widths(lambda);
    let total = integrate_box(pot, &outer, &widths, |x| (-lambda * pot.e(x)).exp());
    let inner = integrate_box(pot, half, &widths, |x| (-lambda * pot.e(x)).exp());
    ((total - inner) / total).max(0.0)
}

fn panels_for(half: f64, width: f64) -> usize {
    ((2.0 * half / (0.5 * width)).ceil() as usize).clamp(16, 4000)
}

/// ∫ over [−half, half]^N by a product of composite 16-point rules.
fn integrate_box<F: Fn(&[f64]) -> f64>(pot: &WeightedPotential, half: &[f64], widths: &[f64], f: F) -> f64 {
    let rule = Composite::new(16);
    let pts: Vec<Vec<(f64, f64)>> =
        (0..pot.n).map(|a| rule.points(-half[a], half[a], panels_for(half[a], widths[a]))).collect();
    if pot.n == 1 {
        pts[0].iter().map(|(x, w)| w * f(&[*x])).sum()
    } else {
        pts[0].iter().map(|(x, wx)| wx * pts[1].iter().map(|(y, wy)| wy * f(&[*x, *y])).sum::<f64>()).sum()
    }
}

/// Several integrals over the same product rule; `f` fills one value per slot.
fn integrate_box_many<F: Fn(&[f64], &mut [f64])>(
    pot: &WeightedPotential,
    half: &[f64],
    widths: &[f64],
    slots: usize,
    f: F,
) -> Vec<f64> {
    let rule = Composite::new(16);
    let pts: Vec<Vec<(f64, f64)>> =
        (0..pot.n).map(|a| rule.points(-half[a], half[a], panels_for(half[a], widths[a]))).collect();
    let mut acc = vec![0.0; slots];
    let mut buf = vec![0.0; slots];
    let mut add = |x: &[f64], w: f64| {
        f(x, &mut buf);
        acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += w * b);
    };
    if pot.n == 1 {
        pts[0].iter().for_each(|(x, w)| add(&[*x], *w));
    } else {
        for (x, wx) in &pts[0] {
            for (y, wy) in &pts[1] {
                add(&[*x, *y], wx * wy);
            }
        }
    }
    acc
}

/// e₂^λ for one realization at the given resolution.
pub fn spectral_gap_with(
    pot: &WeightedPotential,
    lambda: f64,
    realization: Realization,
    res: &Resolution,
) -> Result<GapResult> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return invalid("lambda must be positive");
    }
    if !(res.widths > 0.0 && res.points_per_width > 0.0) {
        return invalid("resolution must be positive");
    }
    let g = build_grid(pot, lambda, res, realization);
    let outside = outside_mass(pot, lambda, &g.half);
    if outside > 1e-8 {
        return Err(GapError::BoxTooSmall(outside));
    }
    if !(pot.min_on_box_boundary(&g.half) > 0.0) {
        return invalid("E must be positive on the box boundary");
    }
    let size = g.size();
    let trip = fd_triplets(pot, lambda, &g, realization);
    let (e1, e2, residual) = if size <= 2500 {
        let mut a = DMatrix::zeros(size, size);
        for (i, j, v) in &trip {
            a[(*i, *j)] += v;
        }
        let (vals, vecs) = sym_eigen(a.clone());
        let resid = (0..2)
            .map(|k| {
                let v = vecs.column(k);
                (&a * v - v * vals[k]).norm()
            })
            .fold(0.0, f64::max);
        (vals[0], vals[1], resid)
    } else {
        sparse_lowest_two(pot, lambda, &g, &trip, realization)?
    };
    let gap = e2 - e1;
    if !(gap.is_finite()) {
        return Err(GapError::NoConvergence("non-finite eigenvalues".into()));
    }
    Ok(GapResult {
        lambda,
        realization,
        e1,
        e2: gap,
        e2_over_lambda: gap / lambda,
        sigma1: pot.sigma1(),
        half_width: g.half.clone(),
        h: g.h.clone(),
        points: g.pts.clone(),
        residual,
        outside_mass: outside,
    })
}

/// Shift-invert Lanczos around −s with a sparse Cholesky factor of B + sI.
fn sparse_lowest_two(
    pot: &WeightedPotential,
    lambda: f64,
    g: &FdGrid,
    trip: &[(usize, usize, f64)],
    realization: Realization,
) -> Result<(f64, f64, f64)> {
    let size = g.size();
    let shift = lambda * pot.sigma1();
    let mut coo = CooMatrix::new(size, size);
    for (i, j, v) in trip {
        coo.push(*i, *j, *v);
    }
    for i in 0..size {
        coo.push(i, i, shift);
    }
    let csc = CscMatrix::from(&coo);
    let chol = CscCholesky::factor(&csc).map_err(|e| GapError::NoConvergence(format!("Cholesky failed: {e:?}")))?;
    let apply = |x: &[f64], out: &mut [f64]| {
        let b = DMatrix::from_column_slice(size, 1, x);
        let y = chol.solve(&b);
        out.copy_from_slice(y.as_slice());
    };
    let tol = 1e-11;
    match realization {
        Realization::Divergence => {
            // √μ spans the exact kernel
            let mut root: Vec<f64> = (0..size).map(|i| (-0.5 * lambda * pot.e(&g.coords(i))).exp()).collect();
            let nr = root.iter().map(|x| x * x).sum::<f64>().sqrt();
            root.iter_mut().for_each(|x| *x /= nr);
            let mut br = vec![0.0; size];
            for (i, j, v) in trip {
                br[*i] += v * root[*j];
            }
            let e1 = root.iter().zip(&br).map(|(a, b)| a * b).sum::<f64>();
            let r = lanczos(apply, size, 1, Which::Largest, &[root], tol, 400)?;
            let nu = r.values[0];
            Ok((e1, 1.0 / nu - shift, r.residuals[0] / (nu * nu)))
        }
        Realization::Schrodinger => {
            let r = lanczos(apply, size, 2, Which::Largest, &[], tol, 400)?;
            let (n0, n1) = (r.values[0], r.values[1]);
            let resid = (r.residuals[0] / (n0 * n0)).max(r.residuals[1] / (n1 * n1));
            Ok((1.0 / n0 - shift, 1.0 / n1 - shift, resid))
        }
    }
}

/// e₂^λ from the divergence-form realization at the default resolution.
pub fn spectral_gap(pot: &WeightedPotential, lambda: f64) -> Result<GapResult> {
    spectral_gap_with(pot, lambda, Realization::Divergence, &Resolution::default_for(pot.n))
}

#[derive(Clone, Debug, Serialize)]
pub struct GapPair {
    pub divergence: GapResult,
    pub schrodinger: GapResult,
    /// |e₂(div) − e₂(schr)| / e₂(div)
    pub relative_gap: f64,
}

pub fn spectral_gap_both(pot: &WeightedPotential, lambda: f64, res: &Resolution) -> Result<GapPair> {
    let divergence = spectral_gap_with(pot, lambda, Realization::Divergence, res)?;
    let schrodinger = spectral_gap_with(pot, lambda, Realization::Schrodinger, res)?;
    let relative_gap = (divergence.e2 - schrodinger.e2).abs() / divergence.e2;
    Ok(GapPair { divergence, schrodinger, relative_gap })
}

#[derive(Clone, Debug, Serialize)]
pub struct Asymptotics {
    pub rows: Vec<GapResult>,
    /// a in e₂/λ ≈ a + b/λ through the last two points
    pub extrapolated: f64,
    pub sigma1: f64,
    pub monotone: bool,
}

pub fn gap_asymptotics(pot: &WeightedPotential, lambdas: &[f64], res: &Resolution) -> Result<Asymptotics> {
    if lambdas.len() < 3 {
        return invalid("need at least three lambda values");
    }
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("lambda list must be increasing");
    }
    let rows = lambdas
        .par_iter()
        .map(|l| spectral_gap_with(pot, *l, Realization::Divergence, res))
        .collect::<Result<Vec<_>>>()?;
    let k = rows.len();
    let (l1, g1) = (rows[k - 2].lambda, rows[k - 2].e2_over_lambda);
    let (l2, g2) = (rows[k - 1].lambda, rows[k - 1].e2_over_lambda);
    let extrapolated = (l2 * g2 - l1 * g1) / (l2 - l1);
    let sigma1 = pot.sigma1();
    let dist: Vec<f64> = rows.iter().map(|r| (r.e2_over_lambda - sigma1).abs()).collect();
    let monotone = dist.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    Ok(Asymptotics { rows, extrapolated, sigma1, monotone })
}

/// Z_λ(λ/2π)^{N/2}; tends to det(D²E(0))^{−1/2}.
pub fn laplace_constant(pot: &WeightedPotential, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return invalid("lambda must be positive");
    }
    let widths = pot.widths(lambda);
    let start: Vec<f64> = widths.iter().map(|w| 8.0 * w).collect();
    let outer = pot.outer_box(lambda, &start);
    let z = integrate_box(pot, &outer, &widths, |x| (-lambda * pot.e(x)).exp());
    if !(z.is_finite() && z > 0.0) {
        return Err(GapError::NoConvergence("partition function quadrature failed".into()));
    }
    Ok(z * (lambda / (2.0 * std::f64::consts::PI)).powf(pot.n as f64 / 2.0))
}

/// ν^λ(|x| ≥ r), integrated directly over the tail region.
pub fn tail_mass(pot: &WeightedPotential, lambda: f64, r: f64) -> Result<f64> {
    if !(lambda > 0.0) || !(r >= 0.0) {
        return invalid("need lambda > 0 and r >= 0");
    }
    let widths = pot.widths(lambda);
    let start: Vec<f64> = widths.iter().map(|w| 8.0 * w).collect();
    let outer = pot.outer_box(lambda, &start);
    let weight = |x: &[f64]| (-lambda * pot.e(x)).exp();
    let z = integrate_box(pot, &outer, &widths, weight);
    let rule = Composite::new(16);
    let big = outer.iter().cloned().fold(0.0, f64::max) * (pot.n as f64).sqrt();
    if r >= big {
        return Ok(0.0);
    }
    let wmin = widths.iter().cloned().fold(f64::INFINITY, f64::min);
    let panels = panels_for(0.5 * (big - r), wmin);
    let mass = if pot.n == 1 {
        rule.integrate(r, big, panels, |x| weight(&[x])) + rule.integrate(r, big, panels, |x| weight(&[-x]))
    } else {
        let theta = rule.points(0.0, 2.0 * std::f64::consts::PI, 64);
        rule.points(r, big, panels)
            .iter()
            .map(|(rho, wr)| {
                wr * rho * theta.iter().map(|(th, wt)| wt * weight(&[rho * th.cos(), rho * th.sin()])).sum::<f64>()
            })
            .sum()
    };
    Ok((mass / z).min(1.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct TailFit {
    pub r: f64,
    pub slope: f64,
    /// min_{|x|=r} E
    pub m_r: f64,
    /// −slope / m_r, at least 1 − tol for the estimate to hold
    pub ratio: f64,
}

/// Slope of log ν^λ(|x| ≥ r) against λ.
pub fn tail_slope(pot: &WeightedPotential, r: f64, lambdas: &[f64]) -> Result<TailFit> {
    if lambdas.len() < 2 {
        return invalid("need at least two lambda values");
    }
    let pts = lambdas
        .iter()
        .map(|l| tail_mass(pot, *l, r).map(|m| (*l, m.ln())))
        .collect::<Result<Vec<_>>>()?;
    let slope = crate::operators::fit_slope(&pts);
    let m_r = pot.min_on_sphere(r);
    Ok(TailFit { r, slope, m_r, ratio: -slope / m_r })
}

// ---- test functions ----------------------------------------------------------

fn hermite(k: usize, y: f64) -> (f64, f64) {
    // probabilists' He_k and its derivative k·He_{k−1}
    let (mut p0, mut p1) = (1.0, y);
    if k == 0 {
        return (1.0, 0.0);
    }
    for j in 1..k {
        let p2 = y * p1 - j as f64 * p0;
        p0 = p1;
        p1 = p2;
    }
    (p1, k as f64 * p0)
}

/// Smooth cutoff: 1 on [0, a], cos² ramp to 0 at b.
fn cutoff(x: f64, a: f64, b: f64) -> (f64, f64) {
    let s = x.abs();
    if s <= a {
        (1.0, 0.0)
    } else if s >= b {
        (0.0, 0.0)
    } else {
        let u = std::f64::consts::PI * (s - a) / (b - a);
        let v = 0.5 * (1.0 + u.cos());
        let dv = -0.5 * u.sin() * std::f64::consts::PI / (b - a) * x.signum();
        (v, dv)
    }
}

/// F(x) = Π_a He_{k_a}(√λ x_a) times a cutoff near the box edge; F ≡ 1 for the
/// zero multi-index.
#[derive(Clone, Debug)]
pub struct TestFunction {
    pub degrees: Vec<usize>,
    pub lambda: f64,
    pub half: Vec<f64>,
}

impl TestFunction {
    pub fn hermite(pot: &WeightedPotential, lambda: f64, degrees: Vec<usize>) -> Result<Self> {
        if degrees.len() != pot.n {
            return invalid("one degree per coordinate");
        }
        let half = pot.widths(lambda).iter().map(|w| 8.0 * w).collect();
        Ok(TestFunction { degrees, lambda, half })
    }

    pub fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let n = x.len();
        let sl = self.lambda.sqrt();
        let constant = self.degrees.iter().all(|k| *k == 0);
        let mut parts = Vec::with_capacity(n);
        for a in 0..n {
            let (p, dp) = hermite(self.degrees[a], sl * x[a]);
            let (c, dc) = if constant { (1.0, 0.0) } else { cutoff(x[a], 0.9 * self.half[a], self.half[a]) };
            parts.push((p * c, sl * dp * c + p * dc));
        }
        let value: f64 = parts.iter().map(|p| p.0).product();
        let grad = (0..n)
            .map(|a| parts.iter().enumerate().map(|(b, p)| if a == b { p.1 } else { p.0 }).product())
            .collect();
        (value, grad)
    }
}

/// Sum of the squared gradient, ∫|DF|² dν^λ, and friends over one quadrature.
struct Measure<'a> {
    pot: &'a WeightedPotential,
    lambda: f64,
    outer: Vec<f64>,
    widths: Vec<f64>,
    z: f64,
}

impl<'a> Measure<'a> {
    fn new(pot: &'a WeightedPotential, lambda: f64) -> Self {
        let widths = pot.widths(lambda);
        let start: Vec<f64> = widths.iter().map(|w| 8.0 * w).collect();
        let outer = pot.outer_box(lambda, &start);
        let z = integrate_box(pot, &outer, &widths, |x| (-lambda * pot.e(x)).exp());
        Measure { pot, lambda, outer, widths, z }
    }

    fn expect<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        integrate_box(self.pot, &self.outer, &self.widths, |x| f(x) * (-self.lambda * self.pot.e(x)).exp()) / self.z
    }

    fn expect_many<F: Fn(&[f64], &mut [f64])>(&self, slots: usize, f: F) -> Vec<f64> {
        let raw = integrate_box_many(self.pot, &self.outer, &self.widths, slots, |x, out| {
            f(x, out);
            let dens = (-self.lambda * self.pot.e(x)).exp();
            out.iter_mut().for_each(|o| *o *= dens);
        });
        raw.into_iter().map(|v| v / self.z).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GnsRow {
    pub degrees: Vec<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GnsReport {
    /// log-Sobolev constant in the normalization where OU has C = 2
    pub c: Option<f64>,
    /// the proof needs Cσ₁ ≥ 2
    pub c_sigma1_ok: bool,
    pub rows: Vec<GnsRow>,
}

/// Bakry–Émery constant 2/min D²E over the box, or None if the Hessian is not positive.
pub fn lsi_constant(pot: &WeightedPotential, lambda: f64) -> Option<f64> {
    let half: Vec<f64> = pot.widths(lambda).iter().map(|w| 8.0 * w).collect();
    let k = 101;
    let mut kmin = f64::INFINITY;
    let grid = |a: usize, i: usize| -half[a] + 2.0 * half[a] * i as f64 / (k - 1) as f64;
    if pot.n == 1 {
        for i in 0..k {
            kmin = kmin.min(sym_eigen(pot.hess(&[grid(0, i)])).0[0]);
        }
    } else {
        for i in 0..k {
            for j in 0..k {
                kmin = kmin.min(sym_eigen(pot.hess(&[grid(0, i), grid(1, j)])).0[0]);
            }
        }
    }
    (kmin > 0.0).then(|| 2.0 / kmin)
}

fn multi_indices(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        (0..=4).map(|k| vec![k]).collect()
    } else {
        let mut out = Vec::new();
        for s in 0..=3 {
            for j in 0..=s {
                out.push(vec![j, s - j]);
            }
        }
        out
    }
}

/// ℰ^λ(F,F) + ∫VF² dν^λ against −(λ/C) log∫e^{−CV/λ} dν^λ · ‖F‖² over a Hermite family.
pub fn gns_check<V: Fn(&[f64]) -> f64>(pot: &WeightedPotential, lambda: f64, v: V) -> Result<GnsReport> {
    if !(lambda > 0.0) {
        return invalid("lambda must be positive");
    }
    let Some(c) = lsi_constant(pot, lambda) else {
        return Ok(GnsReport { c: None, c_sigma1_ok: false, rows: Vec::new() });
    };
    let meas = Measure::new(pot, lambda);
    let family = multi_indices(pot.n)
        .into_iter()
        .map(|d| TestFunction::hermite(pot, lambda, d))
        .collect::<Result<Vec<_>>>()?;
    // slot 0: e^{−CV/λ}; then (energy, VF², F²) per test function
    let sums = meas.expect_many(1 + 3 * family.len(), |x, out| {
        let vx = v(x);
        out[0] = (-c * vx / lambda).exp();
        for (j, f) in family.iter().enumerate() {
            let (fv, fg) = f.value_grad(x);
            out[1 + 3 * j] = fg.iter().map(|g| g * g).sum();
            out[2 + 3 * j] = vx * fv * fv;
            out[3 + 3 * j] = fv * fv;
        }
    });
    let log_term = sums[0].ln();
    let rows = family
        .into_iter()
        .enumerate()
        .map(|(j, f)| {
            let (energy, pot_term, norm2) = (sums[1 + 3 * j], sums[2 + 3 * j], sums[3 + 3 * j]);
            GnsRow { degrees: f.degrees, lhs: energy + pot_term, rhs: -(lambda / c) * log_term * norm2 }
        })
        .collect();
    Ok(GnsReport { c: Some(c), c_sigma1_ok: c * pot.sigma1() >= 2.0 - 1e-12, rows })
}

/// χ₀ = cos θ, χ₁ = sin θ with θ = (π/2)·s(|x|/κ − 1), s a C¹ smoothstep, so
/// χ₀ = 1 on |x| ≤ κ and χ₁ = 1 on |x| ≥ 2κ. `kappa = None` is the trivial pair χ₀ ≡ 1.
#[derive(Clone, Copy, Debug)]
pub struct ImsPartition {
    pub kappa: Option<f64>,
}

impl ImsPartition {
    /// (θ, |Dθ|²)
    fn theta(&self, x: &[f64]) -> (f64, f64) {
        let Some(k) = self.kappa else { return (0.0, 0.0) };
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rho = (r / k - 1.0).clamp(0.0, 1.0);
        let s = rho * rho * (3.0 - 2.0 * rho);
        let ds = if rho > 0.0 && rho < 1.0 { 6.0 * rho * (1.0 - rho) / k } else { 0.0 };
        let dtheta = 0.5 * std::f64::consts::PI * ds;
        (0.5 * std::f64::consts::PI * s, dtheta * dtheta)
    }

    /// sup |Dχ₀|² + |Dχ₁|² = (3π/(4κ))².
    pub fn sup_grad_sq(&self) -> f64 {
        self.kappa.map_or(0.0, |k| (0.75 * std::f64::consts::PI / k).powi(2))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ImsRecord {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// ∫(|Dχ₀|² + |Dχ₁|²)F² dν^λ
    pub cross_term: f64,
    pub sup_grad_sq: f64,
}

pub fn ims_check(f: &TestFunction, chi: &ImsPartition, pot: &WeightedPotential, lambda: f64) -> Result<ImsRecord> {
    if let Some(k) = chi.kappa {
        if !(k > 0.0) {
            return invalid("kappa must be positive");
        }
    }
    let meas = Measure::new(pot, lambda);
    let lhs = meas.expect(|x| f.value_grad(x).1.iter().map(|g| g * g).sum());
    let localized = meas.expect(|x| {
        let (fv, fg) = f.value_grad(x);
        let (th, _) = chi.theta(x);
        let (c0, c1) = (th.cos(), th.sin());
        // Dχ₀ = −sin θ Dθ, Dχ₁ = cos θ Dθ; Dθ is radial
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (_, dt2) = chi.theta(x);
        let dt = dt2.sqrt();
        let mut s = 0.0;
        for a in 0..x.len() {
            let dth = if r > 0.0 { dt * x[a] / r } else { 0.0 };
            let g0 = fg[a] * c0 - fv * c1 * dth;
            let g1 = fg[a] * c1 + fv * c0 * dth;
            s += g0 * g0 + g1 * g1;
        }
        s
    });
    let cross = meas.expect(|x| chi.theta(x).1 * f.value_grad(x).0.powi(2));
    let rhs = localized - cross;
    Ok(ImsRecord { lhs, rhs, residual: (lhs - rhs).abs(), cross_term: cross, sup_grad_sq: chi.sup_grad_sq() })
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    /// ℰ^λ(F,F) / (λ Var F)
    pub quotient: f64,
    pub mean: f64,
    /// ∫F² dν^λ
    pub norm: f64,
}

/// F^λ(x) = √(λσ₁)⟨x, v⟩ with v the bottom eigenvector of D²E(0).
pub fn trial_upper_bound(pot: &WeightedPotential, lambda: f64) -> Result<TrialRecord> {
    if !(lambda > 0.0) {
        return invalid("lambda must be positive");
    }
    let meas = Measure::new(pot, lambda);
    let v = pot.bottom_vector().clone();
    let scale = (lambda * pot.sigma1()).sqrt();
    let f = |x: &[f64]| scale * x.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>();
    let mean = meas.expect(f);
    let norm = meas.expect(|x| f(x).powi(2));
    let energy = scale * scale * v.norm_squared();
    Ok(TrialRecord { quotient: energy / (lambda * (norm - mean * mean)), mean, norm })
}

pub const GAP_HEADER: [&str; 10] =
    ["potential", "N", "lambda", "realization", "L", "h", "e1", "e2", "e2_over_lambda", "sigma1"];

pub fn gap_row(pot: &WeightedPotential, r: &GapResult) -> Vec<String> {
    let f = crate::fmt12;
    let join = |v: &[f64]| v.iter().map(|x| f(*x)).collect::<Vec<_>>().join(";");
    vec![
        pot.kind.tag(),
        pot.n.to_string(),
        f(r.lambda),
        match r.realization {
            Realization::Divergence => "divergence".into(),
            Realization::Schrodinger => "schrodinger".into(),
        },
        join(&r.half_width),
        join(&r.h),
        f(r.e1),
        f(r.e2),
        f(r.e2_over_lambda),
        f(r.sigma1),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_derivatives() {
        let (p, d1, d2) = poly_eval(&[0.0, 0.0, 0.5, 0.0, 0.25], 1.3);
        assert!((p - (0.5 * 1.69 + 0.25 * 1.3f64.powi(4))).abs() < 1e-13);
        assert!((d1 - (1.3 + 1.3f64.powi(3))).abs() < 1e-13);
        assert!((d2 - (1.0 + 3.0 * 1.69)).abs() < 1e-13);
    }

    #[test]
    fn rejects_invalid_potentials() {
        assert!(WeightedPotential::new(PotentialKind::Aniso { diag: vec![1.0, -1.0] }).is_err());
        assert!(WeightedPotential::new(PotentialKind::Polynomial { coeffs: vec![0.0, 1.0, 1.0] }).is_err());
        assert!(WeightedPotential::new(PotentialKind::Polynomial { coeffs: vec![0.0, 0.0, 1.0, 1.0] }).is_err());
        // double well: origin is not the unique minimum
        assert!(WeightedPotential::new(PotentialKind::Polynomial { coeffs: vec![0.0, 0.0, 1.0, 0.0, -2.0, 0.0, 1.0] })
            .is_err());
    }

    #[test]
    fn hermite_recurrence() {
        assert_eq!(hermite(3, 2.0), (2.0, 9.0));
        assert_eq!(hermite(2, 0.0), (-1.0, 0.0));
    }

    #[test]
    fn ou_laplace_constant_is_one() {
        let ou = WeightedPotential::new(PotentialKind::Ou).unwrap();
        for l in [1.0, 10.0, 100.0] {
            assert!((laplace_constant(&ou, l).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tail_at_zero_radius_is_full_mass() {
        let q = WeightedPotential::new(PotentialKind::Quartic).unwrap();
        assert!((tail_mass(&q, 10.0, 0.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trivial_partition_has_zero_residual() {
        let ou = WeightedPotential::new(PotentialKind::Ou).unwrap();
        let f = TestFunction::hermite(&ou, 5.0, vec![3]).unwrap();
        let r = ims_check(&f, &ImsPartition { kappa: None }, &ou, 5.0).unwrap();
        assert!(r.residual < 1e-12 * r.lhs);
        assert_eq!(r.cross_term, 0.0);
    }

    #[test]
    fn small_box_is_rejected() {
        let ou = WeightedPotential::new(PotentialKind::Ou).unwrap();
        let res = Resolution { widths: 3.0, points_per_width: 10.0 };
        assert!(matches!(spectral_gap_with(&ou, 10.0, Realization::Divergence, &res), Err(GapError::BoxTooSmall(_))));
    }
}
