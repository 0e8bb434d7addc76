//! Discretized operators on L²([0,1] → ℝⁿ): S, T, S₂ = S⁻¹, S*, (S⁻¹)*.
//!
//! Grid functions are stored time-major: index i·n + a for node i and
//! component a. The inner product is Σ wᵢ⟨φᵢ, ψᵢ⟩ and every adjoint is the
//! weighted transpose W⁻¹AᵀW.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{invalid, GapError, Result};
use crate::jacobi::{rk4_linear, JacobiSolution, Mat};
use crate::linalg::{lanczos, matvec, sym_eigen, weighted_opnorm_pair, Which};

/// Cells of [0,1] are the images of m uniform cells under u ↦ 1 − (1−u)^p;
/// nodes are cell midpoints and weights cell widths. p = 1 is the uniform
/// midpoint grid; p > 1 refines toward the pole at t = 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub m: usize,
    pub n: usize,
    pub grading: f64,
}

/// Grading exponent used for the identity checks.
pub const IDENTITY_GRADING: f64 = 5.0;

impl GridSpec {
    pub fn uniform(m: usize, n: usize) -> Self {
        GridSpec { m, n, grading: 1.0 }
    }

    pub fn graded(m: usize, n: usize, p: f64) -> Self {
        GridSpec { m, n, grading: p }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.n == 0 {
            return invalid("grid needs m >= 2 and n >= 1");
        }
        if !(self.grading >= 1.0) || self.grading > 6.0 {
            return invalid("grading exponent must lie in [1, 6]");
        }
        Ok(())
    }

    pub fn nodes_weights(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.m;
        if self.grading == 1.0 {
            let nodes = (1..=m).map(|i| (i as f64 - 0.5) / m as f64).collect();
            return (nodes, vec![1.0 / m as f64; m]);
        }
        let p = self.grading;
        // edges written as 1 − e to keep the cells near t = 1 accurate
        let gap = |i: usize| (1.0 - i as f64 / m as f64).powf(p);
        let mut nodes = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        for i in 0..m {
            let (g0, g1) = (gap(i), gap(i + 1));
            weights.push(g0 - g1);
            nodes.push(1.0 - 0.5 * (g0 + g1));
        }
        (nodes, weights)
    }

    /// 1 − t_i computed without cancellation.
    pub fn gaps(&self) -> Vec<f64> {
        let m = self.m;
        let p = self.grading;
        let gap = |i: usize| (1.0 - i as f64 / m as f64).powf(p);
        (0..m).map(|i| 0.5 * (gap(i) + gap(i + 1))).collect()
    }

    pub fn dim(&self) -> usize {
        self.m * self.n
    }
}

#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub grid: GridSpec,
    pub t: Vec<f64>,
    /// node weights
    pub w: Vec<f64>,
    /// weights repeated per component
    pub wfull: Vec<f64>,
    pub s: Mat,
    pub t_op: Mat,
    pub s_inv: Mat,
    pub s_star: Mat,
    pub s_inv_star: Mat,
    pub j0: Mat,
    pub p0: Mat,
    pub radial_axis: Option<usize>,
}

// ---- structured building blocks ------------------------------------------

/// V·X with (Vφ)ᵢ = Σ_{j<i} w_j φ_j + (wᵢ/2)φᵢ.
fn lower_volterra(x: &Mat, w: &[f64], n: usize) -> Mat {
    let m = w.len();
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    let mut acc = vec![0.0; n];
    for c in 0..x.ncols() {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            for a in 0..n {
                let v = x[(i * n + a, c)];
                out[(i * n + a, c)] = acc[a] + 0.5 * w[i] * v;
                acc[a] += w[i] * v;
            }
        }
    }
    out
}

/// U·X with (Uφ)ᵢ = Σ_{j>i} w_j φ_j + (wᵢ/2)φᵢ, the quadrature of ∫_t¹.
fn upper_volterra(x: &Mat, w: &[f64], n: usize) -> Mat {
    let m = w.len();
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    let mut acc = vec![0.0; n];
    for c in 0..x.ncols() {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for i in (0..m).rev() {
            for a in 0..n {
                let v = x[(i * n + a, c)];
                out[(i * n + a, c)] = acc[a] + 0.5 * w[i] * v;
                acc[a] += w[i] * v;
            }
        }
    }
    out
}

/// blockdiag(B)·X
fn left_blocks(blocks: &[Mat], x: &Mat) -> Mat {
    let n = blocks[0].nrows();
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    for c in 0..x.ncols() {
        for (i, b) in blocks.iter().enumerate() {
            for a in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += b[(a, k)] * x[(i * n + k, c)];
                }
                out[(i * n + a, c)] = s;
            }
        }
    }
    out
}

/// X·blockdiag(B)
fn right_blocks(x: &Mat, blocks: &[Mat]) -> Mat {
    let n = blocks[0].nrows();
    let mut out = Mat::zeros(x.nrows(), x.ncols());
    for (j, b) in blocks.iter().enumerate() {
        for a in 0..n {
            for k in 0..n {
                let coef = b[(k, a)];
                if coef == 0.0 {
                    continue;
                }
                let src = j * n + k;
                let dst = j * n + a;
                for r in 0..x.nrows() {
                    out[(r, dst)] += x[(r, src)] * coef;
                }
            }
        }
    }
    out
}

/// P₀·X: subtract the weighted mean of each component.
fn p0_left(x: &Mat, w: &[f64], n: usize) -> Mat {
    let m = w.len();
    let mut out = x.clone();
    for c in 0..x.ncols() {
        for a in 0..n {
            let mean: f64 = (0..m).map(|i| w[i] * x[(i * n + a, c)]).sum();
            for i in 0..m {
                out[(i * n + a, c)] -= mean;
            }
        }
    }
    out
}

/// X·P₀
fn p0_right(x: &Mat, w: &[f64], n: usize) -> Mat {
    let m = w.len();
    let rows = x.nrows();
    let mut sums = Mat::zeros(rows, n);
    for j in 0..m {
        for a in 0..n {
            for r in 0..rows {
                sums[(r, a)] += x[(r, j * n + a)];
            }
        }
    }
    let mut out = x.clone();
    for j in 0..m {
        for a in 0..n {
            for r in 0..rows {
                out[(r, j * n + a)] -= w[j] * sums[(r, a)];
            }
        }
    }
    out
}

/// W⁻¹XᵀW
pub fn weighted_adjoint(x: &Mat, wfull: &[f64]) -> Mat {
    Mat::from_fn(x.ncols(), x.nrows(), |i, j| x[(j, i)] * wfull[j] / wfull[i])
}

fn invert_all(blocks: &[Mat]) -> Result<Vec<Mat>> {
    blocks
        .iter()
        .map(|b| b.clone().try_inverse().ok_or_else(|| GapError::NoConvergence("singular M block".into())))
        .collect()
}

pub fn assemble_operators(jac: &JacobiSolution, grid: GridSpec) -> Result<OperatorSet> {
    grid.validate()?;
    if grid.n != jac.geo.n {
        return invalid(format!("grid dimension {} does not match geometry dimension {}", grid.n, jac.geo.n));
    }
    if jac.steps < grid.m {
        return Err(GapError::Resolution(format!("Jacobi steps {} coarser than grid m={}", jac.steps, grid.m)));
    }
    let n = grid.n;
    let dim = grid.dim();
    let (t, w) = grid.nodes_weights();
    let wfull: Vec<f64> = w.iter().flat_map(|x| std::iter::repeat_n(*x, n)).collect();
    let k: Vec<Mat> = grid.gaps().iter().map(|s| -jac.a_at(*s) / *s).collect();
    let r: Vec<Mat> = t.iter().map(|ti| jac.r_at(*ti)).collect();
    let mm = jac.m_at(&t);
    let minv = invert_all(&mm)?;
    let km: Vec<Mat> = k.iter().zip(&mm).map(|(a, b)| a * b).collect();

    let id = Mat::identity(dim, dim);
    let v = lower_volterra(&id, &w, n);
    let s = p0_right(&(&id - left_blocks(&k, &v)), &w, n);
    let s_inv = p0_left(&(&id + left_blocks(&km, &right_blocks(&v, &minv))), &w, n);
    let t_op = -p0_left(&p0_right(&upper_volterra(&left_blocks(&r, &v), &w, n), &w, n), &w, n);
    let s_star = weighted_adjoint(&s, &wfull);
    let j0 = weighted_adjoint(&s_inv, &wfull) - &id;
    let s_inv_star = &id + &j0;
    let p0 = p0_left(&id, &w, n);
    Ok(OperatorSet {
        grid,
        t,
        w,
        wfull,
        s,
        t_op,
        s_inv,
        s_star,
        s_inv_star,
        j0,
        p0,
        radial_axis: jac.geo.radial_axis,
    })
}

impl OperatorSet {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.wfull).map(|((x, y), w)| x * y * w).sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    fn apply(&self, a: &Mat, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        matvec(a, x, &mut out);
        out
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let n = self.grid.n;
        let mut out = x.to_vec();
        for a in 0..n {
            let mean: f64 = (0..self.grid.m).map(|i| self.w[i] * x[i * n + a]).sum();
            for i in 0..self.grid.m {
                out[i * n + a] -= mean;
            }
        }
        out
    }

    /// (I+T)φ
    pub fn apply_i_plus_t(&self, x: &[f64]) -> Vec<f64> {
        let tx = self.apply(&self.t_op, x);
        x.iter().zip(tx).map(|(a, b)| a + b).collect()
    }

    /// ⟨(I+T)φ, φ⟩
    pub fn form(&self, x: &[f64]) -> f64 {
        self.inner(&self.apply_i_plus_t(x), x)
    }

    pub fn apply_s(&self, x: &[f64]) -> Vec<f64> {
        self.apply(&self.s, x)
    }

    pub fn apply_s_inv_star(&self, x: &[f64]) -> Vec<f64> {
        self.apply(&self.s_inv_star, x)
    }

    /// √w-scaled symmetric form of P₀(I+T)P₀ with the constants pushed to the top
    /// of the spectrum.
    fn symmetric_form(&self) -> Mat {
        let dim = self.dim();
        let n = self.grid.n;
        let sw: Vec<f64> = self.wfull.iter().map(|x| x.sqrt()).collect();
        let a = &self.p0 * (Mat::identity(dim, dim) + &self.t_op) * &self.p0;
        let mut h = Mat::from_fn(dim, dim, |i, j| sw[i] * a[(i, j)] / sw[j]);
        h = (&h + h.transpose()) * 0.5;
        let shift = 10.0 + h.amax() * 2.0;
        // the constant in component c is √w ⊗ e_c after scaling; unit norm since Σw = 1
        for c in 0..n {
            for i in 0..self.grid.m {
                for j in 0..self.grid.m {
                    h[(i * n + c, j * n + c)] += shift * sw[i * n + c] * sw[j * n + c];
                }
            }
        }
        h
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sigma1 {
    pub via_eig: f64,
    pub via_opnorm: f64,
}

/// inf σ(I+T) on L²₀ directly, and as 1/‖(S⁻¹)*P₀‖².
pub fn sigma1(ops: &OperatorSet) -> Result<Sigma1> {
    let (vals, _) = sym_eigen(ops.symmetric_form());
    let via_eig = vals[0];
    let b = &ops.s_inv_star * &ops.p0;
    let sw: Vec<f64> = ops.wfull.iter().map(|x| x.sqrt()).collect();
    let bw = Mat::from_fn(b.nrows(), b.ncols(), |i, j| sw[i] * b[(i, j)] / sw[j]);
    let gram = bw.tr_mul(&bw);
    let (gvals, _) = sym_eigen((&gram + gram.transpose()) * 0.5);
    let top = *gvals.last().unwrap();
    if !(top > 0.0) || !via_eig.is_finite() {
        return Err(GapError::NoConvergence("σ₁ eigenproblem returned invalid values".into()));
    }
    Ok(Sigma1 { via_eig, via_opnorm: 1.0 / top })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residuals {
    /// S*S − (I+T) on L²₀
    pub s_star_s: f64,
    /// S·S₂ − I on L²
    pub s_s2: f64,
    /// S₂·S − I on L²₀
    pub s2_s: f64,
    /// (S⁻¹)*(I+T) − S on L²₀
    pub inv_star_form: f64,
    /// (I+T)·S₂·(S⁻¹)* − I on L²₀
    pub inverse_form: f64,
    /// (S⁻¹)* − (I+J₀), identically zero
    pub definitional: f64,
}

impl Residuals {
    pub fn identity_max(&self) -> f64 {
        self.s_star_s.max(self.s_s2).max(self.s2_s).max(self.inv_star_form)
    }
}

/// Number of cosine modes per component spanning the resolved subspace.
pub const RESOLVED_MODES: usize = 8;

/// W-orthonormal basis of P₀·span{√2 cos(kπt) e_a : k ≤ q}, optionally with the constants.
pub fn cosine_basis(ops: &OperatorSet, q: usize, with_constants: bool) -> Mat {
    let n = ops.grid.n;
    let m = ops.grid.m;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    if with_constants {
        for a in 0..n {
            let mut v = vec![0.0; m * n];
            for i in 0..m {
                v[i * n + a] = 1.0;
            }
            cols.push(v);
        }
    }
    for k in 1..=q {
        for a in 0..n {
            let mut v = vec![0.0; m * n];
            for i in 0..m {
                v[i * n + a] = 2f64.sqrt() * (k as f64 * std::f64::consts::PI * ops.t[i]).cos();
            }
            cols.push(ops.project(&v));
        }
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut v in cols {
        for _ in 0..2 {
            for b in &basis {
                let c = ops.inner(b, &v);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nv = ops.norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        basis.push(v);
    }
    Mat::from_fn(m * n, basis.len(), |i, j| basis[j][i])
}

fn restricted_norm(ops: &OperatorSet, xb: &Mat) -> f64 {
    let weighted = Mat::from_fn(xb.nrows(), xb.ncols(), |i, j| xb[(i, j)] * ops.wfull[i]);
    let g = xb.tr_mul(&weighted);
    let (vals, _) = sym_eigen((&g + g.transpose()) * 0.5);
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Operator-norm residuals of the identities, restricted to the resolved
/// subspace spanned by the first [`RESOLVED_MODES`] cosine modes (plus the
/// constants for S·S₂ − I, whose domain is all of L²).
pub fn identity_residuals(ops: &OperatorSet) -> Residuals {
    let b0 = cosine_basis(ops, RESOLVED_MODES, false);
    let bf = cosine_basis(ops, RESOLVED_MODES, true);
    let ipt = |x: &Mat| x + &ops.t_op * x;
    let sb = &ops.s * &b0;
    let s_star_s = restricted_norm(ops, &(&ops.s_star * &sb - ipt(&b0)));
    let s_s2 = restricted_norm(ops, &(&ops.s * (&ops.s_inv * &bf) - &bf));
    let s2_s = restricted_norm(ops, &(&ops.s_inv * &sb - &b0));
    let inv_star_form = restricted_norm(ops, &(&ops.s_inv_star * ipt(&b0) - &sb));
    let inverse_form = restricted_norm(ops, &(ipt(&(&ops.s_inv * (&ops.s_inv_star * &b0))) - &b0));
    let dim = ops.dim();
    let definitional = (&ops.s_inv_star - (Mat::identity(dim, dim) + &ops.j0)).amax();
    Residuals { s_star_s, s_s2, s2_s, inv_star_form, inverse_form, definitional }
}

/// The same residuals in the full weighted operator norm (Lanczos on the Gram
/// operator). These stay O(1) under refinement: the discrete S has rank
/// (m−1)n, so S·S₂ − I cannot be small on all of L².
pub fn identity_residuals_full(ops: &OperatorSet) -> Result<Residuals> {
    let dim = ops.dim();
    let tol = 1e-8;
    let iters = 300.min(dim);
    let mv = |a: &Mat, x: &[f64]| {
        let mut o = vec![0.0; x.len()];
        matvec(a, x, &mut o);
        o
    };
    let mvt = |a: &Mat, x: &[f64]| {
        let y = a.tr_mul(&DVector::from_column_slice(x));
        y.as_slice().to_vec()
    };
    let sub = |a: Vec<f64>, b: &[f64]| a.into_iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    let add = |a: Vec<f64>, b: Vec<f64>| a.into_iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
    let p0 = &ops.p0;
    let norm = |f: &dyn Fn(&[f64]) -> Vec<f64>, ft: &dyn Fn(&[f64]) -> Vec<f64>| {
        weighted_opnorm_pair(
            |x, o| o.copy_from_slice(&f(x)),
            |x, o| o.copy_from_slice(&ft(x)),
            &ops.wfull,
            tol,
            iters,
        )
    };
    // X = S*S − I − T restricted by P₀ on the right
    let s_star_s = norm(
        &|x| {
            let y = mv(p0, x);
            sub(sub(mv(&ops.s_star, &mv(&ops.s, &y)), &y), &mv(&ops.t_op, &y))
        },
        &|x| {
            let a = sub(sub(mvt(&ops.s, &mvt(&ops.s_star, x)), x), &mvt(&ops.t_op, x));
            mvt(p0, &a)
        },
    )?;
    let s_s2 = norm(&|x| sub(mv(&ops.s, &mv(&ops.s_inv, x)), x), &|x| sub(mvt(&ops.s_inv, &mvt(&ops.s, x)), x))?;
    let s2_s = norm(
        &|x| {
            let y = mv(p0, x);
            sub(mv(&ops.s_inv, &mv(&ops.s, &y)), &y)
        },
        &|x| mvt(p0, &sub(mvt(&ops.s, &mvt(&ops.s_inv, x)), x)),
    )?;
    let inv_star_form = norm(
        &|x| {
            let y = mv(p0, x);
            sub(mv(&ops.s_inv_star, &add(y.clone(), mv(&ops.t_op, &y))), &mv(&ops.s, &y))
        },
        &|x| {
            let a = mvt(&ops.s_inv_star, x);
            mvt(p0, &sub(add(a.clone(), mvt(&ops.t_op, &a)), &mvt(&ops.s, x)))
        },
    )?;
    let inverse_form = norm(
        &|x| {
            let y = mv(p0, x);
            let z = mv(&ops.s_inv, &mv(&ops.s_inv_star, &y));
            sub(add(z.clone(), mv(&ops.t_op, &z)), &y)
        },
        &|x| {
            let a = add(x.to_vec(), mvt(&ops.t_op, x));
            mvt(p0, &sub(mvt(&ops.s_inv_star, &mvt(&ops.s_inv, &a)), x))
        },
    )?;
    let definitional = (&ops.s_inv_star - (Mat::identity(dim, dim) + &ops.j0)).amax();
    Ok(Residuals { s_star_s, s_s2, s2_s, inv_star_form, inverse_form, definitional })
}

// ---- perturbation of M ----------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbRecord {
    pub delta: f64,
    pub eps: Vec<f64>,
    pub norms: Vec<f64>,
    pub slope: f64,
    /// ‖J_ε − J₀‖ with the bump doubled, at the first ε
    pub doubled: f64,
}

/// Bump profile b(t) = t², sup 1, nonzero at the pole so the (1−t)^{−δ} weight is exercised.
fn bump(t: f64) -> f64 {
    t * t
}

/// M_ε at the grid nodes, integrating in τ = 1 − (1−t)^{1−δ} where the
/// singular weight becomes bounded.
fn perturbed_m(jac: &JacobiSolution, nodes: &[f64], eps_scale: f64, delta: f64, proj: &Mat) -> Result<Vec<Mat>> {
    let n = jac.geo.n;
    let q = 1.0 - delta;
    let t_of = |tau: f64| 1.0 - (1.0 - tau).max(0.0).powf(1.0 / q);
    let gen = |tau: f64| {
        let t = t_of(tau);
        let s = 1.0 - t;
        (jac.n_tilde_at(t) * s.powf(delta) + proj * (eps_scale * bump(t))) / q
    };
    let hmax = 1.0 / jac.steps as f64;
    let mut y = Mat::identity(n, n);
    let mut tau = 0.0;
    let mut out = Vec::with_capacity(nodes.len());
    for &t in nodes {
        let target = 1.0 - (1.0 - t).powf(q);
        let span = target - tau;
        if span > 0.0 {
            let sub = (span / hmax).ceil().max(1.0) as usize;
            let h = span / sub as f64;
            for _ in 0..sub {
                y = rk4_linear(gen, tau, h, &y);
                tau += h;
            }
            tau = target;
        }
        if !y.iter().all(|x| x.is_finite()) || y.norm() > 1e12 {
            return Err(GapError::PerturbationBlowUp(eps_scale));
        }
        out.push(&y * (1.0 - t));
    }
    Ok(out)
}

/// J_ε = M_ε⁻ᵀ ∫_t¹ M_εᵀ K_ε, assembled on the grid and restricted to L²₀.
fn assemble_j(jac: &JacobiSolution, grid: &GridSpec, eps_scale: f64, delta: f64, proj: &Mat) -> Result<Mat> {
    let n = grid.n;
    let (t, w) = grid.nodes_weights();
    let m_eps = perturbed_m(jac, &t, eps_scale, delta, proj)?;
    let k_eps: Vec<Mat> = t.iter().map(|ti| jac.k_at(*ti) + proj * (eps_scale * bump(*ti) / (1.0 - ti).powf(delta))).collect();
    let mtk: Vec<Mat> = m_eps.iter().zip(&k_eps).map(|(m, k)| m.transpose() * k).collect();
    let minv_t = m_eps
        .iter()
        .map(|m| m.clone().try_inverse().map(|x| x.transpose()).ok_or(GapError::PerturbationBlowUp(eps_scale)))
        .collect::<Result<Vec<_>>>()?;
    let dim = grid.dim();
    let id = Mat::identity(dim, dim);
    let inner = upper_volterra(&left_blocks(&mtk, &id), &w, n);
    Ok(p0_right(&left_blocks(&minv_t, &inner), &w, n))
}

fn orth_projector(n: usize, radial_axis: Option<usize>) -> Mat {
    Mat::from_fn(n, n, |i, j| if i == j && Some(i) != radial_axis { 1.0 } else { 0.0 })
}

fn weighted_norm_of(a: &Mat, wfull: &[f64]) -> Result<f64> {
    weighted_opnorm_pair(
        |x, o| matvec(a, x, o),
        |x, o| {
            let y = a.tr_mul(&DVector::from_column_slice(x));
            o.copy_from_slice(y.as_slice())
        },
        wfull,
        1e-10,
        a.nrows().min(400),
    )
}

/// ‖J_ε − J₀‖ in the weighted operator norm for each ε, with the log-log slope.
pub fn perturb_j(jac: &JacobiSolution, grid: GridSpec, eps_list: &[f64], delta: f64) -> Result<PerturbRecord> {
    grid.validate()?;
    if !(delta > 0.0 && delta < 1.0) {
        return invalid("delta must lie in (0, 1)");
    }
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e >= 0.0 && *e <= 0.2)) {
        return invalid("eps values must lie in [0, 0.2]");
    }
    let proj = orth_projector(grid.n, jac.geo.radial_axis);
    let wfull: Vec<f64> = grid.nodes_weights().1.iter().flat_map(|x| std::iter::repeat_n(*x, grid.n)).collect();
    let j0 = assemble_j(jac, &grid, 0.0, delta, &proj)?;
    let mut norms = Vec::with_capacity(eps_list.len());
    for &e in eps_list {
        let je = assemble_j(jac, &grid, e, delta, &proj)?;
        norms.push(weighted_norm_of(&(je - &j0), &wfull)?);
    }
    let doubled = {
        let je = assemble_j(jac, &grid, 2.0 * eps_list[0], delta, &proj)?;
        weighted_norm_of(&(je - &j0), &wfull)?
    };
    let pts: Vec<(f64, f64)> =
        eps_list.iter().zip(&norms).filter(|(e, v)| **e > 0.0 && **v > 0.0).map(|(e, v)| (e.ln(), v.ln())).collect();
    let slope = fit_slope(&pts);
    Ok(PerturbRecord { delta, eps: eps_list.to_vec(), norms, slope, doubled })
}

pub(crate) fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return f64::NAN;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

// ---- Hardy ------------------------------------------------------------------

/// ∫|(1/(1−t))∫_t¹φ|² / ∫|φ|² on the grid.
pub fn hardy_ratio(grid: &GridSpec, phi: &[f64]) -> Result<f64> {
    grid.validate()?;
    if phi.len() != grid.dim() {
        return invalid("grid function has wrong length");
    }
    let n = grid.n;
    let (_, w) = grid.nodes_weights();
    let gaps = grid.gaps();
    let den: f64 = (0..grid.m).map(|i| w[i] * (0..n).map(|a| phi[i * n + a].powi(2)).sum::<f64>()).sum();
    if den == 0.0 {
        return invalid("zero function");
    }
    let x = Mat::from_column_slice(phi.len(), 1, phi);
    let tail = upper_volterra(&x, &w, n);
    let num: f64 = (0..grid.m)
        .map(|i| w[i] * (0..n).map(|a| (tail[(i * n + a, 0)] / gaps[i]).powi(2)).sum::<f64>())
        .sum();
    Ok(num / den)
}

// ---- trial mode -------------------------------------------------------------

/// A certified near-minimizer φ_ε with its cosine expansion
/// φ(t) = Σ_k c_k √2 cos(kπt), c_k ∈ ℝⁿ.
#[derive(Clone, Debug, Serialize)]
pub struct TrialMode {
    pub n: usize,
    pub coeffs: Vec<Vec<f64>>,
    pub nodal: Vec<f64>,
    pub sigma1: f64,
    pub form: f64,
    pub norm_i_plus_t: f64,
    pub s_norm2: f64,
    /// number of cosine terms kept, or m−1 for the raw eigenvector
    pub terms: usize,
    pub raw: bool,
}

impl TrialMode {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (k, c) in self.coeffs.iter().enumerate() {
            let basis = 2f64.sqrt() * ((k + 1) as f64 * std::f64::consts::PI * t).cos();
            for a in 0..self.n {
                out[a] += c[a] * basis;
            }
        }
        out
    }
}

fn cosine_coeffs(ops: &OperatorSet, phi: &[f64], kmax: usize) -> Vec<Vec<f64>> {
    let n = ops.grid.n;
    (1..=kmax)
        .map(|k| {
            (0..n)
                .map(|a| {
                    (0..ops.grid.m)
                        .map(|i| {
                            ops.w[i] * phi[i * n + a] * 2f64.sqrt() * (k as f64 * std::f64::consts::PI * ops.t[i]).cos()
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

fn synthesize(ops: &OperatorSet, coeffs: &[Vec<f64>]) -> Vec<f64> {
    let n = ops.grid.n;
    let mut out = vec![0.0; ops.dim()];
    for (k, c) in coeffs.iter().enumerate() {
        for i in 0..ops.grid.m {
            let basis = 2f64.sqrt() * ((k + 1) as f64 * std::f64::consts::PI * ops.t[i]).cos();
            for a in 0..n {
                out[i * n + a] += c[a] * basis;
            }
        }
    }
    out
}

/// Lowest (I+T) eigenvector, Fejér-smoothed in its cosine expansion with
/// K = 1, 2, 4, ... terms; the first candidate with form and ‖(I+T)φ‖ both
/// within σ₁ + ε is returned, the raw eigenvector being the last resort.
/// Within a degenerate bottom cluster the vector closest to a single
/// √2cos(πt) mode is used.
pub fn trial_mode(ops: &OperatorSet, eps: f64) -> Result<TrialMode> {
    if !(eps > 0.0) {
        return invalid("eps must be positive");
    }
    let n = ops.grid.n;
    let m = ops.grid.m;
    let dim = ops.dim();
    let (vals, vecs) = sym_eigen(ops.symmetric_form());
    let sigma = vals[0];
    let sw: Vec<f64> = ops.wfull.iter().map(|x| x.sqrt()).collect();
    let cluster: Vec<usize> = (0..dim).take_while(|&i| vals[i] - sigma <= 1e-10 * (1.0 + sigma.abs())).collect();
    let to_phi = |col: usize| (0..dim).map(|i| vecs[(i, col)] / sw[i]).collect::<Vec<f64>>();

    let mut phi = if cluster.len() == 1 {
        to_phi(0)
    } else {
        let members: Vec<Vec<f64>> = cluster.iter().map(|&c| to_phi(c)).collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for a in 0..n {
            let mut target = vec![0.0; dim];
            for i in 0..m {
                target[i * n + a] = 2f64.sqrt() * (std::f64::consts::PI * ops.t[i]).cos();
            }
            let mut proj = vec![0.0; dim];
            for v in &members {
                let c = ops.inner(v, &target);
                proj.iter_mut().zip(v).for_each(|(p, x)| *p += c * x);
            }
            let size = ops.norm(&proj);
            if best.as_ref().is_none_or(|(s, _)| size > *s + 1e-12) {
                best = Some((size, proj));
            }
        }
        best.unwrap().1
    };
    let first = cosine_coeffs(ops, &phi, m.min(4));
    if let Some(c) = first.iter().flatten().find(|x| x.abs() > 1e-8) {
        if *c < 0.0 {
            phi.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let nphi = ops.norm(&phi);
    phi.iter_mut().for_each(|x| *x /= nphi);

    let full = cosine_coeffs(ops, &phi, m - 1);
    let certify = |cand: &[f64]| {
        let form = ops.form(cand);
        let it = ops.norm(&ops.apply_i_plus_t(cand));
        let s2 = ops.norm(&ops.apply_s(cand)).powi(2);
        (form, it, s2)
    };
    let mut kk = 1;
    while kk < m - 1 {
        let coeffs: Vec<Vec<f64>> = full[..kk]
            .iter()
            .enumerate()
            .map(|(k, c)| c.iter().map(|x| x * (1.0 - (k + 1) as f64 / (kk + 1) as f64)).collect())
            .collect();
        let mut cand = ops.project(&synthesize(ops, &coeffs));
        let nc = ops.norm(&cand);
        if nc > 1e-8 {
            cand.iter_mut().for_each(|x| *x /= nc);
            let (form, it, s2) = certify(&cand);
            if form <= sigma + eps && it <= sigma + eps {
                let coeffs = coeffs.into_iter().map(|c| c.into_iter().map(|x| x / nc).collect()).collect();
                return Ok(TrialMode {
                    n,
                    coeffs,
                    nodal: cand,
                    sigma1: sigma,
                    form,
                    norm_i_plus_t: it,
                    s_norm2: s2,
                    terms: kk,
                    raw: false,
                });
            }
        }
        kk *= 2;
    }
    let (form, it, s2) = certify(&phi);
    if form <= sigma + eps && it <= sigma + eps {
        return Ok(TrialMode {
            n,
            coeffs: full,
            nodal: phi,
            sigma1: sigma,
            form,
            norm_i_plus_t: it,
            s_norm2: s2,
            terms: m - 1,
            raw: true,
        });
    }
    Err(GapError::NotCertified(format!("best form {form:.6} and ‖(I+T)φ‖ {it:.6} exceed σ₁+ε = {:.6}", sigma + eps)))
}

/// Smallest eigenvalue of (I+T) on L²₀ by Lanczos; used to cross-check the dense path.
pub fn sigma1_lanczos(ops: &OperatorSet, tol: f64) -> Result<f64> {
    let n = ops.grid.n;
    let m = ops.grid.m;
    let sw: Vec<f64> = ops.wfull.iter().map(|x| x.sqrt()).collect();
    let deflate: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            let mut v = vec![0.0; ops.dim()];
            for i in 0..m {
                v[i * n + a] = sw[i * n + a];
            }
            v
        })
        .collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        let y: Vec<f64> = x.iter().zip(&sw).map(|(a, s)| a / s).collect();
        let z = ops.apply_i_plus_t(&ops.project(&y));
        let z = ops.project(&z);
        for i in 0..z.len() {
            out[i] = z[i] * sw[i];
        }
    };
    Ok(lanczos(apply, ops.dim(), 1, Which::Smallest, &deflate, tol, ops.dim())?.values[0])
}

/// Export row for σ₁ / residual tables.
pub fn sigma_row(tag: &str, d: f64, m: usize, s: &Sigma1, r: &Residuals) -> Vec<String> {
    let f = crate::fmt12;
    vec![
        tag.to_string(),
        f(d),
        m.to_string(),
        f(s.via_eig),
        f(s.via_opnorm),
        f(r.s_star_s),
        f(r.s_s2),
        f(r.s2_s),
        f(r.inv_star_form),
        f(r.inverse_form),
        f(r.definitional),
    ]
}

pub const SIGMA_HEADER: [&str; 11] = [
    "geometry",
    "d",
    "m",
    "sigma1_eig",
    "sigma1_opnorm",
    "res_sstar_s",
    "res_s_s2",
    "res_s2_s",
    "res_invstar_form",
    "res_inverse_form",
    "res_definitional",
];
