//! Dense symmetric eigen wrapper and a Lanczos solver with full
//! reorthogonalization for large sparse symmetric operators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{GapError, Result};

/// Eigenvalues ascending with matching eigenvector columns.
pub fn sym_eigen(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Smallest,
    Largest,
}

#[derive(Clone, Debug)]
pub struct LanczosResult {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            axpy(-c, q, w);
        }
    }
}

/// `nev` extreme eigenvalues of a symmetric operator restricted to the
/// orthogonal complement of `deflate` (orthonormal vectors).
pub fn lanczos<F>(
    apply: F,
    dim: usize,
    nev: usize,
    which: Which,
    deflate: &[Vec<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<LanczosResult>
where
    F: Fn(&[f64], &mut [f64]),
{
    let max_iter = max_iter.min(dim - deflate.len());
    // deterministic, non-degenerate start vector
    let mut q: Vec<f64> = (0..dim).map(|i| 1.0 + 0.5 * ((i as f64 * 0.7548776662).fract() - 0.5)).collect();
    orthogonalize(&mut q, deflate);
    let nq = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= nq);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    let mut last = None;
    for j in 0..max_iter {
        apply(&q, &mut w);
        if let Some(b) = beta.last() {
            axpy(-b, &basis[j - 1], &mut w);
        }
        let a = dot(&q, &w);
        axpy(-a, &q, &mut w);
        basis.push(q.clone());
        orthogonalize(&mut w, deflate);
        orthogonalize(&mut w, &basis);
        alpha.push(a);
        let b = dot(&w, &w).sqrt();
        let k = j + 1;
        let done = b < 1e-13 * alpha.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if k >= nev && (k % 10 == 0 || done || k == max_iter) {
            let t = DMatrix::from_fn(k, k, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    0.0
                }
            });
            let (vals, vecs) = sym_eigen(t);
            let idx: Vec<usize> = match which {
                Which::Smallest => (0..nev).collect(),
                Which::Largest => (k - nev..k).rev().collect(),
            };
            let values: Vec<f64> = idx.iter().map(|&i| vals[i]).collect();
            let residuals: Vec<f64> = idx.iter().map(|&i| (b * vecs[(k - 1, i)]).abs()).collect();
            let scale = vals.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let converged = residuals.iter().all(|r| *r <= tol * scale);
            last = Some(LanczosResult { values, residuals, iterations: k });
            if converged || done {
                return Ok(last.unwrap());
            }
        }
        if done {
            break;
        }
        beta.push(b);
        q = w.iter().map(|x| x / b).collect();
    }
    match last {
        Some(r) => Err(GapError::NoConvergence(format!(
            "Lanczos stopped after {} iterations with residuals {:?}",
            r.iterations, r.residuals
        ))),
        None => Err(GapError::NoConvergence("Lanczos produced no Ritz values".into())),
    }
}

/// Largest singular value of A (dense) in the weighted norm.
pub fn weighted_opnorm_dense(a: &DMatrix<f64>, w: &[f64]) -> f64 {
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let b = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| sw[i] * a[(i, j)] / sw[j]);
    b.singular_values().max()
}

/// Largest singular value in the weighted norm of an operator known through
/// products with A and with its plain transpose Aᵀ.
pub fn weighted_opnorm_pair<F, G>(apply: F, apply_t: G, w: &[f64], tol: f64, max_iter: usize) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]),
    G: Fn(&[f64], &mut [f64]),
{
    let dim = w.len();
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let op = |x: &[f64], out: &mut [f64]| {
        let y: Vec<f64> = x.iter().zip(&sw).map(|(a, s)| a / s).collect();
        let mut ay = vec![0.0; dim];
        apply(&y, &mut ay);
        // Bᵀ B x with B = W^{1/2} A W^{-1/2}: Bᵀ = W^{-1/2} Aᵀ W^{1/2}
        let z: Vec<f64> = ay.iter().zip(w).map(|(a, wi)| a * wi).collect();
        let mut atz = vec![0.0; dim];
        apply_t(&z, &mut atz);
        for i in 0..dim {
            out[i] = atz[i] / sw[i];
        }
    };
    let res = lanczos(op, dim, 1, Which::Largest, &[], tol, max_iter)?;
    Ok(res.values[0].max(0.0).sqrt())
}

pub fn matvec(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let y = a * DVector::from_column_slice(x);
    out.copy_from_slice(y.as_slice());
}

pub fn matvec_t(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let y = a.tr_mul(&DVector::from_column_slice(x));
    out.copy_from_slice(y.as_slice());
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lanczos_finds_extremes_of_diagonal() {
        let d: Vec<f64> = (0..400).map(|i| 1.0 + i as f64 * 0.01).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = d[i] * x[i];
            }
        };
        let lo = lanczos(apply, 400, 2, Which::Smallest, &[], 1e-10, 400).unwrap();
        assert!((lo.values[0] - 1.0).abs() < 1e-9);
        assert!((lo.values[1] - 1.01).abs() < 1e-9);
        let hi = lanczos(apply, 400, 1, Which::Largest, &[], 1e-10, 400).unwrap();
        assert!((hi.values[0] - 4.99).abs() < 1e-9);
    }

    #[test]
    fn deflation_skips_known_vector() {
        let n = 50;
        let d: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = d[i] * x[i];
            }
        };
        let mut e0 = vec![0.0; n];
        e0[0] = 1.0;
        let r = lanczos(apply, n, 1, Which::Smallest, &[e0], 1e-12, n).unwrap();
        assert!((r.values[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn weighted_norm_matches_dense() {
        let a = DMatrix::from_fn(30, 30, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let w: Vec<f64> = (0..30).map(|i| 0.5 + i as f64 / 30.0).collect();
        let dense = weighted_opnorm_dense(&a, &w);
        let it = weighted_opnorm_pair(|x, y| matvec(&a, x, y), |x, y| matvec_t(&a, x, y), &w, 1e-12, 30).unwrap();
        assert!((dense - it).abs() < 1e-9 * dense);
    }
}
