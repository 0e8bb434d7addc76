//! Discretized pinned bridges from x₀ to the pole y₀ in ℝ³ or H³.
//!
//! Slices are stored in normal coordinates u ∈ ℝ³ centred at the pole, with
//! x₀ = (d, 0, 0). The target density is
//!   ∏ₖ p(Δ/λ; d(u_{k−1}, u_k)) · ∏_{interior k} J(u_k),
//! with p the exact heat kernel of e^{tΔ/2} and J = (sinh|u|/|u|)² the volume
//! density of normal coordinates in H³ (J = 1 in ℝ³). Random-walk Metropolis
//! moves displace a tent of slices of half-width h = 2^j by a Gaussian 3-vector;
//! the tent levels act like the Lévy–Ciesielski construction of the bridge.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GapError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Flat3,
    H3,
}

impl Space {
    pub fn curvature(&self) -> f64 {
        match self {
            Space::Flat3 => 0.0,
            Space::H3 => -1.0,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Space::Flat3 => "flat3",
            Space::H3 => "h3",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    pub space: Space,
    pub lambda: f64,
    /// number of time steps; slices are t_k = k/m
    pub m: usize,
    pub d: f64,
    pub chains: usize,
    /// retained samples per chain
    pub samples: usize,
    /// sweeps between retained samples
    pub thin: usize,
    /// tuning sweeps, discarded
    pub burnin: usize,
    pub seed: u64,
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return invalid("m must be at least 2");
        }
        if !(self.d > 0.0) || !self.d.is_finite() {
            return invalid("d must be positive");
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return invalid("lambda must be positive");
        }
        if self.chains == 0 || self.samples == 0 || self.thin == 0 {
            return invalid("chains, samples and thin must be positive");
        }
        if self.burnin < 100 {
            return invalid("burn-in must be at least 100 sweeps");
        }
        Ok(())
    }

    fn levels(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut h = 1;
        while h < self.m {
            out.push(h);
            h *= 2;
        }
        out
    }
}

pub type Point = [f64; 3];

#[derive(Clone, Debug)]
pub struct BridgeEnsemble {
    pub config: BridgeConfig,
    /// chain-major: chain c owns paths[c·samples .. (c+1)·samples]
    pub paths: Vec<Vec<Point>>,
    /// per tent level, averaged over chains
    pub acceptance: Vec<f64>,
    pub min_acceptance: f64,
    pub max_acceptance: f64,
}

fn norm3(u: &Point) -> f64 {
    (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt()
}

/// sinh(r)/r, accurate near 0.
fn sinhc(r: f64) -> f64 {
    if r < 1e-4 {
        1.0 + r * r / 6.0
    } else {
        r.sinh() / r
    }
}

/// log(r / sinh r)
fn log_r_over_sinh(r: f64) -> f64 {
    if r < 1e-4 {
        -r * r / 6.0
    } else {
        -(sinhc(r)).ln()
    }
}

/// Normal coordinates at the pole to the hyperboloid model.
pub fn hyperboloid(u: &Point) -> [f64; 4] {
    let r = norm3(u);
    let s = sinhc(r);
    [r.cosh(), s * u[0], s * u[1], s * u[2]]
}

pub fn lorentz(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    -a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Geodesic distance from the Lorentz length of the chord, stable for short chords.
pub fn h3_distance(x: &[f64; 4], y: &[f64; 4]) -> f64 {
    let diff = [x[0] - y[0], x[1] - y[1], x[2] - y[2], x[3] - y[3]];
    let q = lorentz(&diff, &diff).max(0.0);
    2.0 * (0.5 * q.sqrt()).asinh()
}

fn h3_distance_normal(u: &Point, v: &Point) -> f64 {
    let (ru, rv) = (norm3(u), norm3(v));
    let (su, sv) = (sinhc(ru), sinhc(rv));
    // cosh ru − cosh rv without cancellation
    let d0 = 2.0 * (0.5 * (ru + rv)).sinh() * (0.5 * (ru - rv)).sinh();
    let mut q = -d0 * d0;
    for a in 0..3 {
        let t = su * u[a] - sv * v[a];
        q += t * t;
    }
    2.0 * (0.5 * q.max(0.0).sqrt()).asinh()
}

struct Target {
    space: Space,
    /// λ/(2Δ) = λm/2
    coef: f64,
}

impl Target {
    fn pair(&self, u: &Point, v: &Point) -> f64 {
        match self.space {
            Space::Flat3 => {
                let d2 = (u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2);
                -self.coef * d2
            }
            Space::H3 => {
                let d = h3_distance_normal(u, v);
                log_r_over_sinh(d) - self.coef * d * d
            }
        }
    }

    fn site(&self, u: &Point) -> f64 {
        match self.space {
            Space::Flat3 => 0.0,
            Space::H3 => -2.0 * log_r_over_sinh(norm3(u)),
        }
    }
}

struct ChainOut {
    paths: Vec<Vec<Point>>,
    acceptance: Vec<f64>,
}

fn tent(i: usize, c: usize, h: usize) -> f64 {
    1.0 - (i as f64 - c as f64).abs() / h as f64
}

fn run_chain(cfg: &BridgeConfig, chain: usize) -> Result<ChainOut> {
    let mut rng = super::stream_rng(cfg.seed, chain as u64);
    let m = cfg.m;
    let target = Target { space: cfg.space, coef: 0.5 * cfg.lambda * m as f64 };
    let mut path: Vec<Point> = (0..=m).map(|k| [cfg.d * (1.0 - k as f64 / m as f64), 0.0, 0.0]).collect();
    let mut pair_ll: Vec<f64> = (0..=m).map(|k| if k == 0 { 0.0 } else { target.pair(&path[k - 1], &path[k]) }).collect();
    let mut site_ll: Vec<f64> = (0..=m).map(|k| if k == 0 || k == m { 0.0 } else { target.site(&path[k]) }).collect();
    let levels = cfg.levels();
    // Lévy–Ciesielski scale of a tent of half-width h
    let mut scales: Vec<f64> = levels.iter().map(|&h| 1.5 * (h as f64 / (2.0 * cfg.lambda * m as f64)).sqrt()).collect();
    let mut tries = vec![0u64; levels.len()];
    let mut accepts = vec![0u64; levels.len()];
    let mut new_pts: Vec<Point> = Vec::with_capacity(m + 1);

    let mut sweep = |scales: &[f64], tries: &mut [u64], accepts: &mut [u64], path: &mut Vec<Point>, rng: &mut rand_chacha::ChaCha8Rng| {
        for (li, &h) in levels.iter().enumerate() {
            let mut c = h;
            while c < m {
                let xi: [f64; 3] = [
                    StandardNormal.sample(&mut *rng),
                    StandardNormal.sample(&mut *rng),
                    StandardNormal.sample(&mut *rng),
                ];
                let lo = c + 1 - h;
                let hi = (c + h - 1).min(m - 1);
                new_pts.clear();
                for i in lo..=hi {
                    let w = tent(i, c, h) * scales[li];
                    let p = path[i];
                    new_pts.push([p[0] + w * xi[0], p[1] + w * xi[1], p[2] + w * xi[2]]);
                }
                let at = |i: usize, path: &Vec<Point>, new_pts: &Vec<Point>| -> Point {
                    if i >= lo && i <= hi {
                        new_pts[i - lo]
                    } else {
                        path[i]
                    }
                };
                let mut old = 0.0;
                let mut new = 0.0;
                let mut new_pairs = Vec::with_capacity(hi + 2 - lo);
                for k in lo..=hi + 1 {
                    old += pair_ll[k];
                    let v = target.pair(&at(k - 1, path, &new_pts), &at(k, path, &new_pts));
                    new_pairs.push(v);
                    new += v;
                }
                let mut new_sites = Vec::with_capacity(hi + 1 - lo);
                for i in lo..=hi {
                    old += site_ll[i];
                    let v = target.site(&new_pts[i - lo]);
                    new_sites.push(v);
                    new += v;
                }
                tries[li] += 1;
                let log_u: f64 = rng.gen::<f64>().ln();
                if log_u < new - old {
                    accepts[li] += 1;
                    let w = hi + 1 - lo;
                    path[lo..=hi].copy_from_slice(&new_pts[..w]);
                    site_ll[lo..=hi].copy_from_slice(&new_sites[..w]);
                    pair_ll[lo..=hi + 1].copy_from_slice(&new_pairs[..=w]);
                }
                c += h;
            }
        }
    };

    // tuning: once a level has collected 50 proposals, move its log-scale
    // toward acceptance 0.4 with a gain that shrinks over the burn-in
    let mut rounds = vec![0u32; levels.len()];
    for _ in 0..cfg.burnin {
        sweep(&scales, &mut tries, &mut accepts, &mut path, &mut rng);
        for li in 0..levels.len() {
            if tries[li] >= 50 {
                let rate = accepts[li] as f64 / tries[li] as f64;
                rounds[li] += 1;
                scales[li] *= (3.0 * (rate - 0.4) / (rounds[li] as f64).sqrt()).exp();
                tries[li] = 0;
                accepts[li] = 0;
            }
        }
    }
    tries.iter_mut().for_each(|x| *x = 0);
    accepts.iter_mut().for_each(|x| *x = 0);
    let mut paths = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        for _ in 0..cfg.thin {
            sweep(&scales, &mut tries, &mut accepts, &mut path, &mut rng);
        }
        paths.push(path.clone());
    }
    let acceptance: Vec<f64> = (0..levels.len()).map(|li| accepts[li] as f64 / tries[li].max(1) as f64).collect();
    for &a in &acceptance {
        if !(0.2..=0.6).contains(&a) {
            return Err(GapError::AcceptanceWindow(a));
        }
    }
    Ok(ChainOut { paths, acceptance })
}

pub fn sample_bridge(cfg: &BridgeConfig) -> Result<BridgeEnsemble> {
    cfg.validate()?;
    let outs = (0..cfg.chains).into_par_iter().map(|c| run_chain(cfg, c)).collect::<Result<Vec<_>>>()?;
    let levels = outs[0].acceptance.len();
    let acceptance: Vec<f64> =
        (0..levels).map(|l| outs.iter().map(|o| o.acceptance[l]).sum::<f64>() / outs.len() as f64).collect();
    let all = outs.iter().flat_map(|o| o.acceptance.iter().copied());
    let (min_acceptance, max_acceptance) = all.fold((1.0f64, 0.0f64), |(lo, hi), a| (lo.min(a), hi.max(a)));
    let paths = outs.into_iter().flat_map(|o| o.paths).collect();
    Ok(BridgeEnsemble { config: cfg.clone(), paths, acceptance, min_acceptance, max_acceptance })
}

/// Effective sample size from between-chain batch means.
pub fn ess_batch(values: &[f64], chains: usize) -> f64 {
    let n = values.len();
    let per = n / chains;
    if per == 0 || chains < 2 {
        return n as f64;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let means: Vec<f64> = values.chunks(per).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let var_means = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (chains - 1) as f64;
    if var_means <= 0.0 {
        return n as f64;
    }
    (var / (per as f64 * var_means) * n as f64).min(n as f64)
}

/// Delete-one-chain jackknife standard error of a statistic of chain-grouped data.
pub fn jackknife_se<F: Fn(&[usize]) -> f64>(chains: usize, stat: F) -> f64 {
    if chains < 2 {
        return f64::NAN;
    }
    let reps: Vec<f64> = (0..chains)
        .map(|drop| {
            let keep: Vec<usize> = (0..chains).filter(|c| *c != drop).collect();
            stat(&keep)
        })
        .collect();
    let mean = reps.iter().sum::<f64>() / chains as f64;
    let k = chains as f64;
    ((k - 1.0) / k * reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>()).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SliceCheck {
    pub slice: usize,
    pub mean: [f64; 3],
    pub var: [f64; 3],
    pub exact_mean: [f64; 3],
    pub exact_var: f64,
    /// |estimate − exact| / standard error, per coordinate
    pub mean_z: [f64; 3],
    pub var_z: [f64; 3],
    pub ess: f64,
    pub ok: bool,
}

impl BridgeEnsemble {
    pub fn slice_values(&self, k: usize, coord: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[k][coord]).collect()
    }

    pub fn radius_at(&self, k: usize) -> Vec<f64> {
        match self.config.space {
            Space::Flat3 => self.paths.iter().map(|p| norm3(&p[k])).collect(),
            Space::H3 => self.paths.iter().map(|p| norm3(&p[k])).collect(),
        }
    }

    pub fn mean_radius_at(&self, k: usize) -> f64 {
        let r = self.radius_at(k);
        r.iter().sum::<f64>() / r.len() as f64
    }

    /// Compares slice k with the Brownian bridge N((1−t)x₀, t(1−t)/λ · I).
    pub fn flat_slice_check(&self, k: usize) -> SliceCheck {
        let t = k as f64 / self.config.m as f64;
        let exact_mean = [(1.0 - t) * self.config.d, 0.0, 0.0];
        let exact_var = t * (1.0 - t) / self.config.lambda;
        let mut mean = [0.0; 3];
        let mut var = [0.0; 3];
        let mut mean_z = [0.0; 3];
        let mut var_z = [0.0; 3];
        let mut ess_min = f64::INFINITY;
        for a in 0..3 {
            let v = self.slice_values(k, a);
            let n = v.len() as f64;
            let mu = v.iter().sum::<f64>() / n;
            let s2 = v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0);
            let ess = ess_batch(&v, self.config.chains);
            let sq: Vec<f64> = v.iter().map(|x| (x - exact_mean[a]).powi(2)).collect();
            let ess_sq = ess_batch(&sq, self.config.chains);
            ess_min = ess_min.min(ess).min(ess_sq);
            mean[a] = mu;
            var[a] = s2;
            mean_z[a] = (mu - exact_mean[a]).abs() / (exact_var / ess).sqrt();
            var_z[a] = (s2 - exact_var).abs() / (exact_var * (2.0 / ess_sq).sqrt());
        }
        let ok = mean_z.iter().chain(var_z.iter()).all(|z| *z <= 3.0);
        SliceCheck { slice: k, mean, var, exact_mean, exact_var, mean_z, var_z, ess: ess_min, ok }
    }
}
