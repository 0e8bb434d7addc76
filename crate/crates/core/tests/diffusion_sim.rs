use std::sync::OnceLock;

use ougap::diffusion::bounds::*;
use ougap::diffusion::bridge::*;
use ougap::diffusion::sde::*;
use ougap::diffusion::tail::*;
use ougap::diffusion::trial::*;
use ougap::jacobi::{build_knm, GeodesicData};
use ougap::operators::{assemble_operators, trial_mode, GridSpec, OperatorSet};
use ougap::radial::{build_profile, Preset};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn sde(preset: &Preset, lambda: f64, steps: usize, paths: usize, seed: u64) -> RadialPathEnsemble {
    let p = build_profile(preset).unwrap();
    simulate_radial_pair(&p, &SdeConfig { n: 3, lambda, start: 1.0, steps, paths, seed, keep_paths: false }).unwrap()
}

fn bridge_cfg(space: Space, chains: usize) -> BridgeConfig {
    BridgeConfig { space, lambda: 50.0, m: 64, d: 1.0, chains, samples: 100, thin: 3, burnin: 300, seed: 11 }
}

fn flat_bridge() -> &'static BridgeEnsemble {
    static B: OnceLock<BridgeEnsemble> = OnceLock::new();
    B.get_or_init(|| sample_bridge(&bridge_cfg(Space::Flat3, 128)).unwrap())
}

fn h3_bridge() -> &'static BridgeEnsemble {
    static B: OnceLock<BridgeEnsemble> = OnceLock::new();
    B.get_or_init(|| sample_bridge(&BridgeConfig { samples: 60, ..bridge_cfg(Space::H3, 64) }).unwrap())
}

fn ops3(kappa: f64) -> OperatorSet {
    let jac = build_knm(&GeodesicData::constant_curvature(3, 1.0, kappa).unwrap(), 1024).unwrap();
    assemble_operators(&jac, GridSpec::uniform(128, 3)).unwrap()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

// ---- radial SDE ----

#[test]
fn hyperbolic_paths_are_dominated() {
    for lambda in [4.0, 16.0] {
        let e = sde(&Preset::Hyperbolic { a: 1.0 }, lambda, 500, 2000, 3);
        let d = e.dominance();
        assert_eq!(d.violating_paths, 0);
        assert!(d.max_excess <= DOMINANCE_TOL);
        assert_eq!(d.floor_hits, 0);
        assert!(e.summaries.iter().all(|s| s.min_x > 0.0));
    }
}

#[test]
fn flat_second_moment() {
    // E|X₁|² = d² + 3/λ for Brownian motion with covariance t/λ
    let lambda = 4.0;
    let e = sde(&Preset::Flat, lambda, 1000, 20_000, 5);
    let y2: Vec<f64> = e.summaries.iter().map(|s| s.final_y * s.final_y).collect();
    let (m, se) = mean_se(&y2);
    assert!((m - (1.0 + 3.0 / lambda)).abs() < 4.0 * se + 2e-3, "{m} ± {se}");
}

#[test]
fn flat_running_maximum_matches_direct_brownian_motion() {
    let (lambda, steps, paths) = (4.0, 400, 20_000);
    let e = sde(&Preset::Flat, lambda, steps, paths, 8);
    let sim: Vec<f64> = e.summaries.iter().map(|s| s.max_y).collect();
    // independent oracle: the norm of a 3-d Brownian motion monitored at the same steps
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let sd = (1.0 / (lambda * steps as f64)).sqrt();
    let direct: Vec<f64> = (0..paths)
        .map(|_| {
            let mut x = [1.0, 0.0, 0.0];
            let mut best: f64 = 1.0;
            for _ in 0..steps {
                for c in x.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *c += sd * z;
                }
                best = best.max((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt());
            }
            best
        })
        .collect();
    let (a, sa) = mean_se(&sim);
    let (b, sb) = mean_se(&direct);
    assert!((a - b).abs() < 4.0 * (sa * sa + sb * sb).sqrt() + 5e-3, "{a} vs {b}");
}

#[test]
fn tail_slopes() {
    let grid = default_grid(1.0, 2.5, 101);
    let flat: Vec<f64> =
        [4.0, 16.0].iter().map(|l| empirical_tail(&sde(&Preset::Flat, *l, 500, 5000, 21), &grid).unwrap().slope).collect();
    let hyp: Vec<f64> = [4.0, 16.0]
        .iter()
        .map(|l| empirical_tail(&sde(&Preset::Hyperbolic { a: 1.0 }, *l, 500, 5000, 21), &grid).unwrap().slope)
        .collect();
    assert!(flat.iter().chain(&hyp).all(|s| *s < 0.0));
    assert!((3.0..=5.0).contains(&(flat[1] / flat[0])), "{flat:?}");
    assert!((3.0..=5.0).contains(&(hyp[1] / hyp[0])), "{hyp:?}");
    // the extra outward drift fattens the tail: smaller decay rate
    assert!(hyp[0].abs() <= flat[0].abs() * 1.05);
}

#[test]
fn sparse_radii_are_reported() {
    let e = sde(&Preset::Flat, 4.0, 200, 500, 2);
    let t = empirical_tail(&e, &[2.0, 3.0, 10.0]).unwrap();
    assert!(t.sparse.contains(&10.0));
    assert!(empirical_tail(&e, &[]).is_err());
}

#[test]
fn ensembles_are_reproducible_across_thread_counts() {
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| sde(&Preset::Hyperbolic { a: 1.0 }, 4.0, 200, 300, 77).summaries)
    };
    assert_eq!(run(1), run(4));
    let bridge = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let cfg = BridgeConfig { space: Space::H3, lambda: 50.0, m: 16, d: 1.0, chains: 8, samples: 60, thin: 2, burnin: 300, seed: 4 };
        pool.install(|| sample_bridge(&cfg).unwrap().paths)
    };
    assert_eq!(bridge(1), bridge(3));
}

// ---- bridge ----

#[test]
fn endpoints_are_pinned() {
    for b in [flat_bridge(), h3_bridge()] {
        for p in &b.paths {
            assert_eq!(p[0], [1.0, 0.0, 0.0]);
            assert_eq!(p[64], [0.0, 0.0, 0.0]);
        }
        assert!(b.min_acceptance >= 0.2 && b.max_acceptance <= 0.6);
    }
}

#[test]
fn flat_bridge_matches_gaussian_law() {
    let b = flat_bridge();
    for k in [16, 32, 48] {
        let c = b.flat_slice_check(k);
        assert!(c.ok, "{c:?}");
    }
}

#[test]
fn one_slice_bridge_is_gaussian() {
    let cfg = BridgeConfig { space: Space::Flat3, lambda: 10.0, m: 2, d: 1.0, chains: 32, samples: 400, thin: 2, burnin: 200, seed: 1 };
    let b = sample_bridge(&cfg).unwrap();
    let c = b.flat_slice_check(1);
    assert!((c.exact_var - 0.25 / 10.0).abs() < 1e-15);
    assert_eq!(c.exact_mean, [0.5, 0.0, 0.0]);
    assert!(c.ok, "{c:?}");
}

#[test]
fn negative_curvature_spreads_the_midpoint() {
    let f = flat_bridge().radius_at(32);
    let h = h3_bridge().radius_at(32);
    let (mf, sf) = mean_se(&f);
    let (mh, sh) = mean_se(&h);
    // chains are autocorrelated; widen the iid error by a safety factor
    assert!(mh >= mf - 3.0 * 3.0 * (sf * sf + sh * sh).sqrt(), "{mh} vs {mf}");
}

#[test]
fn bridge_rejects_bad_config() {
    let ok = bridge_cfg(Space::Flat3, 2);
    assert!(sample_bridge(&BridgeConfig { m: 1, ..ok.clone() }).is_err());
    assert!(sample_bridge(&BridgeConfig { d: 0.0, ..ok.clone() }).is_err());
    assert!(sample_bridge(&BridgeConfig { burnin: 10, ..ok.clone() }).is_err());
    assert!(sample_bridge(&BridgeConfig { chains: 0, ..ok }).is_err());
}

#[test]
fn batch_ess_of_iid_draws_is_near_sample_size() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let v: Vec<f64> = (0..8000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let ess = ess_batch(&v, 40);
    assert!(ess > 4000.0 && ess < 16000.0, "{ess}");
}

// ---- trial quotient and Poincaré ----

#[test]
fn flat_trial_quotient_is_one() {
    let tm = trial_mode(&ops3(0.0), 1e-3).unwrap();
    let q = rayleigh_trial_mode(flat_bridge(), &tm).unwrap();
    assert!((q.quotient_over_lambda - 1.0).abs() < 3.0 * q.se, "{q:?}");
    assert!(q.curvature_share.abs() < 1e-12, "{}", q.curvature_share);
}

#[test]
fn hyperbolic_trial_quotient_is_an_upper_bound() {
    let tm = trial_mode(&ops3(-1.0), 1e-3).unwrap();
    let q = rayleigh_trial_mode(h3_bridge(), &tm).unwrap();
    assert!(q.quotient_over_lambda > 0.9 && q.quotient_over_lambda < 1.25, "{q:?}");
    assert!(q.curvature_share > 0.0 && q.curvature_share < 0.1);
}

#[test]
fn trial_rejects_vanishing_mode() {
    assert!(rayleigh_trial(flat_bridge(), |_| vec![0.0; 3]).is_err());
    assert!(rayleigh_trial(flat_bridge(), |_| vec![1.0; 2]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn quotient_is_scale_invariant(c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let phi = |t: f64| vec![(std::f64::consts::PI * t).cos(), 0.3 * (2.0 * std::f64::consts::PI * t).cos(), 0.0];
        let base = rayleigh_trial(h3_bridge(), phi).unwrap();
        let scaled = rayleigh_trial(h3_bridge(), |t| phi(t).into_iter().map(|x| c * x).collect()).unwrap();
        prop_assert!((base.quotient_over_lambda - scaled.quotient_over_lambda).abs() < 1e-10 * base.quotient_over_lambda);
    }
}

#[test]
fn poincare_checks() {
    let flat_ops = ops3(0.0);
    let r = poincare_check(flat_bridge(), CylinderFn::Constant(2.0), &flat_ops, 0.0).unwrap();
    assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    assert!(!r.violated);

    // Gaussian case: λVar⟨a, b(½)⟩ = |a|²/4 = E|(S⁻¹)* D₀F′|²
    let r = poincare_check(flat_bridge(), CylinderFn::Linear([1.0, 0.5, 0.0]), &flat_ops, 0.0).unwrap();
    assert!(!r.violated);
    assert!(r.margin.abs() < 3.0 * r.se + 0.02 * r.rhs, "{r:?}");
    assert!((r.rhs - 1.25 / 4.0).abs() < 1e-3, "{r:?}");

    let r = poincare_check(h3_bridge(), CylinderFn::MidRadius, &ops3(-1.0), 0.0).unwrap();
    assert!(!r.violated, "{r:?}");
    assert!(poincare_check(h3_bridge(), CylinderFn::MidRadius, &ops3(-1.0), -1.0).is_err());
}

// ---- lower bound ----

#[test]
fn lower_bound_worked_values() {
    let b = gap_lower_bound(&LowerBoundInputs { alpha: 1.0, beta: 1.0, r0: 1.0 }).unwrap();
    assert_eq!(LowerBoundInputs { alpha: 1.0, beta: 1.0, r0: 1.0 }.radius(), 192.0);
    assert!((b - 8.477105034722222e-7).abs() < 1e-18);
    let b = gap_lower_bound(&LowerBoundInputs { alpha: 1.0, beta: 1.0, r0: 1000.0 }).unwrap();
    assert_eq!(b, 0.25 * 1.25e-7);
}

#[test]
fn lower_bound_sweep_converges() {
    let (c1, c2, r0) = (0.5, 2.0, 0.05);
    let rows = lower_bound_sweep(c1, c2, r0, &[1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6]).unwrap();
    let limit = 1.0 / (32.0 * c1 * r0 * r0);
    let last = rows.last().unwrap();
    assert_eq!(last.limit, limit);
    assert!((last.bound_over_lambda - limit).abs() < 0.01 * limit);
    let gaps: Vec<f64> = rows.iter().map(|r| (r.bound_over_lambda - limit).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12 * limit), "{gaps:?}");
    assert!(gaps[0] > 0.5 * limit);
    assert!(lower_bound_sweep(0.0, 1.0, 1.0, &[1.0]).is_err());
}

proptest! {
    #[test]
    fn lower_bound_monotone(alpha in 1e-3f64..10.0, beta in 1e-3f64..10.0, r0 in 1e-3f64..100.0, f in 1.0f64..10.0) {
        let b = |a: f64, bt: f64, r: f64| gap_lower_bound(&LowerBoundInputs { alpha: a, beta: bt, r0: r }).unwrap();
        let base = b(alpha, beta, r0);
        prop_assert!(base > 0.0);
        prop_assert!(b(alpha, beta, r0 * f) <= base);
        prop_assert!(b(alpha, beta * f, r0) >= base);
    }
}
