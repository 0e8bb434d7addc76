use std::f64::consts::PI;

use ougap::jacobi::{build_knm, GeodesicData};
use ougap::operators::*;
use ougap::radial::{build_profile, Preset};
use proptest::prelude::*;

fn ops_for(kappa: f64, d: f64, m: usize, grading: f64) -> OperatorSet {
    let jac = build_knm(&GeodesicData::constant_curvature(2, d, kappa).unwrap(), 4096).unwrap();
    assemble_operators(&jac, GridSpec::graded(m, 2, grading)).unwrap()
}

/// √2 cos(kπt) on component a, as a nodal vector.
fn cos_mode(ops: &OperatorSet, k: usize, a: usize) -> Vec<f64> {
    let n = ops.grid.n;
    let mut v = vec![0.0; ops.dim()];
    for i in 0..ops.grid.m {
        v[i * n + a] = 2f64.sqrt() * (k as f64 * PI * ops.t[i]).cos();
    }
    ops.project(&v)
}

#[test]
fn flat_operators() {
    let ops = ops_for(0.0, 1.0, 256, IDENTITY_GRADING);
    assert_eq!(ops.t_op.amax(), 0.0);
    let r = identity_residuals(&ops);
    assert!(r.identity_max() < 1e-3);
    assert_eq!(r.definitional, 0.0);
}

#[test]
fn adjoints_are_weighted_transposes() {
    let ops = ops_for(-1.0, 1.0, 64, 5.0);
    let x: Vec<f64> = (0..ops.dim()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
    let y: Vec<f64> = (0..ops.dim()).map(|i| ((i * 13 % 17) as f64 - 8.0) / 9.0).collect();
    let apply = |a: &nalgebra::DMatrix<f64>, v: &[f64]| (a * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec();
    for (a, a_star) in [(&ops.s, &ops.s_star), (&ops.s_inv, &ops.s_inv_star)] {
        let lhs = ops.inner(&apply(a, &x), &y);
        let rhs = ops.inner(&x, &apply(a_star, &y));
        assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }
    // T symmetric on L²₀
    let (px, py) = (ops.project(&x), ops.project(&y));
    let lhs = ops.inner(&apply(&ops.t_op, &px), &py);
    let rhs = ops.inner(&px, &apply(&ops.t_op, &py));
    assert!((lhs - rhs).abs() < 1e-10);
}

#[test]
fn form_on_cosine_modes() {
    // ((I+T)φ_k, φ_k) = 1 − κd²/(k²π²) on the orthogonal block
    for kappa in [1.0, -1.0] {
        let ops = ops_for(kappa, 1.0, 512, 1.0);
        for k in 1..=3 {
            let v = cos_mode(&ops, k, 1);
            let q = ops.form(&v) / ops.inner(&v, &v);
            let exact = 1.0 - kappa / (k * k) as f64 / (PI * PI);
            assert!((q - exact).abs() < 2e-4, "kappa={kappa} k={k}: {q} vs {exact}");
            // radial block has no curvature
            let v = cos_mode(&ops, k, 0);
            assert!((ops.form(&v) / ops.inner(&v, &v) - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn sigma1_flat_and_positive() {
    let s = sigma1(&ops_for(0.0, 1.0, 128, 1.0)).unwrap();
    assert!((s.via_eig - 1.0).abs() < 1e-9);
    assert!((s.via_opnorm - 1.0).abs() < 1e-3);

    let s = sigma1(&ops_for(1.0, 1.0, 256, 1.0)).unwrap();
    let exact = 1.0 - 1.0 / (PI * PI);
    assert!((s.via_eig - exact).abs() < 2e-3);
    assert!((s.via_eig - s.via_opnorm).abs() < 5e-3);
    assert!((s.via_eig - 0.89868).abs() < 2e-3);
}

#[test]
fn sigma1_negative_curvature_approaches_one_from_above() {
    let a = sigma1(&ops_for(-1.0, 1.0, 128, 1.0)).unwrap().via_eig;
    let b = sigma1(&ops_for(-1.0, 1.0, 256, 1.0)).unwrap().via_eig;
    assert!((1.0 - 1e-12..1.01).contains(&a));
    assert!((1.0 - 1e-12..1.01).contains(&b));
    assert!(b <= a + 1e-12);
}

#[test]
fn sigma1_lanczos_agrees_with_dense() {
    let ops = ops_for(1.0, 1.5, 128, 1.0);
    let dense = sigma1(&ops).unwrap().via_eig;
    let lz = sigma1_lanczos(&ops, 1e-10).unwrap();
    assert!((dense - lz).abs() < 1e-7);
}

#[test]
fn residuals_decay_under_refinement() {
    let hyp = build_profile(&Preset::Hyperbolic { a: 1.0 }).unwrap();
    let jac = build_knm(&GeodesicData::radial(&hyp, 2, 1.0).unwrap(), 4096).unwrap();
    let coarse = identity_residuals(&assemble_operators(&jac, GridSpec::graded(64, 2, IDENTITY_GRADING)).unwrap());
    let fine = identity_residuals(&assemble_operators(&jac, GridSpec::graded(256, 2, IDENTITY_GRADING)).unwrap());
    for (c, f) in [
        (coarse.s_star_s, fine.s_star_s),
        (coarse.s_s2, fine.s_s2),
        (coarse.s2_s, fine.s2_s),
        (coarse.inv_star_form, fine.inv_star_form),
        (coarse.inverse_form, fine.inverse_form),
    ] {
        assert!(f <= 0.5 * c, "{c} -> {f}");
    }
    assert!(fine.identity_max() < 1e-3);
}

#[test]
fn full_norm_residuals_do_not_vanish() {
    // rank deficiency of the discrete S: the unrestricted S·S₂ − I stays O(1)
    let full = identity_residuals_full(&ops_for(-1.0, 1.0, 64, 5.0)).unwrap();
    assert!(full.s_s2 > 0.1);
}

#[test]
fn perturbation_is_linear_in_eps() {
    let hyp = build_profile(&Preset::Hyperbolic { a: 1.0 }).unwrap();
    let jac = build_knm(&GeodesicData::radial(&hyp, 2, 1.0).unwrap(), 2048).unwrap();
    let rec = perturb_j(&jac, GridSpec::uniform(128, 2), &[0.01, 0.02, 0.04, 0.08], 0.6).unwrap();
    assert!((0.9..=1.1).contains(&rec.slope), "{}", rec.slope);
    assert!(rec.norms.windows(2).all(|w| w[1] > w[0]));
    // doubling the bump at most doubles the norm, up to grid noise
    assert!(rec.doubled <= 2.0 * rec.norms[0] * 1.05);
    assert!(rec.doubled >= 1.5 * rec.norms[0]);

    let zero = perturb_j(&jac, GridSpec::uniform(64, 2), &[0.0], 0.6).unwrap();
    assert_eq!(zero.norms[0], 0.0);
    assert!(perturb_j(&jac, GridSpec::uniform(64, 2), &[0.5], 0.6).is_err());
}

#[test]
fn hardy_examples() {
    let g = GridSpec::uniform(4096, 1);
    assert!((hardy_ratio(&g, &vec![1.0; 4096]).unwrap() - 1.0).abs() < 1e-12);
    // (1−t)^{−a} has ratio 1/(1−a)², 3.84 for a = 0.49; grids see part of it
    let g = GridSpec::graded(4096, 1, 6.0);
    let near: Vec<f64> = g.gaps().iter().map(|s| s.powf(-0.49)).collect();
    let r = hardy_ratio(&g, &near).unwrap();
    assert!(r > 3.0 && r < 1.0 / 0.51f64.powi(2), "{r}");
}

#[test]
fn trial_mode_certificates() {
    let tm = trial_mode(&ops_for(0.0, 1.0, 128, 1.0), 1e-3).unwrap();
    assert!((tm.form - 1.0).abs() < 1e-8);

    let ops = ops_for(1.0, 1.0, 256, 1.0);
    let tm = trial_mode(&ops, 1e-3).unwrap();
    let s = tm.sigma1;
    assert!((s - (1.0 - 1.0 / (PI * PI))).abs() < 2e-3);
    assert!(tm.form >= s - 1e-12 && tm.form <= s + 1e-3);
    // direction √2cos(πt) on the orthogonal block
    let target = cos_mode(&ops, 1, 1);
    let overlap = ops.inner(&tm.nodal, &target) / ops.norm(&target);
    assert!(overlap > 0.999, "{overlap}");

    let ops = ops_for(-1.0, 1.0, 128, 1.0);
    let tm = trial_mode(&ops, 0.02).unwrap();
    assert!(tm.form >= tm.sigma1 - 1e-12 && tm.form <= tm.sigma1 + 0.02);
    // σ₁ ≤ ‖Sφ‖² ≤ ‖(I+T)φ‖ ≤ σ₁ + ε, the first step up to the S*S − (I+T) residual
    let slack = identity_residuals(&ops).s_star_s;
    assert!(tm.s_norm2 >= tm.sigma1 - slack, "{} {} {slack}", tm.s_norm2, tm.sigma1);
    assert!(tm.s_norm2 <= tm.norm_i_plus_t + 1e-9);
    assert!(tm.norm_i_plus_t <= tm.sigma1 + 0.02);

    assert!(trial_mode(&ops, 0.0).is_err());
}

#[test]
fn trial_mode_eval_matches_nodes() {
    let ops = ops_for(1.0, 1.0, 64, 1.0);
    let tm = trial_mode(&ops, 1e-2).unwrap();
    if !tm.raw {
        for i in [0, 17, 63] {
            let v = tm.eval(ops.t[i]);
            // nodal values are the projected synthesis; the projection only shifts by a constant
            let shift = tm.nodal[i * 2 + 1] - v[1];
            let shift0 = tm.nodal[1] - tm.eval(ops.t[0])[1];
            assert!((shift - shift0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn hardy_ratio_never_exceeds_four(seed in any::<u64>(), m in 16usize..400) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let phi: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0) * (1.0 + 10.0 * rng.gen::<f64>().powi(8))).collect();
        let g = GridSpec::uniform(m, 1);
        let r = hardy_ratio(&g, &phi).unwrap();
        prop_assert!(r < 4.0, "{}", r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn form_equals_s_norm_on_smooth_functions(coeffs in prop::collection::vec(-1.0f64..1.0, 16)) {
        use std::sync::OnceLock;
        static OPS: OnceLock<OperatorSet> = OnceLock::new();
        let ops = OPS.get_or_init(|| ops_for(-1.0, 1.0, 256, IDENTITY_GRADING));
        let mut phi = vec![0.0; ops.dim()];
        for (j, c) in coeffs.iter().enumerate() {
            let mode = cos_mode(ops, j / 2 + 1, j % 2);
            phi.iter_mut().zip(&mode).for_each(|(p, x)| *p += c * x);
        }
        let nrm = ops.norm(&phi).powi(2);
        prop_assume!(nrm > 1e-6);
        let sphi = ops.apply_s(&phi);
        let lhs = ops.inner(&sphi, &sphi);
        prop_assert!((lhs - ops.form(&phi)).abs() < 1e-3 * nrm);
    }
}
