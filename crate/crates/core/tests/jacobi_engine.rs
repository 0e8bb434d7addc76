use ougap::jacobi::*;
use ougap::radial::{build_profile, Preset};

type Mat = nalgebra::DMatrix<f64>;

fn max_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).amax()
}

#[test]
fn flat_backbone() {
    let geo = GeodesicData::constant_curvature(3, 1.0, 0.0).unwrap();
    let sol = build_knm(&geo, 256).unwrap();
    let id = Mat::identity(3, 3);
    for k in 0..256 {
        let t = sol.t[k];
        assert!(max_diff(&sol.w[k], &(&id * t)) < 1e-13);
        assert!(max_diff(&sol.wp[k], &id) < 1e-13);
        assert!(max_diff(&sol.a[k], &id) < 1e-12);
        assert!(max_diff(&sol.k[k], &(&id * (-1.0 / (1.0 - t)))) < 1e-9);
        assert!(sol.n_tilde[k].amax() < 1e-12);
        assert!(max_diff(&sol.n_mat[k], &id) < 1e-12);
        assert!(max_diff(&sol.m[k], &(&id * (1.0 - t))) < 1e-12);
    }
}

#[test]
fn constant_curvature_blocks() {
    for (kappa, orth) in [(-1.0, f64::sinh as fn(f64) -> f64), (1.0, f64::sin)] {
        let geo = GeodesicData::constant_curvature(2, 1.0, kappa).unwrap();
        let flow = solve_jacobi(&geo, 512).unwrap();
        for (k, t) in flow.t.iter().enumerate() {
            assert!((flow.w[k][(0, 0)] - t).abs() < 1e-12);
            assert!((flow.w[k][(1, 1)] - orth(*t)).abs() < 1e-10, "kappa={kappa} t={t}");
            assert!(flow.w[k][(0, 1)].abs() < 1e-14);
        }
    }
}

#[test]
fn riccati_closed_form() {
    let geo = GeodesicData::constant_curvature(2, 1.0, -1.0).unwrap();
    let ric = riccati_a(&geo, 1024).unwrap();
    let a1 = ric.a.last().unwrap();
    assert!((a1[(1, 1)] - 1.0 / 1f64.tanh()).abs() < 1e-9);
    assert!((a1[(1, 1)] - 1.3130).abs() < 1e-4);
    assert!((a1[(0, 0)] - 1.0).abs() < 1e-12);
    // interpolant between nodes
    let s: f64 = 0.3337;
    assert!((ric.a_at(s)[(1, 1)] - s / s.tanh()).abs() < 1e-10);

    let flat = riccati_a(&GeodesicData::constant_curvature(2, 1.0, 0.0).unwrap(), 256).unwrap();
    assert!(flat.a.iter().all(|a| max_diff(a, &Mat::identity(2, 2)) < 1e-14));
}

#[test]
fn k_matches_closed_form_on_hyperbolic() {
    let geo = GeodesicData::constant_curvature(2, 1.0, -1.0).unwrap();
    let sol = build_knm(&geo, 2048).unwrap();
    for k in 0..2048 {
        let t = sol.t[k];
        let s = 1.0 - t;
        assert!((sol.k[k][(1, 1)] + 1.0 / s.tanh()).abs() < 1e-6 * (1.0 / s).max(1.0), "t={t}");
        assert!((sol.k[k][(0, 0)] + 1.0 / s).abs() < 1e-9 / s);
    }
}

#[test]
fn symmetry_and_agreement() {
    let hyp = build_profile(&Preset::Hyperbolic { a: 1.0 }).unwrap();
    let cases = [
        GeodesicData::radial(&hyp, 3, 1.0).unwrap(),
        GeodesicData::constant_curvature(3, 1.0, 1.0).unwrap(),
        GeodesicData::constant_curvature(2, 2.0, 0.9 * std::f64::consts::PI.powi(2) / 4.0).unwrap(),
    ];
    for geo in cases {
        let sol = build_knm(&geo, 4096).unwrap();
        assert!(sol.symmetry_defect() < 1e-8, "{}", sol.symmetry_defect());
        assert!(sol.direct_symmetry < 1e-8, "{}", sol.direct_symmetry);
        assert!(sol.riccati_vs_direct < 1e-6, "{}", sol.riccati_vs_direct);
        assert!(sol.m_consistency < 1e-6, "{}", sol.m_consistency);
    }
}

#[test]
fn non_diagonal_curvature_stays_symmetric() {
    // rotating curvature frame: R(t) = Q(t) diag(−1, 0.5) Q(t)ᵀ
    let geo = GeodesicData::new(2, 1.0, "rotating", |t| {
        let (s, c) = (2.0 * t).sin_cos();
        let q = Mat::from_row_slice(2, 2, &[c, -s, s, c]);
        &q * Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 0.5])) * q.transpose()
    })
    .unwrap();
    let sol = build_knm(&geo, 4096).unwrap();
    assert!(sol.symmetry_defect() < 1e-8);
    assert!(sol.direct_symmetry < 1e-8, "{}", sol.direct_symmetry);
    // the direct quotient is not symmetric by construction
    assert!(sol.direct_symmetry > 0.0);
    assert!(sol.riccati_vs_direct < 1e-6);
    assert!(sol.m_consistency < 1e-6);
}

#[test]
fn a_initial_conditions() {
    let geo = GeodesicData::constant_curvature(2, 1.0, -1.0).unwrap();
    let sol = build_knm(&geo, 1024).unwrap();
    assert!(max_diff(&sol.a[0], &Mat::identity(2, 2)) == 0.0);
    // A′(0) = 0: A(h) − I = O(h²)
    let h = sol.t[1];
    assert!((&sol.a[1] - Mat::identity(2, 2)).amax() < h * h);
}

#[test]
fn regular_part_is_bounded_under_refinement() {
    let geo = GeodesicData::constant_curvature(2, 1.0, -1.0).unwrap();
    let sup = |steps| {
        let sol = build_knm(&geo, steps).unwrap();
        sol.n_tilde.iter().map(|m| m.amax()).fold(0.0, f64::max)
    };
    let (a, b) = (sup(512), sup(2048));
    assert!(a.is_finite() && b.is_finite());
    assert!((a - b).abs() < 1e-3 * a.max(1e-12) + 1e-9);
}

#[test]
fn n_and_inverse_are_bounded() {
    let geo = GeodesicData::constant_curvature(2, 1.0, 1.0).unwrap();
    let sol = build_knm(&geo, 512).unwrap();
    for n in &sol.n_mat {
        assert!(n.amax().is_finite());
        assert!(n.clone().try_inverse().unwrap().amax() < 10.0);
    }
}

#[test]
fn conjugate_point_and_bad_input() {
    let past = GeodesicData::orthogonal_block(1, 1.0, 1.05 * std::f64::consts::PI.powi(2)).unwrap();
    assert!(matches!(solve_jacobi(&past, 1024), Err(ougap::GapError::ConjugatePoint { .. }) | Err(ougap::GapError::RiccatiBlowUp(_))));
    assert!(solve_jacobi(&GeodesicData::constant_curvature(2, 1.0, 0.0).unwrap(), 64).is_err());
    assert!(GeodesicData::constant_curvature(1, 1.0, 0.0).is_err());
}

#[test]
fn export_has_row_major_columns() {
    let sol = build_knm(&GeodesicData::constant_curvature(2, 1.0, -1.0).unwrap(), 128).unwrap();
    let (header, rows) = export_rows(&sol);
    assert_eq!(header.len(), 1 + 4 * 4);
    assert_eq!(header[1], "A00");
    assert_eq!(header[2], "A01");
    assert_eq!(rows.len(), 129);
    assert_eq!(rows[5][4], sol.a[5][(1, 1)]);
}
