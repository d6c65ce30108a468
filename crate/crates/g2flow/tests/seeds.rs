use g2flow::invariants::{
    hamiltonian, hamiltonian_u1, nu0, nu_inf, su2cubed_curve_residual, FullState, ModelParams, U1State, CONE_C,
};
use g2flow::seeds::*;
use g2flow::G2Error;

fn u1_of(f: &FullState) -> U1State {
    f.to_u1(1e-12).expect("U(1)-invariant seed")
}

fn wronskian(u: &U1State) -> f64 {
    u.da * u.b - u.a * u.db
}

#[test]
fn delta_su2_equal_alphas_lie_on_the_quartic() {
    let al = 1.0 / 192.0;
    let (_, st) = seed_delta_su2(1.0, [al, al, al], 0.1, DEFAULT_INTEGER_ORDER).unwrap();
    let params = ModelParams::delta_su2(1.0).unwrap();
    for i in 0..3 {
        let r = su2cubed_curve_residual(st.x[i], st.y[i], &params);
        assert!(r.abs() < 1e-10, "component {i}: residual {r:e}");
    }
    assert!(hamiltonian(&st, &params).unwrap().abs() < 1e-10);
}

#[test]
fn delta_su2_leading_terms() {
    let al = [0.004, 0.005, 1.0 / 64.0 - 0.009];
    let (s, _) = seed_delta_su2(1.0, al, 0.1, DEFAULT_INTEGER_ORDER).unwrap();
    for i in 0..3 {
        assert!((s.base[3 + i] - al[i]).abs() < 1e-15);
    }
    let t = 1e-3;
    let st = delta_su2_state(&s, 1.0, t);
    for i in 0..3 {
        let lead = 1.0 + t * t / 4.0 + al[i] * t.powi(4);
        assert!((st.y[i] - lead).abs() < 1e-16 + 1e-3 * t.powi(4));
    }
}

#[test]
fn delta_su2_signs_follow_alpha1_minus_alpha3() {
    for (a1, a3) in [(1.0 / 150.0, 1.0 / 64.0 - 2.0 / 150.0), (1.0 / 256.0, 1.0 / 64.0 - 2.0 / 256.0)] {
        let (_, st) = seed_delta_su2(1.0, [a1, a1, a3], 0.1, DEFAULT_INTEGER_ORDER).unwrap();
        let u = u1_of(&st);
        let sg = (a1 - a3).signum();
        assert_eq!((u.a - u.b).signum(), sg);
        assert_eq!((u.da - u.db).signum(), sg);
        assert_eq!(wronskian(&u).signum(), sg);
    }
}

#[test]
fn delta_su2_constraint() {
    let e = seed_delta_su2(1.0, [0.01, 0.01, 0.01], 0.1, DEFAULT_INTEGER_ORDER).unwrap_err();
    assert!(matches!(e, G2Error::Constraint(_)));
    let e = seed_delta_su2(-1.0, [1.0 / 192.0; 3], 0.1, DEFAULT_INTEGER_ORDER).unwrap_err();
    assert!(matches!(e, G2Error::Constraint(_)));
}

/// t^4 coefficients of a1 and a3 for a1 = a2 in the {1} x SU(2) family.
fn su2_factor_t4(alpha1: f64, alpha3: f64, r0: f64) -> (f64, f64) {
    let c3 = alpha3.powi(3);
    ((8.0 - 5.0 * c3) / (576.0 * alpha1 * r0), -(4.0 - 7.0 * c3) * alpha3 / (576.0 * alpha1 * alpha1 * r0))
}

#[test]
fn su2_factor_t4_coefficient_at_unit_alphas() {
    for r0 in [1.0, 0.5, 2.0] {
        let (s, _) = seed_su2_factor(r0, [1.0; 3], 0.05, DEFAULT_INTEGER_ORDER).unwrap();
        let c = s.coefficient(&[1]).unwrap();
        assert!((c[3] - 1.0 / (192.0 * r0)).abs() < 1e-14, "r0 = {r0}: {}", c[3]);
    }
}

#[test]
fn su2_factor_t4_coefficients_for_equal_first_pair() {
    for a3 in [0.5f64, 0.8, 1.0, 1.7] {
        let a1 = 1.0 / a3.sqrt();
        let r0 = 1.3;
        let (s, _) = seed_su2_factor(r0, [a1, a1, a3], 0.05, DEFAULT_INTEGER_ORDER).unwrap();
        let c = s.coefficient(&[1]).unwrap();
        let (w1, w3) = su2_factor_t4(a1, a3, r0);
        assert!((c[3] - w1).abs() < 1e-13 && (c[4] - w1).abs() < 1e-13, "a3 = {a3}");
        assert!((c[5] - w3).abs() < 1e-13, "a3 = {a3}: {} vs {w3}", c[5]);
    }
}

#[test]
fn su2_factor_wronskian_leading_coefficient() {
    for a3 in [0.5f64, 1.0, 2.0] {
        let a1 = 1.0 / a3.sqrt();
        let (s, _) = seed_su2_factor(1.0, [a1, a1, a3], 0.05, DEFAULT_INTEGER_ORDER).unwrap();
        let want = (1.0 - a3.powi(3)) * a3 / (96.0 * a1);
        let t = 2e-3;
        let w = wronskian(&u1_of(&su2_factor_state(&s, t))) / t.powi(5);
        assert!((w - want).abs() < 1e-4 * (1.0 + want.abs()), "a3 = {a3}: {w} vs {want}");
    }
}

#[test]
fn su2_factor_signs() {
    let a1 = 2f64.sqrt();
    let (_, st) = seed_su2_factor(1.0, [a1, a1, 0.5], 0.05, DEFAULT_INTEGER_ORDER).unwrap();
    let u = u1_of(&st);
    assert!(u.a > u.b && u.da > u.db);
    let params = ModelParams::su2_factor(1.0).unwrap();
    assert!(hamiltonian(&st, &params).unwrap().abs() < 1e-10);
}

#[test]
fn su2_factor_constraints() {
    let e = seed_su2_factor(1.0, [1.0, 1.0, 2.0], 0.05, DEFAULT_INTEGER_ORDER).unwrap_err();
    assert!(matches!(e, G2Error::Constraint(_)));
    let e = seed_su2_factor(1.0, [-1.0, -1.0, 1.0], 0.05, DEFAULT_INTEGER_ORDER).unwrap_err();
    assert!(matches!(e, G2Error::Constraint(_)));
}

#[test]
fn kmn_b_coefficient_in_t() {
    let (s, _) = seed_kmn(1, 2, 1.0, 1.0, 0.05, DEFAULT_INTEGER_ORDER).unwrap();
    assert!((s.base[3] - 1.5 * 2f64.sqrt()).abs() < 1e-14);
    for (m, n, r0, beta) in [(2u32, 3u32, 0.7, 1.9), (1, 3, 1.2, 0.4)] {
        let (s, _) = seed_kmn(m, n, r0, beta, 0.05, DEFAULT_INTEGER_ORDER).unwrap();
        let (mf, nf) = (m as f64, n as f64);
        let want = (mf * nf).sqrt() * (mf + nf) * r0 / (2.0 * beta);
        assert!((s.base[3] - want).abs() < 1e-13 * want);
        assert!((s.base[2] - r0 * r0 * beta).abs() < 1e-14);
    }
}

#[test]
fn kmn_b_coefficient_in_a() {
    for (m, n, r0, beta) in [(1u32, 2u32, 1.0, 1.0), (1, 2, 1.0, 2.0), (2, 3, 0.8, 1.3)] {
        let (s, _) = seed_kmn(m, n, r0, beta, 0.05, DEFAULT_INTEGER_ORDER).unwrap();
        let (mf, nf) = (m as f64, n as f64);
        let b0 = mf * nf * r0.powi(3);
        let want = (mf * nf).sqrt() * (mf + nf) / (2.0 * beta.powi(3) * r0.powi(3));
        let t = 1e-3;
        let u = kmn_state(&s, m, n, r0, beta, t).unwrap();
        let got = (u.b - b0) / (u.a * u.a);
        assert!((got - want).abs() < 1e-4 * want, "({m},{n},{r0},{beta}): {got} vs {want}");
    }
}

#[test]
fn kmn_seed_is_on_the_zero_level_set() {
    for (m, n, beta) in [(1u32, 2u32, 1.0), (2, 3, 4.4), (1, 1, 0.7)] {
        let params = ModelParams::kmn(m, n, 1.0).unwrap();
        let (_, u) = seed_kmn(m, n, 1.0, beta, 0.05, DEFAULT_INTEGER_ORDER).unwrap();
        let h = hamiltonian_u1(&u, &params).unwrap();
        assert!(h.abs() < 1e-10 * params.scale().powi(2), "({m},{n},{beta}): H = {h:e}");
    }
}

#[test]
fn k11_with_zero_alpha_matches_the_circle_family() {
    let (_, full) = seed_k11(1.0, 0.0, 1.0, 0.05, DEFAULT_INTEGER_ORDER).unwrap();
    let (_, u) = seed_kmn(1, 1, 1.0, 1.0, 0.05, DEFAULT_INTEGER_ORDER).unwrap();
    let v = u1_of(&full);
    for (x, y) in [(v.a, u.a), (v.b, u.b), (v.da, u.da), (v.db, u.db)] {
        assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()), "{x} vs {y}");
    }
}

#[test]
fn k11_splits_a1_and_a2() {
    let (_, st) = seed_k11(1.0, 0.3, 1.0, 0.05, DEFAULT_INTEGER_ORDER).unwrap();
    assert!((st.y[0] - st.y[1] - 0.6).abs() < 0.05);
    let params = ModelParams::kmn(1, 1, 1.0).unwrap();
    assert!(hamiltonian(&st, &params).unwrap().abs() < 1e-10);
}

#[test]
fn circle_family_constraints() {
    for (m, n, beta) in [(2u32, 4u32, 1.0), (1, 2, 0.0), (0, 1, 1.0)] {
        let e = seed_kmn(m, n, 1.0, beta, 0.05, DEFAULT_INTEGER_ORDER).unwrap_err();
        assert!(matches!(e, G2Error::Constraint(_)), "({m},{n},{beta})");
    }
    let e = seed_k11(1.0, 1.0, 1.0, 0.05, DEFAULT_INTEGER_ORDER).unwrap_err();
    assert!(matches!(e, G2Error::Constraint(_)));
}

#[test]
fn cs_end_with_zero_c_is_the_cone() {
    let t = 0.1;
    let (s, u) = seed_cs_end(0.0, t, DEFAULT_CS_ORDER).unwrap();
    assert!(s.coefficients.iter().flatten().all(|c| *c == 0.0));
    let a = CONE_C * t.powi(3);
    assert!((u.a - a).abs() < 1e-15 && (u.b - a).abs() < 1e-15);
    assert!((u.da - 3.0 * CONE_C * t * t).abs() < 1e-15);
}

#[test]
fn cs_end_first_coefficients() {
    let c = 0.7;
    let (s, _) = seed_cs_end(c, 0.1, DEFAULT_CS_ORDER).unwrap();
    let k = s.coefficient(&[1]).unwrap();
    assert!((k[2] - c / 2.0).abs() < 1e-15 && (k[3] + c).abs() < 1e-15);
}

#[test]
fn cs_end_signs_follow_c() {
    let (_, u) = seed_cs_end(1.0, 0.1, DEFAULT_CS_ORDER).unwrap();
    assert!(u.a > u.b && u.da > u.db);
    let (_, u) = seed_cs_end(-1.0, 0.1, DEFAULT_CS_ORDER).unwrap();
    assert!(u.a < u.b && u.da < u.db);
}

#[test]
fn cs_end_wronskian_leading_behaviour() {
    let n0 = nu0();
    for c in [-1.0, 1.0] {
        let t = 1e-3;
        let (_, u) = seed_cs_end(c, t, DEFAULT_CS_ORDER).unwrap();
        let scaled = 54.0 * 54.0 * wronskian(&u) / (3.0 * t.powi(5)) / t.powf(n0);
        let want = 1.5 * c * n0;
        assert!((scaled - want).abs() < 1e-3 * want.abs(), "c = {c}: {scaled} vs {want}");
    }
}

#[test]
fn cs_linearization_eigenvalues() {
    let e = cs_linearization_eigen();
    let want = [-nu_inf(), -6.0, -1.0, nu0()];
    for (a, b) in e.eigenvalues.iter().zip(want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    assert!(e.max_imag < 1e-12);
    let l = cs_linearization();
    let v = nalgebra::Vector4::new(4.0, 4.0, 3.0, 3.0);
    assert!((l * v + v).amax() < 1e-12);
}

#[test]
fn free_vectors_are_eigenvectors() {
    let l = cs_linearization();
    let cs = nalgebra::Vector4::from_vec(cs_free_vector(1.0));
    assert!((l * cs - cs * nu0()).amax() < 1e-12);
    let ac = nalgebra::Vector4::from_vec(ac_free_vector(1.0));
    assert!((l * ac + ac * nu_inf()).amax() < 1e-12);
    assert!((ac[3] - ac[2] - 1.0).abs() < 1e-15);
}

#[test]
fn ac_end_without_squashing_has_only_decaying_mode() {
    let params = ModelParams::cone();
    let s = g2flow::series::solve_singular_ivp(&ac_problem(&params, 0.8, DEFAULT_AC_ORDER)).unwrap();
    for (h, c) in s.indices.iter().zip(&s.coefficients) {
        if h[0] > 0 {
            assert!(c.iter().all(|x| x.abs() < 1e-14), "index {h:?}: {c:?}");
        }
    }
    let k = s.coefficient(&[0, 1]).unwrap();
    assert!((k[3] - k[2] - 0.8).abs() < 1e-15);
}

#[test]
fn ac_end_with_zero_c_is_the_cone() {
    let t = 20.0;
    let (_, u) = seed_ac_end(&ModelParams::cone(), 0.0, t, DEFAULT_AC_ORDER).unwrap();
    let a = CONE_C * t.powi(3);
    assert!((u.a - a).abs() < 1e-14 * a && (u.b - a).abs() < 1e-14 * a);
}

#[test]
fn ac_end_resonance_is_repaired() {
    let params = ModelParams::new(-1.0, 4.0);
    let s = g2flow::series::solve_singular_ivp(&ac_problem(&params, 1.0, DEFAULT_AC_ORDER)).unwrap();
    let ann = s.annotations.iter().find(|a| a.index == [2, 0]).expect("repair annotation at (2, 0)");
    let rel = ann.obstruction.abs() / ann.scale;
    assert!(rel <= 1e-12, "obstruction {:e} against scale {:e}", ann.obstruction, ann.scale);
    assert!((ann.weight - 6.0).abs() < 1e-15);
}

#[test]
fn ac_end_obstruction_at_moderate_scale() {
    for (p, q) in [(-0.1, 0.4), (0.0, -0.1), (-0.1, 0.1), (0.05, 0.2)] {
        let params = ModelParams::new(p, q);
        let s = g2flow::series::solve_singular_ivp(&ac_problem(&params, 1.0, DEFAULT_AC_ORDER)).unwrap();
        let ann = &s.annotations[0];
        assert!(ann.obstruction.abs() <= 1e-12, "({p}, {q}): obstruction {:e}", ann.obstruction);
    }
}

#[test]
fn ac_end_lies_in_the_backward_region() {
    let params = ModelParams::new(-1.0, 4.0);
    let s = g2flow::series::solve_singular_ivp(&ac_problem(&params, 1.0, DEFAULT_AC_ORDER)).unwrap();
    let t = ac_auto_switch(&s, &params, 1.0, 1e-10);
    let u = ac_state(&s, t).unwrap();
    assert!(u.b > u.a && u.da > u.db && u.db > 0.0, "T = {t}: {u:?}");
    let lead = CONE_C * t.powf(3.0 - nu_inf());
    assert!(((u.b - u.a) / lead - 1.0).abs() < 0.05);
    assert!(hamiltonian_u1(&u, &params).unwrap().abs() < 1e-10 * u.a * u.a);
}

#[test]
fn ac_end_repair_holds_at_large_scale() {
    for (p, q) in [(-10.0, 40.0), (-100.0, 400.0)] {
        let params = ModelParams::new(p, q);
        let s = g2flow::series::solve_singular_ivp(&ac_problem(&params, 1.0, DEFAULT_AC_ORDER)).unwrap();
        let ann = &s.annotations[0];
        assert!(ann.obstruction.abs() <= 1e-12 * ann.scale, "({p}, {q}): {ann:?}");
    }
}

#[test]
fn truncation_residual_orders() {
    use g2flow::verify::residual_slope;
    let al = 1.0 / 160.0;
    let cases = [
        (delta_su2_problem(1.0, [al, al, 1.0 / 64.0 - 2.0 * al], 8.0), 0.2),
        (su2_factor_problem(1.0, [0.8, 1.25, 1.0], 6.0), 0.2),
        (kmn_problem(2, 3, 1.0, 1.5, 7.0), 0.1),
        (cs_problem(-1.0, 3.0 * nu0()), 0.2),
    ];
    for (p, h0) in &cases {
        let (slope, want) = residual_slope(p, *h0, 4).unwrap();
        assert!((slope - want).abs() <= 0.2, "slope {slope} vs {want}");
    }
}
