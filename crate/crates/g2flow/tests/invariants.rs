use g2flow::flow::{rhs_full, rhs_u1};
use g2flow::invariants::*;
use g2flow::G2Error;
use proptest::prelude::*;

fn cone_full() -> FullState {
    let y = 3f64.sqrt() / 54.0;
    let x = 1.0 / 108.0;
    FullState { x: [x; 3], y: [y; 3] }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn cone_constants() {
    assert!(close(CONE_C, 3f64.sqrt() / 54.0, 1e-16));
    assert!(close(nu0() * nu_inf(), 24.0, 1e-14));
    assert!(close(nu_inf() - nu0(), 7.0, 1e-14));
}

#[test]
fn family_constants() {
    let k = ModelParams::kmn(2, 3, 1.5).unwrap();
    assert_eq!((k.p, k.q), (-4.0 * 3.375, 9.0 * 3.375));
    let d = ModelParams::delta_su2(2.0).unwrap();
    assert_eq!((d.p, d.q), (8.0, -8.0));
    let s = ModelParams::su2_factor(1.0).unwrap();
    assert_eq!((s.p, s.q), (-1.0, 0.0));
    for p in [k, d, s] {
        p.validate().unwrap();
        assert!(p.p * p.q <= 0.0);
    }
    assert!(matches!(ModelParams::kmn(2, 4, 1.0), Err(G2Error::Constraint(_))));
    assert!(matches!(ModelParams::delta_su2(-1.0), Err(G2Error::Constraint(_))));
    let tampered = ModelParams { q: 1.0, ..d };
    assert!(tampered.validate().is_err());
}

#[test]
fn lambda_examples() {
    let zero = ModelParams::cone();
    assert_eq!(eval_lambda(&[0.0; 3], &zero), 0.0);
    assert_eq!(eval_lambda(&[1.0; 3], &zero), -3.0);
    assert_eq!(eval_lambda(&[1.0; 3], &ModelParams::new(1.0, -1.0)), 0.0);
}

#[test]
fn lambda_forms_agree_when_q_is_minus_p() {
    let p = ModelParams::new(1.3, -1.3);
    for y in [[0.3, 1.1, 2.0], [1.0, 2.0, 3.0], [5.0, 0.5, 1.5]] {
        assert!(close(eval_lambda_grouped(&y, &p), eval_lambda_factored(&y, &p), 1e-12));
    }
}

#[test]
fn f_examples() {
    assert_eq!(eval_f(1.0, 1.0, &ModelParams::cone()), (3.0, 8.0, 4.0));
    let k12 = ModelParams::new(-1.0, 4.0);
    assert_eq!(eval_f(0.0, 2.0, &k12).0, 0.0);
    assert_eq!(eval_f(1.0, 3.0, &k12).0, 87.0);
}

#[test]
fn f_is_lambda_on_the_diagonal() {
    let p = ModelParams::new(-1.0, 4.0);
    for (a, b) in [(1.0, 3.0), (2.5, 1.2), (0.4, 6.0)] {
        assert!(close(eval_f(a, b, &p).0, -eval_lambda(&[a, a, b], &p), 1e-12));
    }
}

#[test]
fn hamiltonian_examples() {
    let cone = ModelParams::cone();
    assert!(hamiltonian(&cone_full(), &cone).unwrap().abs() < 1e-15);
    let h = hamiltonian(&FullState { x: [1.0; 3], y: [1.0; 3] }, &cone).unwrap();
    assert!(close(h, 3f64.sqrt() - 2.0, 1e-15));
    let h = hamiltonian(&FullState { x: [0.0; 3], y: [1.0; 3] }, &ModelParams::new(1.0, -1.0)).unwrap();
    assert_eq!(h, 0.0);
}

#[test]
fn mean_curvature_examples() {
    let cone = ModelParams::cone();
    let c = CONE_C;
    for t in [1.0, 2.0] {
        let u = U1State { a: c * t * t * t, b: c * t * t * t, da: 3.0 * c * t * t, db: 3.0 * c * t * t, param: Param::ArcLengthT };
        assert!(close(mean_curvature_u1(&u, &cone).unwrap(), 6.0 / t, 1e-14));
        assert!(close(mean_curvature_full(&u.to_full(), &cone).unwrap(), 6.0 / t, 1e-14));
    }
    let p = ModelParams::new(-1.0, 4.0);
    let u = U1State { a: 1.0, b: 3.0, da: 1.0, db: 0.5, param: Param::ArcLengthT };
    let h = 1e-5;
    let f = |a: f64, b: f64| eval_f(a, b, &p).0;
    let fa = (f(1.0 + h, 3.0) - f(1.0 - h, 3.0)) / (2.0 * h);
    let fb = (f(1.0, 3.0 + h) - f(1.0, 3.0 - h)) / (2.0 * h);
    let want = (fa + 0.5 * fb) / (2.0 * 87.0);
    assert!(close(mean_curvature_u1(&u, &p).unwrap(), want, 1e-9));
}

#[test]
fn cone_metric() {
    let m = metric_from_halfflat(&cone_full(), &ModelParams::cone()).unwrap();
    for i in 0..3 {
        assert!(close(m.a[i], 1.0 / 9.0, 1e-14));
        assert!(close(m.b[i], 1.0 / 9.0, 1e-14));
        assert!(close(m.c[i], -1.0 / 9.0, 1e-14));
    }
    let back = halfflat_from_metric(&m, &ModelParams::cone()).unwrap().state;
    for i in 0..3 {
        assert!(close(back.x[i], cone_full().x[i], 1e-10));
        assert!(close(back.y[i], cone_full().y[i], 1e-10));
    }
}

#[test]
fn antisymmetric_constants_give_equal_blocks() {
    let p = ModelParams::delta_su2(1.0).unwrap();
    let s = FullState { x: [0.7, 0.9, 1.3], y: [1.6, 1.8, 2.1] };
    let m = metric_from_halfflat(&s, &p).unwrap();
    for i in 0..3 {
        assert!(close(m.a[i], m.b[i], 1e-14));
    }
    let inv = halfflat_from_metric(&m, &p).unwrap();
    assert!(inv.branch_selected);
}

#[test]
fn delta_su2_seed_metric_roundtrip() {
    let al = 1.0 / 192.0;
    let (_, st) = g2flow::seeds::seed_delta_su2(1.0, [al, al, al], 0.1, 10.0).unwrap();
    let p = ModelParams::delta_su2(1.0).unwrap();
    let m = metric_from_halfflat(&st, &p).unwrap();
    let back = halfflat_from_metric(&m, &p).unwrap().state;
    for i in 0..3 {
        assert!(close(back.y[i], st.y[i], 1e-8), "{:?} vs {:?}", back.y, st.y);
        assert!(close(back.x[i], st.x[i], 1e-8));
    }
}

#[test]
fn lagrangian_examples() {
    let y = CONE_C;
    let dy = 3f64.sqrt() / 18.0;
    let want = (dy.powi(3) * 3.0 * y.powi(4)).cbrt();
    let l = lagrangian_density(&[y; 3], &[dy; 3], &ModelParams::cone()).unwrap();
    assert!(close(l, want, 1e-14));
    assert_eq!(lagrangian_density(&[y; 3], &[0.0, dy, dy], &ModelParams::cone()).unwrap(), 0.0);
    assert_eq!(lagrangian_density(&[1.0; 3], &[1.0; 3], &ModelParams::new(1.0, -1.0)).unwrap(), 0.0);
}

#[test]
fn quartic_curve_examples() {
    let cone = ModelParams::cone();
    assert!(su2cubed_curve_residual(1.0 / 108.0, CONE_C, &cone).abs() < 1e-15);
    assert_eq!(su2cubed_curve_residual(0.0, 1.0, &ModelParams::new(1.0, -1.0)), 0.0);
    assert_eq!(su2cubed_curve_residual(0.0, 1.0, &cone), -3.0);
}

#[test]
fn rhs_examples() {
    let cone = ModelParams::cone();
    let (_, dy) = rhs_full(&cone_full(), &cone).unwrap();
    for v in dy {
        assert!(close(v, 1.0 / 108f64.sqrt(), 1e-15));
    }
    let u = rhs_u1(&[1.0 / 108.0, 1.0 / 108.0, CONE_C, CONE_C], &cone).unwrap();
    assert!(close(u[2], 1.0 / 108f64.sqrt(), 1e-15));
    assert!(close(u[3], 1.0 / 108f64.sqrt(), 1e-15));
    let p = ModelParams::new(-1.0, 4.0);
    let (_, fa, fb) = eval_f(1.0, 3.0, &p);
    assert_eq!(fa, 8.0 * 28.0);
    let r = rhs_u1(&[0.8, 1.1, 1.0, 3.0], &p).unwrap();
    assert!(close(r[0], 8.0 * 28.0 / (4.0 * 87f64.sqrt()), 1e-14));
    assert!(close(r[1], fb / (2.0 * 87f64.sqrt()), 1e-14));
}

#[test]
fn symmetric_state_has_symmetric_rhs() {
    let s = FullState { x: [0.4; 3], y: [1.3; 3] };
    let (dx, dy) = rhs_full(&s, &ModelParams::cone()).unwrap();
    assert!(dx.iter().all(|v| *v == dx[0]) && dy.iter().all(|v| *v == dy[0]));
}

fn admissible_full() -> impl Strategy<Value = (FullState, ModelParams)> {
    (0.2f64..2.0, 0.2f64..2.0, 0.2f64..2.0, 2.5f64..5.0, 2.5f64..5.0, 2.5f64..5.0).prop_map(|(x1, x2, x3, y1, y2, y3)| {
        (FullState { x: [x1, x2, x3], y: [y1, y2, y3] }, ModelParams::new(-1.0, 4.0))
    })
}

proptest! {
    #[test]
    fn rhs_full_is_the_hamiltonian_gradient((s, p) in admissible_full()) {
        prop_assume!(eval_lambda(&s.y, &p) < -1e-3);
        let (dx, dy) = rhs_full(&s, &p).unwrap();
        let h = |st: &FullState| hamiltonian(st, &p).unwrap();
        for i in 0..3 {
            let e = 1e-6;
            let (mut sp, mut sm) = (s, s);
            sp.y[i] += e;
            sm.y[i] -= e;
            let dh_dy = (h(&sp) - h(&sm)) / (2.0 * e);
            let (mut sp, mut sm) = (s, s);
            sp.x[i] += e;
            sm.x[i] -= e;
            let dh_dx = (h(&sp) - h(&sm)) / (2.0 * e);
            prop_assert!((dx[i] - dh_dy).abs() <= 1e-6 * (1.0 + dx[i].abs()));
            prop_assert!((dy[i] + dh_dx).abs() <= 1e-6 * (1.0 + dy[i].abs()));
        }
    }

    #[test]
    fn rhs_u1_is_the_restriction_of_rhs_full(x1 in 0.1f64..3.0, x2 in 0.1f64..3.0, a in 0.5f64..4.0, b in 2.1f64..5.0) {
        let p = ModelParams::new(-1.0, 4.0);
        let f = eval_f(a, b, &p).0;
        prop_assume!(f > 1e-3);
        let r = rhs_u1(&[x1, x2, a, b], &p).unwrap();
        let full = FullState { x: [x1, x1, x2], y: [a, a, b] };
        let (dx, dy) = rhs_full(&full, &p).unwrap();
        let want = [dx[0], dx[2], dy[0], dy[2]];
        for k in 0..4 {
            // the cubic terms in the numerators cancel, so rounding scales with them
            let terms = 1.0 + want[k].abs() + a.max(b).powi(3) / f.sqrt();
            prop_assert!((r[k] - want[k]).abs() <= 1e-14 * terms);
        }
    }

    #[test]
    fn metric_roundtrip(y1 in 2.5f64..6.0, y2 in 2.5f64..6.0, y3 in 2.5f64..6.0) {
        let p = ModelParams::new(-1.0, 4.0);
        let lam = eval_lambda(&[y1, y2, y3], &p);
        prop_assume!(lam < -1e-2);
        // x on the zero set of H: 2 sqrt(x1 x2 x3) = sqrt(-Lambda).
        let g = ((-lam).sqrt() / 2.0).powf(2.0 / 3.0);
        let s = FullState { x: [g * 1.1, g / 1.1, g], y: [y1, y2, y3] };
        let m = match metric_from_halfflat(&s, &p) {
            Ok(m) => m,
            Err(_) => return Ok(()),
        };
        let back = halfflat_from_metric(&m, &p).unwrap().state;
        for i in 0..3 {
            prop_assert!((back.x[i] - s.x[i]).abs() <= 1e-10 * s.x[i].abs().max(1.0));
            prop_assert!((back.y[i] - s.y[i]).abs() <= 1e-10 * s.y[i].abs().max(1.0));
        }
    }

    #[test]
    fn normalization_puts_states_on_arc_length(a in 0.5f64..4.0, b in 2.1f64..5.0, da in 0.1f64..3.0, db in 0.1f64..3.0) {
        let p = ModelParams::new(-1.0, 4.0);
        let f = eval_f(a, b, &p).0;
        prop_assume!(f > 1e-6);
        let u = U1State { a, b, da, db, param: Param::AEqualsS }.normalized(&p).unwrap();
        prop_assert!((2.0 * u.da * u.da * u.db - f.sqrt()).abs() <= 1e-12 * f.sqrt());
        prop_assert!(hamiltonian_u1(&u, &p).unwrap().abs() <= 1e-12 * f.sqrt());
        prop_assert!((u.db / u.da - db / da).abs() <= 1e-12 * (db / da));
    }
}
