use g2flow::series::*;
use g2flow::G2Error;
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

/// t y' = y - y^2 + t with y(0) = 1.
fn scalar_model<'a>(order: f64) -> IvpProblem<'a> {
    IvpProblem {
        dim: 1,
        generators: vec![1.0],
        y0: vec![1.0],
        rhs: Box::new(|ctx: &Ctx, v: &[Series]| Ok(vec![v[0].sub(&v[0].mul(&v[0])).add(&ctx.var(0))])),
        free: vec![],
        order,
        headroom: 0.0,
        repair: None,
        direction: Direction::FromZeroForward,
    }
}

/// Exact coefficients of the scalar model: (k + 1) c_k = [k = 1] - sum_{i=1}^{k-1} c_i c_{k-i}.
fn scalar_oracle(n: usize) -> Vec<BigRational> {
    let mut c = vec![BigRational::from_integer(BigInt::from(0)); n + 1];
    for k in 1..=n {
        let mut acc = if k == 1 { BigRational::from_integer(BigInt::from(1)) } else { c[0].clone() };
        for i in 1..k {
            acc -= &c[i] * &c[k - i];
        }
        c[k] = acc / BigRational::from_integer(BigInt::from(k as i64 + 1));
    }
    c
}

fn to_f64(r: &BigRational) -> f64 {
    let n: f64 = r.numer().to_string().parse().unwrap();
    let d: f64 = r.denom().to_string().parse().unwrap();
    n / d
}

#[test]
fn scalar_model_matches_exact_rationals() {
    let sol = solve_singular_ivp(&scalar_model(12.0)).unwrap();
    let exact = scalar_oracle(12);
    assert_eq!(exact[1], BigRational::new(BigInt::from(1), BigInt::from(2)));
    assert_eq!(exact[2], BigRational::new(BigInt::from(-1), BigInt::from(12)));
    assert_eq!(sol.coefficients.len(), 13);
    for k in 1..=12u32 {
        let got = sol.coefficient(&[k]).unwrap()[0];
        let want = to_f64(&exact[k as usize]);
        assert!((got - want).abs() <= 1e-14 * want.abs().max(1e-300), "k = {k}: {got} vs {want}");
    }
    assert_eq!(sol.jacobian_eigenvalues, vec![(-1.0, 0.0)]);
}

#[test]
fn scalar_model_residual_order() {
    let p = scalar_model(10.0);
    let sol = solve_singular_ivp(&p).unwrap();
    let res = residual_series(&p, &sol, 2.0).unwrap();
    let r1 = residual_norm(&res, 0.1);
    let r2 = residual_norm(&res, 0.05);
    let slope = (r1 / r2).log2();
    assert!((slope - 11.0).abs() < 0.2, "slope {slope}");
}

#[test]
fn unrepaired_resonance_is_reported() {
    let p = IvpProblem {
        dim: 1,
        generators: vec![1.0],
        y0: vec![1.0],
        rhs: Box::new(|ctx: &Ctx, v: &[Series]| {
            let t = ctx.var(0);
            Ok(vec![v[0].add_const(-1.0).scale(2.0).add(&t.mul(&t))])
        }),
        free: vec![],
        order: 4.0,
        headroom: 0.0,
        repair: None,
        direction: Direction::FromZeroForward,
    };
    match solve_singular_ivp(&p) {
        Err(G2Error::Resonance { index, .. }) => assert_eq!(index, vec![2]),
        other => panic!("expected a resonance error, got {other:?}"),
    }
}

#[test]
fn free_data_fills_a_positive_eigendirection() {
    let p = IvpProblem {
        dim: 1,
        generators: vec![2.0],
        y0: vec![0.0],
        rhs: Box::new(|_: &Ctx, v: &[Series]| Ok(vec![v[0].scale(2.0).add(&v[0].mul(&v[0]))])),
        free: vec![(vec![1], vec![0.5])],
        order: 10.0,
        headroom: 0.0,
        repair: None,
        direction: Direction::FromZeroForward,
    };
    let sol = solve_singular_ivp(&p).unwrap();
    let t: f64 = 0.3;
    let exact = 0.5 * t * t / (1.0 - 0.25 * t * t);
    assert!((sol.eval(t)[0] - exact).abs() < 1e-8);
    assert!((sol.coefficient(&[2]).unwrap()[0] - 0.125).abs() < 1e-15);
}

#[test]
fn base_point_must_be_stationary() {
    let mut p = scalar_model(4.0);
    p.y0 = vec![2.0];
    assert!(matches!(solve_singular_ivp(&p), Err(G2Error::Constraint(_))));
}

#[test]
fn non_analytic_power_is_rejected() {
    let lat = Lattice::new(&[1.0], 4.0);
    let t = Ctx { lat: lat.clone() }.var(0);
    assert!(matches!(t.powf(0.5), Err(G2Error::NonAnalytic(_))));
    assert!(matches!(t.add_const(1.0).shift_down(&[1], 1e-12), Err(G2Error::NonAnalytic(_))));
}

#[test]
fn lattice_is_sorted_by_weight() {
    let lat = Lattice::new(&[3.0, 9.5], 20.0);
    assert!(lat.weight.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(lat.position(&[0, 0]), Some(0));
    assert!(lat.position(&[1, 2]).is_none());
    assert!(lat.position(&[0, 2]).is_some());
    assert_eq!(lat.len(), 12);
}

#[test]
fn series_arithmetic_matches_binomial_expansions() {
    let lat = Lattice::new(&[1.0], 8.0);
    let ctx = Ctx { lat: lat.clone() };
    let one_minus_t = ctx.var(0).scale(-1.0).add_const(1.0);
    let geo = one_minus_t.recip().unwrap();
    assert!(geo.c.iter().all(|c| (c - 1.0).abs() < 1e-15));
    let root = ctx.var(0).add_const(1.0).sqrt().unwrap();
    let mut binom = 1.0;
    for k in 0..=8 {
        assert!((root.c[k] - binom).abs() < 1e-15, "k = {k}");
        binom *= (0.5 - k as f64) / (k as f64 + 1.0);
    }
    let sq = root.mul(&root);
    assert!((sq.c[0] - 1.0).abs() < 1e-15 && (sq.c[1] - 1.0).abs() < 1e-15);
    assert!(sq.c[2..].iter().all(|c| c.abs() < 1e-15));
    let up = geo.shift_up(&[2]);
    assert_eq!(up.c[1], 0.0);
    let back = up.shift_down(&[2], 1e-15).unwrap();
    assert!(back.c[..7].iter().all(|c| (c - 1.0).abs() < 1e-15));
}

proptest! {
    #[test]
    fn scalar_series_solves_the_ode(t in 0.01f64..0.15) {
        let sol = solve_singular_ivp(&scalar_model(12.0)).unwrap();
        let y = sol.eval(t)[0];
        let ty = sol.eval_euler(t)[0];
        let resid = ty - (y - y * y + t);
        prop_assert!(resid.abs() < 1e-15 + t.powi(13));
        prop_assert!(sol.tail_estimate(t) < 1e-9);
    }

    #[test]
    fn real_power_inverts(a in 0.2f64..5.0, b in -1.0f64..1.0, r in -2.5f64..2.5) {
        let lat = Lattice::new(&[1.0, 2.5], 10.0);
        let ctx = Ctx { lat: lat.clone() };
        let s = ctx.var(0).scale(b).add(&ctx.var(1)).add_const(a);
        let back = s.powf(r).unwrap().powf(1.0 / r).unwrap();
        for (x, y) in back.c.iter().zip(&s.c) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()) * (1.0 + 1.0 / a).powi(6));
        }
    }
}
