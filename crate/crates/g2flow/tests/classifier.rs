use g2flow::classifier::*;
use g2flow::flow::*;
use g2flow::invariants::{eval_f, nu_inf, ModelParams, Param, U1State};
use g2flow::seeds::*;
use proptest::prelude::*;

const CUSHION: f64 = 1e-9;

fn classify(family: SeedFamily, switch_parameter: f64) -> Verdict {
    classify_trajectory(&SeedSpec { family, switch_parameter }, &ClassifyOptions::default()).unwrap()
}

#[test]
fn b7_seed_with_smaller_alpha3_is_in_the_strict_chamber() {
    let al = 1.0 / (64.0 * 2.5);
    let (_, st) = seed_delta_su2(1.0, [al, al, 0.5 * al], 0.1, DEFAULT_INTEGER_ORDER).unwrap();
    let u = st.to_u1(1e-12).unwrap();
    let ch = chamber_membership(&u, &ModelParams::delta_su2(1.0).unwrap(), CUSHION).unwrap();
    assert_eq!(ch.names(), vec!["alc_chamber", "alc_strict"]);
}

#[test]
fn cs_seed_with_negative_c_is_in_the_death_quadrant() {
    let (_, u) = seed_cs_end(-1.0, 0.1, DEFAULT_CS_ORDER).unwrap();
    let ch = chamber_membership(&u, &ModelParams::cone(), CUSHION).unwrap();
    assert_eq!(ch.names(), vec!["death_quadrant"]);
}

#[test]
fn ac_end_with_positive_c_is_in_the_backward_region() {
    let params = ModelParams::new(-1.0, 4.0);
    let s = g2flow::series::solve_singular_ivp(&ac_problem(&params, 1.0, DEFAULT_AC_ORDER)).unwrap();
    let t = ac_auto_switch(&s, &params, 1.0, 1e-10);
    let u = ac_state(&s, t).unwrap();
    // b/a - 1 is of order c T^-nu_inf here, below the default cushion
    let gap = t.powf(-nu_inf());
    assert!(gap < CUSHION);
    let ch = chamber_membership(&u, &params, 0.01 * gap).unwrap();
    assert!(ch.ac_backward && !ch.alc_chamber && !ch.death_quadrant);
}

#[test]
fn chambers_need_the_principal_locus() {
    let u = U1State { a: 1.0, b: 3.0, da: 1.0, db: 1.0, param: Param::ArcLengthT };
    assert!(chamber_membership(&u, &ModelParams::cone(), CUSHION).is_err());
    let u = U1State { a: 1.0, b: 1.0, da: 1.0, db: -1.0, param: Param::ArcLengthT };
    assert!(chamber_membership(&u, &ModelParams::cone(), CUSHION).is_err());
}

#[test]
fn strict_chamber_respects_the_sign_hypothesis() {
    // q < p with q != -p: the strict test is never reported
    let params = ModelParams::new(1.0, 0.5);
    assert!(!alc_strict_applies(&params));
    let u = U1State { a: 10.0, b: 2.0, da: 3.0, db: 1.0, param: Param::ArcLengthT };
    let ch = chamber_membership(&u, &params, CUSHION).unwrap();
    assert!(ch.alc_chamber && !ch.alc_strict);
    assert!(alc_strict_applies(&ModelParams::new(1.0, -1.0)));
    assert!(alc_strict_applies(&ModelParams::new(-1.0, 4.0)));
}

#[test]
fn b7_with_smaller_alpha3_is_alc() {
    let al = 1.0 / (64.0 * 2.5);
    let v = classify(SeedFamily::DeltaSu2 { r0: 1.0, alpha: [al, al, 0.5 * al] }, 0.1);
    match v.kind {
        VerdictKind::Alc { ell, ell_alt, .. } => assert!((ell - ell_alt).abs() <= 0.02 * ell),
        other => panic!("expected ALC, got {other:?}"),
    }
    assert!(v.diagnostics.iter().all(|d| d.mean_curvature > 0.0));
}

#[test]
fn d7_at_unit_alphas_is_ac() {
    let v = classify(SeedFamily::Su2Factor { r0: 1.0, alpha: [1.0; 3] }, 0.1);
    match v.kind {
        VerdictKind::Ac { rate } => assert!((rate + 3.0).abs() <= 0.5, "rate {rate}"),
        other => panic!("expected AC, got {other:?}"),
    }
}

#[test]
fn cs_verdicts_follow_the_sign_of_c() {
    assert_eq!(classify(SeedFamily::CsEnd { c: 1.0 }, 0.1).tag(), "ALC");
    let v = classify(SeedFamily::CsEnd { c: -1.0 }, 0.1);
    match &v.kind {
        VerdictKind::Incomplete { event, .. } => assert!(event.is_some()),
        other => panic!("expected incomplete, got {other:?}"),
    }
    assert_eq!(classify(SeedFamily::CsEnd { c: 0.0 }, 0.1).tag(), "AC");
}

#[test]
fn asymmetric_k11_is_indeterminate() {
    let v = classify(SeedFamily::K11 { r0: 1.0, alpha: 0.3, beta: 1.0 }, 0.05);
    assert_eq!(v.tag(), "indeterminate");
}

#[test]
fn nominal_rates() {
    assert!((nominal_ac_rate(&ModelParams::cone()) + nu_inf()).abs() < 1e-15);
    assert_eq!(nominal_ac_rate(&ModelParams::new(-1.0, 4.0)), -3.0);
}

/// Trajectory sampled from the asymptotic model a = t^3/18, b = ell t^2/6.
fn model_trajectory(ell: f64) -> Trajectory {
    let samples = (0..400)
        .map(|k| {
            let t = 10.0 * 1.02f64.powi(k);
            let u = U1State { a: t.powi(3) / 18.0, b: ell * t * t / 6.0, da: t * t / 6.0, db: ell * t / 3.0, param: Param::ArcLengthT };
            Sample { param: t, t, state: FlowState::U1(u) }
        })
        .collect();
    Trajectory {
        param: Param::ArcLengthT,
        formulation: Formulation::ArcLengthU1,
        samples,
        events: vec![],
        params: ModelParams::cone(),
        terminal: StopKind::BudgetExhausted,
        steps: 400,
    }
}

#[test]
fn ell_of_the_asymptotic_model() {
    let e = extract_alc_ell(&model_trajectory(2.0)).unwrap();
    assert!((e.ell - 2.0).abs() < 1e-6 && (e.ell_alt - 2.0).abs() < 1e-6);
    assert!((e.b_exponent - 2.0).abs() < 1e-9);
}

#[test]
fn ell_extraction_needs_a_tail() {
    let mut tr = model_trajectory(2.0);
    tr.samples.truncate(3);
    assert!(extract_alc_ell(&tr).is_err());
}

#[test]
fn ratio_monitors_at_alpha_zero() {
    let params = ModelParams::new(-1.0, 4.0);
    for (a, b, da, db) in [(5.0, 4.5, 2.0, 1.0), (5.0, 4.5, 1.0, 2.0), (6.0, 5.0, 1.3, 1.2)] {
        let u = U1State { a, b, da, db, param: Param::ArcLengthT };
        let m = monitor_ratios(&u, 0.0, &params).unwrap();
        assert!((m.r - (a - b * da / db)).abs() < 1e-12);
        assert_eq!(m.r < 0.0, a * db - da * b < 0.0);
        let s0 = -8.0 * (a - b) * (a + b) * (b * b + params.p * params.q);
        assert!((m.s - s0).abs() < 1e-10 * s0.abs());
        assert!((m.p - b / a).abs() < 1e-15 && (m.q - db / da).abs() < 1e-15);
    }
    let u = U1State { a: 1.0, b: 1.0, da: 0.0, db: 1.0, param: Param::ArcLengthT };
    assert!(monitor_ratios(&u, 0.0, &params).is_err());
}

#[test]
fn s_half_on_a_late_alc_tail() {
    let beta = 4.0;
    let v = classify(SeedFamily::Kmn { m: 1, n: 2, r0: 1.0, beta }, 0.05);
    assert_eq!(v.tag(), "ALC");
    let params = ModelParams::kmn(1, 2, 1.0).unwrap();
    let last = v.diagnostics.last().unwrap();
    let u = U1State { a: last.a, b: last.b, da: last.da, db: last.db, param: Param::ArcLengthT };
    let m = monitor_ratios(&u, 0.5, &params).unwrap();
    let approx = 7.0 * u.b.powi(4) + 8.0 * (params.q - params.p) * u.a * u.a * u.b;
    assert!(m.s > 0.0);
    assert!((m.s / approx - 1.0).abs() < 0.05, "S = {:e}, approximation {approx:e}", m.s);
}

fn run_checked(u: U1State, params: &ModelParams, span: f64) -> Trajectory {
    let mut spec = RunSpec::new(Formulation::ArcLengthU1, Seed { start: 1.0, t: 1.0, state: FlowState::U1(u) });
    spec.end = Some(1.0 + span);
    spec.stops = vec![StopEvent::FVanishes { eps: 1e-10 }, StopEvent::BlowUp { factor: 1e8 }];
    integrate(&spec, params).unwrap()
}

fn admissible(s: &Sample, params: &ModelParams) -> Option<U1State> {
    let u = s.state.u1()?;
    (u.da > 0.0 && u.db > 0.0 && eval_f(u.a, u.b, params).0 > 0.0).then_some(u)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn alc_chamber_persists(p in -1.0f64..0.0, q in 0.0f64..1.0, b in 1.05f64..3.0, ra in 1.05f64..3.0, rd in 1.05f64..3.0) {
        let params = ModelParams::new(p, q);
        let fl = params.chamber_floor();
        let b = b * fl.max(0.1);
        let raw = U1State { a: ra * b, b, da: rd, db: 1.0, param: Param::ArcLengthT };
        let Ok(u) = raw.normalized(&params) else { return Ok(()) };
        prop_assume!(chamber_membership(&u, &params, CUSHION).unwrap().alc_chamber);
        for s in &run_checked(u, &params, 200.0).samples {
            if let Some(v) = admissible(s, &params) {
                prop_assert!(alc_margin(&v, &params, 0.0) > 0.0, "exit at t = {}", s.t);
            }
        }
    }

    #[test]
    fn death_quadrant_persists(p in -1.0f64..0.0, q in 0.0f64..1.0, a in 1.05f64..3.0, rb in 1.05f64..3.0, rl in 0.2f64..0.95) {
        let params = ModelParams::new(p, q);
        let fl = params.chamber_floor();
        let a = a * fl.max(0.1);
        let b = rb * a;
        let raw = U1State { a, b, da: rl * a / b, db: 1.0, param: Param::ArcLengthT };
        let Ok(u) = raw.normalized(&params) else { return Ok(()) };
        prop_assume!(chamber_membership(&u, &params, CUSHION).unwrap().death_quadrant);
        for s in &run_checked(u, &params, 200.0).samples {
            if let Some(v) = admissible(s, &params) {
                prop_assert!(death_margin(&v, &params, 0.0) > 0.0, "exit at t = {}", s.t);
            }
        }
    }
}
