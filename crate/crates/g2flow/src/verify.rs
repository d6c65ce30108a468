//! Acceptance suite: closed-form constants, conservation and exactness checks, the
//! trichotomy ladders, chamber persistence, critical-value cross-validation, the curve
//! bundle, ALC asymptotics, series residual orders and scaling equivariance.

use crate::classifier::{
    alc_margin, classify_trajectory, death_margin, ClassifyOptions, Verdict, VerdictKind,
};
use crate::error::Result;
use crate::figure::{figure1, FigureOptions};
use crate::flow::{integrate, integrate_observed, Budget, FlowState, Formulation, RunSpec, Seed, StopEvent, StopKind};
use crate::invariants::{
    eval_f, eval_lambda, eval_lambda_factored, eval_lambda_grouped, hamiltonian_u1, nu0, nu_inf, su2cubed_curve_residual,
    ModelParams, Param, U1State, CONE_C,
};
use crate::ode::Tolerances;
use crate::seeds::{
    ac_problem, cs_linearization, cs_linearization_eigen, cs_problem, delta_su2_problem, k11_problem, kmn_problem,
    seed_cs_end, seed_delta_su2, seed_kmn, seed_su2_factor, su2_factor_problem, SeedFamily, SeedSpec,
};
use crate::series::{residual_norm, residual_series, solve_singular_ivp, IvpProblem};
use crate::shooter::{find_beta_ac, find_c_ac, kmn_seed_auto, ShootOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// Settings of the suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    /// Closed-form checks only.
    pub quick: bool,
    /// Seed of the random chamber states.
    pub seed: u64,
    /// Random states per chamber.
    pub states_per_chamber: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { quick: false, seed: 1234, states_per_chamber: 1000 }
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub measured: String,
    pub expected: String,
    pub seconds: f64,
    pub limit_seconds: f64,
}

impl CheckResult {
    /// Single report line.
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<34} measured {} | expected {} | {:.3}s (limit {}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.expected,
            self.seconds,
            self.limit_seconds
        )
    }
}

fn finish(id: u32, name: &str, limit: f64, t0: Instant, res: Result<(bool, String)>, expected: &str) -> CheckResult {
    let seconds = t0.elapsed().as_secs_f64();
    let (ok, measured) = match res {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult {
        id,
        name: name.into(),
        passed: ok && seconds <= limit,
        measured,
        expected: expected.into(),
        seconds,
        limit_seconds: limit,
    }
}

fn rel(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs().max(f64::MIN_POSITIVE)
}

/// Algebraic identities: the F example, the two Lambda forms, the cone velocity and H on the cone.
pub fn check_identities() -> CheckResult {
    let t0 = Instant::now();
    let res = (|| -> Result<(bool, String)> {
        let f = eval_f(1.0, 3.0, &ModelParams::new(-1.0, 4.0)).0;
        let pq = ModelParams::new(0.7, -0.7);
        let y = [1.3, 2.1, 1.7];
        let lam_gap = (eval_lambda_grouped(&y, &pq) - eval_lambda_factored(&y, &pq)).abs();
        let c = CONE_C;
        let cone = U1State { a: c, b: c, da: 3.0 * c, db: 3.0 * c, param: Param::ArcLengthT };
        let h = hamiltonian_u1(&cone, &ModelParams::cone())?;
        let dy = 3.0 * c - 1.0 / 108f64.sqrt();
        let ok = f == 87.0 && lam_gap < 1e-12 && h.abs() < 1e-15 && dy.abs() < 1e-15;
        Ok((ok, format!("F = {f}, |grouped - factored| = {lam_gap:.1e}, H(cone) = {h:.1e}, da(cone) - 1/sqrt(108) = {dy:.1e}")))
    })();
    finish(0, "algebraic identities", 1.0, t0, res, "F = 87, gaps <= 1e-12")
}

/// Criterion 1: the two cone exponents.
pub fn check_exponents() -> CheckResult {
    let t0 = Instant::now();
    let eig = cs_linearization_eigen();
    let n0 = eig.eigenvalues[3];
    let ninf = -eig.eigenvalues[0];
    let e0 = (n0 - (145f64.sqrt() - 7.0) / 2.0).abs();
    let einf = (ninf - (145f64.sqrt() + 7.0) / 2.0).abs();
    let quad = (n0 * n0 + 7.0 * n0 - 24.0).abs();
    let res = Ok((e0 <= 1e-12 && einf <= 1e-12 && quad <= 1e-12 && (nu0() - n0).abs() <= 1e-12, format!("nu0 = {n0:.15}, nu_inf = {ninf:.15}, errors {e0:.1e}, {einf:.1e}")));
    finish(1, "exponents nu0, nu_inf", 1e-3, t0, res, "(sqrt(145) -/+ 7)/2 to 1e-12")
}

/// Criterion 2: spectrum and eigenvectors of the cone linearization.
pub fn check_eigen() -> CheckResult {
    let t0 = Instant::now();
    let eig = cs_linearization_eigen();
    let (n0, ni) = (nu0(), nu_inf());
    let want = [-ni, -6.0, -1.0, n0];
    let val_err = eig.eigenvalues.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let printed: [[f64; 4]; 4] = [
        [4.0, 4.0, 3.0, 3.0],
        [2.0, 2.0, -1.0, -1.0],
        [3.0 + n0, -6.0 - 2.0 * n0, -3.0, 6.0],
        [4.0 + n0, -8.0 - 2.0 * n0, 3.0, -6.0],
    ];
    let l = cs_linearization();
    let mut vec_err = 0.0f64;
    let mut pairing = vec![];
    for v in &printed {
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let vh: Vec<f64> = v.iter().map(|x| x / nv).collect();
        let (mut best, mut idx) = (f64::INFINITY, 0);
        for (k, e) in eig.eigenvectors.iter().enumerate() {
            let d: f64 = vh.iter().zip(e).map(|(a, b)| a * b).sum();
            let perp = (1.0 - d * d).max(0.0).sqrt();
            if perp < best {
                best = perp;
                idx = k;
            }
        }
        let lv = l * nalgebra::Vector4::from_row_slice(v);
        let lam = eig.eigenvalues[idx];
        let resid = (lv - nalgebra::Vector4::from_row_slice(v) * lam).amax() / nv;
        vec_err = vec_err.max(best).max(resid);
        pairing.push(format!("{:.4}", lam));
    }
    let res = Ok((
        val_err <= 1e-10 && vec_err <= 1e-10 && eig.max_imag == 0.0,
        format!("eigenvalue error {val_err:.1e}, eigenvector error {vec_err:.1e}, printed vectors pair with [{}]", pairing.join(", ")),
    ));
    finish(2, "linearization eigen-structure", 1e-3, t0, res, "{-1, -6, -nu_inf, nu0} and printed vectors to 1e-10")
}

/// Integrates an arc-length or full seed forward until a has grown by `factor`.
fn grow_run(
    state: FlowState,
    t: f64,
    params: &ModelParams,
    factor: f64,
    tol: Tolerances,
) -> Result<crate::flow::Trajectory> {
    let form = match state {
        FlowState::U1(_) => Formulation::ArcLengthU1,
        FlowState::Full(_) => Formulation::Full,
    };
    let a_of = |s: &FlowState| match s {
        FlowState::U1(u) => u.a,
        FlowState::Full(f) => f.y[0],
    };
    let a0 = a_of(&state);
    let mut spec = RunSpec::new(form, Seed { start: t, t, state });
    spec.tol = tol;
    spec.budget = Budget { max_span: 1e7, max_steps: 4_000_000 };
    spec.stops = vec![StopEvent::FVanishes { eps: 1e-10 }, StopEvent::BlowUp { factor: 1e15 }];
    integrate_observed(&spec, params, |_s, _t, st| a_of(st) < factor * a0)
}

fn tight() -> Tolerances {
    Tolerances { rtol: 1e-12, atol: 1e-14, ..Tolerances::default() }
}

/// Orbital volume sqrt(-Lambda) of a sample.
fn orbital_volume(s: &FlowState, params: &ModelParams) -> f64 {
    match s {
        FlowState::U1(u) => eval_f(u.a, u.b, params).0.max(0.0).sqrt(),
        FlowState::Full(f) => (-eval_lambda(&f.y, params)).max(0.0).sqrt(),
    }
}

/// Criterion 3: Hamiltonian drift over a 10^3-fold growth of a.
pub fn check_hamiltonian() -> CheckResult {
    let t0 = Instant::now();
    let res = (|| -> Result<(bool, String)> {
        let r = 0.5;
        let al = 1.0 / (64.0 * (2.0 + r));
        let b7 = seed_delta_su2(1.0, [al, al, r * al], 0.1, 10.0)?;
        let d7 = seed_su2_factor(1.0, [1.0, 1.0, 1.0], 0.1, 10.0)?;
        let cs = seed_cs_end(1.0, 0.1, crate::seeds::DEFAULT_CS_ORDER)?;
        let k12 = seed_kmn(1, 2, 1.0, 4.0, 0.05, 10.0)?;
        let runs: Vec<(&str, FlowState, ModelParams)> = vec![
            ("B7", FlowState::Full(b7.1), ModelParams::delta_su2(1.0)?),
            ("D7", FlowState::Full(d7.1), ModelParams::su2_factor(1.0)?),
            ("CS", FlowState::U1(cs.1), ModelParams::cone()),
            ("K12", FlowState::U1(k12.1), ModelParams::kmn(1, 2, 1.0)?),
        ];
        let ts = [0.1, 0.1, 0.1, 0.05];
        let mut ok = true;
        let mut parts = vec![];
        for ((name, st, pr), t) in runs.into_iter().zip(ts) {
            let s0 = Instant::now();
            let traj = grow_run(st, t, &pr, 1e3, tight())?;
            let vol = traj.samples.iter().map(|s| orbital_volume(&s.state, &pr)).fold(0.0, f64::max);
            let a_first = traj.samples[0].state.u1().map(|u| u.a).unwrap_or(f64::NAN);
            let a_last = traj.last().state.u1().map(|u| u.a).unwrap_or(f64::NAN);
            let ratio = traj.max_abs_h() / vol;
            let grew = a_last / a_first >= 999.0;
            ok &= ratio <= 1e-7 && grew && s0.elapsed().as_secs_f64() < 10.0;
            parts.push(format!("{name} {ratio:.1e} (growth {:.0})", a_last / a_first));
        }
        Ok((ok, parts.join(", ")))
    })();
    finish(3, "Hamiltonian conservation", 40.0, t0, res, "max|H| / volume <= 1e-7 each")
}

/// Criterion 4: the cone solution stays exact.
pub fn check_cone() -> CheckResult {
    let t0 = Instant::now();
    let res = (|| -> Result<(bool, String)> {
        let c = CONE_C;
        let u = U1State { a: c, b: c, da: 3.0 * c, db: 3.0 * c, param: Param::ArcLengthT };
        let mut spec = RunSpec::new(Formulation::ArcLengthU1, Seed { start: 1.0, t: 1.0, state: FlowState::U1(u) });
        spec.end = Some(100.0);
        spec.tol = tight();
        spec.outputs = (1..=99).map(|i| 1.0 + i as f64).collect();
        let traj = integrate(&spec, &ModelParams::cone())?;
        let (mut ratio, mut shape) = (0.0f64, 0.0f64);
        for s in &traj.samples {
            let v = s.state.u1().expect("U(1) state");
            ratio = ratio.max((v.a / v.b - 1.0).abs());
            shape = shape.max((54.0 * v.a / (3f64.sqrt() * s.t.powi(3)) - 1.0).abs());
        }
        let end = traj.last().t;
        Ok((ratio <= 1e-8 && shape <= 1e-7 && (end - 100.0).abs() < 1e-9, format!("|a/b - 1| = {ratio:.1e}, |54a/(sqrt3 t^3) - 1| = {shape:.1e}")))
    })();
    finish(4, "cone exactness", 1.0, t0, res, "<= 1e-8 and <= 1e-7 on [1, 100]")
}

/// Criterion 5: the equal-alpha seed stays on the quartic curve.
pub fn check_quartic() -> CheckResult {
    let t0 = Instant::now();
    let res = (|| -> Result<(bool, String)> {
        let al = 1.0 / 192.0;
        let (_, st) = seed_delta_su2(1.0, [al, al, al], 0.1, 10.0)?;
        let params = ModelParams::delta_su2(1.0)?;
        let traj = grow_run(FlowState::Full(st), 0.1, &params, 1e2, tight())?;
        let (p, q) = (params.p, params.q);
        let mut worst = 0.0f64;
        let mut growth = 1.0;
        let y0 = st.y[0];
        for s in &traj.samples {
            if let FlowState::Full(f) = s.state {
                for i in 0..3 {
                    let (x, y) = (f.x[i], f.y[i]);
                    let scale = 4.0 * x.abs().powi(3)
                        + 3.0 * y.powi(4)
                        + 4.0 * (p - q).abs() * y.abs().powi(3)
                        + 6.0 * (p * q).abs() * y * y
                        + p * p * q * q;
                    worst = worst.max(su2cubed_curve_residual(x, y, &params).abs() / scale);
                }
                growth = f.y[0] / y0;
            }
        }
        Ok((worst <= 1e-8 && growth >= 99.0, format!("relative residual {worst:.1e} over growth {growth:.0}")))
    })();
    finish(5, "quartic curve of the SU(2)^3 seed", 5.0, t0, res, "<= 1e-8 over 10^2 growth in y")
}

/// Ladder point: label, seed and expected tag.
fn ladders() -> Vec<(String, SeedSpec, &'static str)> {
    let grid = [0.25, 0.5, 0.75, 0.9, 1.0, 1.1, 1.5, 2.0, 4.0];
    let side = |x: f64| {
        if x < 1.0 {
            "ALC"
        } else if x == 1.0 {
            "AC"
        } else {
            "incomplete"
        }
    };
    let mut out = vec![];
    for r in grid {
        let al = 1.0 / (64.0 * (2.0 + r));
        out.push((
            format!("B7 a3/a1={r}"),
            SeedSpec { family: SeedFamily::DeltaSu2 { r0: 1.0, alpha: [al, al, r * al] }, switch_parameter: 0.1 },
            side(r),
        ));
    }
    for a3 in grid {
        let a1 = (1.0 / a3).sqrt();
        out.push((
            format!("D7 a3={a3}"),
            SeedSpec { family: SeedFamily::Su2Factor { r0: 1.0, alpha: [a1, a1, a3] }, switch_parameter: 0.1 },
            side(a3),
        ));
    }
    for c in [-4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0] {
        let tag = if c > 0.0 {
            "ALC"
        } else if c == 0.0 {
            "AC"
        } else {
            "incomplete"
        };
        out.push((format!("CS c={c}"), SeedSpec { family: SeedFamily::CsEnd { c }, switch_parameter: 0.1 }, tag));
    }
    out
}

/// Criterion 6: the trichotomy ladders. Returns the ALC verdicts for criterion 10.
pub fn check_trichotomy() -> (CheckResult, Vec<(String, Verdict)>) {
    let t0 = Instant::now();
    let opts = ClassifyOptions::default();
    let runs: Vec<(String, &str, Result<Verdict>)> =
        ladders().into_par_iter().map(|(name, spec, want)| (name, want, classify_trajectory(&spec, &opts))).collect();
    let mut bad = vec![];
    let mut alc = vec![];
    for (name, want, v) in runs {
        match v {
            Ok(v) => {
                if v.tag() != want {
                    bad.push(format!("{name}: {} (want {want})", v.tag()));
                }
                if v.tag() == "ALC" {
                    alc.push((name, v));
                }
            }
            Err(e) => bad.push(format!("{name}: error {e}")),
        }
    }
    let measured = if bad.is_empty() { "27/27 verdicts as predicted".to_string() } else { bad.join("; ") };
    let r = finish(6, "trichotomy ladders", 120.0, t0, Ok((bad.is_empty(), measured)), "ALC / AC at alpha equal, alpha3 = 1, c = 0 / incomplete");
    (r, alc)
}

/// Random admissible parameters with pq <= 0.
fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    let p: f64 = rng.gen_range(-1.0..1.0);
    let q: f64 = rng.gen_range(0.0..1.0);
    if p > 0.0 {
        ModelParams::new(p, -q)
    } else {
        ModelParams::new(p, q)
    }
}

fn random_state(rng: &mut ChaCha8Rng, params: &ModelParams, death: bool) -> Option<U1State> {
    let floor = params.chamber_floor();
    let b = floor + rng.gen_range(0.05..2.0);
    let db: f64 = rng.gen_range(0.1..1.0);
    let (a, da) = if death {
        let r = rng.gen_range(0.3..0.97);
        (b * r, db * r * rng.gen_range(0.05..0.95))
    } else {
        (b * rng.gen_range(1.02..2.0), db * rng.gen_range(1.02..2.0))
    };
    let u = U1State { a, b, da, db, param: Param::ArcLengthT }.normalized(params).ok()?;
    let inside = if death { death_margin(&u, params, 1e-6) } else { alc_margin(&u, params, 1e-6) };
    (inside > 0.0).then_some(u)
}

/// Evolves a state and counts samples outside the chamber while da, db, F > 0.
fn count_exits(u: U1State, params: &ModelParams, death: bool) -> Result<usize> {
    let mut spec = RunSpec::new(Formulation::ArcLengthU1, Seed { start: 0.0, t: 0.0, state: FlowState::U1(u) });
    spec.tol = Tolerances { rtol: 1e-10, atol: 1e-13, ..Tolerances::default() };
    spec.budget = Budget { max_span: 50.0 * (1.0 + u.b.cbrt()), max_steps: 20_000 };
    spec.stops = vec![StopEvent::FVanishes { eps: 1e-10 }, StopEvent::BlowUp { factor: 1e10 }];
    let mut exits = 0;
    integrate_observed(&spec, params, |_s, _t, st| {
        if let FlowState::U1(v) = st {
            let f = eval_f(v.a, v.b, params).0;
            if v.da > 0.0 && v.db > 0.0 && f > 0.0 {
                let m = if death { death_margin(v, params, 0.0) } else { alc_margin(v, params, 0.0) };
                if m <= 0.0 {
                    exits += 1;
                }
            }
        }
        true
    })?;
    Ok(exits)
}

/// Criterion 7: chamber persistence over random states.
pub fn check_persistence(seed: u64, count: usize) -> CheckResult {
    let t0 = Instant::now();
    let res = (|| -> Result<(bool, String)> {
        let mut parts = vec![];
        let mut ok = true;
        for (k, death) in [false, true].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let mut states = vec![];
            while states.len() < count {
                let params = random_params(&mut rng);
                if let Some(u) = random_state(&mut rng, &params, death) {
                    states.push((u, params));
                }
            }
            let exits: Vec<usize> =
                states.par_iter().map(|(u, p)| count_exits(*u, p, death)).collect::<Result<Vec<_>>>()?;
            let bad = exits.iter().filter(|e| **e > 0).count();
            ok &= bad == 0;
            parts.push(format!("{}: {bad}/{count} trajectories exit", if death { "death_quadrant" } else { "alc_chamber" }));
        }
        Ok((ok, parts.join(", ")))
    })();
    finish(7, "chamber persistence", 60.0, t0, res, "zero exits")
}

/// Criterion 8: forward and backward critical values agree and do not depend on k.
/// Returns the ALC verdicts above the critical value for criterion 10.
pub fn check_cross_validation() -> (CheckResult, Vec<(String, Verdict)>) {
    let t0 = Instant::now();
    let mut alc = vec![];
    let res = (|| -> Result<(bool, String)> {
        let mut ok = true;
        let mut parts = vec![];
        for (m, n) in [(1u32, 1u32), (1, 2), (2, 3)] {
            let fwd = find_beta_ac(m, n, 1.0, &ShootOptions::default())?;
            let beta = fwd.critical_value;
            let mut closures = vec![];
            for k in [1.25, 1.5, 1.75] {
                let opts = ShootOptions { k, ..ShootOptions::default() };
                let back = find_c_ac(m, n, 1.0, &opts)?;
                let b = back.closure.map(|c| c.beta).unwrap_or(f64::NAN);
                closures.push(b);
            }
            let worst = closures.iter().map(|b| rel(*b, beta)).fold(0.0, f64::max);
            let spread = closures.iter().map(|b| rel(*b, closures[1])).fold(0.0, f64::max);
            ok &= worst <= 1e-3 && spread <= 1e-3;
            parts.push(format!("({m},{n}) beta_ac {beta:.10} cross {worst:.1e} k-spread {spread:.1e}"));
            let family = if m == 1 && n == 1 {
                SeedFamily::K11 { r0: 1.0, alpha: 0.0, beta: 2.0 * beta }
            } else {
                SeedFamily::Kmn { m, n, r0: 1.0, beta: 2.0 * beta }
            };
            let (_, tsw, _) = kmn_seed_auto(m, n, 1.0, 2.0 * beta)?;
            let v = classify_trajectory(&SeedSpec { family, switch_parameter: tsw }, &ClassifyOptions::default())?;
            ok &= v.tag() == "ALC";
            alc.push((format!("K({m},{n}) beta=2 beta_ac"), v));
        }
        Ok((ok, parts.join("; ")))
    })();
    (finish(8, "critical-value cross-validation", 600.0, t0, res, "relative 1e-3, k in {1.25, 1.5, 1.75}"), alc)
}

/// Criterion 9: the curve bundle for (m, n) = (1, 2).
pub fn check_figure() -> CheckResult {
    let t0 = Instant::now();
    let res = (|| -> Result<(bool, String)> {
        let fig = figure1(&FigureOptions::default())?;
        let count = |t: &str| fig.curves.iter().filter(|c| c.tag == t).count();
        let (n_alc, n_ac, n_inc) = (count("ALC"), count("AC"), count("incomplete"));
        let alc_cross = fig.curves.iter().filter(|c| c.tag == "ALC").all(|c| c.final_a > c.final_b);
        let inc_term = fig
            .curves
            .iter()
            .filter(|c| c.tag == "incomplete")
            .all(|c| matches!(c.terminal, Some(StopKind::FVanishes) | Some(StopKind::BlowUp)));
        let ok = n_alc >= 2 && n_ac == 1 && n_inc >= 2 && alc_cross && inc_term && fig.curves.len() == n_alc + n_ac + n_inc;
        Ok((ok, format!("{n_alc} ALC, {n_ac} AC, {n_inc} incomplete; ALC end with a > b: {alc_cross}; incomplete end at F = 0 or blow-up: {inc_term}")))
    })();
    finish(9, "curve bundle (1, 2)", 300.0, t0, res, ">= 2 ALC, exactly 1 AC, >= 2 incomplete")
}

/// Criterion 10: ALC asymptotics on the collected verdicts.
pub fn check_alc_asymptotics(verdicts: &[(String, Verdict)]) -> CheckResult {
    let t0 = Instant::now();
    let mut worst_ell = 0.0f64;
    let mut worst_exp = 0.0f64;
    for (_, v) in verdicts {
        if let VerdictKind::Alc { ell, ell_alt, b_exponent } = v.kind {
            worst_ell = worst_ell.max((ell - ell_alt).abs() / ell);
            worst_exp = worst_exp.max((b_exponent - 2.0).abs());
        }
    }
    let ok = !verdicts.is_empty() && worst_ell <= 0.02 && worst_exp <= 0.05;
    let res = Ok((ok, format!("{} verdicts, max ell mismatch {worst_ell:.1e}, max |exponent - 2| {worst_exp:.1e}", verdicts.len())));
    finish(10, "ALC asymptotics", 1.0, t0, res, "ell mismatch <= 2%, |exponent - 2| <= 0.05")
}

/// Least-squares slope of log residual against log parameter over halvings from h0.
pub fn residual_slope(p: &IvpProblem<'_>, h0: f64, halvings: u32) -> Result<(f64, f64)> {
    let sol = solve_singular_ivp(p)?;
    let gmin = p.generators.iter().cloned().fold(f64::INFINITY, f64::min);
    let res = residual_series(p, &sol, 2.0 * gmin)?;
    let pts: Vec<(f64, f64)> = (0..=halvings)
        .map(|k| {
            let h = h0 / 2f64.powi(k as i32);
            (h.ln(), residual_norm(&res, h).ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok((sxy / sxx, p.order + gmin))
}

/// Criterion 11: declared residual orders of each seed family.
pub fn check_residual_orders() -> CheckResult {
    let t0 = Instant::now();
    let res = (|| -> Result<(bool, String)> {
        let r = 0.5;
        let al = 1.0 / (64.0 * (2.0 + r));
        let k12 = ModelParams::kmn(1, 2, 1.0)?;
        let cases: Vec<(&str, IvpProblem<'static>, f64)> = vec![
            ("B7", delta_su2_problem(1.0, [al, al, r * al], 8.0), 0.2),
            ("D7", su2_factor_problem(1.0, [0.8, 1.25, 1.0], 6.0), 0.2),
            ("K11", k11_problem(1.0, 0.3, 1.0, 6.0), 0.2),
            ("K12", kmn_problem(1, 2, 1.0, 1.0, 7.0), 0.2),
            ("CS", cs_problem(1.0, 3.0 * nu0()), 0.2),
            ("AC", ac_problem(&k12, 1.0, 24.0), 0.1),
        ];
        let mut ok = true;
        let mut parts = vec![];
        for (name, p, h0) in &cases {
            let (slope, want) = residual_slope(p, *h0, 4)?;
            ok &= (slope - want).abs() <= 0.2;
            parts.push(format!("{name} {slope:.3}/{want:.3}"));
        }
        Ok((ok, parts.join(", ")))
    })();
    finish(11, "series residual orders", 30.0, t0, res, "slope within 0.2 of N + min generator")
}

/// Criterion 12: rescaling a circle-family trajectory by lambda = 2.
pub fn check_scaling() -> CheckResult {
    let t0 = Instant::now();
    let res = (|| -> Result<(bool, String)> {
        let lam = 2.0;
        let beta = 3.0;
        let ts = 0.05;
        let outs: Vec<f64> = (1..=40).map(|i| 0.25 * i as f64).collect();
        let run = |r0: f64, scale: f64| -> Result<Vec<U1State>> {
            let (_, u) = seed_kmn(1, 2, r0, beta, ts * scale, 10.0)?;
            let params = ModelParams::kmn(1, 2, r0)?;
            let mut spec = RunSpec::new(Formulation::ArcLengthU1, Seed { start: ts * scale, t: ts * scale, state: FlowState::U1(u) });
            spec.end = Some(10.0 * scale);
            spec.tol = Tolerances { rtol: 1e-13, atol: 1e-16, ..Tolerances::default() };
            spec.outputs = outs.iter().map(|t| t * scale).collect();
            let traj = integrate(&spec, &params)?;
            let mut picked: Vec<(f64, U1State)> = traj
                .samples
                .iter()
                .filter(|s| spec.outputs.contains(&s.param))
                .map(|s| (s.param, s.state.u1().expect("U(1) state")))
                .collect();
            picked.dedup_by(|x, y| x.0 == y.0);
            Ok(picked.into_iter().map(|p| p.1).collect())
        };
        let base = run(1.0, 1.0)?;
        let scaled = run(lam, lam)?;
        if base.len() != outs.len() || scaled.len() != outs.len() {
            return Ok((false, format!("sample mismatch ({} vs {})", base.len(), scaled.len())));
        }
        let l3 = lam.powi(3);
        let l2 = lam * lam;
        let mut worst = 0.0f64;
        for (u, v) in base.iter().zip(&scaled) {
            worst = worst.max(rel(v.a, l3 * u.a)).max(rel(v.b, l3 * u.b)).max(rel(v.da, l2 * u.da)).max(rel(v.db, l2 * u.db));
        }
        Ok((worst <= 1e-8, format!("max relative mismatch {worst:.1e} over {} samples", outs.len())))
    })();
    finish(12, "scaling equivariance", 10.0, t0, res, "relative 1e-8")
}

/// Runs the suite; quick mode keeps the closed-form checks.
pub fn run_all(opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut out = vec![check_identities(), check_exponents(), check_eigen()];
    if opts.quick {
        return out;
    }
    out.push(check_hamiltonian());
    out.push(check_cone());
    out.push(check_quartic());
    let (c6, mut alc) = check_trichotomy();
    out.push(c6);
    out.push(check_persistence(opts.seed, opts.states_per_chamber));
    let (c8, alc8) = check_cross_validation();
    alc.extend(alc8);
    out.push(c8);
    out.push(check_figure());
    out.push(check_alc_asymptotics(&alc));
    out.push(check_residual_orders());
    out.push(check_scaling());
    out
}
