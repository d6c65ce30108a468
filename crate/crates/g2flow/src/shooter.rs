//! Critical AC solutions of the circle families: backward extension of AC ends to the
//! gamma curves, bisection in c and in beta, and closure extraction at the singular orbit.

use crate::classifier::{ac_backward_margin, death_margin, DEFAULT_CUSHION};
use crate::error::{G2Error, Result};
use crate::flow::{integrate, integrate_observed, Budget, FlowState, Formulation, RunSpec, Seed, StopEvent, StopKind, Trajectory};
use crate::invariants::{eval_f, gcd, ModelParams, U1State};
use crate::ode::Tolerances;
use crate::seeds::{ac_auto_switch, ac_problem, ac_state, kmn_problem, kmn_state};
use crate::series::{solve_singular_ivp, SeriesSolution};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// The curves gamma1 = {b = mn r0^3} and
/// gamma2 = {k a = (b^2 - m^2 n^2 r0^6) / sqrt((b + m^2 r0^3)(b + n^2 r0^3)), b > mn r0^3}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaCurve {
    pub m: u32,
    pub n: u32,
    pub r0: f64,
    pub k: f64,
}

impl GammaCurve {
    pub fn new(m: u32, n: u32, r0: f64, k: f64) -> Result<Self> {
        if m == 0 || n == 0 || gcd(m, n) != 1 {
            return Err(G2Error::Constraint(format!("(m, n) = ({m}, {n}) must be coprime positive integers")));
        }
        if !(r0 > 0.0) {
            return Err(G2Error::Constraint(format!("r0 must be positive, got {r0}")));
        }
        if !(k > 1.0 && k < 2.0) {
            return Err(G2Error::Constraint(format!("k must lie in (1, 2), got {k}")));
        }
        Ok(GammaCurve { m, n, r0, k })
    }

    /// Height mn r0^3 of gamma1 and of the corner.
    pub fn b0(&self) -> f64 {
        (self.m * self.n) as f64 * self.r0.powi(3)
    }

    pub fn params(&self) -> ModelParams {
        ModelParams::kmn(self.m, self.n, self.r0).expect("validated gamma curve")
    }

    /// Signed distances (b - b0, k a - gamma2(b)); both positive inside the backward region.
    pub fn distances(&self, a: f64, b: f64) -> (f64, f64) {
        let r3 = self.r0.powi(3);
        let (mf, nf) = (self.m as f64, self.n as f64);
        let b0 = self.b0();
        let den = ((b + mf * mf * r3) * (b + nf * nf * r3)).sqrt();
        (b - b0, self.k * a - (b * b - b0 * b0) / den)
    }

    /// Default corner radii (in a and in b).
    pub fn corner_eps(&self) -> (f64, f64) {
        let r3 = self.r0.powi(3);
        (1e-5 * r3, 1e-5 * r3)
    }
}

/// Result of the gamma hit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaHit {
    pub gamma1: f64,
    pub gamma2: f64,
    pub corner: bool,
}

pub fn gamma_hit_test(a: f64, b: f64, gamma: &GammaCurve) -> GammaHit {
    let (d1, d2) = gamma.distances(a, b);
    let (ea, eb) = gamma.corner_eps();
    GammaHit { gamma1: d1, gamma2: d2, corner: a.abs() <= ea && d1.abs() <= eb }
}

/// Where a backward run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hit {
    Gamma1,
    Gamma2,
    Corner,
}

/// Shooting settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootOptions {
    pub k: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Relative bracket width for the bisection in c.
    pub c_tol: f64,
    /// Relative bracket width for the bisection in beta.
    pub beta_tol: f64,
    /// Scan exponents: c = 2^j for j in c_scan.
    pub c_scan: (i32, i32),
    /// Scan exponents: beta = 2^j for j in beta_scan.
    pub beta_scan: (i32, i32),
    pub ac_order: f64,
    /// Fixed switch point for the AC series; chosen from the tail estimate when absent.
    pub ac_switch: Option<f64>,
    /// Smallest a reached by backward runs, relative to r0^2.
    pub a_min: f64,
    /// Closure fit window in a, relative to r0^2.
    pub closure_window: (f64, f64),
    pub closure_tol: f64,
    pub max_span: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            k: 1.5,
            rtol: 1e-12,
            atol: 1e-15,
            c_tol: 1e-13,
            beta_tol: 1e-11,
            c_scan: (-10, 60),
            beta_scan: (-10, 10),
            ac_order: 45.0,
            ac_switch: None,
            a_min: 1e-9,
            closure_window: (2e-3, 5e-2),
            closure_tol: 1e-4,
            max_span: 1e7,
        }
    }
}

impl ShootOptions {
    fn tol(&self) -> Tolerances {
        Tolerances { rtol: self.rtol, atol: self.atol, ..Tolerances::default() }
    }
}

/// AC end series and its switch point.
pub fn ac_seed(params: &ModelParams, c: f64, opts: &ShootOptions) -> Result<(SeriesSolution, f64, U1State)> {
    let sol = solve_singular_ivp(&ac_problem(params, c, opts.ac_order))?;
    let tsw = opts.ac_switch.unwrap_or_else(|| ac_auto_switch(&sol, params, c, 1e-15));
    let u = ac_state(&sol, tsw)?;
    Ok((sol, tsw, u))
}

/// Integrates an AC end backward in the a-parametrized form until it meets gamma1,
/// gamma2 or the corner; `a_outputs` adds dense samples at the given values of a.
pub fn extend_ac_backward(
    gamma: &GammaCurve,
    c: f64,
    opts: &ShootOptions,
    a_outputs: &[f64],
    stop_at_corner: bool,
) -> Result<(Trajectory, Hit)> {
    if !(c > 0.0) {
        return Err(G2Error::Seed(format!("backward extension needs c > 0, got {c}")));
    }
    let params = gamma.params();
    let (_, tsw, u) = ac_seed(&params, c, opts)?;
    if ac_backward_margin(&u, &params, 0.0) <= 0.0 {
        return Err(G2Error::RegionExit(format!(
            "AC seed at T = {tsw} is not in the backward region (b - a = {:e}, da - db = {:e})",
            u.b - u.a,
            u.da - u.db
        )));
    }
    let r2 = gamma.r0 * gamma.r0;
    let mut spec = RunSpec::new(Formulation::AParam, Seed { start: u.a, t: tsw, state: FlowState::U1(u) });
    spec.end = Some(opts.a_min * r2);
    spec.direction = -1.0;
    spec.tol = opts.tol();
    spec.budget = Budget { max_span: u.a, max_steps: 2_000_000 };
    spec.stops = vec![StopEvent::HitsGamma1 { gamma: *gamma }, StopEvent::HitsGamma2 { gamma: *gamma }];
    if stop_at_corner {
        let (ea, eb) = gamma.corner_eps();
        spec.stops.push(StopEvent::HitsCorner { gamma: *gamma, eps_a: ea, eps_b: eb });
    }
    let mut outs: Vec<f64> = a_outputs.iter().cloned().filter(|a| *a < u.a).collect();
    outs.sort_by(|x, y| y.partial_cmp(x).unwrap());
    spec.outputs = outs;
    let mut exit: Option<String> = None;
    let traj = integrate_observed(&spec, &params, |s, _t, st| {
        if let FlowState::U1(v) = st {
            if !(v.b > v.a && v.db > 0.0 && v.db < 1.0) {
                exit = Some(format!("backward region left at a = {s}: b = {}, db/da = {}", v.b, v.db));
                return false;
            }
        }
        true
    })?;
    if let Some(e) = exit {
        return Err(G2Error::RegionExit(e));
    }
    let hit = match traj.terminal {
        StopKind::HitsGamma1 => Hit::Gamma1,
        StopKind::HitsGamma2 => Hit::Gamma2,
        StopKind::HitsCorner => Hit::Corner,
        StopKind::BudgetExhausted => Hit::Corner,
        other => {
            return Err(G2Error::RegionExit(format!("backward run ended with {other:?} before reaching a gamma curve")))
        }
    };
    Ok((traj, hit))
}

/// One evaluation in a scan or bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketStep {
    pub value: f64,
    pub outcome: String,
}

/// Smooth-closure data recovered near the singular orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureFit {
    /// beta from the b-slope (b - b0)/a^2 -> sqrt(mn)(m+n) / (2 beta^3 r0^3).
    pub beta: f64,
    /// beta from da/dt -> r0^2 beta.
    pub beta_velocity: f64,
    /// Fitted a^2 coefficient of b - b0 (a constant offset is fitted alongside).
    pub b_slope: f64,
    /// Relative mismatch between the two estimates.
    pub residual: f64,
    pub samples: usize,
}

/// Result of a bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootResult {
    pub quantity: String,
    pub critical_value: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
    pub scan: Vec<BracketStep>,
    pub history: Vec<BracketStep>,
    pub closure: Option<ClosureFit>,
}

fn lsq(rows: &[(f64, Vec<f64>)]) -> Result<DVector<f64>> {
    let n = rows.len();
    let m = rows[0].1.len();
    let a = DMatrix::from_fn(n, m, |i, j| rows[i].1[j]);
    let y = DVector::from_iterator(n, rows.iter().map(|r| r.0));
    a.svd(true, true).solve(&y, 1e-15).map_err(|e| G2Error::Closure(e.to_string()))
}

/// Fits the closure template near a = 0 on samples with a in `window` (absolute).
pub fn closure_extract_beta(
    traj: &Trajectory,
    m: u32,
    n: u32,
    r0: f64,
    window: (f64, f64),
    tol: f64,
) -> Result<ClosureFit> {
    let params = ModelParams::kmn(m, n, r0)?;
    let (mf, nf) = (m as f64, n as f64);
    let r3 = r0.powi(3);
    let b0 = mf * nf * r3;
    let mut pts = vec![];
    for s in &traj.samples {
        let u = match s.state.u1() {
            Some(u) => u,
            None => continue,
        };
        if !(u.a >= window.0 && u.a <= window.1) || !(u.da > 0.0) {
            continue;
        }
        let mu = u.db / u.da;
        let f = eval_f(u.a, u.b, &params).0;
        if !(f > 0.0) || !(mu > 0.0) {
            continue;
        }
        let dat = (f.sqrt() / (2.0 * mu)).cbrt();
        pts.push((u.a, u.b, dat));
    }
    if pts.len() < 8 {
        return Err(G2Error::Closure(format!("only {} samples in the closure window {window:?}", pts.len())));
    }
    let scale = window.1;
    let deg = 5;
    let rows_b: Vec<(f64, Vec<f64>)> =
        pts.iter().map(|(a, b, _)| (b - b0, (0..deg).map(|j| (a / scale).powi(2 * j as i32)).collect())).collect();
    let rows_v: Vec<(f64, Vec<f64>)> =
        pts.iter().map(|(a, _, v)| (*v, (0..deg - 1).map(|j| (a / scale).powi(2 * j as i32)).collect())).collect();
    let kb = lsq(&rows_b)?[1] / (scale * scale);
    let v0 = lsq(&rows_v)?[0];
    if !(kb > 0.0) {
        return Err(G2Error::Closure(format!("fitted (b - b0)/a^2 limit {kb} is not positive")));
    }
    let beta = ((mf * nf).sqrt() * (mf + nf) / (2.0 * kb * r3)).cbrt();
    let beta_velocity = v0 / (r0 * r0);
    let residual = (beta - beta_velocity).abs() / beta;
    let fit = ClosureFit { beta, beta_velocity, b_slope: kb, residual, samples: pts.len() };
    if residual > tol {
        return Err(G2Error::Closure(format!(
            "closure estimates disagree: beta = {beta}, beta from da/dt = {beta_velocity} (residual {residual:e})"
        )));
    }
    Ok(fit)
}

fn hit_name(h: &Result<Hit>) -> String {
    match h {
        Ok(Hit::Gamma1) => "gamma1".into(),
        Ok(Hit::Gamma2) => "gamma2".into(),
        Ok(Hit::Corner) => "corner".into(),
        Err(e) => format!("error: {e}"),
    }
}

/// Bisection over c for the switch from gamma1 to gamma2 hits.
pub fn find_c_ac(m: u32, n: u32, r0: f64, opts: &ShootOptions) -> Result<ShootResult> {
    let gamma = GammaCurve::new(m, n, r0, opts.k)?;
    let classify = |c: f64| extend_ac_backward(&gamma, c, opts, &[], false).map(|x| x.1);
    let js: Vec<i32> = (opts.c_scan.0..=opts.c_scan.1).collect();
    let hits: Vec<(f64, Result<Hit>)> = js
        .par_iter()
        .map(|j| {
            let c = 2f64.powi(*j);
            (c, classify(c))
        })
        .collect();
    let scan: Vec<BracketStep> = hits.iter().map(|(c, h)| BracketStep { value: *c, outcome: hit_name(h) }).collect();
    let mut bracket = None;
    for w in hits.windows(2) {
        if matches!(w[0].1, Ok(Hit::Gamma1)) && matches!(w[1].1, Ok(Hit::Gamma2)) {
            bracket = Some((w[0].0, w[1].0));
            break;
        }
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| G2Error::Bracket {
        detail: format!("no gamma1/gamma2 sign change for c in 2^{}..2^{}", opts.c_scan.0, opts.c_scan.1),
        scan: scan.iter().map(|s| (s.value, s.outcome.clone())).collect(),
    })?;
    let mut history = vec![];
    let mut iterations = 0;
    let mut corner = None;
    while hi / lo - 1.0 > opts.c_tol && iterations < 200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let h = classify(mid);
        history.push(BracketStep { value: mid, outcome: hit_name(&h) });
        iterations += 1;
        match h? {
            Hit::Gamma1 => lo = mid,
            Hit::Gamma2 => hi = mid,
            Hit::Corner => {
                corner = Some(mid);
                break;
            }
        }
    }
    let critical_value = corner.unwrap_or((lo * hi).sqrt());
    let closure = critical_closure(&gamma, critical_value, opts).ok();
    Ok(ShootResult {
        quantity: "c_ac".into(),
        critical_value,
        bracket: (lo, hi),
        iterations,
        scan,
        history,
        closure,
    })
}

/// Geometric grid of a values across the closure window.
pub fn closure_outputs(r0: f64, window: (f64, f64), count: usize) -> Vec<f64> {
    let r2 = r0 * r0;
    let (lo, hi) = (window.0 * r2, window.1 * r2);
    (0..count).map(|i| hi * (lo / hi).powf(i as f64 / (count - 1) as f64)).collect()
}

/// Closure fit on the backward trajectory at c.
pub fn critical_closure(gamma: &GammaCurve, c: f64, opts: &ShootOptions) -> Result<ClosureFit> {
    let outs = closure_outputs(gamma.r0, opts.closure_window, 200);
    let (traj, _) = extend_ac_backward(gamma, c, opts, &outs, false)?;
    let r2 = gamma.r0 * gamma.r0;
    let win = (opts.closure_window.0 * r2 * (1.0 - 1e-12), opts.closure_window.1 * r2 * (1.0 + 1e-12));
    let sub = Trajectory { samples: traj.samples.iter().filter(|s| outs.contains(&s.param)).copied().collect(), ..traj };
    closure_extract_beta(&sub, gamma.m, gamma.n, gamma.r0, win, opts.closure_tol)
}

/// Circle-family series with a switch point where its tail is below 1e-14 relative.
pub fn kmn_seed_auto(m: u32, n: u32, r0: f64, beta: f64) -> Result<(SeriesSolution, f64, U1State)> {
    let sol = solve_singular_ivp(&kmn_problem(m, n, r0, beta, crate::seeds::DEFAULT_INTEGER_ORDER))?;
    let sc = sol.base.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut t = 0.1 * r0;
    for _ in 0..60 {
        if sol.tail_estimate(t) <= 1e-14 * sc {
            break;
        }
        t *= 0.8;
    }
    let u = kmn_state(&sol, m, n, r0, beta, t)?;
    Ok((sol, t, u))
}

/// Forward outcome of the circle family at beta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardSide {
    /// Crossed a = b with da > db.
    Alc,
    /// Entered the death quadrant, lost F > 0 or blew up.
    Incomplete,
}

/// Integrates the circle family forward until it crosses a = b or becomes incomplete.
pub fn forward_side(m: u32, n: u32, r0: f64, beta: f64, opts: &ShootOptions) -> Result<(ForwardSide, Trajectory)> {
    let params = ModelParams::kmn(m, n, r0)?;
    let (_, t0, u) = kmn_seed_auto(m, n, r0, beta)?;
    let mut spec = RunSpec::new(Formulation::ArcLengthU1, Seed { start: t0, t: t0, state: FlowState::U1(u) });
    spec.tol = opts.tol();
    spec.budget = Budget { max_span: opts.max_span, max_steps: 4_000_000 };
    spec.stops = vec![
        StopEvent::FVanishes { eps: 1e-10 },
        StopEvent::BlowUp { factor: 1e12 },
        StopEvent::EntersDeathChamber { cushion: DEFAULT_CUSHION },
    ];
    let mut crossed = false;
    let traj = integrate_observed(&spec, &params, |_s, _t, st| {
        if let FlowState::U1(v) = st {
            if v.a > v.b && v.da > v.db {
                crossed = true;
                return false;
            }
            if death_margin(v, &params, DEFAULT_CUSHION) > 0.0 {
                return false;
            }
        }
        true
    })?;
    if crossed {
        return Ok((ForwardSide::Alc, traj));
    }
    match traj.terminal {
        StopKind::EntersDeathChamber | StopKind::FVanishes | StopKind::BlowUp | StopKind::Observer => {
            Ok((ForwardSide::Incomplete, traj))
        }
        other => Err(G2Error::Convergence(format!("forward run at beta = {beta} undecided ({other:?})"))),
    }
}

/// Forward bisection over beta between incomplete (below) and ALC (above).
pub fn find_beta_ac(m: u32, n: u32, r0: f64, opts: &ShootOptions) -> Result<ShootResult> {
    if m == 0 || n == 0 || gcd(m, n) != 1 {
        return Err(G2Error::Constraint(format!("(m, n) = ({m}, {n}) must be coprime positive integers")));
    }
    let side = |b: f64| forward_side(m, n, r0, b, opts).map(|x| x.0);
    let name = |r: &Result<ForwardSide>| match r {
        Ok(ForwardSide::Alc) => "ALC".to_string(),
        Ok(ForwardSide::Incomplete) => "incomplete".to_string(),
        Err(e) => format!("error: {e}"),
    };
    let js: Vec<i32> = (opts.beta_scan.0..=opts.beta_scan.1).collect();
    let res: Vec<(f64, Result<ForwardSide>)> = js
        .par_iter()
        .map(|j| {
            let b = 2f64.powi(*j);
            (b, side(b))
        })
        .collect();
    let scan: Vec<BracketStep> = res.iter().map(|(b, r)| BracketStep { value: *b, outcome: name(r) }).collect();
    let mut bracket = None;
    for w in res.windows(2) {
        if matches!(w[0].1, Ok(ForwardSide::Incomplete)) && matches!(w[1].1, Ok(ForwardSide::Alc)) {
            bracket = Some((w[0].0, w[1].0));
            break;
        }
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| G2Error::Bracket {
        detail: format!("no incomplete/ALC change for beta in 2^{}..2^{}", opts.beta_scan.0, opts.beta_scan.1),
        scan: scan.iter().map(|s| (s.value, s.outcome.clone())).collect(),
    })?;
    let mut history = vec![];
    let mut iterations = 0;
    while hi / lo - 1.0 > opts.beta_tol && iterations < 200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let r = side(mid);
        history.push(BracketStep { value: mid, outcome: name(&r) });
        match r? {
            ForwardSide::Incomplete => lo = mid,
            ForwardSide::Alc => hi = mid,
        }
        iterations += 1;
    }
    Ok(ShootResult {
        quantity: "beta_ac".into(),
        critical_value: (lo * hi).sqrt(),
        bracket: (lo, hi),
        iterations,
        scan,
        history,
        closure: None,
    })
}

/// Both critical values with the cross-validation residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcReport {
    pub m: u32,
    pub n: u32,
    pub r0: f64,
    pub k: f64,
    pub beta_forward: ShootResult,
    pub c_backward: ShootResult,
    pub beta_closure: Option<f64>,
    pub cross_residual: Option<f64>,
}

pub fn find_ac(m: u32, n: u32, r0: f64, opts: &ShootOptions) -> Result<AcReport> {
    let (bf, cb) = rayon::join(|| find_beta_ac(m, n, r0, opts), || find_c_ac(m, n, r0, opts));
    let (bf, cb) = (bf?, cb?);
    let beta_closure = cb.closure.map(|c| c.beta);
    let cross_residual = beta_closure.map(|b| (bf.critical_value - b).abs() / bf.critical_value);
    Ok(AcReport { m, n, r0, k: opts.k, beta_forward: bf, c_backward: cb, beta_closure, cross_residual })
}

/// The critical backward trajectory at c, sampled across the whole run.
pub fn critical_trajectory(gamma: &GammaCurve, c: f64, opts: &ShootOptions) -> Result<Trajectory> {
    let (traj, _) = extend_ac_backward(gamma, c, opts, &[], false)?;
    Ok(traj)
}

/// Forward arc-length run of an AC end from its switch point.
pub fn integrate_ac_forward(params: &ModelParams, c: f64, t_end: f64, opts: &ShootOptions) -> Result<Trajectory> {
    let (_, tsw, u) = ac_seed(params, c, opts)?;
    let mut spec = RunSpec::new(Formulation::ArcLengthU1, Seed { start: tsw, t: tsw, state: FlowState::U1(u) });
    spec.end = Some(t_end);
    spec.tol = opts.tol();
    integrate(&spec, params)
}
