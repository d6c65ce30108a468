//! Chamber tests, ratio monitors and the global classification of U(1) trajectories
//! into ALC, AC, incomplete or indeterminate.

use crate::error::{G2Error, Result};
use crate::flow::{
    integrate, integrate_observed, Budget, EventRecord, FlowState, Formulation, RunSpec, Seed, StopEvent, StopKind,
    Trajectory,
};
use crate::invariants::{eval_f, hamiltonian_u1, mean_curvature_u1, nu_inf, ModelParams, Param, U1State, CONE_C};
use crate::ode::Tolerances;
use crate::seeds::{SeedFamily, SeedSpec};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Default relative cushion of the strict chamber inequalities.
pub const DEFAULT_CUSHION: f64 = 1e-9;

fn rel(u: f64, v: f64) -> f64 {
    (u - v) / (u.abs() + v.abs() + f64::MIN_POSITIVE)
}

/// Whether the strict ALC chamber is meaningful for these constants (q >= p, or q = -p <= 0).
pub fn alc_strict_applies(params: &ModelParams) -> bool {
    params.q >= params.p || (params.q == -params.p && params.p >= 0.0)
}

fn on_locus(u: &U1State, params: &ModelParams) -> bool {
    u.da > 0.0 && u.db > 0.0 && eval_f(u.a, u.b, params).0 > 0.0
}

/// Margin of da > db, a > b > floor: positive inside, by at least the cushion.
pub fn alc_margin(u: &U1State, params: &ModelParams, cushion: f64) -> f64 {
    if !on_locus(u, params) {
        return -1.0;
    }
    let fl = params.chamber_floor();
    rel(u.da, u.db).min(rel(u.a, u.b)).min(rel(u.b, fl)) - cushion
}

/// Margin of the strict condition a db - da b < 0 on top of the ALC chamber.
pub fn alc_strict_margin(u: &U1State, params: &ModelParams, cushion: f64) -> f64 {
    if !alc_strict_applies(params) {
        return -1.0;
    }
    alc_margin(u, params, cushion).min(rel(u.da * u.b, u.a * u.db) - cushion)
}

/// Margin of 0 < da/db < a/b < 1 with b above the floor.
pub fn death_margin(u: &U1State, params: &ModelParams, cushion: f64) -> f64 {
    if !on_locus(u, params) {
        return -1.0;
    }
    let fl = params.chamber_floor();
    rel(u.a * u.db, u.da * u.b).min(rel(u.b, u.a)).min(rel(u.b, fl)).min(rel(u.a, 0.0)) - cushion
}

/// Margin of the backward AC region b > a, da > db > 0 with a, F > 0.
pub fn ac_backward_margin(u: &U1State, params: &ModelParams, cushion: f64) -> f64 {
    if !on_locus(u, params) {
        return -1.0;
    }
    rel(u.b, u.a).min(rel(u.da, u.db)).min(rel(u.a, 0.0)) - cushion
}

/// Chamber membership flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Chambers {
    pub alc_chamber: bool,
    pub alc_strict: bool,
    pub death_quadrant: bool,
    pub ac_backward: bool,
}

impl Chambers {
    pub fn names(&self) -> Vec<&'static str> {
        let mut v = vec![];
        if self.alc_chamber {
            v.push("alc_chamber");
        }
        if self.alc_strict {
            v.push("alc_strict");
        }
        if self.death_quadrant {
            v.push("death_quadrant");
        }
        if self.ac_backward {
            v.push("ac_backward");
        }
        v
    }
}

/// Strict chamber membership of a state with the given cushion.
pub fn chamber_membership(u: &U1State, params: &ModelParams, cushion: f64) -> Result<Chambers> {
    let f = eval_f(u.a, u.b, params).0;
    if !(u.da > 0.0 && u.db > 0.0 && f > 0.0) {
        return Err(G2Error::Domain(format!(
            "chamber tests need da, db, F > 0 (da = {}, db = {}, F = {f})",
            u.da, u.db
        )));
    }
    Ok(Chambers {
        alc_chamber: alc_margin(u, params, cushion) > 0.0,
        alc_strict: alc_strict_margin(u, params, cushion) > 0.0,
        death_quadrant: death_margin(u, params, cushion) > 0.0,
        ac_backward: ac_backward_margin(u, params, cushion) > 0.0,
    })
}

/// Ratios P = b^(1+alpha)/a, Q = b^alpha/lambda, R = (1+alpha)a - b lambda and
/// S = alpha(2F + aF_a) - (2bF_b - aF_a), with lambda = da/db.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioMonitors {
    pub alpha: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "S")]
    pub s: f64,
}

pub fn monitor_ratios(u: &U1State, alpha: f64, params: &ModelParams) -> Result<RatioMonitors> {
    if !(u.da > 0.0 && u.db > 0.0) {
        return Err(G2Error::Domain("ratio monitors need da, db > 0".into()));
    }
    let lam = u.da / u.db;
    let (f, fa, fb) = eval_f(u.a, u.b, params);
    Ok(RatioMonitors {
        alpha,
        p: u.b.powf(1.0 + alpha) / u.a,
        q: u.b.powf(alpha) / lam,
        r: (1.0 + alpha) * u.a - u.b * lam,
        s: alpha * (2.0 * f + u.a * fa) - (2.0 * u.b * fb - u.a * fa),
    })
}

/// Diagnostic snapshot along a classified trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorSample {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub da: f64,
    pub db: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub mean_curvature: f64,
    pub ratios: RatioMonitors,
    pub chambers: Chambers,
}

fn monitor_sample(t: f64, u: &U1State, params: &ModelParams, alpha: f64, cushion: f64) -> Option<MonitorSample> {
    Some(MonitorSample {
        t,
        a: u.a,
        b: u.b,
        da: u.da,
        db: u.db,
        h: hamiltonian_u1(u, params).ok()?,
        mean_curvature: mean_curvature_u1(u, params).ok()?,
        ratios: monitor_ratios(u, alpha, params).ok()?,
        chambers: chamber_membership(u, params, cushion).ok()?,
    })
}

/// Outcome of a classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum VerdictKind {
    #[serde(rename = "ALC")]
    Alc { ell: f64, ell_alt: f64, b_exponent: f64 },
    #[serde(rename = "AC")]
    Ac { rate: f64 },
    #[serde(rename = "Incomplete")]
    Incomplete { reason: String, event: Option<EventRecord> },
    #[serde(rename = "Indeterminate")]
    Indeterminate { budget_used: f64, detail: String },
}

/// Verdict with monitor traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub diagnostics: Vec<MonitorSample>,
    pub t_final: f64,
    pub steps: usize,
}

impl Verdict {
    pub fn tag(&self) -> &'static str {
        match self.kind {
            VerdictKind::Alc { .. } => "ALC",
            VerdictKind::Ac { .. } => "AC",
            VerdictKind::Incomplete { .. } => "incomplete",
            VerdictKind::Indeterminate { .. } => "indeterminate",
        }
    }
}

/// Classification settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub cushion: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_span: f64,
    pub max_steps: usize,
    /// Threshold on |b/a - 1| for AC detection.
    pub ac_threshold: f64,
    /// Largest cone defect used in the AC decay-rate fit.
    pub ac_defect_max: f64,
    /// Number of doublings of t used for the ALC limit extraction.
    pub ell_doublings: u32,
    pub ell_tolerance: f64,
    pub confirm_blowup: bool,
    pub monitor_alpha: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            cushion: DEFAULT_CUSHION,
            rtol: 1e-12,
            atol: 1e-14,
            max_span: 1e6,
            max_steps: 2_000_000,
            ac_threshold: 1e-4,
            ac_defect_max: 0.05,
            ell_doublings: 16,
            ell_tolerance: 0.02,
            confirm_blowup: false,
            monitor_alpha: 0.5,
        }
    }
}

impl ClassifyOptions {
    fn tol(&self) -> Tolerances {
        Tolerances { rtol: self.rtol, atol: self.atol, ..Tolerances::default() }
    }
}

/// Defect da / (3 C^(1/3) a^(2/3)) - 1 from the unit cone; zero on every cone.
pub fn cone_defect(u: &U1State) -> f64 {
    u.da / (3.0 * CONE_C.cbrt() * u.a.cbrt().powi(2)) - 1.0
}

/// Nominal AC decay rate of the cone defect for these constants.
pub fn nominal_ac_rate(params: &ModelParams) -> f64 {
    if params.p == 0.0 && params.q == 0.0 {
        -nu_inf()
    } else {
        -3.0
    }
}

/// Exponent nu of rho ~ K t^nu (1 + kappa/t), fitted by least squares in log rho.
fn fit_decay_rate(pts: &[(f64, f64)]) -> f64 {
    let pts: Vec<&(f64, f64)> = pts.iter().filter(|p| p.1 > 0.0).collect();
    let n = pts.len();
    if n < 4 {
        return f64::NAN;
    }
    let tmax = pts[n - 1].0;
    let m = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => pts[i].0.ln(),
        _ => tmax / pts[i].0,
    });
    let y = DVector::from_iterator(n, pts.iter().map(|p| p.1.ln()));
    match m.svd(true, true).solve(&y, 1e-14) {
        Ok(c) => c[1],
        Err(_) => f64::NAN,
    }
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    None,
    Alc { t_in: f64 },
}

/// Classifies the forward evolution of a seed.
pub fn classify_trajectory(seed: &SeedSpec, opts: &ClassifyOptions) -> Result<Verdict> {
    let seeded = seed.build()?;
    if let SeedFamily::K11 { alpha, .. } = seed.family {
        if alpha != 0.0 {
            let mut spec = RunSpec::new(Formulation::Full, Seed { start: seeded.t, t: seeded.t, state: seeded.state });
            spec.budget = Budget { max_span: opts.max_span.min(1e3), max_steps: opts.max_steps };
            spec.tol = opts.tol();
            spec.stops = vec![StopEvent::FVanishes { eps: 1e-10 }, StopEvent::BlowUp { factor: 1e12 }];
            let traj = integrate(&spec, &seeded.params)?;
            return Ok(Verdict {
                kind: VerdictKind::Indeterminate {
                    budget_used: traj.last().t - seeded.t,
                    detail: "no classification criteria without U(1) symmetry".into(),
                },
                diagnostics: vec![],
                t_final: traj.last().t,
                steps: traj.steps,
            });
        }
    }
    let u = seeded.state.u1().ok_or_else(|| G2Error::Seed("seed is not U(1)-invariant".into()))?;
    classify_state(&u, seeded.t, &seeded.params, opts)
}

/// Classifies the forward evolution of an arc-length U(1) state at arc length t.
pub fn classify_state(u: &U1State, t: f64, params: &ModelParams, opts: &ClassifyOptions) -> Result<Verdict> {
    let mut spec = RunSpec::new(Formulation::ArcLengthU1, Seed { start: t, t, state: FlowState::U1(*u) });
    spec.budget = Budget { max_span: opts.max_span, max_steps: opts.max_steps };
    spec.tol = opts.tol();
    spec.stops = vec![StopEvent::FVanishes { eps: 1e-10 }, StopEvent::BlowUp { factor: 1e12 }];
    if !opts.confirm_blowup {
        spec.stops.push(StopEvent::EntersDeathChamber { cushion: opts.cushion });
    }
    let cushion = opts.cushion;
    let mut diagnostics = vec![];
    let mut last_diag = f64::NEG_INFINITY;
    let mut pending = Pending::None;
    let mut alc_commit: Option<(f64, U1State)> = None;
    let mut ac_zone: Vec<(f64, f64)> = vec![];
    let mut ac_rate: Option<f64> = None;
    let mut death_seen: Option<(f64, U1State)> = None;
    let nominal = nominal_ac_rate(params);
    let thr = opts.ac_threshold;
    let traj = integrate_observed(&spec, params, |_s, tt, st| {
        let u = match st {
            FlowState::U1(u) => *u,
            _ => return true,
        };
        if tt >= 1.25 * last_diag || last_diag <= 0.0 {
            if let Some(m) = monitor_sample(tt, &u, params, opts.monitor_alpha, cushion) {
                diagnostics.push(m);
                last_diag = tt;
            }
        }
        if death_seen.is_none() && death_margin(&u, params, cushion) > 0.0 {
            death_seen = Some((tt, u));
            if !opts.confirm_blowup {
                return false;
            }
        }
        if alc_strict_margin(&u, params, cushion) > 0.0 {
            match pending {
                Pending::None => pending = Pending::Alc { t_in: tt },
                Pending::Alc { t_in } => {
                    if tt >= 2.0 * t_in {
                        alc_commit = Some((tt, u));
                        return false;
                    }
                }
            }
        } else {
            pending = Pending::None;
        }
        let e = (u.b / u.a - 1.0).abs();
        let rho = cone_defect(&u).abs();
        if e <= thr && rho <= opts.ac_defect_max && u.a > 0.0 {
            ac_zone.push((tt, rho));
            let (t0, _) = ac_zone[0];
            if tt >= 2.0 * t0 {
                let i = ac_zone.partition_point(|p| p.0 < 0.5 * tt);
                let (_, ri) = ac_zone[i.min(ac_zone.len() - 1)];
                let flat = ri < 1e-10 && rho < 1e-10;
                let rate = if flat { nominal } else { fit_decay_rate(&ac_zone[i.min(ac_zone.len() - 1)..]) };
                if flat || (rate - nominal).abs() <= 0.5 {
                    ac_rate = Some(rate);
                    return false;
                }
            }
        } else {
            ac_zone.clear();
        }
        true
    })?;
    let t_final = traj.last().t;
    if let Some(rate) = ac_rate {
        return Ok(Verdict { kind: VerdictKind::Ac { rate }, diagnostics, t_final, steps: traj.steps });
    }
    if let Some((tc, uc)) = alc_commit {
        return finish_alc(tc, uc, params, opts, diagnostics, traj.steps);
    }
    let ev = traj.events.iter().rev().find(|e| e.kind != StopKind::EntersAlcChamber).copied();
    let terminal_reason = match traj.terminal {
        StopKind::EntersDeathChamber => Some("death_quadrant"),
        StopKind::FVanishes => Some("F_vanishes"),
        StopKind::BlowUp => Some("blow_up"),
        _ => None,
    };
    let kind = match (death_seen, terminal_reason) {
        (Some((td, ud)), _) if !opts.confirm_blowup => VerdictKind::Incomplete {
            reason: "death_quadrant".into(),
            event: Some(EventRecord { kind: StopKind::EntersDeathChamber, param: td, t: td, state: FlowState::U1(ud) }),
        },
        (Some(_), Some(r)) => VerdictKind::Incomplete { reason: format!("death_quadrant, confirmed by {r}"), event: ev },
        (None, Some(r)) => VerdictKind::Incomplete { reason: r.into(), event: ev },
        _ => VerdictKind::Indeterminate {
            budget_used: t_final - t,
            detail: format!("run ended with {:?} before a chamber decision", traj.terminal),
        },
    };
    Ok(Verdict { kind, diagnostics, t_final, steps: traj.steps })
}

fn finish_alc(
    tc: f64,
    uc: U1State,
    params: &ModelParams,
    opts: &ClassifyOptions,
    mut diagnostics: Vec<MonitorSample>,
    steps0: usize,
) -> Result<Verdict> {
    let n = opts.ell_doublings;
    let t_end = tc * 2f64.powi(n as i32);
    let mut spec = RunSpec::new(Formulation::ArcLengthU1, Seed { start: tc, t: tc, state: FlowState::U1(uc) });
    spec.end = Some(t_end);
    spec.tol = opts.tol();
    spec.budget = Budget { max_span: t_end - tc, max_steps: opts.max_steps };
    spec.stops = vec![StopEvent::FVanishes { eps: 1e-10 }];
    let traj = integrate(&spec, params)?;
    let steps = steps0 + traj.steps;
    let t_final = traj.last().t;
    for s in &traj.samples {
        if let FlowState::U1(u) = s.state {
            if diagnostics.last().map_or(true, |d| s.t >= 1.25 * d.t) {
                if let Some(m) = monitor_sample(s.t, &u, params, opts.monitor_alpha, opts.cushion) {
                    diagnostics.push(m);
                }
            }
        }
    }
    if traj.terminal != StopKind::BudgetExhausted || (t_final - t_end).abs() > 1e-9 * t_end {
        return Ok(Verdict {
            kind: VerdictKind::Indeterminate {
                budget_used: t_final,
                detail: format!("ALC tail run stopped early with {:?}", traj.terminal),
            },
            diagnostics,
            t_final,
            steps,
        });
    }
    let kind = match extract_alc_ell(&traj) {
        Ok(x) => {
            if (x.ell - x.ell_alt).abs() / x.ell.abs() <= opts.ell_tolerance {
                VerdictKind::Alc { ell: x.ell, ell_alt: x.ell_alt, b_exponent: x.b_exponent }
            } else {
                VerdictKind::Indeterminate {
                    budget_used: t_final,
                    detail: format!("ell estimates disagree: {} vs {}", x.ell, x.ell_alt),
                }
            }
        }
        Err(e) => VerdictKind::Indeterminate { budget_used: t_final, detail: e.to_string() },
    };
    Ok(Verdict { kind, diagnostics, t_final, steps })
}

/// ALC limits extracted from a trajectory tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllEstimate {
    /// Limit of 6b / t^2.
    pub ell: f64,
    /// Limit of (2b^3 / (3a^2))^(1/3).
    pub ell_alt: f64,
    /// Log-log slope of b over the last doubling of t.
    pub b_exponent: f64,
}

/// Least-squares extrapolation of e(t) = L + c1/t + c2/t^2 to t = infinity.
fn extrapolate(ts: &[f64], es: &[f64]) -> f64 {
    let n = ts.len();
    let tmax = ts.iter().cloned().fold(0.0, f64::max);
    let m = DMatrix::from_fn(n, 3, |i, j| (tmax / ts[i]).powi(j as i32));
    let rhs = DVector::from_column_slice(es);
    let svd = m.svd(true, true);
    match svd.solve(&rhs, 1e-14) {
        Ok(c) => c[0],
        Err(_) => es[n - 1],
    }
}

/// ALC scale from 6b/t^2 and from (2b^3/(3a^2))^(1/3), extrapolated over the last five
/// doublings of the arc length.
pub fn extract_alc_ell(traj: &Trajectory) -> Result<EllEstimate> {
    if traj.param != Param::ArcLengthT {
        return Err(G2Error::Convergence("ALC extraction needs an arc-length trajectory".into()));
    }
    let pts: Vec<(f64, f64, f64)> = traj
        .samples
        .iter()
        .filter_map(|s| s.state.u1().map(|u| (s.t, u.a, u.b)))
        .filter(|(t, a, b)| *t > 0.0 && *a > 0.0 && *b > 0.0)
        .collect();
    let tmax = pts.last().map(|p| p.0).ok_or_else(|| G2Error::Convergence("empty trajectory".into()))?;
    let tail: Vec<&(f64, f64, f64)> = pts.iter().filter(|p| p.0 >= tmax / 32.0).collect();
    if tail.len() < 8 {
        return Err(G2Error::Convergence(format!("only {} tail samples for ALC extraction", tail.len())));
    }
    let ts: Vec<f64> = tail.iter().map(|p| p.0).collect();
    let e1: Vec<f64> = tail.iter().map(|p| 6.0 * p.2 / (p.0 * p.0)).collect();
    let e2: Vec<f64> = tail.iter().map(|p| (2.0 * p.2 * p.2 * p.2 / (3.0 * p.1 * p.1)).cbrt()).collect();
    let ell = extrapolate(&ts, &e1);
    let ell_alt = extrapolate(&ts, &e2);
    let half = pts.iter().rev().find(|p| p.0 <= tmax / 2.0).copied().unwrap_or(pts[0]);
    let last = pts[pts.len() - 1];
    let b_exponent = (last.2 / half.2).ln() / (last.0 / half.0).ln();
    if !(ell.is_finite() && ell_alt.is_finite()) {
        return Err(G2Error::Convergence("non-finite ALC estimates".into()));
    }
    Ok(EllEstimate { ell, ell_alt, b_exponent })
}
