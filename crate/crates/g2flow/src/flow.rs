//! Right-hand sides of the full Hamiltonian flow, the U(1)-reduced flow and its
//! a-parametrized form, plus adaptive integration with stop events.

use crate::classifier::{alc_margin, death_margin};
use crate::error::{G2Error, Result};
use crate::invariants::{
    eval_f, eval_lambda, hamiltonian, hamiltonian_u1, lambda_numerators, FullState, ModelParams, Param, U1State,
};
use crate::ode::{Dopri5, Event, OdeSystem, Status, Tolerances};
use crate::shooter::GammaCurve;
use serde::{Deserialize, Serialize};

/// Full flow: (dx, dy) = (dH/dy, -dH/dx) on the principal-orbit locus.
pub fn rhs_full(state: &FullState, params: &ModelParams) -> Result<([f64; 3], [f64; 3])> {
    let lam = eval_lambda(&state.y, params);
    let x = state.x;
    let prod = x[0] * x[1] * x[2];
    if !(lam < 0.0) || !(prod > 0.0) {
        return Err(G2Error::Domain(format!("off principal locus: Lambda = {lam}, x1 x2 x3 = {prod}")));
    }
    let root = (-lam).sqrt();
    let n = lambda_numerators(&state.y, params);
    let rp = prod.sqrt();
    let dx = [n[0] / root, n[1] / root, n[2] / root];
    let dy = [x[1] * x[2] / rp, x[0] * x[2] / rp, x[0] * x[1] / rp];
    Ok((dx, dy))
}

/// U(1)-reduced flow on (x1, x2, y1, y2) = (da db, da^2, a, b).
pub fn rhs_u1(v: &[f64; 4], params: &ModelParams) -> Result<[f64; 4]> {
    let (f, fa, fb) = eval_f(v[2], v[3], params);
    let w = v[0] * v[0] * v[1];
    if !(f > 0.0) || !(w > 0.0) || !(v[1] > 0.0) {
        return Err(G2Error::Domain(format!("U(1) flow needs F > 0 and x1^2 x2 > 0 (F = {f}, x1^2 x2 = {w})")));
    }
    let sf = f.sqrt();
    let sw = w.sqrt();
    Ok([fa / (4.0 * sf), fb / (2.0 * sf), v[0] * v[1] / sw, v[0] * v[0] / sw])
}

/// Second-order residual 2F(a'b'' - b'a'') - a'b'(a'F_a - 2b'F_b).
pub fn brandhuber_residual(a: f64, b: f64, da: f64, db: f64, dda: f64, ddb: f64, params: &ModelParams) -> f64 {
    let (f, fa, fb) = eval_f(a, b, params);
    2.0 * f * (da * ddb - db * dda) - da * db * (da * fa - 2.0 * db * fb)
}

/// Arc-length U(1) system.
pub struct U1System {
    pub params: ModelParams,
}

impl OdeSystem for U1System {
    fn dim(&self) -> usize {
        4
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let r = rhs_u1(&[y[0], y[1], y[2], y[3]], &self.params)?;
        dy.copy_from_slice(&r);
        Ok(())
    }
}

/// Full six-dimensional system on (x1, x2, x3, y1, y2, y3).
pub struct FullSystem {
    pub params: ModelParams,
}

impl OdeSystem for FullSystem {
    fn dim(&self) -> usize {
        6
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let s = FullState { x: [y[0], y[1], y[2]], y: [y[3], y[4], y[5]] };
        let (dx, dyy) = rhs_full(&s, &self.params)?;
        dy[..3].copy_from_slice(&dx);
        dy[3..].copy_from_slice(&dyy);
        Ok(())
    }
}

/// a-parametrized system on (b, mu, t) with mu = db/da and t the arc length.
pub struct AParamSystem {
    pub params: ModelParams,
}

/// Right-hand side of the a-parametrized flow.
pub fn rhs_a_param(a: f64, b: f64, mu: f64, params: &ModelParams) -> Result<[f64; 3]> {
    let (f, fa, fb) = eval_f(a, b, params);
    if !(f > 0.0) || !(mu > 0.0) {
        return Err(G2Error::Domain(format!("a-parametrized flow needs F, mu > 0 (F = {f}, mu = {mu})")));
    }
    let dmu = mu * (fa - 2.0 * mu * fb) / (2.0 * f);
    let dt = (2.0 * mu / f.sqrt()).cbrt();
    Ok([mu, dmu, dt])
}

impl OdeSystem for AParamSystem {
    fn dim(&self) -> usize {
        3
    }
    fn rhs(&self, a: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let r = rhs_a_param(a, y[0], y[1], &self.params)?;
        dy.copy_from_slice(&r);
        Ok(())
    }
}

/// Which formulation a run integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    ArcLengthU1,
    Full,
    AParam,
}

/// State carried by a trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowState {
    U1(U1State),
    Full(FullState),
}

impl FlowState {
    /// U(1) view; full states are averaged over the first two components.
    pub fn u1(&self) -> Option<U1State> {
        match self {
            FlowState::U1(s) => Some(*s),
            FlowState::Full(f) => f.to_u1(1e-8).ok(),
        }
    }
}

/// Kind of a stop event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    FVanishes,
    EntersAlcChamber,
    EntersDeathChamber,
    HitsGamma1,
    HitsGamma2,
    HitsCorner,
    BlowUp,
    BudgetExhausted,
    ReachesAEqualsB,
    Observer,
}

/// Stop condition with its threshold data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopEvent {
    FVanishes { eps: f64 },
    EntersAlcChamber { cushion: f64 },
    EntersDeathChamber { cushion: f64 },
    HitsGamma1 { gamma: GammaCurve },
    HitsGamma2 { gamma: GammaCurve },
    HitsCorner { gamma: GammaCurve, eps_a: f64, eps_b: f64 },
    BlowUp { factor: f64 },
    ReachesAEqualsB,
}

impl StopEvent {
    pub fn kind(&self) -> StopKind {
        match self {
            StopEvent::FVanishes { .. } => StopKind::FVanishes,
            StopEvent::EntersAlcChamber { .. } => StopKind::EntersAlcChamber,
            StopEvent::EntersDeathChamber { .. } => StopKind::EntersDeathChamber,
            StopEvent::HitsGamma1 { .. } => StopKind::HitsGamma1,
            StopEvent::HitsGamma2 { .. } => StopKind::HitsGamma2,
            StopEvent::HitsCorner { .. } => StopKind::HitsCorner,
            StopEvent::BlowUp { .. } => StopKind::BlowUp,
            StopEvent::ReachesAEqualsB => StopKind::ReachesAEqualsB,
        }
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(G2Error::Seed(format!("stop threshold {what} must be positive, got {v}")))
            }
        };
        match self {
            StopEvent::FVanishes { eps } => pos(*eps, "eps"),
            StopEvent::EntersAlcChamber { cushion } | StopEvent::EntersDeathChamber { cushion } => {
                pos(*cushion, "cushion")
            }
            StopEvent::HitsCorner { eps_a, eps_b, .. } => pos(*eps_a, "eps_a").and(pos(*eps_b, "eps_b")),
            StopEvent::BlowUp { factor } => pos(*factor, "factor"),
            _ => Ok(()),
        }
    }
}

/// Event log entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: StopKind,
    pub param: f64,
    pub t: f64,
    pub state: FlowState,
}

/// One trajectory sample: parameter value, arc length and state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub param: f64,
    pub t: f64,
    pub state: FlowState,
}

/// Ordered samples of a run with its event log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub param: Param,
    pub formulation: Formulation,
    pub samples: Vec<Sample>,
    pub events: Vec<EventRecord>,
    pub params: ModelParams,
    pub terminal: StopKind,
    pub steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least the seed sample")
    }

    /// Largest |H| over the samples (arc-length runs).
    pub fn max_abs_h(&self) -> f64 {
        self.samples
            .iter()
            .filter_map(|s| match s.state {
                FlowState::U1(u) if u.param == Param::ArcLengthT => hamiltonian_u1(&u, &self.params).ok(),
                FlowState::Full(f) => hamiltonian(&f, &self.params).ok(),
                _ => None,
            })
            .fold(0.0, |m: f64, h| m.max(h.abs()))
    }

    pub fn has_event(&self, kind: StopKind) -> bool {
        self.events.iter().any(|e| e.kind == kind)
    }
}

/// Limits on a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_span: f64,
    pub max_steps: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_span: 1e6, max_steps: 2_000_000 }
    }
}

/// Seed of a run: start parameter and state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    /// Start value of the independent variable (t, or a for a-parametrized runs).
    pub start: f64,
    /// Arc length at the start (equal to `start` for arc-length runs).
    pub t: f64,
    pub state: FlowState,
}

/// Integration request.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub formulation: Formulation,
    pub seed: Seed,
    /// Signed direction: end parameter is start + direction * budget.max_span unless `end` is set.
    pub end: Option<f64>,
    pub direction: f64,
    pub stops: Vec<StopEvent>,
    pub budget: Budget,
    pub tol: Tolerances,
    pub outputs: Vec<f64>,
}

impl RunSpec {
    pub fn new(formulation: Formulation, seed: Seed) -> Self {
        RunSpec {
            formulation,
            seed,
            end: None,
            direction: 1.0,
            stops: vec![],
            budget: Budget::default(),
            tol: Tolerances::default(),
            outputs: vec![],
        }
    }
}

fn state_from_vec(f: Formulation, s: f64, y: &[f64]) -> Result<FlowState> {
    Ok(match f {
        Formulation::ArcLengthU1 => FlowState::U1(U1State::from_flow_vars(y)?),
        Formulation::Full => FlowState::Full(FullState { x: [y[0], y[1], y[2]], y: [y[3], y[4], y[5]] }),
        Formulation::AParam => FlowState::U1(U1State { a: s, b: y[0], da: 1.0, db: y[1], param: Param::AEqualsS }),
    })
}

fn arc_length_of(f: Formulation, s: f64, y: &[f64]) -> f64 {
    match f {
        Formulation::AParam => y[2],
        _ => s,
    }
}

fn u1_of(f: Formulation, s: f64, y: &[f64]) -> Option<U1State> {
    match f {
        Formulation::ArcLengthU1 => U1State::from_flow_vars(y).ok(),
        Formulation::AParam => Some(U1State { a: s, b: y[0], da: 1.0, db: y[1], param: Param::AEqualsS }),
        Formulation::Full => FullState { x: [y[0], y[1], y[2]], y: [y[3], y[4], y[5]] }.to_u1(1e-8).ok(),
    }
}

fn f_ratio(f: Formulation, s: f64, y: &[f64], params: &ModelParams) -> f64 {
    let (a, b, fval) = match f {
        Formulation::Full => {
            let yy = [y[3], y[4], y[5]];
            let amax = yy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (amax, amax, -eval_lambda(&yy, params))
        }
        _ => {
            let u = match u1_of(f, s, y) {
                Some(u) => u,
                None => return -1.0,
            };
            (u.a, u.b, eval_f(u.a, u.b, params).0)
        }
    };
    let sc = a.abs().max(b.abs()).max(params.p.abs()).max(params.q.abs());
    fval / (sc * sc * sc * sc)
}

fn magnitude(f: Formulation, s: f64, y: &[f64]) -> f64 {
    match f {
        Formulation::Full => y.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        _ => match u1_of(f, s, y) {
            Some(u) => u.a.abs().max(u.b.abs()).max(u.da.abs()).max(u.db.abs()),
            None => f64::INFINITY,
        },
    }
}

fn seed_vector(spec: &RunSpec) -> Result<Vec<f64>> {
    let seed = &spec.seed;
    match (spec.formulation, seed.state) {
        (Formulation::ArcLengthU1, FlowState::U1(u)) => {
            if u.param != Param::ArcLengthT {
                return Err(G2Error::Seed("arc-length run needs an arc-length seed".into()));
            }
            Ok(u.flow_vars().to_vec())
        }
        (Formulation::Full, FlowState::Full(fs)) => Ok(vec![fs.x[0], fs.x[1], fs.x[2], fs.y[0], fs.y[1], fs.y[2]]),
        (Formulation::Full, FlowState::U1(u)) => {
            let fs = u.to_full();
            Ok(vec![fs.x[0], fs.x[1], fs.x[2], fs.y[0], fs.y[1], fs.y[2]])
        }
        (Formulation::AParam, FlowState::U1(u)) => {
            if !(u.da > 0.0) {
                return Err(G2Error::Seed("a-parametrized run needs da > 0".into()));
            }
            Ok(vec![u.b, u.db / u.da, seed.t])
        }
        _ => Err(G2Error::Seed("seed state does not match the formulation".into())),
    }
}

/// Integrates a seed with stop events; `observe` sees every accepted step and may stop the run.
pub fn integrate_observed(
    spec: &RunSpec,
    params: &ModelParams,
    mut observe: impl FnMut(f64, f64, &FlowState) -> bool,
) -> Result<Trajectory> {
    for s in &spec.stops {
        s.validate()?;
    }
    let y0 = seed_vector(spec)?;
    let form = spec.formulation;
    let s0 = spec.seed.start;
    let seed_state = state_from_vec(form, s0, &y0)?;
    // admissibility
    match form {
        Formulation::Full => {
            if let FlowState::Full(fs) = seed_state {
                rhs_full(&fs, params).map_err(|e| G2Error::Seed(e.to_string()))?;
            }
        }
        Formulation::ArcLengthU1 => {
            rhs_u1(&[y0[0], y0[1], y0[2], y0[3]], params).map_err(|e| G2Error::Seed(e.to_string()))?;
        }
        Formulation::AParam => {
            rhs_a_param(s0, y0[0], y0[1], params).map_err(|e| G2Error::Seed(e.to_string()))?;
        }
    }
    let mag0 = magnitude(form, s0, &y0).max(params.p.abs()).max(params.q.abs());
    let mut events: Vec<Event<'_>> = vec![];
    let mut kinds: Vec<StopKind> = vec![];
    for stop in &spec.stops {
        let p = *params;
        let ev: Event<'_> = match *stop {
            StopEvent::FVanishes { eps } => {
                Event { g: Box::new(move |s, y| f_ratio(form, s, y, &p) - eps), direction: -1, terminal: true }
            }
            StopEvent::BlowUp { factor } => Event {
                g: Box::new(move |s, y| magnitude(form, s, y) - factor * mag0),
                direction: 1,
                terminal: true,
            },
            _ if form == Formulation::Full && !matches!(stop, StopEvent::ReachesAEqualsB) => {
                return Err(G2Error::Seed(format!("stop {:?} needs a U(1) formulation", stop.kind())));
            }
            StopEvent::EntersAlcChamber { cushion } => Event {
                g: Box::new(move |s, y| u1_of(form, s, y).map_or(-1.0, |u| alc_margin(&u, &p, cushion))),
                direction: 1,
                terminal: false,
            },
            StopEvent::EntersDeathChamber { cushion } => Event {
                g: Box::new(move |s, y| u1_of(form, s, y).map_or(-1.0, |u| death_margin(&u, &p, cushion))),
                direction: 1,
                terminal: true,
            },
            StopEvent::HitsGamma1 { gamma } => Event {
                g: Box::new(move |s, y| u1_of(form, s, y).map_or(1.0, |u| gamma.distances(u.a, u.b).0)),
                direction: -1,
                terminal: true,
            },
            StopEvent::HitsGamma2 { gamma } => Event {
                g: Box::new(move |s, y| u1_of(form, s, y).map_or(1.0, |u| gamma.distances(u.a, u.b).1)),
                direction: -1,
                terminal: true,
            },
            StopEvent::HitsCorner { gamma, eps_a, eps_b } => Event {
                g: Box::new(move |s, y| {
                    u1_of(form, s, y).map_or(1.0, |u| {
                        ((u.a.abs() - eps_a) / eps_a).max(((u.b - gamma.b0()).abs() - eps_b) / eps_b)
                    })
                }),
                direction: -1,
                terminal: true,
            },
            StopEvent::ReachesAEqualsB => {
                let g: Box<dyn Fn(f64, &[f64]) -> f64> = match form {
                    Formulation::ArcLengthU1 => Box::new(|_s, y: &[f64]| y[2] - y[3]),
                    Formulation::AParam => Box::new(|s, y: &[f64]| s - y[0]),
                    Formulation::Full => Box::new(|_s, y: &[f64]| y[3] - y[5]),
                };
                Event { g, direction: 0, terminal: false }
            }
        };
        events.push(ev);
        kinds.push(stop.kind());
    }
    let end = spec.end.unwrap_or(s0 + spec.direction * spec.budget.max_span);
    let mut tol = spec.tol;
    tol.max_steps = spec.budget.max_steps;
    let mut samples = vec![Sample { param: s0, t: spec.seed.t, state: seed_state }];
    let mut observer_stopped = false;
    let out = match form {
        Formulation::ArcLengthU1 => {
            let sys = U1System { params: *params };
            let mut st = Dopri5::new(&sys, tol);
            st.run(s0, &y0, end, &events, &spec.outputs, |_d, s, y| {
                match state_from_vec(form, s, y) {
                    Ok(fs) => {
                        let keep = observe(s, arc_length_of(form, s, y), &fs);
                        observer_stopped |= !keep;
                        keep
                    }
                    Err(_) => true,
                }
            })?
        }
        Formulation::Full => {
            let sys = FullSystem { params: *params };
            let mut st = Dopri5::new(&sys, tol);
            st.run(s0, &y0, end, &events, &spec.outputs, |_d, s, y| match state_from_vec(form, s, y) {
                Ok(fs) => {
                    let keep = observe(s, arc_length_of(form, s, y), &fs);
                    observer_stopped |= !keep;
                    keep
                }
                Err(_) => true,
            })?
        }
        Formulation::AParam => {
            let sys = AParamSystem { params: *params };
            let mut st = Dopri5::new(&sys, tol);
            st.run(s0, &y0, end, &events, &spec.outputs, |_d, s, y| match state_from_vec(form, s, y) {
                Ok(fs) => {
                    let keep = observe(s, arc_length_of(form, s, y), &fs);
                    observer_stopped |= !keep;
                    keep
                }
                Err(_) => true,
            })?
        }
    };
    for (s, y) in out.ts.iter().zip(&out.ys).skip(1) {
        if samples.last().is_some_and(|l| l.param == *s) {
            continue;
        }
        let st = state_from_vec(form, *s, y)?;
        samples.push(Sample { param: *s, t: arc_length_of(form, *s, y), state: st });
    }
    let mut recs = vec![];
    for hit in &out.events {
        recs.push(EventRecord {
            kind: kinds[hit.index],
            param: hit.t,
            t: arc_length_of(form, hit.t, &hit.y),
            state: state_from_vec(form, hit.t, &hit.y)?,
        });
    }
    let terminal = match out.status {
        Status::Event(i) => kinds[i],
        Status::StepUnderflow => {
            let last = samples.last().expect("seed sample");
            recs.push(EventRecord { kind: StopKind::BlowUp, param: last.param, t: last.t, state: last.state });
            StopKind::BlowUp
        }
        Status::MaxSteps => StopKind::BudgetExhausted,
        Status::ReachedEnd => {
            if observer_stopped {
                StopKind::Observer
            } else {
                StopKind::BudgetExhausted
            }
        }
    };
    let param = if form == Formulation::AParam { Param::AEqualsS } else { Param::ArcLengthT };
    Ok(Trajectory { param, formulation: form, samples, events: recs, params: *params, terminal, steps: out.steps })
}

/// Integrates a seed with stop events.
pub fn integrate(spec: &RunSpec, params: &ModelParams) -> Result<Trajectory> {
    integrate_observed(spec, params, |_, _, _| true)
}

/// Changes the independent variable of a U(1) trajectory.
pub fn reparametrize(traj: &Trajectory, target: Param) -> Result<Trajectory> {
    let mut out = traj.clone();
    let params = traj.params;
    let conv = |s: &Sample| -> Result<Sample> {
        let u = s.state.u1().ok_or_else(|| G2Error::Domain("reparametrization needs a U(1) state".into()))?;
        match target {
            Param::AEqualsS => {
                if !(u.da > 0.0) {
                    return Err(G2Error::Domain("a-parametrization needs da > 0".into()));
                }
                let v = U1State { a: u.a, b: u.b, da: 1.0, db: u.db / u.da, param: Param::AEqualsS };
                Ok(Sample { param: u.a, t: s.t, state: FlowState::U1(v) })
            }
            Param::ArcLengthT => {
                let v = u.normalized(&params)?;
                Ok(Sample { param: s.t, t: s.t, state: FlowState::U1(v) })
            }
        }
    };
    out.samples = traj.samples.iter().map(conv).collect::<Result<Vec<_>>>()?;
    out.events = traj
        .events
        .iter()
        .map(|e| {
            let s = conv(&Sample { param: e.param, t: e.t, state: e.state })?;
            Ok(EventRecord { kind: e.kind, param: s.param, t: e.t, state: s.state })
        })
        .collect::<Result<Vec<_>>>()?;
    out.param = target;
    let mono = out.samples.windows(2).all(|w| (w[1].param - w[0].param) != 0.0)
        && (out.samples.windows(2).all(|w| w[1].param > w[0].param)
            || out.samples.windows(2).all(|w| w[1].param < w[0].param));
    if !mono {
        return Err(G2Error::Domain("target parameter is not monotone along the trajectory".into()));
    }
    Ok(out)
}
