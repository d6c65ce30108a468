//! Dormand-Prince 5(4) integrator with continuous extension and event location.

use crate::error::{G2Error, Result};

/// First-order system y' = f(t, y). Returning an error marks the stage as outside
/// the domain; the step is then rejected and retried with a smaller step.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

/// Step-size control settings.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-12, atol: 1e-14, h_init: 0.0, h_min: 1e-14, max_steps: 1_000_000 }
    }
}

/// Scalar event function g(t, y); the event fires when g crosses zero upward
/// (direction > 0), downward (direction < 0) or either way (direction = 0).
pub struct Event<'a> {
    pub g: Box<dyn Fn(f64, &[f64]) -> f64 + 'a>,
    pub direction: i8,
    pub terminal: bool,
}

/// A located event.
#[derive(Debug, Clone)]
pub struct EventHit {
    pub index: usize,
    pub t: f64,
    pub y: Vec<f64>,
}

/// Why the integration loop ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    ReachedEnd,
    Event(usize),
    MaxSteps,
    StepUnderflow,
}

/// Output of a run: accepted step end points, dense samples, located events.
#[derive(Debug, Clone)]
pub struct OdeOutput {
    pub ts: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    pub events: Vec<EventHit>,
    pub status: Status,
    pub steps: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension over one accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    r: [Vec<f64>; 5],
}

impl DenseStep {
    /// Interpolated state at parameter t inside the step.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        for i in 0..out.len() {
            out[i] = self.r[0][i]
                + th * (self.r[1][i] + th1 * (self.r[2][i] + th * (self.r[3][i] + th1 * self.r[4][i])));
        }
    }
}

/// Reusable stepper state.
pub struct Dopri5<'s, S: OdeSystem> {
    sys: &'s S,
    tol: Tolerances,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

fn err_norm(y0: &[f64], y1: &[f64], err: &[f64], tol: &Tolerances) -> f64 {
    let mut acc = 0.0;
    for i in 0..y0.len() {
        let sc = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
        let e = err[i] / sc;
        acc += e * e;
    }
    (acc / y0.len() as f64).sqrt()
}

impl<'s, S: OdeSystem> Dopri5<'s, S> {
    pub fn new(sys: &'s S, tol: Tolerances) -> Self {
        let n = sys.dim();
        let z = || vec![0.0; n];
        Dopri5 { sys, tol, k: [z(), z(), z(), z(), z(), z(), z()], tmp: z() }
    }

    fn stage(&mut self, t: f64, y: &[f64], h: f64, coeffs: &[(usize, f64)], out: usize) -> Result<()> {
        for i in 0..y.len() {
            let mut acc = 0.0;
            for &(j, a) in coeffs {
                acc += a * self.k[j][i];
            }
            self.tmp[i] = y[i] + h * acc;
        }
        let (head, tail) = self.k.split_at_mut(out);
        let _ = head;
        self.sys.rhs(t, &self.tmp, &mut tail[0])
    }

    /// Attempts one step; returns (y1, error norm) with k[6] = f(t + h, y1).
    fn try_step(&mut self, t: f64, y: &[f64], h: f64) -> Result<(Vec<f64>, f64)> {
        self.stage(t + C2 * h, y, h, &[(0, A21)], 1)?;
        self.stage(t + C3 * h, y, h, &[(0, A31), (1, A32)], 2)?;
        self.stage(t + C4 * h, y, h, &[(0, A41), (1, A42), (2, A43)], 3)?;
        self.stage(t + C5 * h, y, h, &[(0, A51), (1, A52), (2, A53), (3, A54)], 4)?;
        self.stage(t + h, y, h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], 5)?;
        let n = y.len();
        let mut y1 = vec![0.0; n];
        for i in 0..n {
            y1[i] = y[i]
                + h * (A71 * self.k[0][i] + A73 * self.k[2][i] + A74 * self.k[3][i] + A75 * self.k[4][i]
                    + A76 * self.k[5][i]);
        }
        self.sys.rhs(t + h, &y1, &mut self.k[6])?;
        if y1.iter().any(|v| !v.is_finite()) || self.k[6].iter().any(|v| !v.is_finite()) {
            return Err(G2Error::Domain("non-finite stage".into()));
        }
        let mut err = vec![0.0; n];
        for i in 0..n {
            err[i] = h
                * (E1 * self.k[0][i] + E3 * self.k[2][i] + E4 * self.k[3][i] + E5 * self.k[4][i]
                    + E6 * self.k[5][i] + E7 * self.k[6][i]);
        }
        let e = err_norm(y, &y1, &err, &self.tol);
        Ok((y1, e))
    }

    fn dense(&self, t0: f64, h: f64, y0: &[f64], y1: &[f64]) -> DenseStep {
        let n = y0.len();
        let mut r: [Vec<f64>; 5] = [y0.to_vec(), vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i in 0..n {
            let dy = y1[i] - y0[i];
            let bspl = h * self.k[0][i] - dy;
            r[1][i] = dy;
            r[2][i] = bspl;
            r[3][i] = dy - h * self.k[6][i] - bspl;
            r[4][i] = h
                * (D1 * self.k[0][i] + D3 * self.k[2][i] + D4 * self.k[3][i] + D5 * self.k[4][i]
                    + D6 * self.k[5][i] + D7 * self.k[6][i]);
        }
        DenseStep { t0, h, r }
    }

    fn initial_step(&mut self, t0: f64, y0: &[f64], dir: f64) -> f64 {
        if self.tol.h_init > 0.0 {
            return dir * self.tol.h_init;
        }
        let sc: Vec<f64> = y0.iter().map(|v| self.tol.atol + self.tol.rtol * v.abs()).collect();
        let d0 = (y0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / y0.len() as f64).sqrt();
        let d1 = (self.k[0].iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / y0.len() as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let _ = t0;
        dir * h0.min(1e6)
    }

    /// Integrates from (t0, y0) towards t_end. `observe` receives each accepted dense
    /// step and may request termination by returning false. `outputs` lists extra
    /// parameter values at which dense samples are recorded.
    pub fn run(
        &mut self,
        t0: f64,
        y0: &[f64],
        t_end: f64,
        events: &[Event<'_>],
        outputs: &[f64],
        mut observe: impl FnMut(&DenseStep, f64, &[f64]) -> bool,
    ) -> Result<OdeOutput> {
        let n = y0.len();
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let mut t = t0;
        let mut y = y0.to_vec();
        self.sys.rhs(t, &y, &mut self.k[0])?;
        let mut h = self.initial_step(t0, y0, dir);
        let mut out = OdeOutput {
            ts: vec![t0],
            ys: vec![y0.to_vec()],
            events: vec![],
            status: Status::ReachedEnd,
            steps: 0,
            rejected: 0,
        };
        let mut gvals: Vec<f64> = events.iter().map(|e| (e.g)(t, &y)).collect();
        let mut next_out = 0usize;
        while next_out < outputs.len() && (outputs[next_out] - t0) * dir < 0.0 {
            next_out += 1;
        }
        let mut buf = vec![0.0; n];
        loop {
            if (t_end - t) * dir <= 0.0 {
                out.status = Status::ReachedEnd;
                break;
            }
            if out.steps >= self.tol.max_steps {
                out.status = Status::MaxSteps;
                break;
            }
            if (t + h - t_end) * dir > 0.0 {
                h = t_end - t;
            }
            let hmin = self.tol.h_min * t.abs().max(1.0);
            if h.abs() < hmin {
                out.status = Status::StepUnderflow;
                break;
            }
            match self.try_step(t, &y, h) {
                Err(_) => {
                    out.rejected += 1;
                    h *= 0.25;
                    continue;
                }
                Ok((y1, e)) => {
                    if e > 1.0 || !e.is_finite() {
                        out.rejected += 1;
                        let fac = if e.is_finite() { (0.9 * e.powf(-0.2)).max(0.2) } else { 0.2 };
                        h *= fac;
                        continue;
                    }
                    let t1 = t + h;
                    let dense = self.dense(t, h, &y, &y1);
                    out.steps += 1;
                    // outputs inside (t, t1]
                    while next_out < outputs.len() && (outputs[next_out] - t1) * dir <= 0.0 {
                        dense.eval(outputs[next_out], &mut buf);
                        out.ts.push(outputs[next_out]);
                        out.ys.push(buf.clone());
                        next_out += 1;
                    }
                    // events
                    let mut first: Option<(usize, f64)> = None;
                    let new_g: Vec<f64> = events.iter().map(|ev| (ev.g)(t1, &y1)).collect();
                    for (i, ev) in events.iter().enumerate() {
                        let (g0, g1) = (gvals[i], new_g[i]);
                        let up = g0 < 0.0 && g1 >= 0.0;
                        let down = g0 > 0.0 && g1 <= 0.0;
                        let fired = match ev.direction {
                            d if d > 0 => up,
                            d if d < 0 => down,
                            _ => up || down,
                        };
                        if fired && g0.is_finite() && g1.is_finite() {
                            let te = locate(&dense, &ev.g, t, t1, g0, n);
                            if first.map_or(true, |(_, tf)| (te - tf) * dir < 0.0) {
                                first = Some((i, te));
                            }
                        }
                    }
                    if let Some((i, te)) = first {
                        dense.eval(te, &mut buf);
                        out.events.push(EventHit { index: i, t: te, y: buf.clone() });
                        if events[i].terminal {
                            out.ts.push(te);
                            out.ys.push(buf.clone());
                            out.status = Status::Event(i);
                            observe(&dense, te, &buf);
                            break;
                        }
                    }
                    gvals = new_g;
                    let keep = observe(&dense, t1, &y1);
                    t = t1;
                    y = y1;
                    self.k.swap(0, 6);
                    out.ts.push(t);
                    out.ys.push(y.clone());
                    if !keep {
                        out.status = Status::ReachedEnd;
                        break;
                    }
                    let fac = if e > 0.0 { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
                    h *= fac;
                }
            }
        }
        Ok(out)
    }
}

/// Root of g on the dense output between t0 and t1 by bisection, to 1e-10 in the
/// parameter (relative for large parameters).
fn locate(dense: &DenseStep, g: &dyn Fn(f64, &[f64]) -> f64, t0: f64, t1: f64, g0: f64, n: usize) -> f64 {
    let mut buf = vec![0.0; n];
    let (mut lo, mut hi) = (t0, t1);
    let s0 = g0.signum();
    let tol = 1e-10f64.max(4.0 * f64::EPSILON * t0.abs().max(t1.abs()));
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        dense.eval(mid, &mut buf);
        let gm = g(mid, &buf);
        if gm.signum() == s0 && gm != 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
