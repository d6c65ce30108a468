//! Closed-form quantities of the cohomogeneity-one G2 equations: the stable-form
//! quartic, the reduced polynomial F, the Hamiltonian, the induced metric and its
//! inversion, mean curvature, the Lagrangian density and the SU(2)^3 quartic curve.

use crate::error::{G2Error, Result};
use serde::{Deserialize, Serialize};

/// Cone scale: a = b = CONE_C t^3 on the G2 cone.
pub const CONE_C: f64 = 0.032_075_014_954_979_206;

/// Conically singular rate (sqrt(145) - 7) / 2.
pub fn nu0() -> f64 {
    (145f64.sqrt() - 7.0) / 2.0
}

/// Asymptotically conical rate (sqrt(145) + 7) / 2.
pub fn nu_inf() -> f64 {
    (145f64.sqrt() + 7.0) / 2.0
}

/// Singular-orbit family that fixes (p, q) in terms of a scale r0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// Diagonal SU(2) singular orbit: p = r0^3, q = -r0^3.
    DeltaSu2 { r0: f64 },
    /// {1} x SU(2) singular orbit: p = -r0^3, q = 0.
    Su2Factor { r0: f64 },
    /// Circle singular orbit K_{m,n}: p = -m^2 r0^3, q = n^2 r0^3.
    Kmn { m: u32, n: u32, r0: f64 },
}

/// Cohomology constants (p, q) with an optional family tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: f64,
    pub q: f64,
    pub family: Option<Family>,
}

pub(crate) fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl ModelParams {
    /// Untagged constants.
    pub fn new(p: f64, q: f64) -> Self {
        ModelParams { p, q, family: None }
    }

    /// The cone case p = q = 0.
    pub fn cone() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn delta_su2(r0: f64) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(G2Error::Constraint(format!("r0 must be positive, got {r0}")));
        }
        let r3 = r0 * r0 * r0;
        Ok(ModelParams { p: r3, q: -r3, family: Some(Family::DeltaSu2 { r0 }) })
    }

    pub fn su2_factor(r0: f64) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(G2Error::Constraint(format!("r0 must be positive, got {r0}")));
        }
        let r3 = r0 * r0 * r0;
        Ok(ModelParams { p: -r3, q: 0.0, family: Some(Family::Su2Factor { r0 }) })
    }

    pub fn kmn(m: u32, n: u32, r0: f64) -> Result<Self> {
        if m == 0 || n == 0 || gcd(m, n) != 1 {
            return Err(G2Error::Constraint(format!("(m, n) = ({m}, {n}) must be coprime positive integers")));
        }
        if !(r0 > 0.0) {
            return Err(G2Error::Constraint(format!("r0 must be positive, got {r0}")));
        }
        let r3 = r0 * r0 * r0;
        let (mf, nf) = (m as f64, n as f64);
        Ok(ModelParams { p: -mf * mf * r3, q: nf * nf * r3, family: Some(Family::Kmn { m, n, r0 }) })
    }

    /// Natural length of the constants, |p| + |q| to the power 1/3 (1 when both vanish).
    pub fn scale(&self) -> f64 {
        let s = (self.p.abs() + self.q.abs()).cbrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// Lower bound max(p, -q, sqrt(-pq)) used by the chamber conditions.
    pub fn chamber_floor(&self) -> f64 {
        let pq = self.p * self.q;
        let root = if pq < 0.0 { (-pq).sqrt() } else { 0.0 };
        self.p.max(-self.q).max(root)
    }

    /// Parameters after the scaling a -> lambda^3 a.
    pub fn rescaled(&self, lambda: f64) -> Self {
        let l3 = lambda * lambda * lambda;
        let family = self.family.map(|f| match f {
            Family::DeltaSu2 { r0 } => Family::DeltaSu2 { r0: r0 * lambda },
            Family::Su2Factor { r0 } => Family::Su2Factor { r0: r0 * lambda },
            Family::Kmn { m, n, r0 } => Family::Kmn { m, n, r0: r0 * lambda },
        });
        ModelParams { p: self.p * l3, q: self.q * l3, family }
    }

    /// Checks the family invariants.
    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg: &str| if c { Ok(()) } else { Err(G2Error::Constraint(msg.to_string())) };
        if let Some(f) = self.family {
            ok(self.p * self.q <= 0.0, "pq must be non-positive for tagged families")?;
            match f {
                Family::DeltaSu2 { r0 } => {
                    ok(r0 > 0.0, "r0 must be positive")?;
                    let r3 = r0 * r0 * r0;
                    ok(self.p == r3 && self.q == -r3, "delta_su2 requires p = -q = r0^3")?;
                }
                Family::Su2Factor { r0 } => {
                    ok(r0 > 0.0, "r0 must be positive")?;
                    ok(self.p == -r0 * r0 * r0 && self.q == 0.0, "su2_factor requires p = -r0^3, q = 0")?;
                }
                Family::Kmn { m, n, r0 } => {
                    ok(r0 > 0.0 && m > 0 && n > 0 && gcd(m, n) == 1, "kmn requires coprime m, n and r0 > 0")?;
                    let r3 = r0 * r0 * r0;
                    let (mf, nf) = (m as f64, n as f64);
                    ok(self.p == -mf * mf * r3 && self.q == nf * nf * r3, "kmn requires p = -m^2 r0^3, q = n^2 r0^3")?;
                }
            }
        }
        Ok(())
    }
}

/// Flow variables of the full system: y_i = a_i, x_i = da_j da_k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub x: [f64; 3],
    pub y: [f64; 3],
}

/// Independent variable of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    ArcLengthT,
    AEqualsS,
}

/// U(1)-invariant state (a, b, da, db) with a1 = a2 = a, a3 = b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct U1State {
    pub a: f64,
    pub b: f64,
    pub da: f64,
    pub db: f64,
    pub param: Param,
}

impl U1State {
    /// Arc-length state from the reduced flow variables (x1, x2, y1, y2) = (da db, da^2, a, b).
    pub fn from_flow_vars(v: &[f64]) -> Result<Self> {
        if !(v[1] > 0.0) {
            return Err(G2Error::Domain(format!("x2 = da^2 must be positive, got {}", v[1])));
        }
        let da = v[1].sqrt();
        Ok(U1State { a: v[2], b: v[3], da, db: v[0] / da, param: Param::ArcLengthT })
    }

    /// Reduced flow variables (da db, da^2, a, b).
    pub fn flow_vars(&self) -> [f64; 4] {
        [self.da * self.db, self.da * self.da, self.a, self.b]
    }

    /// Embedding into the full system with a1 = a2 = a, a3 = b.
    pub fn to_full(&self) -> FullState {
        FullState { x: [self.da * self.db, self.da * self.db, self.da * self.da], y: [self.a, self.a, self.b] }
    }

    /// Rescales the velocities so that 2 da^2 db = sqrt(F), converting to arc length.
    pub fn normalized(&self, params: &ModelParams) -> Result<Self> {
        let (f, _, _) = eval_f(self.a, self.b, params);
        if !(f > 0.0) || !(self.da > 0.0) || !(self.db > 0.0) {
            return Err(G2Error::Domain("normalization needs F, da, db > 0".into()));
        }
        let k = (f.sqrt() / (2.0 * self.da * self.da * self.db)).cbrt();
        Ok(U1State { a: self.a, b: self.b, da: self.da * k, db: self.db * k, param: Param::ArcLengthT })
    }
}

impl FullState {
    /// Velocities da_i = sqrt(x_j x_k / x_i).
    pub fn velocities(&self) -> Result<[f64; 3]> {
        let x = self.x;
        if !(x[0] > 0.0 && x[1] > 0.0 && x[2] > 0.0) {
            return Err(G2Error::Domain(format!("x must be positive, got {x:?}")));
        }
        Ok([(x[1] * x[2] / x[0]).sqrt(), (x[0] * x[2] / x[1]).sqrt(), (x[0] * x[1] / x[2]).sqrt()])
    }

    /// U(1) view when x1 = x2 and y1 = y2 (up to a relative tolerance).
    pub fn to_u1(&self, tol: f64) -> Result<U1State> {
        let close = |u: f64, v: f64| (u - v).abs() <= tol * u.abs().max(v.abs()).max(1e-300);
        if !close(self.x[0], self.x[1]) || !close(self.y[0], self.y[1]) {
            return Err(G2Error::Domain("state is not U(1)-invariant".into()));
        }
        let v = [0.5 * (self.x[0] + self.x[1]), self.x[2], 0.5 * (self.y[0] + self.y[1]), self.y[2]];
        U1State::from_flow_vars(&v)
    }
}

/// Metric coefficients of e_i e_i, e'_i e'_i and e_i e'_i.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricCoeffs {
    #[serde(rename = "A")]
    pub a: [f64; 3],
    #[serde(rename = "B")]
    pub b: [f64; 3],
    #[serde(rename = "C")]
    pub c: [f64; 3],
}

impl MetricCoeffs {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            let det = 4.0 * self.a[i] * self.b[i] - self.c[i] * self.c[i];
            if !(self.a[i] > 0.0) || !(det > 0.0) {
                return Err(G2Error::Positivity(format!("block {i}: A = {}, 4AB - C^2 = {det}", self.a[i])));
            }
        }
        Ok(())
    }
}

/// Result of the metric inversion, with the sign branch used when p + q = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub state: FullState,
    /// True when p + q = 0 and the branch a_i - a_j - a_k + p <= 0 was selected.
    pub branch_selected: bool,
}

/// Lambda in grouped form (s2 + pq)^2 - 4 e2 + 4(p - q) a1 a2 a3.
pub fn eval_lambda_grouped(y: &[f64; 3], params: &ModelParams) -> f64 {
    let (p, q) = (params.p, params.q);
    let sq = [y[0] * y[0], y[1] * y[1], y[2] * y[2]];
    let s2 = sq[0] + sq[1] + sq[2];
    let e2 = sq[0] * sq[1] + sq[1] * sq[2] + sq[2] * sq[0];
    let u = s2 + p * q;
    u * u - 4.0 * e2 + 4.0 * (p - q) * y[0] * y[1] * y[2]
}

/// Lambda as V V1 V2 V3, valid only when q = -p.
pub fn eval_lambda_factored(y: &[f64; 3], params: &ModelParams) -> f64 {
    let h = 0.5 * (params.p - params.q);
    let v = y[0] + y[1] + y[2] + h;
    let v1 = y[0] - y[1] - y[2] + h;
    let v2 = y[1] - y[2] - y[0] + h;
    let v3 = y[2] - y[0] - y[1] + h;
    v * v1 * v2 * v3
}

/// The stable-form quartic Lambda(a1, a2, a3); stable iff negative.
pub fn eval_lambda(y: &[f64; 3], params: &ModelParams) -> f64 {
    if params.q == -params.p {
        eval_lambda_factored(y, params)
    } else {
        eval_lambda_grouped(y, params)
    }
}

/// F(a, b) = -Lambda(a, a, b) with its partial derivatives (F, F_a, F_b).
pub fn eval_f(a: f64, b: f64, params: &ModelParams) -> (f64, f64, f64) {
    let (p, q) = (params.p, params.q);
    let bp = b - p;
    let bq = b + q;
    let w = b * b + p * q;
    let f = 4.0 * a * a * bp * bq - w * w;
    let fa = 8.0 * a * bp * bq;
    let fb = 4.0 * a * a * (2.0 * b - p + q) - 4.0 * b * w;
    (f, fa, fb)
}

/// Hamiltonian sqrt(-Lambda(y)) - 2 sqrt(x1 x2 x3); vanishes along solutions.
pub fn hamiltonian(state: &FullState, params: &ModelParams) -> Result<f64> {
    let lam = eval_lambda(&state.y, params);
    let prod = state.x[0] * state.x[1] * state.x[2];
    if lam > 0.0 {
        return Err(G2Error::Domain(format!("Lambda = {lam} > 0")));
    }
    if prod < 0.0 {
        return Err(G2Error::Domain(format!("x1 x2 x3 = {prod} < 0")));
    }
    Ok((-lam).sqrt() - 2.0 * prod.sqrt())
}

/// Hamiltonian of a U(1) state, sqrt(F) - 2 da^2 db.
pub fn hamiltonian_u1(s: &U1State, params: &ModelParams) -> Result<f64> {
    let (f, _, _) = eval_f(s.a, s.b, params);
    if f < 0.0 {
        return Err(G2Error::Domain(format!("F = {f} < 0")));
    }
    Ok(f.sqrt() - 2.0 * s.da * s.da * s.db)
}

/// Numerators of dx_i: 2(y_i(-y_i^2 + y_j^2 + y_k^2 - pq) - (p - q) y_j y_k).
pub(crate) fn lambda_numerators(y: &[f64; 3], params: &ModelParams) -> [f64; 3] {
    let (p, q) = (params.p, params.q);
    let mut out = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        // symmetric in (j, k) in floating point, so a1 = a2 stays exact under the flow
        out[i] = 2.0 * (y[i] * ((y[j] * y[j] + y[k] * y[k]) - y[i] * y[i] - p * q) - (p - q) * (y[j] * y[k]));
    }
    out
}

/// Mean curvature of the principal orbit of a full state.
pub fn mean_curvature_full(state: &FullState, params: &ModelParams) -> Result<f64> {
    let lam = eval_lambda(&state.y, params);
    if !(lam < 0.0) {
        return Err(G2Error::Domain(format!("Lambda = {lam} is not negative")));
    }
    let v = state.velocities()?;
    let n = lambda_numerators(&state.y, params);
    let num: f64 = (0..3).map(|i| v[i] * 0.5 * n[i]).sum();
    let prod = v[0] * v[1] * v[2];
    Ok(num / (2.0 * prod * prod))
}

/// Mean curvature of a U(1) state, (da F_a + db F_b) / (2F).
pub fn mean_curvature_u1(s: &U1State, params: &ModelParams) -> Result<f64> {
    let (f, fa, fb) = eval_f(s.a, s.b, params);
    if !(f > 0.0 && s.da > 0.0 && s.db > 0.0) {
        return Err(G2Error::Domain(format!("mean curvature needs F, da, db > 0 (F = {f})")));
    }
    Ok((s.da * fa + s.db * fb) / (2.0 * f))
}

/// Induced metric coefficients of a full state.
pub fn metric_from_halfflat(state: &FullState, params: &ModelParams) -> Result<MetricCoeffs> {
    let (p, q) = (params.p, params.q);
    let lam = eval_lambda(&state.y, params);
    if !(lam < 0.0) {
        return Err(G2Error::Domain(format!("Lambda = {lam} is not negative")));
    }
    let root = (-lam).sqrt();
    let v = state.velocities()?;
    let y = state.y;
    let mut m = MetricCoeffs { a: [0.0; 3], b: [0.0; 3], c: [0.0; 3] };
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let w = 2.0 * v[i] / root;
        m.a[i] = w * (y[j] * y[k] - p * y[i]);
        m.b[i] = w * (y[j] * y[k] + q * y[i]);
        m.c[i] = w * (y[i] * y[i] - y[j] * y[j] - y[k] * y[k] - p * q);
    }
    m.validate()?;
    Ok(m)
}

/// Recovers the full state from metric coefficients, assuming H = 0.
pub fn halfflat_from_metric(metric: &MetricCoeffs, params: &ModelParams) -> Result<Inversion> {
    metric.validate()?;
    let (p, q) = (params.p, params.q);
    let d: Vec<f64> = (0..3).map(|i| 4.0 * metric.a[i] * metric.b[i] - metric.c[i] * metric.c[i]).collect();
    let mut x = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let r = d[j] * d[k];
        if !(r >= 0.0) {
            return Err(G2Error::Domain("negative radicand in metric inversion".into()));
        }
        x[i] = 0.25 * r.sqrt();
    }
    let mut y = [0.0; 3];
    if p + q != 0.0 {
        for i in 0..3 {
            y[i] = x[i] * (metric.b[i] - metric.a[i]) / (p + q);
        }
        return Ok(Inversion { state: FullState { x, y }, branch_selected: false });
    }
    // p + q = 0: products V_j V_k = x_i (A_i + B_i + C_i) with V_i = a_i - a_j - a_k + p <= 0.
    let s: Vec<f64> = (0..3).map(|i| x[i] * (metric.a[i] + metric.b[i] + metric.c[i])).collect();
    let mut vv = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let sq = s[k] * s[j] / s[i];
        if !(sq >= 0.0) || !sq.is_finite() {
            return Err(G2Error::Domain("negative radicand in p + q = 0 inversion".into()));
        }
        vv[i] = -sq.sqrt();
    }
    for k in 0..3 {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        y[k] = p - 0.5 * (vv[i] + vv[j]);
    }
    Ok(Inversion { state: FullState { x, y }, branch_selected: true })
}

/// Lagrangian density (-dy1 dy2 dy3 Lambda(y))^(1/3).
pub fn lagrangian_density(y: &[f64; 3], dy: &[f64; 3], params: &ModelParams) -> Result<f64> {
    let r = -dy[0] * dy[1] * dy[2] * eval_lambda(y, params);
    if r < 0.0 {
        return Err(G2Error::Domain(format!("negative radicand {r} in Lagrangian density")));
    }
    Ok(r.cbrt())
}

/// Residual 4x^3 - (3y^4 - 4(p - q)y^3 - 6pq y^2 - p^2 q^2) of the SU(2)^3 curve.
pub fn su2cubed_curve_residual(x: f64, y: f64, params: &ModelParams) -> f64 {
    let (p, q) = (params.p, params.q);
    let rhs = ((3.0 * y - 4.0 * (p - q)) * y - 6.0 * p * q) * y * y - p * p * q * q;
    4.0 * x * x * x - rhs
}
