//! Initial states near the singular loci: the singular-orbit families, the conically
//! singular end and the asymptotically conical end, each built as a truncated
//! generalized power series.

use crate::error::{G2Error, Result};
use crate::invariants::{gcd, nu0, nu_inf, FullState, ModelParams, U1State, CONE_C};
use crate::series::{
    solve_on_image, solve_singular_ivp, Annotation, Ctx, Direction, IvpProblem, Series, SeriesSolution,
};
use nalgebra::{DVector, Matrix4};
use serde::{Deserialize, Serialize};

/// Tolerance for the vanishing of coefficients removed by monomial division.
const SHIFT_TOL: f64 = 1e-9;

/// Seed families and their parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SeedFamily {
    DeltaSu2 { r0: f64, alpha: [f64; 3] },
    Su2Factor { r0: f64, alpha: [f64; 3] },
    K11 { r0: f64, alpha: f64, beta: f64 },
    Kmn { m: u32, n: u32, r0: f64, beta: f64 },
    CsEnd { c: f64 },
    AcEnd { p: f64, q: f64, c: f64 },
}

/// A family with the parameter value at which the series hands over to the integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub family: SeedFamily,
    pub switch_parameter: f64,
}

/// A seed: the series, the handed-over state, its arc length and the model constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Seeded {
    pub series: SeriesSolution,
    pub t: f64,
    pub state: crate::flow::FlowState,
    pub params: ModelParams,
}

impl SeedSpec {
    /// Model constants determined by the family.
    pub fn params(&self) -> Result<ModelParams> {
        match self.family {
            SeedFamily::DeltaSu2 { r0, .. } => ModelParams::delta_su2(r0),
            SeedFamily::Su2Factor { r0, .. } => ModelParams::su2_factor(r0),
            SeedFamily::K11 { r0, .. } => ModelParams::kmn(1, 1, r0),
            SeedFamily::Kmn { m, n, r0, .. } => ModelParams::kmn(m, n, r0),
            SeedFamily::CsEnd { .. } => Ok(ModelParams::cone()),
            SeedFamily::AcEnd { p, q, .. } => Ok(ModelParams::new(p, q)),
        }
    }

    /// Checks the family constraints.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(G2Error::Constraint(m));
        match self.family {
            SeedFamily::DeltaSu2 { r0, alpha } => {
                if !(r0 > 0.0) {
                    return err(format!("r0 must be positive, got {r0}"));
                }
                let s = 64.0 * r0 * (alpha[0] + alpha[1] + alpha[2]);
                if (s - 1.0).abs() > 1e-12 {
                    return err(format!("64 r0 (a1 + a2 + a3) = {s} must equal 1"));
                }
            }
            SeedFamily::Su2Factor { r0, alpha } => {
                if !(r0 > 0.0) {
                    return err(format!("r0 must be positive, got {r0}"));
                }
                if alpha.iter().any(|a| !(*a > 0.0)) {
                    return err(format!("alphas must be positive, got {alpha:?}"));
                }
                let pr = alpha[0] * alpha[1] * alpha[2];
                if (pr - 1.0).abs() > 1e-12 {
                    return err(format!("a1 a2 a3 = {pr} must equal 1"));
                }
            }
            SeedFamily::K11 { r0, alpha, beta } => {
                if !(r0 > 0.0) || !(beta > 0.0) || !(alpha.abs() < 1.0) {
                    return err(format!("k11 needs r0, beta > 0 and |alpha| < 1 (r0 = {r0}, beta = {beta}, alpha = {alpha})"));
                }
            }
            SeedFamily::Kmn { m, n, r0, beta } => {
                if m == 0 || n == 0 || gcd(m, n) != 1 {
                    return err(format!("(m, n) = ({m}, {n}) must be coprime positive integers"));
                }
                if m * n <= 1 {
                    return err("kmn needs mn > 1; use the k11 family for m = n = 1".into());
                }
                if !(r0 > 0.0) || !(beta > 0.0) {
                    return err(format!("kmn needs r0, beta > 0 (r0 = {r0}, beta = {beta})"));
                }
            }
            SeedFamily::CsEnd { c } | SeedFamily::AcEnd { c, .. } => {
                if !c.is_finite() {
                    return err("c must be finite".into());
                }
            }
        }
        if !(self.switch_parameter > 0.0) {
            return err(format!("switch parameter must be positive, got {}", self.switch_parameter));
        }
        Ok(())
    }

    /// Builds the series with the default truncation and evaluates the seed.
    pub fn build(&self) -> Result<Seeded> {
        self.validate()?;
        let params = self.params()?;
        let ts = self.switch_parameter;
        let (series, state, t) = match self.family {
            SeedFamily::DeltaSu2 { r0, alpha } => {
                let (s, st) = seed_delta_su2(r0, alpha, ts, DEFAULT_INTEGER_ORDER)?;
                (s, crate::flow::FlowState::Full(st), ts)
            }
            SeedFamily::Su2Factor { r0, alpha } => {
                let (s, st) = seed_su2_factor(r0, alpha, ts, DEFAULT_INTEGER_ORDER)?;
                (s, crate::flow::FlowState::Full(st), ts)
            }
            SeedFamily::K11 { r0, alpha, beta } => {
                let (s, st) = seed_k11(r0, alpha, beta, ts, DEFAULT_INTEGER_ORDER)?;
                (s, crate::flow::FlowState::Full(st), ts)
            }
            SeedFamily::Kmn { m, n, r0, beta } => {
                let (s, st) = seed_kmn(m, n, r0, beta, ts, DEFAULT_INTEGER_ORDER)?;
                (s, crate::flow::FlowState::U1(st), ts)
            }
            SeedFamily::CsEnd { c } => {
                let (s, st) = seed_cs_end(c, ts, DEFAULT_CS_ORDER)?;
                (s, crate::flow::FlowState::U1(st), ts)
            }
            SeedFamily::AcEnd { p, q, c } => {
                let (s, st) = seed_ac_end(&ModelParams::new(p, q), c, ts, DEFAULT_AC_ORDER)?;
                (s, crate::flow::FlowState::U1(st), ts)
            }
        };
        Ok(Seeded { series, t, state, params })
    }
}

/// Default truncation (largest retained power of t) for the singular-orbit families.
pub const DEFAULT_INTEGER_ORDER: f64 = 10.0;
/// Default truncation for the conically singular end (eight powers of t^nu0).
pub const DEFAULT_CS_ORDER: f64 = 8.0 * 2.520_797_289_396_148;
/// Default truncation for the asymptotically conical end, in units of s = 1/t.
pub const DEFAULT_AC_ORDER: f64 = 45.0;

fn sq(s: &Series) -> Series {
    s.mul(s)
}

/// Lambda of three series.
fn lambda_series(y: &[Series; 3], p: f64, q: f64) -> Series {
    let s = [sq(&y[0]), sq(&y[1]), sq(&y[2])];
    let s2 = s[0].add(&s[1]).add(&s[2]);
    let e2 = s[0].mul(&s[1]).add(&s[1].mul(&s[2])).add(&s[2].mul(&s[0]));
    let u = s2.add_const(p * q);
    sq(&u).sub(&e2.scale(4.0)).add(&y[0].mul(&y[1]).mul(&y[2]).scale(4.0 * (p - q)))
}

/// Numerators 2(y_i(-y_i^2 + y_j^2 + y_k^2 - pq) - (p - q) y_j y_k) of dx_i.
fn numerator_series(y: &[Series; 3], p: f64, q: f64) -> [Series; 3] {
    let s = [sq(&y[0]), sq(&y[1]), sq(&y[2])];
    let one = |i: usize| {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let inner = s[j].add(&s[k]).sub(&s[i]).add_const(-p * q);
        y[i].mul(&inner).sub(&y[j].mul(&y[k]).scale(p - q)).scale(2.0)
    };
    [one(0), one(1), one(2)]
}

fn arr3(v: &[Series], off: usize) -> [Series; 3] {
    [v[off].clone(), v[off + 1].clone(), v[off + 2].clone()]
}

/// Diagonal SU(2) family: x_i = r0^2 t^2/4 + t^4 X_i, y_i = r0^3 + r0 t^2/4 + t^4 Y_i.
pub fn delta_su2_problem<'a>(r0: f64, alpha: [f64; 3], order: f64) -> IvpProblem<'a> {
    let r3 = r0 * r0 * r0;
    let (p, q) = (r3, -r3);
    let y0 = vec![
        2.0 * r0 * (alpha[1] + alpha[2]),
        2.0 * r0 * (alpha[2] + alpha[0]),
        2.0 * r0 * (alpha[0] + alpha[1]),
        alpha[0],
        alpha[1],
        alpha[2],
    ];
    let rhs = move |ctx: &Ctx, v: &[Series]| -> Result<Vec<Series>> {
        let tt = ctx.var(0);
        let xi: Vec<Series> = (0..3).map(|i| tt.mul(&v[i]).add_const(r0 * r0 / 4.0)).collect();
        let base_y = tt.scale(r0 / 4.0).add_const(r3);
        let y: [Series; 3] = [0, 1, 2].map(|i| base_y.add(&tt.mul(&tt).mul(&v[3 + i])));
        let inv = xi[0].mul(&xi[1]).mul(&xi[2]).powf(-0.5)?;
        let mut out = vec![Series::zero(&ctx.lat); 6];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let e = xi[j].mul(&xi[k]).mul(&inv).add_const(-r0 / 2.0);
            out[3 + i] = e.shift_down(&[1], SHIFT_TOL)?.sub(&v[3 + i].scale(4.0));
        }
        let h = 0.5 * (p - q);
        let vv = y[0].add(&y[1]).add(&y[2]).add_const(h);
        let mut omega = vec![];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            omega.push(y[i].sub(&y[j]).sub(&y[k]).add_const(h).shift_down(&[1], SHIFT_TOL)?);
        }
        let g = vv.mul(&omega[0]).mul(&omega[1]).mul(&omega[2]).scale(-1.0);
        let gi = g.powf(-0.5)?;
        let n = numerator_series(&y, p, q);
        let t4 = tt.mul(&tt).scale(r0 * r0 / 2.0);
        for i in 0..3 {
            let e = n[i].mul(&gi).sub(&t4);
            out[i] = e.shift_down(&[3], SHIFT_TOL)?.sub(&v[i].scale(4.0));
        }
        Ok(out)
    };
    IvpProblem {
        dim: 6,
        generators: vec![2.0],
        y0,
        rhs: Box::new(rhs),
        free: vec![],
        order,
        headroom: 8.0,
        repair: None,
        direction: Direction::FromZeroForward,
    }
}

/// Full state of the diagonal SU(2) family at t.
pub fn delta_su2_state(series: &SeriesSolution, r0: f64, t: f64) -> FullState {
    let v = series.eval(t);
    let t2 = t * t;
    let t4 = t2 * t2;
    let r3 = r0 * r0 * r0;
    let mut s = FullState { x: [0.0; 3], y: [0.0; 3] };
    for i in 0..3 {
        s.x[i] = r0 * r0 * t2 / 4.0 + t4 * v[i];
        s.y[i] = r3 + r0 * t2 / 4.0 + t4 * v[3 + i];
    }
    s
}

/// Series and seed state of the diagonal SU(2) family.
pub fn seed_delta_su2(r0: f64, alpha: [f64; 3], t_switch: f64, order: f64) -> Result<(SeriesSolution, FullState)> {
    SeedSpec { family: SeedFamily::DeltaSu2 { r0, alpha }, switch_parameter: t_switch }.validate()?;
    let s = solve_singular_ivp(&delta_su2_problem(r0, alpha, order))?;
    let st = delta_su2_state(&s, r0, t_switch);
    Ok((s, st))
}

/// {1} x SU(2) family: x_i = t^2 X_i, y_i = t^2 Y_i.
pub fn su2_factor_problem<'a>(r0: f64, alpha: [f64; 3], order: f64) -> IvpProblem<'a> {
    let r3 = r0 * r0 * r0;
    let y0 = vec![
        r0 * r0 * alpha[1] * alpha[2] / 4.0,
        r0 * r0 * alpha[2] * alpha[0] / 4.0,
        r0 * r0 * alpha[0] * alpha[1] / 4.0,
        r0 * alpha[0] / 4.0,
        r0 * alpha[1] / 4.0,
        r0 * alpha[2] / 4.0,
    ];
    let rhs = move |ctx: &Ctx, v: &[Series]| -> Result<Vec<Series>> {
        let tt = ctx.var(0);
        let x = arr3(v, 0);
        let y = arr3(v, 3);
        let lam0 = lambda_series(&y, 0.0, 0.0);
        let g = y[0].mul(&y[1]).mul(&y[2]).scale(4.0 * r3).sub(&tt.mul(&lam0));
        let gi = g.powf(-0.5)?;
        let inv = x[0].mul(&x[1]).mul(&x[2]).powf(-0.5)?;
        let s = [sq(&y[0]), sq(&y[1]), sq(&y[2])];
        let mut out = vec![Series::zero(&ctx.lat); 6];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            out[3 + i] = x[j].mul(&x[k]).mul(&inv).sub(&y[i].scale(2.0));
            let cubic = y[i].mul(&s[j].add(&s[k]).sub(&s[i]));
            let num = y[j].mul(&y[k]).scale(r3).add(&tt.mul(&cubic)).scale(2.0);
            out[i] = num.mul(&gi).sub(&x[i].scale(2.0));
        }
        Ok(out)
    };
    IvpProblem {
        dim: 6,
        generators: vec![2.0],
        y0,
        rhs: Box::new(rhs),
        free: vec![],
        order,
        headroom: 0.0,
        repair: None,
        direction: Direction::FromZeroForward,
    }
}

/// Full state of the {1} x SU(2) family at t.
pub fn su2_factor_state(series: &SeriesSolution, t: f64) -> FullState {
    let v = series.eval(t);
    let t2 = t * t;
    FullState { x: [t2 * v[0], t2 * v[1], t2 * v[2]], y: [t2 * v[3], t2 * v[4], t2 * v[5]] }
}

/// Series and seed state of the {1} x SU(2) family.
pub fn seed_su2_factor(r0: f64, alpha: [f64; 3], t_switch: f64, order: f64) -> Result<(SeriesSolution, FullState)> {
    SeedSpec { family: SeedFamily::Su2Factor { r0, alpha }, switch_parameter: t_switch }.validate()?;
    let s = solve_singular_ivp(&su2_factor_problem(r0, alpha, order))?;
    let st = su2_factor_state(&s, t_switch);
    Ok((s, st))
}

/// Base point (X1, X2(=da^2 correction), Y1, Y2) of the U(1) circle family.
fn kmn_base(m: u32, n: u32, r0: f64, beta: f64) -> Vec<f64> {
    let (mf, nf) = (m as f64, n as f64);
    let smn = (mf * nf).sqrt();
    let r2 = r0 * r0;
    vec![
        smn * (mf + nf) * r2 * r0,
        r2 * beta * (mf + nf) / (2.0 * smn) - r2 * mf * mf * nf * nf / (2.0 * beta * beta),
        r2 * beta,
        smn * (mf + nf) * r0 / (2.0 * beta),
    ]
}

/// Circle family K_{m,n}: x1 = t X1, x2 = r0^4 beta^2 + t^2 X2, a = t Y1, b = mn r0^3 + t^2 Y2.
pub fn kmn_problem<'a>(m: u32, n: u32, r0: f64, beta: f64, order: f64) -> IvpProblem<'a> {
    let (mf, nf) = (m as f64, n as f64);
    let r3 = r0 * r0 * r0;
    let (p, q) = (-mf * mf * r3, nf * nf * r3);
    let b0 = mf * nf * r3;
    let x20 = r0.powi(4) * beta * beta;
    let rhs = move |ctx: &Ctx, v: &[Series]| -> Result<Vec<Series>> {
        let t = ctx.var(0);
        let t2 = t.mul(&t);
        let x2 = t2.mul(&v[1]).add_const(x20);
        let b = t2.mul(&v[3]).add_const(b0);
        let w = v[3].mul(&t2.mul(&v[3]).add_const(2.0 * b0));
        let bp = b.add_const(-p);
        let bq = b.add_const(q);
        let y1s = sq(&v[2]);
        let fh = y1s.mul(&bp).mul(&bq).scale(4.0).sub(&t2.mul(&sq(&w)));
        let fhb = y1s.mul(&b.scale(2.0).add_const(q - p)).scale(4.0).sub(&b.mul(&w).scale(4.0));
        let s = fh.powf(-0.5)?;
        let sx = x2.powf(0.5)?;
        let isx = x2.powf(-0.5)?;
        Ok(vec![
            v[2].mul(&bp).mul(&bq).mul(&s).scale(2.0).sub(&v[0]),
            fhb.mul(&s).scale(0.5).sub(&v[1].scale(2.0)),
            sx.sub(&v[2]),
            v[0].mul(&isx).sub(&v[3].scale(2.0)),
        ])
    };
    IvpProblem {
        dim: 4,
        generators: vec![1.0],
        y0: kmn_base(m, n, r0, beta),
        rhs: Box::new(rhs),
        free: vec![],
        order,
        headroom: 0.0,
        repair: None,
        direction: Direction::FromZeroForward,
    }
}

/// Arc-length U(1) state of the circle family at t.
pub fn kmn_state(series: &SeriesSolution, m: u32, n: u32, r0: f64, beta: f64, t: f64) -> Result<U1State> {
    let v = series.eval(t);
    let b0 = (m * n) as f64 * r0 * r0 * r0;
    let x20 = r0.powi(4) * beta * beta;
    U1State::from_flow_vars(&[t * v[0], x20 + t * t * v[1], t * v[2], b0 + t * t * v[3]])
}

/// Series and seed state of the U(1) circle family.
pub fn seed_kmn(m: u32, n: u32, r0: f64, beta: f64, t_switch: f64, order: f64) -> Result<(SeriesSolution, U1State)> {
    if m * n == 1 {
        SeedSpec { family: SeedFamily::K11 { r0, alpha: 0.0, beta }, switch_parameter: t_switch }.validate()?;
    } else {
        SeedSpec { family: SeedFamily::Kmn { m, n, r0, beta }, switch_parameter: t_switch }.validate()?;
    }
    let s = solve_singular_ivp(&kmn_problem(m, n, r0, beta, order))?;
    let st = kmn_state(&s, m, n, r0, beta, t_switch)?;
    Ok((s, st))
}

/// K_{1,1} family with a1 != a2 on the full system.
pub fn k11_problem<'a>(r0: f64, alpha: f64, beta: f64, order: f64) -> IvpProblem<'a> {
    let r3 = r0 * r0 * r0;
    let (p, q) = (-r3, r3);
    let x30 = r0.powi(4) * beta * beta;
    let c = (1.0 - alpha * alpha).sqrt();
    let r2 = r0 * r0;
    let y0 = vec![
        2.0 * r3 * c,
        2.0 * r3 * c,
        beta * r2 / c - r2 * c * c / (2.0 * beta * beta),
        r2 * beta,
        r2 * beta,
        r0 * c / beta,
    ];
    let rhs = move |ctx: &Ctx, v: &[Series]| -> Result<Vec<Series>> {
        let t = ctx.var(0);
        let t2 = t.mul(&t);
        let x3 = t2.mul(&v[2]).add_const(x30);
        let y = [
            t.mul(&v[3]).add_const(r3 * alpha),
            t.mul(&v[4]).add_const(-r3 * alpha),
            t2.mul(&v[5]).add_const(r3),
        ];
        let i0 = v[0].recip()?;
        let i1 = v[1].recip()?;
        let ix3 = x3.recip()?;
        let lam = lambda_series(&y, p, q);
        let g = lam.scale(-1.0).shift_down(&[2], SHIFT_TOL)?;
        let gi = g.powf(-0.5)?;
        let nn = numerator_series(&y, p, q);
        Ok(vec![
            nn[0].shift_down(&[1], SHIFT_TOL)?.mul(&gi).sub(&v[0]),
            nn[1].shift_down(&[1], SHIFT_TOL)?.mul(&gi).sub(&v[1]),
            nn[2].shift_down(&[2], SHIFT_TOL)?.mul(&gi).sub(&v[2].scale(2.0)),
            v[1].mul(&x3).mul(&i0).powf(0.5)?.sub(&v[3]),
            v[0].mul(&x3).mul(&i1).powf(0.5)?.sub(&v[4]),
            v[0].mul(&v[1]).mul(&ix3).powf(0.5)?.sub(&v[5].scale(2.0)),
        ])
    };
    IvpProblem {
        dim: 6,
        generators: vec![1.0],
        y0,
        rhs: Box::new(rhs),
        free: vec![],
        order,
        headroom: 2.0,
        repair: None,
        direction: Direction::FromZeroForward,
    }
}

/// Full state of the K_{1,1} family at t.
pub fn k11_state(series: &SeriesSolution, r0: f64, alpha: f64, beta: f64, t: f64) -> FullState {
    let v = series.eval(t);
    let r3 = r0 * r0 * r0;
    let t2 = t * t;
    FullState {
        x: [t * v[0], t * v[1], r0.powi(4) * beta * beta + t2 * v[2]],
        y: [r3 * alpha + t * v[3], -r3 * alpha + t * v[4], r3 + t2 * v[5]],
    }
}

/// Series and seed state of the K_{1,1} family on the full system.
pub fn seed_k11(r0: f64, alpha: f64, beta: f64, t_switch: f64, order: f64) -> Result<(SeriesSolution, FullState)> {
    SeedSpec { family: SeedFamily::K11 { r0, alpha, beta }, switch_parameter: t_switch }.validate()?;
    let s = solve_singular_ivp(&k11_problem(r0, alpha, beta, order))?;
    let st = k11_state(&s, r0, alpha, beta, t_switch);
    Ok((s, st))
}

/// Right-hand side in t of the cone-scaled variables (X1, X2, Y1, Y2):
/// a = C t^3 (1 + Y1), b = C t^3 (1 + Y2), da db = t^4 (1 + X1)/108, da^2 = t^4 (1 + X2)/108,
/// with sigma = t^-3 entering through P = p/C and Q = q/C.
fn cone_scaled_rhs(v: &[Series], sigma: &Series, pp: f64, qq: f64) -> Result<Vec<Series>> {
    let a = v[2].add_const(1.0);
    let b = v[3].add_const(1.0);
    let one_x1 = v[0].add_const(1.0);
    let one_x2 = v[1].add_const(1.0);
    let bp = b.sub(&sigma.scale(pp));
    let bq = b.add(&sigma.scale(qq));
    let w = sq(&b).add(&sq(sigma).scale(pp * qq));
    let a2 = sq(&a);
    let ft = a2.mul(&bp).mul(&bq).scale(4.0).sub(&sq(&w));
    let s = ft.powf(-0.5)?;
    let k = 216.0 * CONE_C;
    let fb = a2.mul(&b.scale(2.0).add(&sigma.scale(qq - pp))).sub(&b.mul(&w));
    Ok(vec![
        a.mul(&bp).mul(&bq).mul(&s).scale(k).sub(&one_x1.scale(4.0)),
        fb.mul(&s).scale(k).sub(&one_x2.scale(4.0)),
        one_x2.powf(0.5)?.scale(3.0).sub(&a.scale(3.0)),
        one_x1.mul(&one_x2.powf(-0.5)?).scale(3.0).sub(&b.scale(3.0)),
    ])
}

/// Linearization at the cone of the cone-scaled system in (X1, X2, Y1, Y2).
#[rustfmt::skip]
pub fn cs_linearization() -> Matrix4<f64> {
    Matrix4::new(
        -4.0, 0.0, -4.0 / 3.0, 16.0 / 3.0,
        0.0, -4.0, 32.0 / 3.0, -20.0 / 3.0,
        0.0, 1.5, -3.0, 0.0,
        3.0, -1.5, 0.0, -3.0,
    )
}

/// Eigenvalues (ascending) and unit eigenvectors of a linearization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenStructure {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<[f64; 4]>,
    /// Largest imaginary part seen among the computed eigenvalues.
    pub max_imag: f64,
}

/// Eigen-structure of `m`: eigenvalues from the Schur form, each eigenvector as the
/// right singular vector of m - lambda I with the smallest singular value.
pub fn eigen_structure(m: &Matrix4<f64>) -> EigenStructure {
    let ev = m.complex_eigenvalues();
    let max_imag = ev.iter().fold(0.0f64, |acc, z| acc.max(z.im.abs()));
    let mut lams: Vec<f64> = ev.iter().map(|z| z.re).collect();
    lams.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let eigenvectors = lams
        .iter()
        .map(|&l| {
            let svd = (m - Matrix4::identity() * l).svd(false, true);
            let vt = svd.v_t.expect("requested right singular vectors");
            let (imin, _) = svd.singular_values.argmin();
            let r = vt.row(imin);
            [r[0], r[1], r[2], r[3]]
        })
        .collect();
    EigenStructure { eigenvalues: lams, eigenvectors, max_imag }
}

/// Eigen-structure of the cone linearization.
pub fn cs_linearization_eigen() -> EigenStructure {
    eigen_structure(&cs_linearization())
}

/// Eigenvector of the cone linearization for the conically singular rate, scaled so that
/// the a- and b-coefficients are c/2 and -c.
pub fn cs_free_vector(c: f64) -> Vec<f64> {
    let n0 = nu0();
    let k = -c / 6.0;
    vec![k * (3.0 + n0), k * (-6.0 - 2.0 * n0), k * -3.0, k * 6.0]
}

/// Eigenvector for the decaying rate, scaled so that the b - a coefficient is c.
pub fn ac_free_vector(c: f64) -> Vec<f64> {
    let n0 = nu0();
    let k = -c / 9.0;
    vec![k * (4.0 + n0), k * (-8.0 - 2.0 * n0), k * 3.0, k * -6.0]
}

/// Conically singular end in powers of t^nu0.
pub fn cs_problem<'a>(c: f64, order: f64) -> IvpProblem<'a> {
    let rhs = move |ctx: &Ctx, v: &[Series]| -> Result<Vec<Series>> {
        let zero = Series::zero(&ctx.lat);
        cone_scaled_rhs(v, &zero, 0.0, 0.0)
    };
    IvpProblem {
        dim: 4,
        generators: vec![nu0()],
        y0: vec![0.0; 4],
        rhs: Box::new(rhs),
        free: vec![(vec![1], cs_free_vector(c))],
        order,
        headroom: 0.0,
        repair: None,
        direction: Direction::FromZeroForward,
    }
}

/// U(1) state from cone-scaled variables at arc length t.
pub fn cone_scaled_state(v: &[f64], t: f64) -> Result<U1State> {
    let t3 = t * t * t;
    let t4 = t3 * t;
    U1State::from_flow_vars(&[
        t4 * (1.0 + v[0]) / 108.0,
        t4 * (1.0 + v[1]) / 108.0,
        CONE_C * t3 * (1.0 + v[2]),
        CONE_C * t3 * (1.0 + v[3]),
    ])
}

/// Series and seed state of the conically singular end.
pub fn seed_cs_end(c: f64, t_switch: f64, order: f64) -> Result<(SeriesSolution, U1State)> {
    SeedSpec { family: SeedFamily::CsEnd { c }, switch_parameter: t_switch }.validate()?;
    let s = solve_singular_ivp(&cs_problem(c, order))?;
    let tail = s.tail_estimate(t_switch);
    if tail > 1e-10 {
        return Err(G2Error::Seed(format!("series tail {tail:e} at t = {t_switch} exceeds 1e-10")));
    }
    let st = cone_scaled_state(&s.eval(t_switch), t_switch)?;
    Ok((s, st))
}

/// H / (C^2 t^6) in cone-scaled variables: sqrt(F~) - sqrt(3)(1 + X1) sqrt(1 + X2).
fn scaled_hamiltonian(v: &[Series], sigma: &Series, pp: f64, qq: f64) -> Result<Series> {
    let a = v[2].add_const(1.0);
    let b = v[3].add_const(1.0);
    let bp = b.sub(&sigma.scale(pp));
    let bq = b.add(&sigma.scale(qq));
    let w = sq(&b).add(&sq(sigma).scale(pp * qq));
    let ft = sq(&a).mul(&bp).mul(&bq).scale(4.0).sub(&sq(&w));
    Ok(ft.powf(0.5)?.sub(&v[0].add_const(1.0).mul(&v[1].add_const(1.0).powf(0.5)?).scale(3f64.sqrt())))
}

/// Asymptotically conical end in powers of s^3 and s^nu_inf, s = 1/t.
pub fn ac_problem<'a>(params: &ModelParams, c: f64, order: f64) -> IvpProblem<'a> {
    let pp = params.p / CONE_C;
    let qq = params.q / CONE_C;
    let rhs = move |ctx: &Ctx, v: &[Series]| -> Result<Vec<Series>> {
        let sigma = ctx.var(0);
        let out = cone_scaled_rhs(v, &sigma, pp, qq)?;
        Ok(out.into_iter().map(|s| s.scale(-1.0)).collect())
    };
    let repair = move |rc: &crate::series::RepairCtx| -> Result<(Vec<f64>, Annotation)> {
        if rc.index != [2u32, 0].as_slice() {
            return Err(G2Error::Resonance { index: rc.index.to_vec(), detail: "no repair rule for this index".into() });
        }
        let (part, kernel, obs) = solve_on_image(rc.weight, rc.jac, rc.q);
        let scale = 1.0 + pp.abs().max(qq.abs()).powi(2) + rc.q.amax();
        if obs.abs() > 1e-10 * scale {
            return Err(G2Error::Resonance {
                index: rc.index.to_vec(),
                detail: format!("obstruction {obs:e} does not vanish"),
            });
        }
        let lat = &rc.partial[0].lat;
        let sigma = Ctx { lat: lat.clone() }.var(0);
        let h_coeff = |y: &DVector<f64>| -> Result<f64> {
            let mut v = rc.partial.to_vec();
            for i in 0..4 {
                v[i].c[rc.position] = y[i];
            }
            Ok(scaled_hamiltonian(&v, &sigma, pp, qq)?.c[rc.position])
        };
        let h0 = h_coeff(&part)?;
        let h1 = h_coeff(&(&part + &kernel))?;
        if (h1 - h0).abs() < 1e-14 {
            return Err(G2Error::Resonance {
                index: rc.index.to_vec(),
                detail: "Hamiltonian does not fix the kernel component".into(),
            });
        }
        let kappa = -h0 / (h1 - h0);
        let y = &part + &kernel * kappa;
        Ok((
            y.iter().cloned().collect(),
            Annotation {
                index: rc.index.to_vec(),
                weight: rc.weight,
                obstruction: obs,
                scale,
                note: "solved on the image; kernel fixed by the s^6 coefficient of H".into(),
            },
        ))
    };
    IvpProblem {
        dim: 4,
        generators: vec![3.0, nu_inf()],
        y0: vec![0.0; 4],
        rhs: Box::new(rhs),
        free: vec![(vec![0, 1], ac_free_vector(c))],
        order,
        headroom: 0.0,
        repair: Some(Box::new(repair)),
        direction: Direction::FromInfinityBackward,
    }
}

/// Arc-length state of the asymptotically conical end at large t.
pub fn ac_state(series: &SeriesSolution, t: f64) -> Result<U1State> {
    cone_scaled_state(&series.eval(1.0 / t), t)
}

/// Smallest T on a geometric grid above `t_min` where the series tail is below `tol`
/// and the decaying mode c T^-nu_inf is below 0.05.
pub fn ac_auto_switch(series: &SeriesSolution, params: &ModelParams, c: f64, tol: f64) -> f64 {
    let pq = (params.p.abs().max(params.q.abs()) / CONE_C).cbrt();
    let mut t = (2.0 * pq).max((c.abs() / 0.05).powf(1.0 / nu_inf())).max(1.0);
    for _ in 0..400 {
        if series.tail_estimate(1.0 / t) <= tol {
            return t;
        }
        t *= 1.05;
    }
    t
}

/// Series and seed state of the asymptotically conical end at T.
pub fn seed_ac_end(params: &ModelParams, c: f64, t_switch: f64, order: f64) -> Result<(SeriesSolution, U1State)> {
    SeedSpec { family: SeedFamily::AcEnd { p: params.p, q: params.q, c }, switch_parameter: t_switch }.validate()?;
    let s = solve_singular_ivp(&ac_problem(params, c, order))?;
    let st = ac_state(&s, t_switch)?;
    Ok((s, st))
}
