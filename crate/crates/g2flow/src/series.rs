//! Truncated generalized power series over a weighted multi-index lattice and a
//! solver for singular initial value problems t y' = Phi(y, t).

use crate::error::{G2Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

/// Multi-indices h with h . gens <= max_weight, sorted by weight.
#[derive(Debug)]
pub struct Lattice {
    pub gens: Vec<f64>,
    pub max_weight: f64,
    pub idx: Vec<Vec<u32>>,
    pub weight: Vec<f64>,
    map: HashMap<Vec<u32>, usize>,
    /// For each position k, ordered pairs (i, j) with idx[i] + idx[j] = idx[k].
    pairs: Vec<Vec<(u32, u32)>>,
}

const WEIGHT_EPS: f64 = 1e-9;

impl Lattice {
    pub fn new(gens: &[f64], max_weight: f64) -> Arc<Lattice> {
        assert!(gens.iter().all(|g| *g > 0.0), "lattice generators must be positive");
        let m = gens.len();
        let mut idx: Vec<Vec<u32>> = vec![];
        let mut cur = vec![0u32; m];
        fn rec(d: usize, gens: &[f64], w: f64, maxw: f64, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if d == gens.len() {
                out.push(cur.clone());
                return;
            }
            let mut k = 0u32;
            while w + k as f64 * gens[d] <= maxw + WEIGHT_EPS {
                cur[d] = k;
                rec(d + 1, gens, w + k as f64 * gens[d], maxw, cur, out);
                k += 1;
            }
            cur[d] = 0;
        }
        rec(0, gens, 0.0, max_weight, &mut cur, &mut idx);
        let wt = |h: &Vec<u32>| h.iter().zip(gens).map(|(k, g)| *k as f64 * g).sum::<f64>();
        idx.sort_by(|a, b| wt(a).partial_cmp(&wt(b)).unwrap().then_with(|| a.cmp(b)));
        let weight: Vec<f64> = idx.iter().map(wt).collect();
        let map: HashMap<Vec<u32>, usize> = idx.iter().enumerate().map(|(i, h)| (h.clone(), i)).collect();
        let n = idx.len();
        let mut pairs = vec![vec![]; n];
        for i in 0..n {
            for j in 0..n {
                if weight[i] + weight[j] > max_weight + WEIGHT_EPS {
                    break;
                }
                let s: Vec<u32> = idx[i].iter().zip(&idx[j]).map(|(a, b)| a + b).collect();
                if let Some(&k) = map.get(&s) {
                    pairs[k].push((i as u32, j as u32));
                }
            }
        }
        Arc::new(Lattice { gens: gens.to_vec(), max_weight, idx, weight, map, pairs })
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn position(&self, h: &[u32]) -> Option<usize> {
        self.map.get(h).copied()
    }
}

/// A truncated series: coefficient per lattice position.
#[derive(Debug, Clone)]
pub struct Series {
    pub lat: Arc<Lattice>,
    pub c: Vec<f64>,
}

impl Series {
    pub fn zero(lat: &Arc<Lattice>) -> Series {
        Series { lat: lat.clone(), c: vec![0.0; lat.len()] }
    }

    pub fn constant(lat: &Arc<Lattice>, v: f64) -> Series {
        let mut s = Series::zero(lat);
        s.c[0] = v;
        s
    }

    /// The monomial sigma^h with unit coefficient (zero if h is outside the lattice).
    pub fn monomial(lat: &Arc<Lattice>, h: &[u32]) -> Series {
        let mut s = Series::zero(lat);
        if let Some(k) = lat.position(h) {
            s.c[k] = 1.0;
        }
        s
    }

    pub fn coeff(&self, h: &[u32]) -> f64 {
        self.lat.position(h).map_or(0.0, |k| self.c[k])
    }

    pub fn add(&self, o: &Series) -> Series {
        Series { lat: self.lat.clone(), c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, o: &Series) -> Series {
        Series { lat: self.lat.clone(), c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, k: f64) -> Series {
        Series { lat: self.lat.clone(), c: self.c.iter().map(|a| a * k).collect() }
    }

    pub fn add_const(&self, k: f64) -> Series {
        let mut s = self.clone();
        s.c[0] += k;
        s
    }

    pub fn mul(&self, o: &Series) -> Series {
        let mut c = vec![0.0; self.c.len()];
        for (k, pk) in self.lat.pairs.iter().enumerate() {
            let mut acc = 0.0;
            for &(i, j) in pk {
                let a = self.c[i as usize];
                if a != 0.0 {
                    acc += a * o.c[j as usize];
                }
            }
            c[k] = acc;
        }
        Series { lat: self.lat.clone(), c }
    }

    /// Real power via the Euler-operator recurrence w(k) a_0 b_k = sum (r w(i) - w(j)) a_i b_j.
    pub fn powf(&self, r: f64) -> Result<Series> {
        let a0 = self.c[0];
        let integer = r.fract() == 0.0;
        if a0 == 0.0 || (a0 < 0.0 && !integer) {
            return Err(G2Error::NonAnalytic(format!("power {r} of a series with constant term {a0}")));
        }
        let w = &self.lat.weight;
        let mut b = vec![0.0; self.c.len()];
        b[0] = a0.powf(r);
        for k in 1..b.len() {
            let mut acc = 0.0;
            for &(i, j) in &self.lat.pairs[k] {
                let (i, j) = (i as usize, j as usize);
                if i == 0 {
                    continue;
                }
                let ai = self.c[i];
                if ai != 0.0 {
                    acc += (r * w[i] - w[j]) * ai * b[j];
                }
            }
            b[k] = acc / (a0 * w[k]);
        }
        Ok(Series { lat: self.lat.clone(), c: b })
    }

    pub fn sqrt(&self) -> Result<Series> {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Result<Series> {
        self.powf(-1.0)
    }

    pub fn div(&self, o: &Series) -> Result<Series> {
        Ok(self.mul(&o.recip()?))
    }

    /// Multiplication by the monomial sigma^g.
    pub fn shift_up(&self, g: &[u32]) -> Series {
        let mut out = Series::zero(&self.lat);
        for (k, h) in self.lat.idx.iter().enumerate() {
            if self.c[k] == 0.0 {
                continue;
            }
            let s: Vec<u32> = h.iter().zip(g).map(|(a, b)| a + b).collect();
            if let Some(t) = self.lat.position(&s) {
                out.c[t] = self.c[k];
            }
        }
        out
    }

    /// Division by the monomial sigma^g; coefficients not divisible by sigma^g must
    /// vanish to `tol` relative to the largest coefficient.
    pub fn shift_down(&self, g: &[u32], tol: f64) -> Result<Series> {
        let scale = self.c.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut out = Series::zero(&self.lat);
        for (k, h) in self.lat.idx.iter().enumerate() {
            let divisible = h.iter().zip(g).all(|(a, b)| a >= b);
            if !divisible {
                if self.c[k].abs() > tol * scale {
                    return Err(G2Error::NonAnalytic(format!(
                        "coefficient {:e} at {:?} must vanish before dividing by {:?}",
                        self.c[k], h, g
                    )));
                }
                continue;
            }
            let s: Vec<u32> = h.iter().zip(g).map(|(a, b)| a - b).collect();
            if let Some(t) = self.lat.position(&s) {
                out.c[t] = self.c[k];
            }
        }
        Ok(out)
    }
}

/// Evaluation context handed to right-hand sides.
pub struct Ctx {
    pub lat: Arc<Lattice>,
}

impl Ctx {
    /// Explicit variable sigma_g = t^{gens[g]}.
    pub fn var(&self, g: usize) -> Series {
        let mut h = vec![0u32; self.lat.gens.len()];
        h[g] = 1;
        Series::monomial(&self.lat, &h)
    }

    pub fn constant(&self, v: f64) -> Series {
        Series::constant(&self.lat, v)
    }

    /// Multi-index of the generator g raised to the power k.
    pub fn gen_index(&self, g: usize, k: u32) -> Vec<u32> {
        let mut h = vec![0u32; self.lat.gens.len()];
        h[g] = k;
        h
    }
}

/// Whether the series expands at t = 0 forward or in s = 1/t at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    FromZeroForward,
    FromInfinityBackward,
}

/// Data handed to a resonance repair rule.
pub struct RepairCtx<'a> {
    pub index: &'a [u32],
    pub position: usize,
    pub weight: f64,
    pub q: &'a DVector<f64>,
    pub jac: &'a DMatrix<f64>,
    /// Partial solution with all coefficients from `position` on equal to zero.
    pub partial: &'a [Series],
}

/// Outcome of a repair, recorded on the solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub index: Vec<u32>,
    pub weight: f64,
    pub obstruction: f64,
    /// Size of the terms that cancel in the source at the index; the obstruction is rounding below it.
    pub scale: f64,
    pub note: String,
}

pub type Rhs<'a> = Box<dyn Fn(&Ctx, &[Series]) -> Result<Vec<Series>> + 'a>;
pub type Repair<'a> = Box<dyn Fn(&RepairCtx) -> Result<(Vec<f64>, Annotation)> + 'a>;

/// A singular initial value problem t y' = Phi(y, t) with y(0) = y0.
pub struct IvpProblem<'a> {
    pub dim: usize,
    pub generators: Vec<f64>,
    pub y0: Vec<f64>,
    pub rhs: Rhs<'a>,
    /// Prescribed coefficients at the free indices (eigen-directions of positive exponents).
    pub free: Vec<(Vec<u32>, Vec<f64>)>,
    /// Largest retained weight.
    pub order: f64,
    /// Extra lattice weight consumed by monomial divisions inside `rhs`.
    pub headroom: f64,
    pub repair: Option<Repair<'a>>,
    pub direction: Direction,
}

/// Truncated generalized power series solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSolution {
    pub base: Vec<f64>,
    pub exponents: Vec<f64>,
    pub indices: Vec<Vec<u32>>,
    pub weights: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    pub truncation_order: f64,
    pub direction: Direction,
    pub jacobian_eigenvalues: Vec<(f64, f64)>,
    pub annotations: Vec<Annotation>,
}

impl SeriesSolution {
    /// Value sum_h y_h tau^{h . lambda}; coefficient scales `mult` multiply each generator monomial.
    pub fn eval(&self, tau: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.base.len()];
        for (w, c) in self.weights.iter().zip(&self.coefficients) {
            let f = if *w == 0.0 { 1.0 } else { tau.powf(*w) };
            for i in 0..out.len() {
                out[i] += c[i] * f;
            }
        }
        out
    }

    /// Euler derivative tau d/dtau of the truncated series.
    pub fn eval_euler(&self, tau: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.base.len()];
        for (w, c) in self.weights.iter().zip(&self.coefficients) {
            if *w == 0.0 {
                continue;
            }
            let f = w * tau.powf(*w);
            for i in 0..out.len() {
                out[i] += c[i] * f;
            }
        }
        out
    }

    /// Size of the highest retained shell at tau: sum of |y_h| tau^w over weights within
    /// the smallest generator of the truncation order.
    pub fn tail_estimate(&self, tau: f64) -> f64 {
        let gmin = self.exponents.iter().cloned().fold(f64::INFINITY, f64::min);
        let cut = self.truncation_order - gmin;
        self.weights
            .iter()
            .zip(&self.coefficients)
            .filter(|(w, _)| **w > cut + WEIGHT_EPS)
            .map(|(w, c)| c.iter().fold(0.0f64, |m, v| m.max(v.abs())) * tau.powf(*w))
            .sum()
    }

    pub fn coefficient(&self, h: &[u32]) -> Option<&Vec<f64>> {
        self.indices.iter().position(|i| i.as_slice() == h).map(|k| &self.coefficients[k])
    }
}

fn coeff_vec(ys: &[Series], k: usize) -> DVector<f64> {
    DVector::from_iterator(ys.len(), ys.iter().map(|s| s.c[k]))
}

/// Particular solution of (w - J) y = q on the image, the kernel direction and the
/// cokernel component of q (the obstruction), via SVD.
pub fn solve_on_image(w: f64, jac: &DMatrix<f64>, q: &DVector<f64>) -> (DVector<f64>, DVector<f64>, f64) {
    let n = jac.nrows();
    let m = DMatrix::identity(n, n) * w - jac;
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let (mut kmin, mut smin) = (0, f64::INFINITY);
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s < smin {
            smin = *s;
            kmin = i;
        }
    }
    let mut y = DVector::zeros(n);
    for i in 0..n {
        if i == kmin {
            continue;
        }
        let coef = u.column(i).dot(q) / svd.singular_values[i];
        y += vt.row(i).transpose() * coef;
    }
    let kernel = vt.row(kmin).transpose();
    let obstruction = u.column(kmin).dot(q);
    (y, kernel, obstruction)
}

/// Jacobian of Phi at the base point, read off at the first positive lattice index by
/// symmetric probes of the coefficient there.
fn jacobian(p: &IvpProblem<'_>, ctx: &Ctx, ys: &[Series]) -> Result<DMatrix<f64>> {
    let n = p.dim;
    let mut jac = DMatrix::zeros(n, n);
    let k1 = 1;
    for col in 0..n {
        let mut plus = ys.to_vec();
        plus[col].c[k1] = 1.0;
        let mut minus = ys.to_vec();
        minus[col].c[k1] = -1.0;
        let fp = (p.rhs)(ctx, &plus)?;
        let fm = (p.rhs)(ctx, &minus)?;
        for row in 0..n {
            jac[(row, col)] = 0.5 * (fp[row].c[k1] - fm[row].c[k1]);
        }
    }
    Ok(jac)
}

/// Solves the recurrence ((h . lambda) - J) y_h = Q_h over the lattice.
pub fn solve_singular_ivp(p: &IvpProblem<'_>) -> Result<SeriesSolution> {
    if p.generators.is_empty() || p.generators.iter().any(|g| !(*g > 0.0)) {
        return Err(G2Error::Constraint("exponent generators must be positive".into()));
    }
    let lat = Lattice::new(&p.generators, p.order + p.headroom);
    if lat.len() < 2 {
        return Err(G2Error::Constraint("truncation order admits no positive index".into()));
    }
    let ctx = Ctx { lat: lat.clone() };
    let mut ys: Vec<Series> = p.y0.iter().map(|v| Series::constant(&lat, *v)).collect();
    let phi0 = (p.rhs)(&ctx, &ys)?;
    let base_scale = p.y0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for (i, f) in phi0.iter().enumerate() {
        if f.c[0].abs() > 1e-10 * base_scale {
            return Err(G2Error::Constraint(format!("Phi(y0, 0) component {i} = {:e} is not zero", f.c[0])));
        }
    }
    let jac = jacobian(p, &ctx, &ys)?;
    let eig = jac.clone().complex_eigenvalues();
    let eigs: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    let mut annotations = vec![];
    let n = p.dim;
    for k in 1..lat.len() {
        let w = lat.weight[k];
        if w > p.order + WEIGHT_EPS {
            break;
        }
        let phi = (p.rhs)(&ctx, &ys)?;
        let q = coeff_vec(&phi, k);
        let h = lat.idx[k].clone();
        let yk: DVector<f64> = if let Some((_, v)) = p.free.iter().find(|(fh, _)| *fh == h) {
            let v = DVector::from_column_slice(v);
            let resid = (DMatrix::identity(n, n) * w - &jac) * &v - &q;
            let sc = 1.0 + q.amax() + v.amax();
            if resid.amax() > 1e-9 * sc {
                return Err(G2Error::Resonance {
                    index: h,
                    detail: format!("free data does not solve the recurrence (residual {:e})", resid.amax()),
                });
            }
            v
        } else {
            let gap = eigs.iter().map(|(re, im)| ((w - re).powi(2) + im * im).sqrt()).fold(f64::INFINITY, f64::min);
            if gap > 1e-8 {
                let m = DMatrix::identity(n, n) * w - &jac;
                m.lu().solve(&q).ok_or_else(|| G2Error::Resonance { index: h.clone(), detail: "singular system".into() })?
            } else if let Some(rep) = &p.repair {
                let rc = RepairCtx { index: &h, position: k, weight: w, q: &q, jac: &jac, partial: &ys };
                let (v, ann) = rep(&rc)?;
                annotations.push(ann);
                DVector::from_vec(v)
            } else {
                let (_, _, obs) = solve_on_image(w, &jac, &q);
                return Err(G2Error::Resonance {
                    index: h,
                    detail: format!("weight {w} equals an eigenvalue; cokernel component of Q = {obs:e}"),
                });
            }
        };
        for i in 0..n {
            ys[i].c[k] = yk[i];
        }
    }
    let keep: Vec<usize> = (0..lat.len()).filter(|&k| lat.weight[k] <= p.order + WEIGHT_EPS).collect();
    Ok(SeriesSolution {
        base: p.y0.clone(),
        exponents: p.generators.clone(),
        indices: keep.iter().map(|&k| lat.idx[k].clone()).collect(),
        weights: keep.iter().map(|&k| lat.weight[k]).collect(),
        coefficients: keep.iter().map(|&k| (0..n).map(|i| ys[i].c[k]).collect()).collect(),
        truncation_order: p.order,
        direction: p.direction,
        jacobian_eigenvalues: eigs,
        annotations,
    })
}

/// Coefficients of the ODE residual t y' - Phi(y, t) of a truncated solution, on the
/// lattice extended by `extra` beyond its truncation order: (weight, coefficient vector)
/// for every weight above the truncation order.
pub fn residual_series(p: &IvpProblem<'_>, sol: &SeriesSolution, extra: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    let lat = Lattice::new(&p.generators, sol.truncation_order + extra + p.headroom);
    let ctx = Ctx { lat: lat.clone() };
    let n = p.dim;
    let mut ys: Vec<Series> = (0..n).map(|_| Series::zero(&lat)).collect();
    for (h, c) in sol.indices.iter().zip(&sol.coefficients) {
        let k = lat
            .position(h)
            .ok_or_else(|| G2Error::Constraint(format!("index {h:?} missing from the extended lattice")))?;
        for i in 0..n {
            ys[i].c[k] = c[i];
        }
    }
    let phi = (p.rhs)(&ctx, &ys)?;
    let mut out = vec![];
    for k in 0..lat.len() {
        let w = lat.weight[k];
        if w <= sol.truncation_order + WEIGHT_EPS || w > sol.truncation_order + extra + WEIGHT_EPS {
            continue;
        }
        out.push((w, (0..n).map(|i| w * ys[i].c[k] - phi[i].c[k]).collect()));
    }
    Ok(out)
}

/// Max-norm of a residual series summed at tau.
pub fn residual_norm(res: &[(f64, Vec<f64>)], tau: f64) -> f64 {
    let n = res.first().map(|r| r.1.len()).unwrap_or(0);
    let mut v = vec![0.0; n];
    for (w, c) in res {
        let f = tau.powf(*w);
        for i in 0..n {
            v[i] += c[i] * f;
        }
    }
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
