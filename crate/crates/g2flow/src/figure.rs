//! Curve bundle of a circle family in the (a, b)-plane: a ladder of beta values around
//! the critical one, tagged ALC or incomplete, plus the AC separatrix.

use crate::classifier::{classify_state, ClassifyOptions};
use crate::error::Result;
use crate::flow::{integrate, FlowState, Formulation, RunSpec, Sample, Seed, StopEvent, StopKind, Trajectory};
use crate::invariants::ModelParams;
use crate::report::trajectory_csv;
use crate::shooter::{
    extend_ac_backward, find_beta_ac, find_c_ac, integrate_ac_forward, kmn_seed_auto, GammaCurve, ShootOptions,
};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;

/// Settings of the curve bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureOptions {
    pub m: u32,
    pub n: u32,
    pub r0: f64,
    /// Ladder factors applied to beta_ac.
    pub factors: Vec<f64>,
    /// Initial end of each forward curve, in units of r0.
    pub t_end: f64,
    /// Dense samples per curve.
    pub samples: usize,
    pub shoot: ShootOptions,
    pub classify: ClassifyOptions,
}

impl Default for FigureOptions {
    fn default() -> Self {
        FigureOptions {
            m: 1,
            n: 2,
            r0: 1.0,
            factors: vec![0.25, 0.5, 0.8, 1.25, 2.0, 4.0],
            t_end: 20.0,
            samples: 400,
            shoot: ShootOptions::default(),
            classify: ClassifyOptions { confirm_blowup: true, ..ClassifyOptions::default() },
        }
    }
}

/// One tagged curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureCurve {
    pub file: String,
    /// ALC, AC or incomplete.
    pub tag: String,
    pub beta: f64,
    /// Terminal event of the classification run (incomplete curves).
    pub terminal: Option<StopKind>,
    pub final_a: f64,
    pub final_b: f64,
    #[serde(skip)]
    pub csv: String,
}

/// The bundle with its plotting script.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure {
    pub m: u32,
    pub n: u32,
    pub r0: f64,
    pub beta_ac: f64,
    pub c_ac: f64,
    pub curves: Vec<FigureCurve>,
    #[serde(skip)]
    pub script: String,
}

fn geometric(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count.max(2) - 1) as f64)).collect()
}

/// Forward curve of the circle family at beta until `t_end`, extended until a > b when
/// `want_crossing` holds.
fn forward_curve(opts: &FigureOptions, beta: f64, want_crossing: bool) -> Result<Trajectory> {
    let params = ModelParams::kmn(opts.m, opts.n, opts.r0)?;
    let (_, t0, u) = kmn_seed_auto(opts.m, opts.n, opts.r0, beta)?;
    let mut t_end = opts.t_end * opts.r0;
    loop {
        let mut spec = RunSpec::new(Formulation::ArcLengthU1, Seed { start: t0, t: t0, state: FlowState::U1(u) });
        spec.end = Some(t_end);
        spec.tol.rtol = opts.classify.rtol;
        spec.tol.atol = opts.classify.atol;
        spec.stops = vec![StopEvent::FVanishes { eps: 1e-10 }, StopEvent::BlowUp { factor: 1e12 }];
        spec.outputs = geometric(t0 * 1.01, t_end, opts.samples);
        let traj = integrate(&spec, &params)?;
        let last = traj.last().state.u1();
        let crossed = last.map(|v| v.a > v.b).unwrap_or(false);
        if !want_crossing || crossed || t_end > 1e6 * opts.r0 {
            return Ok(traj);
        }
        t_end *= 4.0;
    }
}

/// AC separatrix: the critical backward run from the AC end, reversed, followed by the
/// forward continuation of the same end.
fn ac_curve(opts: &FigureOptions, c_ac: f64) -> Result<Trajectory> {
    let gamma = GammaCurve::new(opts.m, opts.n, opts.r0, opts.shoot.k)?;
    let params = gamma.params();
    let r2 = opts.r0 * opts.r0;
    let (back, _) = extend_ac_backward(&gamma, c_ac, &opts.shoot, &geometric(opts.shoot.a_min * r2 * 10.0, 1e3 * r2, opts.samples), false)?;
    let t_switch = back.samples[0].t;
    let fwd = integrate_ac_forward(&params, c_ac, (opts.t_end * opts.r0).max(4.0 * t_switch), &opts.shoot)?;
    let mut samples: Vec<Sample> = back
        .samples
        .iter()
        .rev()
        .filter_map(|s| s.state.u1().and_then(|u| u.normalized(&params).ok()).map(|u| Sample { param: s.t, t: s.t, state: FlowState::U1(u) }))
        .collect();
    samples.pop();
    samples.extend(fwd.samples.iter().copied());
    Ok(Trajectory { samples, param: fwd.param, formulation: fwd.formulation, events: vec![], params, terminal: fwd.terminal, steps: back.steps + fwd.steps })
}

/// Computes the critical values, the tagged ladder and the gnuplot script.
pub fn figure1(opts: &FigureOptions) -> Result<Figure> {
    let (beta_res, c_res) =
        rayon::join(|| find_beta_ac(opts.m, opts.n, opts.r0, &opts.shoot), || find_c_ac(opts.m, opts.n, opts.r0, &opts.shoot));
    let beta_ac = beta_res?.critical_value;
    let c_ac = c_res?.critical_value;
    let params = ModelParams::kmn(opts.m, opts.n, opts.r0)?;
    let cushion = opts.classify.cushion;
    let mut curves: Vec<FigureCurve> = opts
        .factors
        .par_iter()
        .enumerate()
        .map(|(i, f)| -> Result<FigureCurve> {
            let beta = beta_ac * f;
            let (_, t0, u) = kmn_seed_auto(opts.m, opts.n, opts.r0, beta)?;
            let verdict = classify_state(&u, t0, &params, &opts.classify)?;
            let tag = verdict.tag().to_string();
            let terminal = match &verdict.kind {
                crate::classifier::VerdictKind::Incomplete { event, .. } => event.map(|e| e.kind),
                _ => None,
            };
            let traj = forward_curve(opts, beta, tag == "ALC")?;
            let last = traj.last().state.u1().expect("U(1) curve");
            Ok(FigureCurve {
                file: format!("curve_{i:02}_{}.csv", tag.to_lowercase()),
                tag,
                beta,
                terminal,
                final_a: last.a,
                final_b: last.b,
                csv: trajectory_csv(&traj, cushion),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ac = ac_curve(opts, c_ac)?;
    let last = ac.last().state.u1().expect("U(1) curve");
    curves.push(FigureCurve {
        file: format!("curve_{:02}_ac.csv", curves.len()),
        tag: "AC".into(),
        beta: beta_ac,
        terminal: None,
        final_a: last.a,
        final_b: last.b,
        csv: trajectory_csv(&ac, cushion),
    });
    let script = gnuplot_script(opts, beta_ac, &curves);
    Ok(Figure { m: opts.m, n: opts.n, r0: opts.r0, beta_ac, c_ac, curves, script })
}

/// Plots b against a for every curve: ALC blue, AC black, incomplete red.
pub fn gnuplot_script(opts: &FigureOptions, beta_ac: f64, curves: &[FigureCurve]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# circle family m = {}, n = {}, r0 = {}, beta_ac = {beta_ac:.16e}", opts.m, opts.n, opts.r0);
    let _ = writeln!(s, "set datafile separator \",\"");
    let _ = writeln!(s, "set xlabel \"a\"");
    let _ = writeln!(s, "set ylabel \"b\"");
    let _ = writeln!(s, "set key off");
    let lim = 8.0 * (opts.m * opts.n) as f64 * opts.r0.powi(3);
    let _ = writeln!(s, "set xrange [0:{lim}]");
    let _ = writeln!(s, "set yrange [0:{lim}]");
    let plots: Vec<String> = curves
        .iter()
        .map(|c| {
            let color = match c.tag.as_str() {
                "ALC" => "blue",
                "AC" => "black",
                _ => "red",
            };
            format!("'{}' using 4:5 with lines lc rgb \"{color}\"", c.file)
        })
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}
