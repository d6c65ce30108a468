//! Command-line driver: solve, classify, sweep, find-ac, figure1 and verify.

use crate::classifier::{classify_trajectory, Verdict};
use crate::config::RunConfig;
use crate::error::{G2Error, Result};
use crate::figure::{figure1, FigureOptions};
use crate::flow::{integrate, FlowState, Formulation, RunSpec, Seed, StopEvent};
use crate::invariants::{ModelParams, Param, U1State, CONE_C};
use crate::report::{trajectory_csv, write_json, write_text, Manifest};
use crate::shooter::{critical_trajectory, find_ac, GammaCurve};
use crate::verify::{run_all, VerifyOptions};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Exit status of a configuration error.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status of an integration or seeding error.
pub const EXIT_INTEGRATION: i32 = 3;
/// Exit status when no bracket is found.
pub const EXIT_BRACKET: i32 = 4;
/// Exit status of a failed verification.
pub const EXIT_VERIFY: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "g2flow", version, about = "Cohomogeneity-one G2 flows: seeds, classification and critical AC solutions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one seed and write its trajectory.
    Solve(Flags),
    /// Classify one seed as ALC, AC or incomplete.
    Classify(Flags),
    /// Classify a family over a list of parameter values.
    Sweep(Flags),
    /// Find the critical AC member of a circle family by two shooting schemes.
    FindAc(Flags),
    /// Curve bundle of the (1, 2) circle family with a gnuplot script.
    Figure1(Flags),
    /// Run the acceptance suite.
    Verify(Flags),
}

/// Flags shared by all commands; names match the keys of the JSON configuration.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct Flags {
    /// JSON configuration file (defaults to $G2FLOW_CONFIG).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Family: b7, d7, k11, kmn, cs, ac or cone.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    /// Number or "auto".
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<String>,
    /// Number or "auto".
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<String>,
    /// Number or "auto".
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha3: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cushion: Option<f64>,
    #[arg(long = "max-span", alias = "max_span")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_span: Option<f64>,
    #[arg(long = "max-steps", alias = "max_steps")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    /// Integrate past death-quadrant entry to the terminal event.
    #[arg(long = "confirm-blowup", alias = "confirm_blowup", num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confirm_blowup: Option<bool>,
    /// Shooting curve parameter in (1, 2).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[arg(long = "c-tol", alias = "c_tol")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_tol: Option<f64>,
    #[arg(long = "beta-tol", alias = "beta_tol")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_tol: Option<f64>,
    /// Exponent range of the c scan, as lo,hi.
    #[arg(long = "c-scan", alias = "c_scan", value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_scan: Option<Vec<i32>>,
    /// Exponent range of the beta scan, as lo,hi.
    #[arg(long = "beta-scan", alias = "beta_scan", value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_scan: Option<Vec<i32>>,
    /// Swept parameter name.
    #[arg(long = "sweep-param", alias = "sweep_param")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_param: Option<String>,
    /// Swept values, comma separated.
    #[arg(long = "sweep-values", alias = "sweep_values", value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_values: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Closed-form checks only (verify).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quick: Option<bool>,
}

impl Flags {
    /// Explicit flags as configuration keys.
    pub fn overrides(&self) -> Result<Map<String, Value>> {
        let mut map = match serde_json::to_value(self)? {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        for key in ["alpha1", "alpha2", "alpha3"] {
            if let Some(Value::String(s)) = map.get(key).cloned() {
                let v = match s.parse::<f64>() {
                    Ok(x) => serde_json::json!(x),
                    Err(_) => Value::String(s),
                };
                map.insert(key.into(), v);
            }
        }
        Ok(map)
    }

    pub fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides()?)
    }
}

/// Exit status of an error.
pub fn exit_code(e: &G2Error) -> i32 {
    match e {
        G2Error::Config(_) => EXIT_CONFIG,
        G2Error::Bracket { .. } => EXIT_BRACKET,
        _ => EXIT_INTEGRATION,
    }
}

/// Parses the arguments, runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("g2flow: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command.
pub fn run(cmd: &Command) -> Result<i32> {
    let start = Instant::now();
    let (name, flags) = match cmd {
        Command::Solve(f) => ("solve", f),
        Command::Classify(f) => ("classify", f),
        Command::Sweep(f) => ("sweep", f),
        Command::FindAc(f) => ("find-ac", f),
        Command::Figure1(f) => ("figure1", f),
        Command::Verify(f) => ("verify", f),
    };
    let cfg = flags.load()?;
    let out = PathBuf::from(&cfg.out);
    let mut manifest = Manifest::new(name, &cfg);
    let code = match cmd {
        Command::Solve(_) => cmd_solve(&cfg, &out, &mut manifest)?,
        Command::Classify(_) => cmd_classify(&cfg, &out, &mut manifest)?,
        Command::Sweep(_) => cmd_sweep(&cfg, &out, &mut manifest)?,
        Command::FindAc(_) => cmd_find_ac(&cfg, &out, &mut manifest)?,
        Command::Figure1(_) => cmd_figure1(&cfg, &out, &mut manifest)?,
        Command::Verify(_) => return cmd_verify(&cfg),
    };
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(code)
}

fn geometric(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![hi];
    }
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
}

fn write_out(out: &Path, file: &str, text: &str, manifest: &mut Manifest) -> Result<()> {
    write_text(&out.join(file), text)?;
    manifest.outputs.push(file.into());
    Ok(())
}

/// Integrates one seed from t0 to t1 and writes trajectory.csv.
pub fn cmd_solve(cfg: &RunConfig, out: &Path, manifest: &mut Manifest) -> Result<i32> {
    let (params, seed, formulation) = if cfg.family_name()? == "cone" {
        let t0 = cfg.t0.unwrap_or(1.0);
        let a = CONE_C * t0 * t0 * t0;
        let da = 3.0 * CONE_C * t0 * t0;
        let u = U1State { a, b: a, da, db: da, param: Param::ArcLengthT };
        (ModelParams::cone(), Seed { start: t0, t: t0, state: FlowState::U1(u) }, Formulation::ArcLengthU1)
    } else {
        let seeded = cfg.seed_spec()?.build()?;
        // U(1)-invariant seeds run in the reduced system, which keeps a1 = a2 exactly.
        let (state, form) = match seeded.state.u1() {
            Some(u) => (FlowState::U1(u), Formulation::ArcLengthU1),
            None => (seeded.state, Formulation::Full),
        };
        (seeded.params, Seed { start: seeded.t, t: seeded.t, state }, form)
    };
    let t0 = seed.start;
    let t1 = cfg.t1.unwrap_or(if cfg.family_name()? == "cone" { 10.0 } else { t0 + 100.0 * params.scale() });
    if t1 == t0 || !(t1 > 0.0) {
        return Err(G2Error::Config(format!("t1 = {t1} must be positive and differ from the start {t0}")));
    }
    let mut spec = RunSpec::new(formulation, seed);
    spec.end = Some(t1);
    spec.direction = (t1 - t0).signum();
    spec.tol.rtol = cfg.rtol;
    spec.tol.atol = cfg.atol;
    spec.budget.max_steps = cfg.max_steps;
    spec.stops = vec![StopEvent::FVanishes { eps: 1e-10 }, StopEvent::BlowUp { factor: 1e12 }];
    if formulation == Formulation::ArcLengthU1 {
        spec.stops.push(StopEvent::EntersAlcChamber { cushion: cfg.cushion });
        spec.stops.push(StopEvent::EntersDeathChamber { cushion: cfg.cushion });
    }
    spec.outputs = geometric(t0, t1, cfg.samples).into_iter().filter(|t| *t != t0).collect();
    let traj = integrate(&spec, &params)?;
    manifest.events = traj.events.clone();
    write_out(out, "trajectory.csv", &trajectory_csv(&traj, cfg.cushion), manifest)?;
    println!("solve: {} samples, terminal {:?}, max|H| {:.3e}", traj.samples.len(), traj.terminal, traj.max_abs_h());
    Ok(0)
}

fn verdict_event(v: &Verdict) -> Option<crate::flow::EventRecord> {
    match &v.kind {
        crate::classifier::VerdictKind::Incomplete { event, .. } => *event,
        _ => None,
    }
}

/// Classifies one seed and writes verdict.json.
pub fn cmd_classify(cfg: &RunConfig, out: &Path, manifest: &mut Manifest) -> Result<i32> {
    let v = classify_trajectory(&cfg.seed_spec()?, &cfg.classify_options())?;
    manifest.events.extend(verdict_event(&v));
    write_json(&out.join("verdict.json"), &v)?;
    manifest.outputs.push("verdict.json".into());
    println!("classify: {}", v.tag());
    Ok(0)
}

#[derive(Serialize)]
struct SweepRow {
    value: f64,
    tag: String,
    verdict: Verdict,
}

/// Classifies the configured family at every sweep value and writes sweep.csv and sweep.json.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path, manifest: &mut Manifest) -> Result<i32> {
    let name = cfg.sweep_param.as_deref().ok_or_else(|| G2Error::Config("sweep_param is required".into()))?;
    if cfg.sweep_values.is_empty() {
        return Err(G2Error::Config("sweep_values is empty".into()));
    }
    let specs = cfg
        .sweep_values
        .iter()
        .map(|v| cfg.with_param(name, *v).and_then(|c| Ok((*v, c.seed_spec()?, c.classify_options()))))
        .collect::<Result<Vec<_>>>()?;
    let rows = specs
        .par_iter()
        .map(|(v, s, o)| classify_trajectory(s, o).map(|verdict| SweepRow { value: *v, tag: verdict.tag().into(), verdict }))
        .collect::<Result<Vec<_>>>()?;
    let mut csv = format!("{name},tag\n");
    for r in &rows {
        csv.push_str(&format!("{},{}\n", crate::report::fmt17(r.value), r.tag));
        println!("sweep: {name} = {} -> {}", r.value, r.tag);
    }
    write_out(out, "sweep.csv", &csv, manifest)?;
    write_json(&out.join("sweep.json"), &rows)?;
    manifest.outputs.push("sweep.json".into());
    Ok(0)
}

/// Runs both shooting schemes, writes find_ac.json and the critical trajectory.
pub fn cmd_find_ac(cfg: &RunConfig, out: &Path, manifest: &mut Manifest) -> Result<i32> {
    let opts = cfg.shoot_options();
    let report = find_ac(cfg.m, cfg.n, cfg.r0, &opts)?;
    write_json(&out.join("find_ac.json"), &report)?;
    manifest.outputs.push("find_ac.json".into());
    let gamma = GammaCurve::new(cfg.m, cfg.n, cfg.r0, opts.k)?;
    let traj = critical_trajectory(&gamma, report.c_backward.critical_value, &opts)?;
    manifest.events = traj.events.clone();
    write_out(out, "critical_trajectory.csv", &trajectory_csv(&traj, cfg.cushion), manifest)?;
    println!(
        "find-ac: beta_ac = {:.12e}, c_ac = {:.12e}, closure beta = {}, cross residual = {}",
        report.beta_forward.critical_value,
        report.c_backward.critical_value,
        report.beta_closure.map_or("none".into(), |b| format!("{b:.12e}")),
        report.cross_residual.map_or("none".into(), |r| format!("{r:.3e}"))
    );
    Ok(0)
}

/// Writes the curve bundle: one CSV per curve, figure1.gp and figure1.json.
pub fn cmd_figure1(cfg: &RunConfig, out: &Path, manifest: &mut Manifest) -> Result<i32> {
    let opts = FigureOptions {
        m: cfg.m,
        n: cfg.n,
        r0: cfg.r0,
        samples: cfg.samples,
        shoot: cfg.shoot_options(),
        classify: crate::classifier::ClassifyOptions { confirm_blowup: true, ..cfg.classify_options() },
        ..FigureOptions::default()
    };
    let fig = figure1(&opts)?;
    for c in &fig.curves {
        write_out(out, &c.file, &c.csv, manifest)?;
    }
    write_out(out, "figure1.gp", &fig.script, manifest)?;
    write_json(&out.join("figure1.json"), &fig)?;
    manifest.outputs.push("figure1.json".into());
    for c in &fig.curves {
        println!("figure1: {} beta = {:.6e} {}", c.file, c.beta, c.tag);
    }
    Ok(0)
}

/// Runs the acceptance suite and prints one line per check.
pub fn cmd_verify(cfg: &RunConfig) -> Result<i32> {
    let results = run_all(&VerifyOptions { quick: cfg.quick, seed: cfg.seed, ..VerifyOptions::default() });
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());
    Ok(if failed == 0 { 0 } else { EXIT_VERIFY })
}
