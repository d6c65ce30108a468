//! Data emission: trajectory CSV tables with 17 significant digits and JSON run manifests.

use crate::classifier::chamber_membership;
use crate::config::RunConfig;
use crate::error::Result;
use crate::flow::{EventRecord, FlowState, Sample, Trajectory};
use crate::invariants::{eval_f, hamiltonian_u1, mean_curvature_u1, ModelParams, Param, U1State};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

/// Trajectory CSV header.
pub const TRAJECTORY_COLUMNS: [&str; 14] = [
    "param",
    "t",
    "s",
    "a",
    "b",
    "da",
    "db",
    "F",
    "H",
    "mean_curvature",
    "alc_chamber",
    "alc_strict",
    "death_quadrant",
    "ac_backward",
];

/// Scientific notation with 17 significant digits (round-trip exact for binary64).
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Arc-length U(1) view of a sample state. Full states use the mean of the first two
/// components; a-parametrized states are rescaled to arc length.
pub fn u1_view(state: &FlowState, params: &ModelParams) -> Option<U1State> {
    match state {
        FlowState::U1(u) if u.param == Param::ArcLengthT => Some(*u),
        FlowState::U1(u) => u.normalized(params).ok(),
        FlowState::Full(f) => {
            let v = f.velocities().ok()?;
            Some(U1State {
                a: 0.5 * (f.y[0] + f.y[1]),
                b: f.y[2],
                da: 0.5 * (v[0] + v[1]),
                db: v[2],
                param: Param::ArcLengthT,
            })
        }
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// One CSV row of a sample; `s` is the a-parametrization coordinate (equal to a).
pub fn sample_row(sample: &Sample, params: &ModelParams, cushion: f64) -> Option<String> {
    let u = u1_view(&sample.state, params)?;
    let f = eval_f(u.a, u.b, params).0;
    let h = hamiltonian_u1(&u, params).unwrap_or(f64::NAN);
    let mc = mean_curvature_u1(&u, params).unwrap_or(f64::NAN);
    let ch = chamber_membership(&u, params, cushion).unwrap_or_default();
    let nums = [sample.param, sample.t, u.a, u.a, u.b, u.da, u.db, f, h, mc];
    let mut row = nums.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(",");
    for b in [ch.alc_chamber, ch.alc_strict, ch.death_quadrant, ch.ac_backward] {
        row.push(',');
        row.push_str(flag(b));
    }
    Some(row)
}

/// Full trajectory table.
pub fn trajectory_csv(traj: &Trajectory, cushion: f64) -> String {
    let mut out = TRAJECTORY_COLUMNS.join(",");
    out.push('\n');
    for s in &traj.samples {
        if let Some(r) = sample_row(s, &traj.params, cushion) {
            out.push_str(&r);
            out.push('\n');
        }
    }
    out
}

/// Generic CSV from a header and numeric rows.
pub fn numeric_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(","));
    }
    out
}

/// Run manifest: configuration echo, hash, event log, outputs and wall time.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub events: Vec<EventRecord>,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.clone(),
            config_hash: config.hash(),
            events: vec![],
            outputs: vec![],
            wall_time_s: 0.0,
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}
