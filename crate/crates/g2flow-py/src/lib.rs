//! Python bindings for g2flow.

use g2flow::classifier::classify_trajectory;
use g2flow::config::RunConfig;
use g2flow::invariants::{self, ModelParams, Param, U1State};
use g2flow::shooter::{self, ShootOptions};
use g2flow::verify::{run_all, VerifyOptions};
use g2flow::G2Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: G2Error) -> PyErr {
    match e {
        G2Error::Config(_) | G2Error::Constraint(_) | G2Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Conically singular rate (sqrt(145) - 7) / 2.
#[pyfunction]
fn nu0() -> f64 {
    invariants::nu0()
}

/// Asymptotically conical rate (sqrt(145) + 7) / 2.
#[pyfunction]
fn nu_inf() -> f64 {
    invariants::nu_inf()
}

/// F(a, b) and its partial derivatives.
#[pyfunction]
fn eval_f(a: f64, b: f64, p: f64, q: f64) -> (f64, f64, f64) {
    invariants::eval_f(a, b, &ModelParams::new(p, q))
}

/// Hamiltonian of an arc-length U(1) state.
#[pyfunction]
fn hamiltonian(a: f64, b: f64, da: f64, db: f64, p: f64, q: f64) -> PyResult<f64> {
    let u = U1State { a, b, da, db, param: Param::ArcLengthT };
    invariants::hamiltonian_u1(&u, &ModelParams::new(p, q)).map_err(to_py)
}

/// Classifies the seed described by a JSON configuration; returns the verdict as JSON.
#[pyfunction]
fn classify(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let flags: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.detach(|| {
        let cfg = RunConfig::load(None, &flags)?;
        let v = classify_trajectory(&cfg.seed_spec()?, &cfg.classify_options())?;
        Ok(serde_json::to_string(&v)?)
    })
    .map_err(to_py)
}

/// Critical values of a circle family: (beta_ac, c_ac, closure beta, cross residual).
#[pyfunction]
#[pyo3(signature = (m, n, r0 = 1.0, k = 1.5))]
fn find_ac(py: Python<'_>, m: u32, n: u32, r0: f64, k: f64) -> PyResult<(f64, f64, Option<f64>, Option<f64>)> {
    let r = py
        .detach(|| shooter::find_ac(m, n, r0, &ShootOptions { k, ..ShootOptions::default() }))
        .map_err(to_py)?;
    Ok((r.beta_forward.critical_value, r.c_backward.critical_value, r.beta_closure, r.cross_residual))
}

/// Runs the acceptance suite; returns (id, name, passed, measured) per check.
#[pyfunction]
#[pyo3(signature = (quick = true, seed = 1234))]
fn verify(py: Python<'_>, quick: bool, seed: u64) -> Vec<(u32, String, bool, String)> {
    py.detach(|| run_all(&VerifyOptions { quick, seed, ..VerifyOptions::default() }))
        .into_iter()
        .map(|r| (r.id, r.name, r.passed, r.measured))
        .collect()
}

#[pymodule]
fn g2flow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(nu0, m)?)?;
    m.add_function(wrap_pyfunction!(nu_inf, m)?)?;
    m.add_function(wrap_pyfunction!(eval_f, m)?)?;
    m.add_function(wrap_pyfunction!(hamiltonian, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(find_ac, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
