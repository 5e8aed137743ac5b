//! Python bindings: parameter selection, the forward solver, the estimate
//! checks that do not need a full grid, and the reconstruction.
//!
//! Structured results cross the boundary as JSON and come back as plain
//! Python dicts and lists.

use carleman_lab::carleman::{algebraic_inequality_variant, select_params, sweep_params, time_decay_integral, LemmaVariant};
use carleman_lab::forward::{convergence_study, solve_initial_potential, TraceData};
use carleman_lab::recovery::{reconstruct, reference_potential, relative_error, synthesize, zero_dirichlet, RecoveryConfig};
use carleman_lab::{GridSpec, LabError, ScalarField};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py(e: LabError) -> PyErr {
    match e {
        LabError::Diverged(_) | LabError::NonFinite(_) | LabError::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn interval(nx: usize, t_final: f64, nt: usize) -> PyResult<GridSpec> {
    GridSpec::unit_interval(nx, t_final, nt).map_err(to_py)
}

/// Parameters on `(0, 1)`. With `lambda_` unset the theoretical rules pick
/// `T`, `β` and `λ`; otherwise desk-scale values are used with the given `T`.
#[pyfunction]
#[pyo3(signature = (eta, x0=None, t_final=None, lambda_=None, beta=None))]
fn carleman_params<'py>(
    py: Python<'py>,
    eta: f64,
    x0: Option<f64>,
    t_final: Option<f64>,
    lambda_: Option<f64>,
    beta: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let g = interval(11, 1.0, 21)?;
    let x0 = x0.unwrap_or(eta);
    let c = match lambda_ {
        None => select_params(&g, &[eta], &[x0], t_final),
        Some(l) => sweep_params(&g, &[eta], &[x0], t_final.unwrap_or(1.0), l, beta),
    }
    .map_err(to_py)?;
    let out = to_dict(py, &c)?;
    out.set_item("proof_checks", to_dict(py, &c.proof_checks())?)?;
    Ok(out)
}

/// `∫₀^T e^{-λβt²} dt` with its bound and closed form.
#[pyfunction]
fn time_decay<'py>(py: Python<'py>, lambda_beta: f64, t_final: f64) -> PyResult<Bound<'py, PyAny>> {
    if !(lambda_beta > 0.0) {
        return Err(PyValueError::new_err("lambda_beta must be positive"));
    }
    to_dict(py, &time_decay_integral(lambda_beta, t_final))
}

/// Returns `(lhs, rhs, holds)`; `variant` is `"as_printed"` or `"double"`.
#[pyfunction]
#[pyo3(signature = (a, b, j0, k0, variant="as_printed"))]
fn algebraic_inequality(a: Vec<f64>, b: f64, j0: usize, k0: usize, variant: &str) -> PyResult<(f64, f64, bool)> {
    let v = match variant {
        "as_printed" => LemmaVariant::AsPrinted,
        "double" => LemmaVariant::Double,
        other => return Err(PyValueError::new_err(format!("unknown variant {other:?}"))),
    };
    if j0 >= a.len() || k0 >= a.len() {
        return Err(PyValueError::new_err("index out of range"));
    }
    let r = algebraic_inequality_variant(&a, b, j0, k0, v);
    Ok((r.lhs, r.rhs, r.holds))
}

/// Manufactured-solution convergence table on `(0, 1)`.
#[pyfunction]
#[pyo3(signature = (nx=41, t_final=2.0, nt=161, levels=3))]
fn convergence<'py>(py: Python<'py>, nx: usize, t_final: f64, nt: usize, levels: usize) -> PyResult<Bound<'py, PyAny>> {
    let rows = convergence_study(&interval(nx, t_final, nt)?, levels).map_err(to_py)?;
    to_dict(py, &rows)
}

/// Solves `u(0) = 0`, `u_t(0) = q` with zero Dirichlet data on `(0, 1)`.
/// Returns the time-major solution as a list of rows.
#[pyfunction]
fn solve_potential(q: Vec<f64>, t_final: f64, nt: usize) -> PyResult<Vec<Vec<f64>>> {
    let g = interval(q.len(), t_final, nt)?;
    let q = ScalarField::new(g, q).map_err(to_py)?;
    let u = solve_initial_potential(&q, &TraceData::zeros(&g), &g).map_err(to_py)?;
    Ok(u.values().chunks(g.n_space()).map(|c| c.to_vec()).collect())
}

/// Recovers the reference potential from its own noiseless Neumann data.
#[pyfunction]
#[pyo3(signature = (nx=201, t_final=0.9, nt=201, max_iters=500))]
fn recover_reference<'py>(py: Python<'py>, nx: usize, t_final: f64, nt: usize, max_iters: usize) -> PyResult<Bound<'py, PyAny>> {
    let g = interval(nx, t_final, nt)?;
    let q_star = reference_potential(&g);
    let data = synthesize(&q_star, &zero_dirichlet(&g), &g).map_err(to_py)?;
    let r = reconstruct(&data, &RecoveryConfig { max_iters, ..RecoveryConfig::new(&g) }).map_err(to_py)?;
    #[derive(Serialize)]
    struct Out<'a> {
        q_hat: &'a [f64],
        q_star: &'a [f64],
        relative_error: f64,
        iterations: usize,
        converged: bool,
        misfit: Vec<f64>,
    }
    let out = Out {
        q_hat: r.q_hat.values(),
        q_star: q_star.values(),
        relative_error: relative_error(&r.q_hat, &q_star),
        iterations: r.history.len().saturating_sub(1),
        converged: r.converged,
        misfit: r.history.iter().map(|h| h.misfit).collect(),
    };
    to_dict(py, &out)
}

/// Runs the command-line interface and returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    carleman_lab::cli::run(std::iter::once("carleman-lab".to_owned()).chain(args))
}

#[pymodule]
#[pyo3(name = "carleman_lab")]
fn carleman_lab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(carleman_params, m)?)?;
    m.add_function(wrap_pyfunction!(time_decay, m)?)?;
    m.add_function(wrap_pyfunction!(algebraic_inequality, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    m.add_function(wrap_pyfunction!(solve_potential, m)?)?;
    m.add_function(wrap_pyfunction!(recover_reference, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
