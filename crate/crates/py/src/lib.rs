//! Python bindings, importable as `coldec`.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use coldec::collision::{collision_function as kernel_entry, LightPacket};
use coldec::oracle::convergence_study;
use coldec::runner::{execute, parse_config, Command, Invocation};
use coldec::scattering::{build_amplitude_table, MomentumGrid, PotentialSpec};
use coldec::Error;

fn to_py(err: Error) -> PyErr {
    match err.exit_code() {
        2 => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn command_named(name: &str) -> PyResult<Command> {
    Ok(match name {
        "amplitudes" => Command::Amplitudes,
        "kernel" => Command::Kernel,
        "evolve" => Command::Evolve,
        "scenario" => Command::Scenario,
        "validate" => Command::Validate,
        other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
    })
}

/// Reflection and transmission amplitudes of the point interaction.
#[pyfunction]
fn delta_amplitudes(alpha: f64, k: f64) -> (Complex64, Complex64) {
    coldec::scattering::delta_amplitudes(alpha, k)
}

/// Reflection and transmission amplitudes of the square barrier of strength `alpha`, half-width `a`.
#[pyfunction]
fn barrier_amplitudes(alpha: f64, a: f64, k: f64) -> PyResult<(Complex64, Complex64)> {
    coldec::scattering::barrier_amplitudes(alpha, a, k).map_err(to_py)
}

/// Amplitudes of a Gaussian potential from the finite-difference boundary value problem.
#[pyfunction]
#[pyo3(signature = (alpha, sigma_v, k, n_points = 4096))]
fn gaussian_amplitudes(alpha: f64, sigma_v: f64, k: f64, n_points: usize) -> PyResult<(Complex64, Complex64)> {
    coldec::scattering::numeric_amplitudes(&PotentialSpec::Gaussian { alpha, sigma_v }, k, n_points).map_err(to_py)
}

/// `I(x, xp)` for the point interaction of strength `alpha` and a Gaussian light packet.
#[pyfunction]
#[pyo3(signature = (alpha, x_l, sigma, p, x, xp, momentum_points = 2048))]
fn collision_function(
    alpha: f64,
    x_l: f64,
    sigma: f64,
    p: f64,
    x: f64,
    xp: f64,
    momentum_points: usize,
) -> PyResult<Complex64> {
    let packet = LightPacket::new(x_l, sigma, p).map_err(to_py)?;
    let grid = MomentumGrid::for_packet(p, sigma, momentum_points).map_err(to_py)?;
    let table = build_amplitude_table(&PotentialSpec::Delta { alpha }, &grid).map_err(to_py)?;
    kernel_entry(&table, &packet, x, xp).map_err(to_py)
}

/// Validates a TOML configuration and returns it with every default filled in.
#[pyfunction]
fn resolve_config(text: &str) -> PyResult<String> {
    Ok(parse_config(text).map_err(to_py)?.canonical())
}

/// Finite-time scattering study: returns `(taus, errors, slope)`.
#[pyfunction]
#[pyo3(signature = (config = ""))]
fn oracle_convergence(config: &str) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let resolved = parse_config(config).and_then(|c| c.resolve()).map_err(to_py)?;
    let report = convergence_study(&resolved.oracle).map_err(to_py)?;
    Ok((
        report.points.iter().map(|p| p.tau).collect(),
        report.points.iter().map(|p| p.l2_error).collect(),
        report.slope,
    ))
}

/// Runs a command-line command and returns the paths it wrote.
#[pyfunction]
#[pyo3(signature = (command, out_dir, config = "", threads = None, emit_plots = false))]
fn run(
    py: Python<'_>,
    command: &str,
    out_dir: PathBuf,
    config: &str,
    threads: Option<usize>,
    emit_plots: bool,
) -> PyResult<Vec<PathBuf>> {
    let inv = Invocation {
        command: command_named(command)?,
        config: parse_config(config).map_err(to_py)?,
        out_dir,
        threads,
        emit_plots,
    };
    let summary = py.detach(|| execute(&inv)).map_err(to_py)?;
    let mut files = summary.files;
    files.push(summary.manifest);
    Ok(files)
}

#[pymodule]
#[pyo3(name = "coldec")]
fn coldec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(delta_amplitudes, m)?)?;
    m.add_function(wrap_pyfunction!(barrier_amplitudes, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_amplitudes, m)?)?;
    m.add_function(wrap_pyfunction!(collision_function, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_config, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_convergence, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
