//! Python bindings: the budget and masking primitives, the synthetic corpus,
//! the gradient check and the full command line.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use tascom_core::acc::{self, LinkConfig};
use tascom_core::cli::{self, CliError};
use tascom_core::dataset;

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Usage(_) | CliError::Validation(_) => PyValueError::new_err(e.to_string()),
        CliError::Runtime(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

fn link(snr_db: f64, bandwidth_hz: f64, delay_s: f64, q_mod: f64) -> PyResult<LinkConfig> {
    let mut l = LinkConfig::reference(snr_db).with_delay(delay_s);
    l.bandwidth_hz = bandwidth_hz;
    l.constellation_bits = q_mod;
    l = l.with_snr_db(snr_db);
    l.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(l)
}

/// Symbol budget `L_max` of one frame.
#[pyfunction]
#[pyo3(signature = (snr_db, bandwidth_hz=20e6, delay_s=0.01, q_mod=8.0))]
fn compute_l_max(snr_db: f64, bandwidth_hz: f64, delay_s: f64, q_mod: f64) -> PyResult<u64> {
    Ok(acc::compute_l_max(&link(snr_db, bandwidth_hz, delay_s, q_mod)?))
}

/// Rows of the reference budget table as dicts.
#[pyfunction]
#[pyo3(signature = (bandwidth_hz=20e6, delay_s=0.01, q_mod=8.0))]
fn table1<'py>(py: Python<'py>, bandwidth_hz: f64, delay_s: f64, q_mod: f64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let base = link(0.0, bandwidth_hz, delay_s, q_mod)?;
    cli::table1(&base)
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("snr_db", r.snr_db)?;
            d.set_item("symbol_rate", r.symbol_rate)?;
            d.set_item("capacity_bps", r.capacity_bps)?;
            d.set_item("l_max", r.l_max)?;
            d.set_item("reference_l_max", r.reference_l_max)?;
            d.set_item("lmax_paper_match", r.lmax_paper_match)?;
            Ok(d)
        })
        .collect()
}

/// Per-token widths from `{q/2, 3q/4, q}` under the budget.
#[pyfunction]
fn allocate_rates(gamma: Vec<f64>, q: usize, l_max: u64) -> PyResult<Vec<usize>> {
    let a = acc::allocate_rates(&gamma, q, l_max).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if !a.feasible {
        return Err(PyValueError::new_err(format!("budget {l_max} cannot carry {} tokens", gamma.len())));
    }
    Ok(a.delta)
}

/// Indices of the retained features.
#[pyfunction]
fn mask_select(gamma: Vec<f64>, epsilon_th: f64) -> Vec<usize> {
    acc::mask_select(&gamma, epsilon_th)
}

/// Synthetic corpus as `(pixels, label)` pairs.
#[pyfunction]
#[pyo3(signature = (seed, count, classes=6, noise_level=0.03))]
fn generate_corpus(seed: u64, count: usize, classes: usize, noise_level: f64) -> PyResult<Vec<(Vec<f64>, usize)>> {
    let c = dataset::generate_corpus(seed, count, classes, noise_level)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(c.images.into_iter().map(|im| (im.pixels, im.label)).collect())
}

/// Finite-difference check of every block; returns `{block: (passed, max_rel_error)}`.
#[pyfunction]
#[pyo3(signature = (seed=0, seeds=1))]
fn gradcheck<'py>(py: Python<'py>, seed: u64, seeds: usize) -> PyResult<Bound<'py, PyDict>> {
    let report = py.detach(|| cli::run_gradcheck(seed, seeds, None)).map_err(cli_err)?;
    let d = PyDict::new(py);
    for b in report.blocks {
        d.set_item(b.block, (b.passed, b.max_rel_error))?;
    }
    Ok(d)
}

/// Runs the command line in-process and returns its exit code.
#[pyfunction]
fn main(py: Python<'_>, args: Vec<String>) -> u8 {
    let argv: Vec<String> = std::iter::once("tascom".to_string()).chain(args).collect();
    py.detach(|| cli::run_from(argv))
}

#[pymodule]
fn tascom(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(compute_l_max, m)?)?;
    m.add_function(wrap_pyfunction!(table1, m)?)?;
    m.add_function(wrap_pyfunction!(allocate_rates, m)?)?;
    m.add_function(wrap_pyfunction!(mask_select, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(main, m)?)?;
    Ok(())
}
