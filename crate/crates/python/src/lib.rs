//! Python bindings: domains, monitors, the Poisson solve, full runs and
//! their reports. Fields cross the boundary as one list per block.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mbdeform_core::config::{load_config, parse_config, RunConfig, Scenario};
use mbdeform_core::deform::{Deformer, GridCoordinates, Snapshot as CoreSnapshot};
use mbdeform_core::diagnostics::{folding_check, jacobian_per_cell, GridReport};
use mbdeform_core::field::ScalarField;
use mbdeform_core::grid::MultiBlockDomain;
use mbdeform_core::monitor::{monitor_at, MonitorSpec, Phase};
use mbdeform_core::poisson::{sor_solve, RhsField, SolverConfig};
use mbdeform_core::{verify, Error, Vec3};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::OutOfRange { .. }
        | Error::Config(_)
        | Error::ShapeMismatch(_)
        | Error::OutOfDomain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn phase(t: Option<f64>, l: Option<f64>) -> PyResult<Phase> {
    match (t, l) {
        (Some(t), None) => Ok(Phase::Step1 { t }),
        (None, Some(l)) => Ok(Phase::Step2 { l }),
        _ => Err(PyValueError::new_err("give exactly one of t= or l=")),
    }
}

#[pyclass(frozen, skip_from_py_object, name = "Domain")]
#[derive(Clone)]
struct PyDomain {
    inner: MultiBlockDomain,
}

#[pymethods]
impl PyDomain {
    /// Column `[0,1]×[0,2]×[0,1]` plus cube `[1,2]×[0,1]×[0,1]`, `n` cells per unit.
    #[staticmethod]
    fn backstep(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: MultiBlockDomain::backstep(n).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn single_block(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: MultiBlockDomain::single_block(n).map_err(py_err)?,
        })
    }

    #[getter]
    fn n_blocks(&self) -> usize {
        self.inner.blocks().len()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.inner.volume()
    }

    #[getter]
    fn unknown_count(&self) -> usize {
        self.inner.unknown_count()
    }

    /// Node counts per axis of one block.
    fn block_nodes(&self, block: usize) -> PyResult<[usize; 3]> {
        self.check_block(block)?;
        Ok(self.inner.block(block).nodes())
    }

    /// Reference node positions of every block, `i` fastest.
    fn reference_positions(&self) -> Vec<Vec<Vec3>> {
        GridCoordinates::reference(&self.inner)
            .positions()
            .blocks()
            .to_vec()
    }

    fn __repr__(&self) -> String {
        let dims: Vec<String> = self
            .inner
            .blocks()
            .iter()
            .map(|b| format!("{:?}", b.cells()))
            .collect();
        format!(
            "Domain(cells={}, h={})",
            dims.join(" + "),
            self.inner.spacing()
        )
    }
}

impl PyDomain {
    fn check_block(&self, block: usize) -> PyResult<()> {
        if block < self.inner.blocks().len() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("no block {block}")))
        }
    }
}

/// Normalized monitor of the default back-step sphere at `t=` (phase one)
/// or `l=` (phase two).
#[pyfunction]
#[pyo3(signature = (domain, *, t=None, l=None))]
fn monitor(domain: &PyDomain, t: Option<f64>, l: Option<f64>) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let f = monitor_at(&domain.inner, &MonitorSpec::default(), phase(t, l)?).map_err(py_err)?;
    Ok((f.values().blocks().to_vec(), f.scale()))
}

/// Solves the Neumann problem `Δω = rhs` (rhs mean-removed first).
/// Returns `(omega, sweeps, residual)`.
#[pyfunction]
#[pyo3(signature = (domain, rhs, *, relaxation=1.5, tolerance=1e-8, max_iterations=20000))]
fn solve_poisson(
    py: Python<'_>,
    domain: &PyDomain,
    rhs: Vec<Vec<f64>>,
    relaxation: f64,
    tolerance: f64,
    max_iterations: usize,
) -> PyResult<(Vec<Vec<f64>>, usize, f64)> {
    let d = &domain.inner;
    let solver = SolverConfig::new(relaxation, tolerance, max_iterations).map_err(py_err)?;
    let rhs = RhsField::new(d, ScalarField::from_blocks(d, rhs).map_err(py_err)?)
        .map_err(py_err)?
        .remove_mean(d);
    let w = py
        .detach(|| sor_solve(&rhs, d, &solver, None))
        .map_err(py_err)?;
    Ok((
        w.values().blocks().to_vec(),
        w.iterations_used(),
        w.achieved_residual(),
    ))
}

/// L∞ error and residual of the manufactured cosine solution on the unit cube.
#[pyfunction]
fn manufactured_error(py: Python<'_>, n: usize) -> PyResult<(f64, f64)> {
    py.detach(|| verify::manufactured_error(n, &SolverConfig::default()))
        .map_err(py_err)
}

#[pyclass(frozen, get_all, skip_from_py_object, name = "Report")]
#[derive(Clone)]
struct PyReport {
    stamp: String,
    min_jacobian: f64,
    max_jacobian: f64,
    min_volume: f64,
    max_volume: f64,
    h_mean: f64,
    h_rsd: f64,
    interface_mismatch: f64,
    total_volume: f64,
}

impl From<GridReport> for PyReport {
    fn from(r: GridReport) -> Self {
        Self {
            stamp: r.stamp,
            min_jacobian: r.min_jacobian,
            max_jacobian: r.max_jacobian,
            min_volume: r.min_volume,
            max_volume: r.max_volume,
            h_mean: r.h_mean,
            h_rsd: r.h_rsd,
            interface_mismatch: r.interface_mismatch,
            total_volume: r.total_volume,
        }
    }
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!(
            "Report({} minJ={:.4} maxJ={:.4} Hrsd={:.4} vol={:.12})",
            self.stamp, self.min_jacobian, self.max_jacobian, self.h_rsd, self.total_volume
        )
    }
}

#[pyclass(frozen, name = "Snapshot")]
struct PySnapshot {
    domain: MultiBlockDomain,
    inner: CoreSnapshot,
}

#[pymethods]
impl PySnapshot {
    #[getter]
    fn stamp(&self) -> String {
        self.inner.coords.phase().to_string()
    }

    /// Node positions of every block.
    #[getter]
    fn positions(&self) -> Vec<Vec<Vec3>> {
        self.inner.coords.positions().blocks().to_vec()
    }

    #[getter]
    fn monitor(&self) -> Vec<Vec<f64>> {
        self.inner.monitor.values().blocks().to_vec()
    }

    #[getter]
    fn omega(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.omega.as_ref().map(|w| w.blocks().to_vec())
    }

    /// `(sweeps, residual)` of every solve since the previous snapshot.
    #[getter]
    fn solves(&self) -> Vec<(usize, f64)> {
        self.inner
            .solves
            .iter()
            .map(|s| (s.iterations, s.residual))
            .collect()
    }

    /// Cell Jacobians per block, `i` fastest.
    fn jacobians(&self) -> Vec<Vec<f64>> {
        jacobian_per_cell(&self.inner.coords, &self.domain)
    }

    fn folded(&self) -> bool {
        !folding_check(&self.inner.coords, &self.domain).passed()
    }

    fn report(&self) -> PyResult<PyReport> {
        GridReport::compute(&self.inner.coords, &self.inner.monitor, &self.domain)
            .map(PyReport::from)
            .map_err(py_err)
    }
}

#[pyclass(frozen, skip_from_py_object, name = "Config")]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    /// Parses a JSON document with dotted keys; `""` gives the defaults.
    #[new]
    #[pyo3(signature = (text=""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_config(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_config(path).map_err(py_err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn scenario(&self) -> &'static str {
        match self.inner.scenario {
            Scenario::Backstep => "backstep",
            Scenario::SingleBlock => "single_block",
        }
    }

    fn domain(&self) -> PyResult<PyDomain> {
        Ok(PyDomain {
            inner: self.inner.domain().map_err(py_err)?,
        })
    }
}

#[pyclass(frozen, name = "Deformer")]
struct PyDeformer {
    inner: Deformer,
}

impl PyDeformer {
    fn wrap(&self, snaps: Vec<CoreSnapshot>) -> Vec<PySnapshot> {
        snaps
            .into_iter()
            .map(|inner| PySnapshot {
                domain: self.inner.domain().clone(),
                inner,
            })
            .collect()
    }
}

#[pymethods]
impl PyDeformer {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<&PyConfig>) -> PyResult<Self> {
        let c = config.map(|c| c.inner.clone()).unwrap_or_default();
        let domain = c.domain().map_err(py_err)?;
        Ok(Self {
            inner: Deformer::new(domain, c.monitor, c.solver, c.deform).map_err(py_err)?,
        })
    }

    #[getter]
    fn domain(&self) -> PyDomain {
        PyDomain {
            inner: self.inner.domain().clone(),
        }
    }

    /// Phase one only: snapshots at `t = 0, dt, …, 0.5`.
    fn run_step1(&self, py: Python<'_>) -> PyResult<Vec<PySnapshot>> {
        let snaps = py
            .detach(|| {
                let mut out = Vec::new();
                self.inner.run_step1(|s| {
                    out.push(s);
                    Ok(())
                })?;
                Ok(out)
            })
            .map_err(py_err)?;
        Ok(self.wrap(snaps))
    }

    /// Both phases. Raises on solver failure or a folded grid.
    fn run(&self, py: Python<'_>) -> PyResult<Vec<PySnapshot>> {
        let snaps = py.detach(|| self.inner.run_collect()).map_err(py_err)?;
        Ok(self.wrap(snaps))
    }
}

#[pymodule]
fn mbdeform(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDomain>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyDeformer>()?;
    m.add_class::<PySnapshot>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(monitor, m)?)?;
    m.add_function(wrap_pyfunction!(solve_poisson, m)?)?;
    m.add_function(wrap_pyfunction!(manufactured_error, m)?)?;
    Ok(())
}
