//! Python bindings: meshes, the homogenized tensor, micro and macro solves
//! and the benchmark tables.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lscheme_core::experiments::{self, ErrorReport, ExperimentSetup};
use lscheme_core::fem::{FeField, ScalarFn};
use lscheme_core::homogenize::compute_homogenized;
use lscheme_core::mesh;
use lscheme_core::micro::{oscillatory_coefficient, LSchemeTrace};
use lscheme_core::reaction::{GammaSchedule, ReactionSpec};
use lscheme_core::sparse::SolverOptions;
use lscheme_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::RefinementTooCoarse { .. } | Error::Parse { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn coefficient(c: Option<f64>) -> PyResult<ScalarFn> {
    match c {
        None => Ok(oscillatory_coefficient()),
        Some(v) if v > 0.0 => Ok(ScalarFn::constant(v)),
        Some(v) => Err(PyValueError::new_err(format!("coefficient must be positive, got {v}"))),
    }
}

/// Triangular mesh.
#[pyclass(frozen, module = "lscheme")]
struct Mesh {
    inner: Arc<mesh::Mesh>,
}

#[pymethods]
impl Mesh {
    /// Unit square with `n` intervals per side.
    #[staticmethod]
    fn square(n: usize) -> PyResult<Self> {
        Ok(Mesh { inner: Arc::new(mesh::generate_square(n).map_err(to_py)?) })
    }

    /// Periodic unit cell with a centred hole of radius `r` (0 for no hole).
    #[staticmethod]
    fn cell(n: usize, r: f64) -> PyResult<Self> {
        Ok(Mesh { inner: Arc::new(mesh::generate_cell(n, r).map_err(to_py)?) })
    }

    /// Unit square perforated by a periodic array of holes with period `epsilon`.
    #[staticmethod]
    #[pyo3(signature = (epsilon, hole_radius = 0.4, n_per_cell = 32))]
    fn perforated(epsilon: f64, hole_radius: f64, n_per_cell: usize) -> PyResult<Self> {
        let spec = mesh::PerforationSpec::new(epsilon, hole_radius).map_err(to_py)?;
        Ok(Mesh { inner: Arc::new(mesh::generate_perforated(n_per_cell, &spec).map_err(to_py)?) })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Mesh { inner: Arc::new(mesh::parse_mesh(text).map_err(to_py)?) })
    }

    fn to_text(&self) -> String {
        mesh::format_mesh(&self.inner)
    }

    #[getter]
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.inner.nodes().iter().map(|p| (p[0], p[1])).collect()
    }

    #[getter]
    fn triangles(&self) -> Vec<(usize, usize, usize)> {
        self.inner.triangles().iter().map(|t| (t[0], t[1], t[2])).collect()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn triangle_count(&self) -> usize {
        self.inner.triangle_count()
    }

    #[getter]
    fn area(&self) -> f64 {
        self.inner.area()
    }

    #[getter]
    fn max_h(&self) -> f64 {
        self.inner.max_h()
    }

    #[getter]
    fn min_angle_degrees(&self) -> f64 {
        self.inner.min_angle_degrees()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(nodes={}, triangles={})", self.inner.node_count(), self.inner.triangle_count())
    }
}

/// Homogenized tensor and the cell porosity.
#[pyclass(frozen, get_all, module = "lscheme")]
struct Tensor {
    a0: [[f64; 2]; 2],
    porosity: f64,
    min_eigenvalue: f64,
}

#[pymethods]
impl Tensor {
    fn __repr__(&self) -> String {
        format!("Tensor(a0={:?}, porosity={})", self.a0, self.porosity)
    }
}

/// Solves the cell problems on an `n`-interval cell mesh. `coefficient`
/// defaults to the oscillatory one.
#[pyfunction]
#[pyo3(signature = (cell_n = 128, hole_radius = 0.4, coefficient = None))]
fn homogenized_tensor(cell_n: usize, hole_radius: f64, coefficient: Option<f64>) -> PyResult<Tensor> {
    let (_, t) = compute_homogenized(cell_n, hole_radius, &self::coefficient(coefficient)?).map_err(to_py)?;
    Ok(Tensor { a0: t.a0, porosity: t.porosity, min_eigenvalue: t.min_eigenvalue() })
}

/// Nodal solution with its iteration history.
#[pyclass(frozen, get_all, module = "lscheme")]
struct Solution {
    nodes: Vec<(f64, f64)>,
    values: Vec<f64>,
    iterations: usize,
    converged: bool,
    /// Successive-difference L2 norms, one per iteration (empty for Newton).
    differences: Vec<f64>,
    /// Ratios of successive differences from the third iteration on.
    ratios: Vec<f64>,
    max_h: f64,
}

impl Solution {
    fn from_field(u: &FeField, iterations: usize, converged: bool, trace: Option<&LSchemeTrace>) -> Self {
        Solution {
            nodes: u.mesh().nodes().iter().map(|p| (p[0], p[1])).collect(),
            values: u.values().to_vec(),
            iterations,
            converged,
            differences: trace.map(|t| t.records.iter().map(|r| r.diff_l2).collect()).unwrap_or_default(),
            ratios: trace.map(|t| t.ratios()).unwrap_or_default(),
            max_h: u.mesh().max_h(),
        }
    }
}

#[pymethods]
impl Solution {
    fn __repr__(&self) -> String {
        format!("Solution(nodes={}, iterations={}, converged={})", self.values.len(), self.iterations, self.converged)
    }
}

/// Table of error columns, one row per `(epsilon, k)`.
#[pyclass(frozen, get_all, module = "lscheme")]
struct Report {
    columns: Vec<String>,
    rows: Vec<(f64, usize, Vec<f64>)>,
    csv: String,
}

impl From<ErrorReport> for Report {
    fn from(r: ErrorReport) -> Self {
        Report {
            csv: r.to_csv(),
            columns: r.columns.clone(),
            rows: r.rows.into_iter().map(|row| (row.epsilon, row.k, row.values)).collect(),
        }
    }
}

/// Problem parameters shared by every solve.
#[pyclass(frozen, module = "lscheme")]
struct Setup {
    inner: ExperimentSetup,
}

#[pymethods]
impl Setup {
    #[new]
    #[pyo3(signature = (
        hole_radius = 0.4, n_per_cell = 32, cell_n = 128, macro_n = 128, alpha = 0.0, eta = 0.4,
        p = 2.0, delta0 = 1.0, delta1 = 1.0, schedule = "geometric", harmonic_c = 1.0, source = 1.0,
        coefficient = None, k_max = 30, stop_tol = 1e-8, solver_tol = 1e-10, newton_tol = 1e-10, max_newton = 30
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        hole_radius: f64,
        n_per_cell: usize,
        cell_n: usize,
        macro_n: usize,
        alpha: f64,
        eta: f64,
        p: f64,
        delta0: f64,
        delta1: f64,
        schedule: &str,
        harmonic_c: f64,
        source: f64,
        coefficient: Option<f64>,
        k_max: usize,
        stop_tol: f64,
        solver_tol: f64,
        newton_tol: f64,
        max_newton: usize,
    ) -> PyResult<Self> {
        let schedule = match schedule {
            "geometric" => GammaSchedule::geometric(p),
            "harmonic" => GammaSchedule::harmonic(harmonic_c),
            other => return Err(PyValueError::new_err(format!("unknown schedule '{other}'"))),
        }
        .map_err(to_py)?;
        if !(alpha >= 0.0 && eta > 0.0) {
            return Err(PyValueError::new_err("alpha must be nonnegative and eta positive"));
        }
        Ok(Setup {
            inner: ExperimentSetup {
                hole_radius,
                n_per_cell,
                cell_n,
                macro_n,
                alpha,
                eta,
                reaction: ReactionSpec::new(p, delta0, delta1).map_err(to_py)?,
                schedule,
                source: ScalarFn::constant(source),
                coefficient: self::coefficient(coefficient)?,
                k_max,
                stop_tol,
                solver: SolverOptions::with_tol(solver_tol),
                newton_tol,
                max_newton,
            },
        })
    }

    /// L-scheme on the perforated domain.
    fn micro(&self, py: Python<'_>, epsilon: f64) -> PyResult<Solution> {
        py.detach(|| {
            let s = &self.inner;
            let p = s.micro_problem(s.perforation(epsilon)?)?;
            let (u, trace) = p.run_lscheme()?;
            Ok(Solution::from_field(&u, trace.iterations(), trace.converged, Some(&trace)))
        })
        .map_err(to_py)
    }

    /// Semismooth Newton on the perforated domain.
    fn newton(&self, py: Python<'_>, epsilon: f64) -> PyResult<Solution> {
        py.detach(|| {
            let s = &self.inner;
            let p = s.micro_problem(s.perforation(epsilon)?)?;
            let sol = p.solve_newton(s.newton_tol, s.max_newton)?;
            Ok(Solution::from_field(&sol.field, sol.iterations, true, None))
        })
        .map_err(to_py)
    }

    /// L-scheme on the homogenized problem.
    #[pyo3(name = "macro_")]
    fn macro_solve(&self, py: Python<'_>) -> PyResult<Solution> {
        py.detach(|| {
            let s = &self.inner;
            let p = s.macro_problem(s.homogenized_tensor()?)?;
            let (u, trace) = p.run_lscheme()?;
            Ok(Solution::from_field(&u, trace.iterations(), trace.converged, Some(&trace)))
        })
        .map_err(to_py)
    }

    #[pyo3(signature = (epsilons, k = 2))]
    fn table1(&self, py: Python<'_>, epsilons: Vec<f64>, k: usize) -> PyResult<Report> {
        py.detach(|| experiments::run_table1(&self.inner, &epsilons, k)).map(Report::from).map_err(to_py)
    }

    #[pyo3(signature = (epsilon, ks = vec![1, 2, 3, 4]))]
    fn table2(&self, py: Python<'_>, epsilon: f64, ks: Vec<usize>) -> PyResult<Report> {
        py.detach(|| experiments::run_table2(&self.inner, epsilon, &ks)).map(Report::from).map_err(to_py)
    }

    /// Returns `(report, l2_slope, h1_slope)`.
    fn convergence(&self, py: Python<'_>, epsilons: Vec<f64>) -> PyResult<(Report, f64, f64)> {
        let rate = py.detach(|| experiments::run_corrector_rate(&self.inner, &epsilons)).map_err(to_py)?;
        Ok((rate.report.into(), rate.l2_slope, rate.h1_slope))
    }

    /// Returns `(micro_csv, macro_csv, micro_fitted_ratio, macro_factor)`.
    fn contraction(&self, py: Python<'_>, epsilon: f64) -> PyResult<(String, String, Option<f64>, f64)> {
        let r = py.detach(|| experiments::run_contraction_report(&self.inner, epsilon)).map_err(to_py)?;
        Ok((r.micro_csv(), r.macro_csv(), r.micro_fitted_ratio, r.macro_factor))
    }
}

/// Six significant digits, as written in the CSV reports.
#[pyfunction]
fn format_sig(x: f64) -> String {
    experiments::format_sig(x)
}

#[pymodule]
fn lscheme(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Mesh>()?;
    m.add_class::<Tensor>()?;
    m.add_class::<Solution>()?;
    m.add_class::<Report>()?;
    m.add_class::<Setup>()?;
    m.add_function(wrap_pyfunction!(homogenized_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(format_sig, m)?)?;
    Ok(())
}
