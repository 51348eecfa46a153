//! Python bindings exposing the main types and operations: grids,
//! anisotropy densities, support surfaces, the local model formulas, the
//! winding integral, the solvers, and the verification suite.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::sync::Arc;
use wulffkit::anisotropy::{self, AnisotropyDensity};
use wulffkit::error::CoreError;
use wulffkit::geom::Direction3;
use wulffkit::grid::{build_grid, ScalarField, SphericalGrid};
use wulffkit::io::formats::{self, SurfaceDocument};
use wulffkit::solver::{self, SolverConfig};
use wulffkit::surface;
use wulffkit::umbilic::{self, ModelHessianParams, WField};
use wulffkit::verify::{run_suite, VerifyOptions};

fn to_py_err(e: CoreError) -> PyErr {
    match e {
        CoreError::Config(_) | CoreError::Parse(_) | CoreError::Domain(_) | CoreError::Range(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Gnomonic cubed-sphere grid.
#[pyclass(name = "Grid")]
struct PyGrid {
    inner: Arc<SphericalGrid>,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(n: usize) -> PyResult<Self> {
        Ok(PyGrid { inner: build_grid(n).map_err(to_py_err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    /// Sum of quadrature weights (the total solid angle, 4 pi).
    fn total_weight(&self) -> f64 {
        self.inner.weights().iter().sum()
    }

    fn __repr__(&self) -> String {
        format!("Grid(n={}, nodes={})", self.inner.n(), self.inner.node_count())
    }
}

/// Anisotropy density gamma with its analytic closure.
#[pyclass(name = "AnisotropyDensity")]
struct PyGamma {
    inner: AnisotropyDensity,
    doc: serde_json::Value,
}

#[pymethods]
impl PyGamma {
    /// Build from a JSON document (same schema as the CLI `--gamma`).
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let (doc, gamma) = formats::parse_gamma(text).map_err(to_py_err)?;
        Ok(PyGamma { inner: gamma, doc: serde_json::to_value(&doc).unwrap() })
    }

    #[staticmethod]
    fn constant(value: f64) -> PyResult<Self> {
        Self::from_json(&format!("{{\"kind\": \"constant\", \"value\": {value}}}"))
    }

    #[staticmethod]
    fn ellipsoidal(diag: [f64; 3]) -> PyResult<Self> {
        Self::from_json(&format!(
            "{{\"kind\": \"ellipsoidal\", \"diag\": [{}, {}, {}]}}",
            diag[0], diag[1], diag[2]
        ))
    }

    /// gamma(nu) for a unit direction.
    fn value(&self, nu: [f64; 3]) -> f64 {
        self.inner.value(Direction3::new(nu[0], nu[1], nu[2]))
    }

    /// (is_convex, min eigenvalue of A_gamma over the grid).
    fn convexity(&self, grid: &PyGrid) -> (bool, f64) {
        let report = anisotropy::convexity_check(&self.inner, &grid.inner);
        (report.is_convex, report.min_eigenvalue)
    }

    /// Wulff-shape positions chi(nu) at every grid node.
    fn wulff_points(&self, grid: &PyGrid) -> PyResult<Vec<(f64, f64, f64)>> {
        let w = anisotropy::wulff_map(&self.inner, &grid.inner).map_err(to_py_err)?;
        Ok(w.points().iter().map(|p| (p.x, p.y, p.z)).collect())
    }

    fn __repr__(&self) -> String {
        format!("AnisotropyDensity({})", self.doc)
    }
}

/// Convex surface given by its support function on a grid.
#[pyclass(name = "SupportSurface")]
struct PySurface {
    gamma: AnisotropyDensity,
    q: ScalarField,
}

#[pymethods]
impl PySurface {
    /// Build from a surface JSON document or the `wulff:R` shorthand.
    #[new]
    fn new(grid: &PyGrid, gamma: &PyGamma, spec: &str) -> PyResult<Self> {
        let doc = SurfaceDocument::parse_arg(spec).map_err(to_py_err)?;
        let q = doc.build(&grid.inner, &gamma.inner, None).map_err(to_py_err)?;
        Ok(PySurface { gamma: gamma.inner.clone(), q })
    }

    /// (min, max, mean) of the anisotropic mean curvature.
    fn lambda_stats(&self) -> PyResult<(f64, f64, f64)> {
        let s = surface::from_support(&self.q, &self.gamma).map_err(to_py_err)?;
        Ok(s.lambda_stats())
    }

    fn energy(&self) -> PyResult<f64> {
        surface::energy(&self.q, &self.gamma).map_err(to_py_err)
    }

    fn volume(&self) -> PyResult<f64> {
        surface::volume(&self.q).map_err(to_py_err)
    }

    /// Minimum of (Lambda^2 / 4) - K_Sigma / K_W over the grid.
    fn discriminant_min(&self) -> PyResult<f64> {
        let disc =
            surface::discriminant_field(&self.q, &self.gamma).map_err(to_py_err)?;
        Ok(disc.values().iter().cloned().fold(f64::INFINITY, f64::min))
    }

    /// Least-squares fit against c gamma + a . nu: (c, (ax, ay, az), rms).
    fn wulff_fit(&self) -> (f64, (f64, f64, f64), f64) {
        let fit = solver::wulff_fit(&self.q, &self.gamma);
        (fit.c, (fit.a[0], fit.a[1], fit.a[2]), fit.rms)
    }

    /// Detected anisotropic umbilics of the pointwise w-field, as dicts
    /// with direction, deficiency, order and rotation index. Returns
    /// None when the surface is totally A-umbilic.
    fn umbilics<'py>(&self, py: Python<'py>, tol_rel: f64) -> PyResult<Option<Bound<'py, PyList>>> {
        let wf = WField::pointwise(&self.q, &self.gamma).map_err(to_py_err)?;
        match umbilic::detect_umbilics(&wf, tol_rel).map_err(to_py_err)? {
            umbilic::UmbilicDetection::TotallyUmbilic => Ok(None),
            umbilic::UmbilicDetection::Points(points) => {
                let list = PyList::empty(py);
                for p in points {
                    let d = PyDict::new(py);
                    d.set_item("direction", (p.direction.x(), p.direction.y(), p.direction.z()))?;
                    d.set_item("deficiency_min", p.deficiency_min)?;
                    d.set_item("order_n", p.order_n)?;
                    d.set_item("index_j", p.index_j.map(|j| j.value()))?;
                    list.append(d)?;
                }
                Ok(Some(list))
            }
        }
    }
}

/// Winding integrand -z(z^2+1) / ((z^2-1)^2 cos^2 psi + 4 z^2).
#[pyfunction]
fn appendix_integrand(z: f64, psi: f64) -> PyResult<f64> {
    umbilic::appendix_integrand(z, psi).map_err(to_py_err)
}

/// Full-period quadrature of the winding integrand; equals -pi.
#[pyfunction]
fn appendix_integral(z: f64) -> PyResult<f64> {
    umbilic::appendix_integral(z).map_err(to_py_err)
}

/// Local model Hessian entries ((a11, a12), (a12, a22)).
#[pyfunction]
fn model_hessian(n: u32, lambda1: f64, lambda2: f64, rho: f64, theta: f64) -> PyResult<((f64, f64), (f64, f64))> {
    let p = ModelHessianParams { n, lambda1, lambda2, rho, theta };
    p.validate().map_err(to_py_err)?;
    let m = umbilic::model_hessian(&p);
    Ok(((m.a11, m.a12), (m.a12, m.a22)))
}

/// Model eigenvalues and Delta: (lambda_plus, lambda_minus, delta).
#[pyfunction]
fn model_eigenvalues(n: u32, lambda1: f64, lambda2: f64, rho: f64, theta: f64) -> PyResult<(f64, f64, f64)> {
    let p = ModelHessianParams { n, lambda1, lambda2, rho, theta };
    p.validate().map_err(to_py_err)?;
    Ok(umbilic::model_eigenvalues(&p))
}

/// Rotation index of the model eigendirection field: -(N-2)/2.
#[pyfunction]
fn model_index(n: u32, lambda1: f64, lambda2: f64) -> PyResult<f64> {
    umbilic::model_index(n, lambda1, lambda2)
        .map(|j| j.value())
        .map_err(to_py_err)
}

/// Damped Newton solve at fixed Lambda; returns a result dict.
#[pyfunction]
#[pyo3(signature = (gamma_json, lambda, grid_n, q0_spec=None, tol=1e-10))]
fn solve_newton<'py>(
    py: Python<'py>,
    gamma_json: &str,
    lambda: f64,
    grid_n: usize,
    q0_spec: Option<&str>,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (_, gamma) = formats::parse_gamma(gamma_json).map_err(to_py_err)?;
    let grid = build_grid(grid_n).map_err(to_py_err)?;
    let q0 = match q0_spec {
        Some(spec) => SurfaceDocument::parse_arg(spec)
            .and_then(|doc| doc.build(&grid, &gamma, None))
            .map_err(to_py_err)?,
        None => gamma.field(grid.clone()),
    };
    let mut config = SolverConfig::newton();
    config.residual_tolerance = tol;
    let result =
        solver::newton_solve(&gamma, lambda, &q0.without_closure(), &config).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("converged", result.converged)?;
    d.set_item("iterations", result.iterations)?;
    d.set_item("lambda", result.lambda_final)?;
    d.set_item("fit_c", result.wulff_fit.c)?;
    d.set_item("fit_a", (result.wulff_fit.a[0], result.wulff_fit.a[1], result.wulff_fit.a[2]))?;
    d.set_item("fit_rms", result.wulff_fit.rms)?;
    d.set_item("residual_final", result.residual_history.last().copied())?;
    d.set_item("energy", result.energy_final)?;
    d.set_item("volume", result.volume_final)?;
    Ok(d)
}

/// Built-in identity suite; returns a list of row dicts.
#[pyfunction]
#[pyo3(signature = (quick=true, seed=0xC0FFEE, grid_n=16))]
fn verify<'py>(py: Python<'py>, quick: bool, seed: u64, grid_n: usize) -> PyResult<Bound<'py, PyList>> {
    let options = VerifyOptions { quick, seed, grid_n, fault: None };
    let rows = run_suite(&options).map_err(to_py_err)?;
    let list = PyList::empty(py);
    for row in rows {
        let d = PyDict::new(py);
        d.set_item("name", row.name)?;
        d.set_item("passed", row.passed)?;
        d.set_item("detail", row.detail)?;
        list.append(d)?;
    }
    Ok(list)
}

/// Support-plane gap sanity helper for scripting: max violation of
/// (chi(nu) - chi(nu')) . nu >= 0 over a subsample.
#[pyfunction]
fn wulff_support_violation(gamma: &PyGamma, grid: &PyGrid, stride: usize) -> PyResult<f64> {
    let w = anisotropy::wulff_map(&gamma.inner, &grid.inner).map_err(to_py_err)?;
    Ok(w.support_plane_violation(stride))
}

/// Gaussian curvature of the Wulff shape at a direction.
#[pyfunction]
fn wulff_gauss_curvature(gamma: &PyGamma, nu: [f64; 3]) -> PyResult<f64> {
    anisotropy::wulff_gauss_curvature(&gamma.inner, Direction3::new(nu[0], nu[1], nu[2]))
        .map_err(to_py_err)
}

#[pymodule]
fn wulffkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyGamma>()?;
    m.add_class::<PySurface>()?;
    m.add_function(wrap_pyfunction!(appendix_integrand, m)?)?;
    m.add_function(wrap_pyfunction!(appendix_integral, m)?)?;
    m.add_function(wrap_pyfunction!(model_hessian, m)?)?;
    m.add_function(wrap_pyfunction!(model_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(model_index, m)?)?;
    m.add_function(wrap_pyfunction!(solve_newton, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(wulff_support_violation, m)?)?;
    m.add_function(wrap_pyfunction!(wulff_gauss_curvature, m)?)?;
    Ok(())
}
