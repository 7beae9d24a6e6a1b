//! Python module `pyhho`: meshes, material laws, run configurations and
//! single-level solves of the HHO hyperelasticity solvers.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hho_core::assembly::Method;
use hho_core::basis::GradSpace;
use hho_core::cases::CASE_NAMES;
use hho_core::config::{self, LevelResult};
use hho_core::material::{self, MaterialLaw as CoreLaw};
use hho_core::mesh::{self, Mesh as CoreMesh};
use hho_core::postproc::{self, DerivedFields};
use hho_core::HhoError;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: HhoError) -> PyErr {
    match e {
        HhoError::Config(_) | HhoError::Parse { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Simplicial mesh with tagged boundary faces.
#[pyclass(module = "pyhho", skip_from_py_object)]
#[derive(Clone)]
pub struct Mesh {
    pub inner: CoreMesh,
}

#[pymethods]
impl Mesh {
    /// Unit cube split into `6 n^3` tetrahedra.
    #[staticmethod]
    fn cube(n: usize) -> PyResult<Self> {
        if n == 0 {
            return Err(PyValueError::new_err("n must be positive"));
        }
        Ok(Mesh {
            inner: mesh::generate_cube_mesh(n),
        })
    }

    /// Reads a gmsh v2.2 ASCII file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Mesh {
            inner: mesh::load_gmsh(path).map_err(py_err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn num_cells(&self) -> usize {
        self.inner.num_cells()
    }

    #[getter]
    fn num_faces(&self) -> usize {
        self.inner.num_faces()
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.inner.vertices.clone()
    }

    #[getter]
    fn cells(&self) -> Vec<Vec<usize>> {
        self.inner.cells.clone()
    }

    /// Boundary face index to tag.
    #[getter]
    fn boundary_tags(&self) -> BTreeMap<usize, String> {
        self.inner.boundary_tags.clone()
    }

    fn volume(&self) -> f64 {
        self.inner.total_measure()
    }

    fn mean_diameter(&self) -> f64 {
        self.inner.average_diameter()
    }

    /// Copy with interior vertices moved by up to `amplitude` times the
    /// shortest incident edge.
    #[pyo3(signature = (amplitude, seed = config::JITTER_SEED))]
    fn jitter(&self, amplitude: f64, seed: u64) -> PyResult<Self> {
        Ok(Mesh {
            inner: self.inner.jitter_interior(amplitude, seed).map_err(py_err)?,
        })
    }

    fn to_gmsh(&self) -> String {
        mesh::write_gmsh(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(dim={}, vertices={}, cells={})",
            self.inner.dim,
            self.inner.vertices.len(),
            self.inner.num_cells()
        )
    }
}

/// Hyperelastic law evaluated on the displacement gradient.
#[pyclass(module = "pyhho", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct MaterialLaw {
    pub inner: CoreLaw,
}

#[pymethods]
impl MaterialLaw {
    #[staticmethod]
    fn neohookean(mu: f64, lmbda: f64) -> PyResult<Self> {
        Self::checked(CoreLaw::neohookean(mu, lmbda))
    }

    #[staticmethod]
    fn cavitation(mu: f64, lmbda: f64) -> PyResult<Self> {
        Self::checked(CoreLaw::Cavitation { mu, lambda: lmbda })
    }

    #[staticmethod]
    fn linear_elastic(mu: f64, lmbda: f64) -> PyResult<Self> {
        Self::checked(CoreLaw::LinearElastic { mu, lambda: lmbda })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    #[getter]
    fn lmbda(&self) -> f64 {
        self.inner.lambda()
    }

    /// `(psi, P, A)` at the displacement gradient `grad_u` (d x d rows);
    /// `A` is the `d^2 x d^2` tangent in row-major flattening.
    fn evaluate(&self, grad_u: Vec<Vec<f64>>) -> PyResult<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let d = grad_u.len();
        if !(2..=3).contains(&d) || grad_u.iter().any(|r| r.len() != d) {
            return Err(PyValueError::new_err("grad_u must be a 2x2 or 3x3 matrix"));
        }
        let flat: Vec<f64> = grad_u.concat();
        let r = self.inner.evaluate(&material::unflatten(&flat, d)).map_err(py_err)?;
        Ok((r.psi, rows(&r.p), rows(&r.a)))
    }

    fn __repr__(&self) -> String {
        format!("MaterialLaw({}, mu={}, lambda={})", self.inner.name(), self.inner.mu(), self.inner.lambda())
    }
}

impl MaterialLaw {
    fn checked(inner: CoreLaw) -> PyResult<Self> {
        inner.validate().map_err(py_err)?;
        Ok(MaterialLaw { inner })
    }
}

/// Run configuration, mirroring the TOML file read by the command line.
#[pyclass(module = "pyhho", skip_from_py_object)]
#[derive(Clone)]
pub struct RunConfig {
    pub inner: config::RunConfig,
}

#[pymethods]
impl RunConfig {
    #[new]
    #[pyo3(signature = (case, method = "shho", k = 1))]
    fn new(case: &str, method: &str, k: usize) -> PyResult<Self> {
        Ok(RunConfig {
            inner: config::RunConfig::new(case, parse(method)?, k),
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(RunConfig {
            inner: config::RunConfig::from_toml(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(RunConfig {
            inner: config::RunConfig::load(path).map_err(py_err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(py_err)
    }

    #[getter]
    fn case(&self) -> String {
        self.inner.run.case.clone()
    }

    #[setter]
    fn set_case(&mut self, v: String) {
        self.inner.run.case = v;
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.method.name()
    }

    #[setter]
    fn set_method(&mut self, v: &str) -> PyResult<()> {
        self.inner.method.method = parse::<Method>(v)?;
        Ok(())
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.method.k
    }

    #[setter]
    fn set_k(&mut self, v: usize) {
        self.inner.method.k = v;
    }

    #[getter]
    fn grad_space(&self) -> Option<&'static str> {
        self.inner.method.grad_space.map(GradSpace::name)
    }

    #[setter]
    fn set_grad_space(&mut self, v: Option<&str>) -> PyResult<()> {
        self.inner.method.grad_space = v.map(parse::<GradSpace>).transpose()?;
        Ok(())
    }

    #[getter]
    fn beta0(&self) -> Option<f64> {
        self.inner.method.beta0
    }

    #[setter]
    fn set_beta0(&mut self, v: Option<f64>) {
        self.inner.method.beta0 = v;
    }

    #[getter]
    fn levels(&self) -> usize {
        self.inner.run.levels
    }

    #[setter]
    fn set_levels(&mut self, v: usize) {
        self.inner.run.levels = v;
    }

    #[getter]
    fn out(&self) -> PathBuf {
        self.inner.run.out.clone()
    }

    #[setter]
    fn set_out(&mut self, v: PathBuf) {
        self.inner.run.out = v;
    }

    #[getter]
    fn mesh(&self) -> Option<PathBuf> {
        self.inner.run.mesh.clone()
    }

    #[setter]
    fn set_mesh(&mut self, v: Option<PathBuf>) {
        self.inner.run.mesh = v;
    }

    #[getter]
    fn lmbda(&self) -> Option<f64> {
        self.inner.material.lambda
    }

    #[setter]
    fn set_lmbda(&mut self, v: Option<f64>) {
        self.inner.material.lambda = v;
    }

    #[getter]
    fn mu(&self) -> Option<f64> {
        self.inner.material.mu
    }

    #[setter]
    fn set_mu(&mut self, v: Option<f64>) {
        self.inner.material.mu = v;
    }

    #[getter]
    fn load_steps(&self) -> Option<usize> {
        self.inner.newton.load_steps
    }

    #[setter]
    fn set_load_steps(&mut self, v: Option<usize>) {
        self.inner.newton.load_steps = v;
    }

    #[getter]
    fn load_scale(&self) -> Option<f64> {
        self.inner.run.load_scale
    }

    #[setter]
    fn set_load_scale(&mut self, v: Option<f64>) {
        self.inner.run.load_scale = v;
    }

    #[getter]
    fn jitter(&self) -> Option<f64> {
        self.inner.run.jitter
    }

    #[setter]
    fn set_jitter(&mut self, v: Option<f64>) {
        self.inner.run.jitter = v;
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(case={:?}, method={}, k={})",
            self.inner.run.case,
            self.inner.method.method.name(),
            self.inner.method.k
        )
    }
}

/// Converged solution of one refinement level.
#[pyclass(module = "pyhho", frozen)]
pub struct Solution {
    result: LevelResult,
    fields: DerivedFields,
}

#[pymethods]
impl Solution {
    #[getter]
    fn level(&self) -> usize {
        self.result.level
    }

    #[getter]
    fn h(&self) -> f64 {
        self.result.h
    }

    #[getter]
    fn num_cells(&self) -> usize {
        self.result.solver.disc.num_cells()
    }

    #[getter]
    fn load_steps(&self) -> usize {
        self.result.log.steps.len()
    }

    #[getter]
    fn newton_iterations(&self) -> usize {
        self.result.log.total_iterations()
    }

    /// Newton residual histories, one list per load step.
    #[getter]
    fn residuals(&self) -> Vec<Vec<f64>> {
        self.result.log.steps.iter().map(|s| s.residuals.clone()).collect()
    }

    #[getter]
    fn min_jacobian(&self) -> f64 {
        self.result.min_jacobian
    }

    /// `||Pi_T u - u_T||`, or None without an exact solution.
    #[getter]
    fn err_u(&self) -> Option<f64> {
        self.result.errors.map(|e| e.u)
    }

    #[getter]
    fn err_u_full(&self) -> Option<f64> {
        self.result.errors.map(|e| e.u_full)
    }

    #[getter]
    fn err_g(&self) -> Option<f64> {
        self.result.errors.map(|e| e.gradient)
    }

    /// Cell-wise `det F` at the barycenters.
    fn jacobian(&self) -> Vec<f64> {
        self.fields.jacobian.clone()
    }

    fn von_mises(&self) -> Vec<f64> {
        self.fields.von_mises.clone()
    }

    /// Vertex displacements.
    fn displacement(&self) -> Vec<[f64; 3]> {
        self.fields.displacement.clone()
    }

    fn mesh(&self) -> Mesh {
        Mesh {
            inner: self.result.solver.disc.mesh.clone(),
        }
    }

    fn save_vtk(&self, path: PathBuf) -> PyResult<()> {
        postproc::save_vtk(&self.result.solver.disc.mesh, &self.fields, path).map_err(py_err)
    }
}

/// Solves one refinement level of a configuration, optionally on a given mesh.
#[pyfunction]
#[pyo3(signature = (config, level = 0, mesh = None))]
fn solve(py: Python<'_>, config: &RunConfig, level: usize, mesh: Option<&Mesh>) -> PyResult<Solution> {
    let cfg = config.inner.clone();
    let mesh = mesh.map(|m| m.inner.clone());
    py.detach(move || {
        let case = cfg.case()?;
        let method = cfg.method_config(&case)?;
        let newton = cfg.newton_config(&case)?;
        let mesh = match mesh {
            Some(m) => m,
            None => {
                let m = case.mesh(level, cfg.run.mesh.as_deref())?;
                match cfg.run.jitter {
                    Some(a) => m.jitter_interior(a, config::JITTER_SEED + level as u64)?,
                    None => m,
                }
            }
        };
        let result = config::solve_mesh(&case, method, newton, level, mesh)?;
        let fields = postproc::derived_fields(&result.solver, &result.state)?;
        Ok(Solution { result, fields })
    })
    .map_err(py_err)
}

/// Runs every level of a configuration, writing CSV and VTK files to
/// `config.out`, and returns the convergence table as a list of dicts.
#[pyfunction]
fn run_study(py: Python<'_>, config: &RunConfig) -> PyResult<Vec<BTreeMap<&'static str, Option<f64>>>> {
    let cfg = config.inner.clone();
    let report = py.detach(move || config::run_study(&cfg, |_| {})).map_err(py_err)?;
    Ok(report
        .rows
        .iter()
        .map(|r| {
            BTreeMap::from([
                ("h", Some(r.h)),
                ("err_u", Some(r.err_u)),
                ("order_u", r.order_u),
                ("err_G", Some(r.err_g)),
                ("order_G", r.order_g),
                ("newton_iters", Some(r.newton_iters as f64)),
            ])
        })
        .collect())
}

/// Operator self-checks on random cells: `(name, value, tolerance, passed)`.
#[pyfunction]
#[pyo3(signature = (cells = 20, seed = 7))]
fn verify(py: Python<'_>, cells: usize, seed: u64) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let checks = py.detach(move || hho_core::verify::run_checks(cells, seed)).map_err(py_err)?;
    Ok(checks.into_iter().map(|c| (c.name, c.value, c.tolerance, c.passed)).collect())
}

#[pyfunction]
fn case_names() -> Vec<&'static str> {
    CASE_NAMES.to_vec()
}

/// Adds the classes and functions of the module to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Mesh>()?;
    m.add_class::<MaterialLaw>()?;
    m.add_class::<RunConfig>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(case_names, m)?)?;
    Ok(())
}

#[pymodule]
fn pyhho(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
