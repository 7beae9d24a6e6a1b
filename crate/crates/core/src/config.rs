//! TOML run configuration and the refinement-study driver.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::{Discretization, Method, MethodConfig, NewtonConfig, SolveLog, Solver, State};
use crate::basis::GradSpace;
use crate::cases::{case_by_name, CaseDefinition, CaseOverrides};
use crate::error::{HhoError, Result};
use crate::mesh::Mesh;
use crate::postproc::{compute_errors, derived_fields, save_vtk, ErrorNorms, ErrorReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub case: String,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Multiplies the imposed boundary displacement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_scale: Option<f64>,
    /// Random interior-vertex displacement, as a fraction of the shortest
    /// incident edge. Breaks the symmetry of the structured meshes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<f64>,
}

fn default_levels() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub method: Method,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Defaults to `pk` for sHHO and `pkp1` for uHHO.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_space: Option<GradSpace>,
    /// Defaults to the case value for sHHO, ignored for uHHO.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta0: Option<f64>,
}

fn default_k() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    /// Order of the nonlinear integrals; default `2k` (sHHO) or `2k + 2` (uHHO).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub method: MethodSection,
    #[serde(default)]
    pub newton: NewtonSection,
    #[serde(default)]
    pub material: MaterialSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
}

/// Newton settings; `load_steps` defaults to the case value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSection {
    #[serde(default = "d_rel")]
    pub rel_tol: f64,
    #[serde(default = "d_abs")]
    pub abs_tol: f64,
    #[serde(default = "d_iters")]
    pub max_iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_steps: Option<usize>,
    #[serde(default = "d_bisect")]
    pub step_bisection_limit: usize,
    #[serde(default = "d_damping")]
    pub damping: f64,
    #[serde(default = "d_line_search")]
    pub line_search: usize,
}

fn d_rel() -> f64 {
    NewtonConfig::default().rel_tol
}
fn d_abs() -> f64 {
    NewtonConfig::default().abs_tol
}
fn d_iters() -> usize {
    NewtonConfig::default().max_iters
}
fn d_bisect() -> usize {
    NewtonConfig::default().step_bisection_limit
}
fn d_damping() -> f64 {
    NewtonConfig::default().damping
}
fn d_line_search() -> usize {
    NewtonConfig::default().line_search
}

impl Default for NewtonSection {
    fn default() -> Self {
        NewtonSection {
            rel_tol: d_rel(),
            abs_tol: d_abs(),
            max_iters: d_iters(),
            load_steps: None,
            step_bisection_limit: d_bisect(),
            damping: d_damping(),
            line_search: d_line_search(),
        }
    }
}

impl RunConfig {
    pub fn new(case: &str, method: Method, k: usize) -> Self {
        RunConfig {
            run: RunSection {
                case: case.into(),
                levels: default_levels(),
                mesh: None,
                out: default_out(),
                load_scale: None,
                jitter: None,
            },
            method: MethodSection {
                method,
                k,
                grad_space: None,
                beta0: None,
            },
            newton: NewtonSection::default(),
            material: MaterialSection::default(),
            quadrature: QuadratureSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HhoError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HhoError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HhoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn case(&self) -> Result<CaseDefinition> {
        case_by_name(
            &self.run.case,
            CaseOverrides {
                mu: self.material.mu,
                lambda: self.material.lambda,
                load_scale: self.run.load_scale,
            },
        )
    }

    pub fn method_config(&self, case: &CaseDefinition) -> Result<MethodConfig> {
        let m = &self.method;
        let mut cfg = match m.method {
            Method::Shho => MethodConfig::shho(m.k, m.beta0.unwrap_or(case.default_beta0)),
            Method::Uhho => MethodConfig::uhho(m.k, m.grad_space.unwrap_or(GradSpace::Pkp1Tensor)),
        };
        if let Some(space) = m.grad_space {
            cfg.grad_space = space;
        }
        cfg.quad_order = self.quadrature.order;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn newton_config(&self, case: &CaseDefinition) -> Result<NewtonConfig> {
        let n = &self.newton;
        let cfg = NewtonConfig {
            rel_tol: n.rel_tol,
            abs_tol: n.abs_tol,
            max_iters: n.max_iters,
            load_steps: n.load_steps.unwrap_or(case.default_load_steps),
            step_bisection_limit: n.step_bisection_limit,
            damping: n.damping,
            line_search: n.line_search,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Outcome of one refinement level.
pub struct LevelResult {
    pub level: usize,
    pub h: f64,
    pub solver: Solver,
    pub state: State,
    pub log: SolveLog,
    /// Present when the case has an exact solution.
    pub errors: Option<ErrorNorms>,
    pub min_jacobian: f64,
}

/// Seed of the interior-vertex jitter; fixed so that runs are reproducible.
pub const JITTER_SEED: u64 = 2017;

/// Solves one refinement level of a case.
pub fn solve_level(
    case: &CaseDefinition,
    method: MethodConfig,
    newton: NewtonConfig,
    level: usize,
    mesh_path: Option<&Path>,
) -> Result<LevelResult> {
    solve_mesh(case, method, newton, level, case.mesh(level, mesh_path)?)
}

/// Solves a case on a given mesh; `level` is only recorded.
pub fn solve_mesh(
    case: &CaseDefinition,
    method: MethodConfig,
    newton: NewtonConfig,
    level: usize,
    mesh: Mesh,
) -> Result<LevelResult> {
    let h = mesh.average_diameter();
    let disc = Discretization::new(mesh, method)?;
    let solver = Solver::new(disc, case.problem.clone(), newton)?;
    let mut state = solver.zero_state();
    let log = solver.solve(&mut state)?;
    let errors = match &case.exact {
        Some(ex) => Some(compute_errors(&solver, &state, &*ex.u, &*ex.grad, 2 * (method.k + 2))?),
        None => None,
    };
    let min_jacobian = derived_fields(&solver, &state)?
        .jacobian
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(LevelResult {
        level,
        h,
        solver,
        state,
        log,
        errors,
        min_jacobian,
    })
}

/// Artifact base name `<case>_<method>_k<k>_<tag>`.
pub fn artifact_name(case: &str, method: Method, k: usize, tag: &str) -> String {
    format!("{case}_{}_k{k}_{tag}", method.name())
}

/// Runs every level of a configuration, writing one VTK file per level and
/// the convergence table as CSV into the output directory.
pub fn run_study(cfg: &RunConfig, mut on_level: impl FnMut(&LevelResult)) -> Result<ErrorReport> {
    let case = cfg.case()?;
    let method = cfg.method_config(&case)?;
    let newton = cfg.newton_config(&case)?;
    std::fs::create_dir_all(&cfg.run.out).map_err(|source| HhoError::Io {
        path: cfg.run.out.display().to_string(),
        source,
    })?;
    let mut report = ErrorReport::default();
    for level in 0..cfg.run.levels.max(1) {
        let mut mesh = case.mesh(level, cfg.run.mesh.as_deref())?;
        if let Some(a) = cfg.run.jitter {
            mesh = mesh.jitter_interior(a, JITTER_SEED + level as u64)?;
        }
        let res = solve_mesh(&case, method, newton, level, mesh)?;
        let fields = derived_fields(&res.solver, &res.state)?;
        let base = artifact_name(&case.name, method.method, method.k, &level.to_string());
        save_vtk(&res.solver.disc.mesh, &fields, cfg.run.out.join(format!("{base}.vtk")))?;
        let (eu, eg) = res.errors.map_or((f64::NAN, f64::NAN), |e| (e.u, e.gradient));
        report.push(res.h, eu, eg, res.log.total_iterations());
        on_level(&res);
    }
    let tag = format!("{}", cfg.run.levels.max(1) - 1);
    let base = artifact_name(&case.name, method.method, method.k, &tag);
    report.save_csv(cfg.run.out.join(format!("{base}.csv")))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_toml("[run]\ncase = \"manufactured\"\n[method]\nmethod = \"uhho\"\n").unwrap();
        assert_eq!(cfg.run.levels, 1);
        assert_eq!(cfg.method.k, 1);
        let case = cfg.case().unwrap();
        let m = cfg.method_config(&case).unwrap();
        assert_eq!(m.grad_space, GradSpace::Pkp1Tensor);
        assert_eq!(m.beta0, 0.0);
        assert_eq!(cfg.newton_config(&case).unwrap().load_steps, 1);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::from_toml("[run]\ncase = \"block\"\nlevel = 2\n[method]\nmethod = \"shho\"\n");
        assert!(matches!(err, Err(HhoError::Config(_))));
    }

    #[test]
    fn shho_uses_case_beta() {
        let cfg = RunConfig::new("block", Method::Shho, 1);
        let case = cfg.case().unwrap();
        assert_eq!(cfg.method_config(&case).unwrap().beta0, 100.0);
    }

    #[test]
    fn artifact_names() {
        assert_eq!(artifact_name("manufactured", Method::Shho, 2, "1"), "manufactured_shho_k2_1");
    }
}
