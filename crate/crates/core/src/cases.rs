//! Benchmark configurations: the manufactured cube, the annulus, and the
//! indented block, sheared cylinder and cavitating sphere on supplied meshes.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::assembly::{field, zero_field, Discretization, NewtonConfig, Problem, SolveLog, Solver, State, VectorField};
use crate::error::{HhoError, Result};
use crate::material::MaterialLaw;
use crate::mesh::{generate_annulus_mesh, generate_cube_mesh, load_gmsh, Mesh, Point};

pub const CASE_NAMES: [&str; 5] = ["manufactured", "annulus", "block", "cylinder", "sphere"];

/// Inner and outer radius of the annulus.
pub const ANNULUS_RADII: (f64, f64) = (0.5, 1.0);

pub type BoundaryClassifier = Arc<dyn Fn(&Point, &str) -> String + Send + Sync>;

#[derive(Clone)]
pub enum Geometry {
    /// Unit cube, level `l` has `2^(l+1)` cells per edge before splitting.
    Cube,
    /// Annulus, level `l` has `2^(l+1)` radial layers.
    Annulus { r_inner: f64, r_outer: f64 },
    /// Mesh read from a gmsh file, with boundary tags recomputed geometrically.
    External {
        default_path: PathBuf,
        classify: BoundaryClassifier,
    },
}

#[derive(Clone)]
pub struct ExactSolution {
    pub u: Arc<dyn Fn(&Point) -> Point + Send + Sync>,
    pub grad: Arc<dyn Fn(&Point) -> [f64; 9] + Send + Sync>,
}

#[derive(Clone)]
pub struct CaseDefinition {
    pub name: String,
    pub geometry: Geometry,
    pub problem: Problem,
    pub exact: Option<ExactSolution>,
    /// Default sHHO stabilization scale.
    pub default_beta0: f64,
    pub default_load_steps: usize,
}

impl std::fmt::Debug for CaseDefinition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CaseDefinition")
            .field("name", &self.name)
            .field("problem", &self.problem)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl CaseDefinition {
    pub fn dim(&self) -> usize {
        match self.geometry {
            Geometry::Annulus { .. } => 2,
            _ => 3,
        }
    }

    /// Mesh for refinement level `level`. External geometries take `path`
    /// (or the bundled sample mesh) and have a single level.
    pub fn mesh(&self, level: usize, path: Option<&Path>) -> Result<Mesh> {
        let n = 1usize << (level + 1);
        match &self.geometry {
            Geometry::Cube => Ok(generate_cube_mesh(n)),
            Geometry::Annulus { r_inner, r_outer } => Ok(generate_annulus_mesh(*r_inner, *r_outer, n, 8 * n)),
            Geometry::External { default_path, classify } => {
                if level > 0 {
                    return Err(HhoError::Config(format!(
                        "case '{}' reads its mesh from a file and has a single refinement level",
                        self.name
                    )));
                }
                let mut mesh = load_gmsh(path.unwrap_or(default_path))?;
                mesh.retag(|x, tag| classify(x, tag));
                Ok(mesh)
            }
        }
    }
}

/// Optional overrides applied on top of a case's defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CaseOverrides {
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    /// Multiplies the imposed boundary displacement (sphere: the radial stretch `r`).
    pub load_scale: Option<f64>,
}

/// Builds a case by name with its default parameters and the given overrides.
pub fn case_by_name(name: &str, o: CaseOverrides) -> Result<CaseDefinition> {
    let scale = o.load_scale.unwrap_or(1.0);
    let case = match name {
        "manufactured" => {
            let mut p = ManufacturedParams::default();
            p.mu = o.mu.unwrap_or(p.mu);
            p.lambda = o.lambda.unwrap_or(p.lambda);
            manufactured_case_with(p)
        }
        "annulus" => annulus_case(
            ANNULUS_RADII.0 + scale * (1.5 - ANNULUS_RADII.0),
            o.mu.unwrap_or(0.333),
            o.lambda.unwrap_or(1666.44),
        ),
        "block" => block_case(o.mu.unwrap_or(1.0), o.lambda.unwrap_or(4999.0), scale),
        "cylinder" => cylinder_case(o.mu.unwrap_or(0.1), o.lambda.unwrap_or(1.0), scale),
        "sphere" => sphere_case(o.mu.unwrap_or(1.0), o.lambda.unwrap_or(1.0), o.load_scale.unwrap_or(1.0)),
        other => {
            return Err(HhoError::Config(format!(
                "unknown case '{other}' (expected one of {})",
                CASE_NAMES.join(", ")
            )))
        }
    };
    case.problem.law.validate()?;
    Ok(case)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ManufacturedLaw {
    Neohookean,
    LinearElastic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedParams {
    pub alpha: f64,
    pub gamma: f64,
    pub mu: f64,
    pub lambda: f64,
    pub law: ManufacturedLaw,
    /// Replace the Dirichlet condition on the face `x = 1` by the exact traction.
    pub neumann_x1: bool,
}

impl Default for ManufacturedParams {
    fn default() -> Self {
        ManufacturedParams {
            alpha: 0.1,
            gamma: 0.1,
            mu: 1.0,
            lambda: 10.0,
            law: ManufacturedLaw::Neohookean,
            neumann_x1: false,
        }
    }
}

/// Exact displacement of the manufactured case.
pub fn manufactured_displacement(alpha: f64, gamma: f64, lambda: f64) -> impl Fn(&Point) -> Point + Copy {
    let zeta = (alpha + gamma + alpha * gamma) / (1.0 + alpha + gamma + alpha * gamma);
    move |x: &Point| {
        [
            (1.0 / lambda + alpha) * x[0] + alpha * (PI * x[1]).sin(),
            -(1.0 / lambda + zeta) * x[1],
            (1.0 / lambda + gamma) * x[2] + gamma * (PI * x[0]).sin(),
        ]
    }
}

/// Row-major gradient of [`manufactured_displacement`].
pub fn manufactured_gradient(alpha: f64, gamma: f64, lambda: f64) -> impl Fn(&Point) -> [f64; 9] + Copy {
    let zeta = (alpha + gamma + alpha * gamma) / (1.0 + alpha + gamma + alpha * gamma);
    move |x: &Point| {
        [
            1.0 / lambda + alpha,
            alpha * PI * (PI * x[1]).cos(),
            0.0,
            0.0,
            -(1.0 / lambda + zeta),
            0.0,
            gamma * PI * (PI * x[0]).cos(),
            0.0,
            1.0 / lambda + gamma,
        ]
    }
}

/// Body force balancing the manufactured displacement. The sine terms of
/// `u_X` and `u_Z` depend on `Y` and `X` respectively, so the forcing does too.
pub fn manufactured_body_force(alpha: f64, gamma: f64, mu: f64) -> impl Fn(&Point) -> Point + Copy {
    move |x: &Point| {
        [
            mu * alpha * PI * PI * (PI * x[1]).sin(),
            0.0,
            mu * gamma * PI * PI * (PI * x[0]).sin(),
        ]
    }
}

pub fn manufactured_case(alpha: f64, gamma: f64, mu: f64, lambda: f64) -> CaseDefinition {
    manufactured_case_with(ManufacturedParams {
        alpha,
        gamma,
        mu,
        lambda,
        ..Default::default()
    })
}

pub fn manufactured_case_with(p: ManufacturedParams) -> CaseDefinition {
    let law = match p.law {
        ManufacturedLaw::Neohookean => MaterialLaw::neohookean(p.mu, p.lambda),
        ManufacturedLaw::LinearElastic => MaterialLaw::LinearElastic {
            mu: p.mu,
            lambda: p.lambda,
        },
    };
    let u = manufactured_displacement(p.alpha, p.gamma, p.lambda);
    let grad = manufactured_gradient(p.alpha, p.gamma, p.lambda);
    let mut dirichlet = BTreeMap::new();
    let mut neumann = BTreeMap::new();
    for tag in ["x0", "x1", "y0", "y1", "z0", "z1"] {
        dirichlet.insert(tag.to_string(), field(u));
    }
    if p.neumann_x1 {
        dirichlet.remove("x1");
        let traction = move |x: &Point| {
            let g = DMatrix::from_row_slice(3, 3, &grad(x));
            // the exact gradient keeps J > 0 for the admissible parameters
            let stress = law.evaluate(&g).map(|r| r.p).unwrap_or_else(|_| DMatrix::zeros(3, 3));
            [stress[(0, 0)], stress[(1, 0)], stress[(2, 0)]]
        };
        neumann.insert("x1".to_string(), field(traction));
    }
    CaseDefinition {
        name: "manufactured".into(),
        geometry: Geometry::Cube,
        problem: Problem {
            law,
            body_force: field(manufactured_body_force(p.alpha, p.gamma, p.mu)),
            dirichlet,
            neumann,
        },
        exact: Some(ExactSolution {
            u: Arc::new(u),
            grad: Arc::new(grad),
        }),
        default_beta0: 1.0,
        default_load_steps: 1,
    }
}

/// Solves the manufactured problem by continuation along the family of
/// exact solutions, scaling `alpha` and `gamma` by `s` from 0 to 1.
///
/// Proportional loading of the boundary data forces a volume change at
/// intermediate load factors, and for large `lambda / mu` the resulting
/// hydrostatic stress makes the tangent indefinite. Along the family every
/// intermediate state is nearly isochoric. The start `s = 0` is affine and
/// reproduced exactly. `newton.load_steps` sets the nominal number of steps,
/// halved on failure up to `newton.step_bisection_limit` times.
pub fn solve_manufactured_family(
    p: ManufacturedParams,
    disc: Discretization,
    newton: NewtonConfig,
) -> Result<(Solver, State, SolveLog)> {
    let at = |s: f64, disc: Discretization| {
        let case = manufactured_case_with(ManufacturedParams {
            alpha: s * p.alpha,
            gamma: s * p.gamma,
            ..p
        });
        Solver::new(disc, case.problem, newton).map(|solver| (solver, case.exact.expect("manufactured")))
    };
    let (solver, exact) = at(0.0, disc.clone())?;
    let mut state = solver.interpolate(&*exact.u, 1.0)?;
    let mut log = SolveLog::default();
    log.steps.push(solver.newton(&mut state, 1.0)?);
    let nominal = 1.0 / newton.load_steps as f64;
    let (mut s, mut step, mut depth) = (0.0f64, nominal, 0);
    let mut last = solver;
    while s < 1.0 - 1e-14 {
        let target = (s + step).min(1.0);
        let (solver, _) = at(target, disc.clone())?;
        let mut trial = state.clone();
        match solver.newton(&mut trial, 1.0) {
            Ok(mut entry) => {
                entry.load = target;
                log.steps.push(entry);
                state = trial;
                s = target;
                last = solver;
                if depth > 0 {
                    depth -= 1;
                    step = (step * 2.0).min(nominal);
                }
            }
            Err(e @ (HhoError::NonPositiveJacobian { .. }
            | HhoError::NonConvergence(_)
            | HhoError::LinearSolve(_)
            | HhoError::Factorization(_))) => {
                depth += 1;
                log.bisections += 1;
                if depth > newton.step_bisection_limit {
                    return Err(HhoError::NonConvergence(format!(
                        "family continuation from s = {s} failed after {} bisections: {e}",
                        newton.step_bisection_limit
                    )));
                }
                step *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Ok((last, state, log))
}

/// Annulus with the inner circle pushed radially to radius `r0` and a free
/// outer circle.
pub fn annulus_case(r0: f64, mu: f64, lambda: f64) -> CaseDefinition {
    let (r_inner, r_outer) = ANNULUS_RADII;
    let s = (r0 - r_inner) / r_inner;
    let mut dirichlet = BTreeMap::new();
    dirichlet.insert("inner".to_string(), field(move |x: &Point| [s * x[0], s * x[1], 0.0]));
    let mut neumann = BTreeMap::new();
    neumann.insert("outer".to_string(), zero_field());
    CaseDefinition {
        name: "annulus".into(),
        geometry: Geometry::Annulus { r_inner, r_outer },
        problem: Problem {
            law: MaterialLaw::neohookean(mu, lambda),
            body_force: zero_field(),
            dirichlet,
            neumann,
        },
        exact: None,
        default_beta0: 100.0,
        default_load_steps: 10,
    }
}

fn constant(v: Point) -> VectorField {
    field(move |_| v)
}

/// `meshes/<name>.msh` under the working directory, or else the copy shipped
/// with the workspace.
fn sample_mesh(name: &str) -> PathBuf {
    let file = format!("{name}.msh");
    let local = PathBuf::from("meshes").join(&file);
    if local.exists() {
        return local;
    }
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../meshes").join(file)
}

/// Cube `(-1, 1)^3` clamped at the bottom and indented on the top patch
/// `(-0.5, 0.5)^2` by the vertical displacement `-0.8 scale`.
pub fn block_case(mu: f64, lambda: f64, scale: f64) -> CaseDefinition {
    let classify: BoundaryClassifier = Arc::new(|x: &Point, _: &str| {
        let tol = 1e-8;
        if (x[2] + 1.0).abs() < tol {
            "bottom".into()
        } else if (x[2] - 1.0).abs() < tol && x[0].abs() < 0.5 && x[1].abs() < 0.5 {
            "indent".into()
        } else {
            "free".into()
        }
    });
    let mut dirichlet = BTreeMap::new();
    dirichlet.insert("bottom".to_string(), zero_field());
    dirichlet.insert("indent".to_string(), constant([0.0, 0.0, -0.8 * scale]));
    let mut neumann = BTreeMap::new();
    neumann.insert("free".to_string(), zero_field());
    CaseDefinition {
        name: "block".into(),
        geometry: Geometry::External {
            default_path: sample_mesh("block"),
            classify,
        },
        problem: Problem {
            law: MaterialLaw::neohookean(mu, lambda),
            body_force: zero_field(),
            dirichlet,
            neumann,
        },
        exact: None,
        default_beta0: 100.0,
        default_load_steps: 10,
    }
}

/// Hollow cylinder (radii 0.75 and 1, height 4) clamped at the bottom with
/// the top displaced by `(-1, 0, -1) scale`.
pub fn cylinder_case(mu: f64, lambda: f64, scale: f64) -> CaseDefinition {
    let classify: BoundaryClassifier = Arc::new(|x: &Point, _: &str| {
        let tol = 1e-8;
        if x[2].abs() < tol {
            "bottom".into()
        } else if (x[2] - 4.0).abs() < tol {
            "top".into()
        } else {
            "lateral".into()
        }
    });
    let mut dirichlet = BTreeMap::new();
    dirichlet.insert("bottom".to_string(), zero_field());
    dirichlet.insert("top".to_string(), constant([-scale, 0.0, -scale]));
    let mut neumann = BTreeMap::new();
    neumann.insert("lateral".to_string(), zero_field());
    CaseDefinition {
        name: "cylinder".into(),
        geometry: Geometry::External {
            default_path: sample_mesh("cylinder"),
            classify,
        },
        problem: Problem {
            law: MaterialLaw::neohookean(mu, lambda),
            body_force: zero_field(),
            dirichlet,
            neumann,
        },
        exact: None,
        default_beta0: 100.0,
        default_load_steps: 10,
    }
}

/// Unit sphere with two free cavities, outer surface displaced by `r X`,
/// cavitation law.
pub fn sphere_case(mu: f64, lambda: f64, r: f64) -> CaseDefinition {
    // the cavities sit well inside radius 0.9; coarse polygonal outer faces do not
    let classify: BoundaryClassifier = Arc::new(|x: &Point, _: &str| {
        if (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() > 0.9 {
            "outer".into()
        } else {
            "cavity".into()
        }
    });
    let mut dirichlet = BTreeMap::new();
    dirichlet.insert("outer".to_string(), field(move |x: &Point| [r * x[0], r * x[1], r * x[2]]));
    let mut neumann = BTreeMap::new();
    neumann.insert("cavity".to_string(), zero_field());
    CaseDefinition {
        name: "sphere".into(),
        geometry: Geometry::External {
            default_path: sample_mesh("sphere"),
            classify,
        },
        problem: Problem {
            law: MaterialLaw::Cavitation { mu, lambda },
            body_force: zero_field(),
            dirichlet,
            neumann,
        },
        exact: None,
        default_beta0: 100.0,
        default_load_steps: 10,
    }
}
