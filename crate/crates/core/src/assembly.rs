//! Local residuals and tangents, static condensation, global assembly over
//! face unknowns, and the Newton driver with load stepping.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use faer::prelude::*;
use faer::sparse::linalg::solvers::SymbolicLlt;
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::GradSpace;
use crate::error::{HhoError, Result};
use crate::hho::{CellContext, DofLayout, LocalOperators};
use crate::material::{unflatten, MaterialLaw};
use crate::mesh::{Mesh, Point};
use crate::quadrature::QuadratureRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Shho,
    Uhho,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "shho" => Ok(Method::Shho),
            "uhho" => Ok(Method::Uhho),
            other => Err(format!("unknown method '{other}' (shho, uhho)")),
        }
    }
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Shho => "shho",
            Method::Uhho => "uhho",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub k: usize,
    pub grad_space: GradSpace,
    /// Stabilization scale; the weight is `beta0 * mu`. Zero for uHHO.
    pub beta0: f64,
    /// Overrides the quadrature order of the nonlinear integrals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_order: Option<usize>,
}

impl MethodConfig {
    pub fn shho(k: usize, beta0: f64) -> Self {
        MethodConfig {
            method: Method::Shho,
            k,
            grad_space: GradSpace::PkTensor,
            beta0,
            quad_order: None,
        }
    }

    pub fn uhho(k: usize, grad_space: GradSpace) -> Self {
        MethodConfig {
            method: Method::Uhho,
            k,
            grad_space,
            beta0: 0.0,
            quad_order: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(HhoError::Config("polynomial degree k must be at least 1".into()));
        }
        match self.method {
            Method::Shho => {
                if self.grad_space != GradSpace::PkTensor {
                    return Err(HhoError::Config(
                        "the stabilized method reconstructs the gradient in P^k tensors".into(),
                    ));
                }
                if !(self.beta0 > 0.0) {
                    return Err(HhoError::Config("the stabilized method needs beta0 > 0".into()));
                }
            }
            Method::Uhho => {
                if self.grad_space == GradSpace::PkTensor {
                    return Err(HhoError::Config(
                        "the unstabilized method needs the pkp1 or rtn gradient space".into(),
                    ));
                }
                if self.beta0 != 0.0 {
                    return Err(HhoError::Config("the unstabilized method has beta0 = 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Quadrature order for integrands that are nonlinear in the unknowns.
    pub fn nonlinear_order(&self) -> usize {
        self.quad_order.unwrap_or(match self.method {
            Method::Shho => 2 * self.k,
            Method::Uhho => 2 * self.k + 2,
        })
    }

    pub fn is_stabilized(&self) -> bool {
        self.method == Method::Shho
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iters: usize,
    pub load_steps: usize,
    pub step_bisection_limit: usize,
    /// Scales every Newton increment; 1 is plain Newton.
    pub damping: f64,
    /// Maximum halvings of the backtracking line search on the residual
    /// norm; 0 takes every step in full.
    pub line_search: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_iters: 20,
            load_steps: 1,
            step_bisection_limit: 8,
            damping: 1.0,
            line_search: 8,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(HhoError::Config("Newton tolerances must be positive".into()));
        }
        if self.max_iters == 0 || self.load_steps == 0 {
            return Err(HhoError::Config("max_iters and load_steps must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(HhoError::Config("damping must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

pub type VectorField = Arc<dyn Fn(&Point) -> Point + Send + Sync>;

pub fn field<F: Fn(&Point) -> Point + Send + Sync + 'static>(f: F) -> VectorField {
    Arc::new(f)
}

pub fn zero_field() -> VectorField {
    Arc::new(|_| [0.0; 3])
}

/// Boundary-value problem data. Every load is multiplied by the load factor.
#[derive(Clone)]
pub struct Problem {
    pub law: MaterialLaw,
    pub body_force: VectorField,
    /// Boundary tag to imposed displacement.
    pub dirichlet: BTreeMap<String, VectorField>,
    /// Boundary tag to imposed traction (reference configuration).
    pub neumann: BTreeMap<String, VectorField>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("law", &self.law)
            .field("dirichlet", &self.dirichlet.keys().collect::<Vec<_>>())
            .field("neumann", &self.neumann.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Problem {
    /// Checks that every boundary tag of the mesh has exactly one role.
    pub fn check_tags(&self, mesh: &Mesh) -> Result<()> {
        for tag in mesh.tag_names() {
            match (self.dirichlet.contains_key(&tag), self.neumann.contains_key(&tag)) {
                (true, true) => {
                    return Err(HhoError::Config(format!("boundary tag '{tag}' is both Dirichlet and Neumann")))
                }
                (false, false) => {
                    return Err(HhoError::Config(format!("boundary tag '{tag}' has no boundary condition")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Per-cell quadrature data for the nonlinear integrals.
#[derive(Debug, Clone)]
pub struct CellQuadrature {
    pub rule: QuadratureRule,
    /// `E(x_q) G`, the reconstructed gradient (row-major) as a linear map of
    /// the local unknowns.
    pub gval: Vec<DMatrix<f64>>,
}

/// Mesh, per-cell contexts, cached operators and quadrature.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub method: MethodConfig,
    pub layout: DofLayout,
    pub cells: Vec<CellContext>,
    pub ops: Vec<LocalOperators>,
    pub quad: Vec<CellQuadrature>,
}

impl Discretization {
    pub fn new(mesh: Mesh, method: MethodConfig) -> Result<Self> {
        method.validate()?;
        let layout = DofLayout::new(mesh.dim, method.k);
        let order = method.nonlinear_order();
        let built: Vec<(CellContext, LocalOperators, CellQuadrature)> = (0..mesh.num_cells())
            .into_par_iter()
            .map(|c| {
                let ctx = CellContext::new(&mesh, c, method.k)?;
                let ops = LocalOperators::build(&ctx, method.grad_space, method.is_stabilized())?;
                let rule = ctx.cell_rule(order)?;
                let gval = ops.gradient_values(&rule);
                Ok((ctx, ops, CellQuadrature { rule, gval }))
            })
            .collect::<Result<_>>()?;
        let mut cells = Vec::with_capacity(built.len());
        let mut ops = Vec::with_capacity(built.len());
        let mut quad = Vec::with_capacity(built.len());
        for (c, o, q) in built {
            cells.push(c);
            ops.push(o);
            quad.push(q);
        }
        Ok(Discretization {
            mesh,
            method,
            layout,
            cells,
            ops,
            quad,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }
}

/// Local residual and, on request, the local tangent at the local unknowns.
/// `external` is the load vector at the current load factor.
pub fn local_residual_tangent(
    quad: &CellQuadrature,
    ops: &LocalOperators,
    law: &MaterialLaw,
    beta: f64,
    dofs: &DVector<f64>,
    external: &DVector<f64>,
    with_tangent: bool,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    let n = dofs.len();
    let dd = quad.gval.first().map_or(0, |g| g.nrows());
    let d = (dd as f64).sqrt().round() as usize;
    let mut r = -external.clone();
    let mut k = with_tangent.then(|| DMatrix::zeros(n, n));
    for (gv, &w) in quad.gval.iter().zip(&quad.rule.weights) {
        let grad = gv * dofs;
        let resp = law.evaluate(&unflatten(grad.as_slice(), d))?;
        let p = DVector::from_fn(dd, |r, _| resp.p[(r / d, r % d)]);
        r.gemv_tr(w, gv, &p, 1.0);
        if let Some(k) = k.as_mut() {
            let ag = &resp.a * gv;
            k.gemm_tr(w, gv, &ag, 1.0);
        }
    }
    if beta > 0.0 && ops.has_stabilization() {
        r.gemv(beta, &ops.stab_gram, dofs, 1.0);
        if let Some(k) = k.as_mut() {
            *k += beta * &ops.stab_gram;
        }
    }
    Ok((r, k))
}

/// Local energy `int_T Psi(F(u)) + beta/2 |gamma^(1/2) S u|^2 - loads . u`.
pub fn local_energy(
    quad: &CellQuadrature,
    ops: &LocalOperators,
    law: &MaterialLaw,
    beta: f64,
    dofs: &DVector<f64>,
    external: &DVector<f64>,
) -> Result<f64> {
    let dd = quad.gval.first().map_or(0, |g| g.nrows());
    let d = (dd as f64).sqrt().round() as usize;
    let mut e = -external.dot(dofs);
    for (gv, &w) in quad.gval.iter().zip(&quad.rule.weights) {
        let grad = gv * dofs;
        e += w * law.evaluate(&unflatten(grad.as_slice(), d))?.psi;
    }
    if beta > 0.0 && ops.has_stabilization() {
        e += 0.5 * beta * dofs.dot(&(&ops.stab_gram * dofs));
    }
    Ok(e)
}

/// Local residual `(P(F(u)), G v)_T + beta (gamma S u, S v)_dT - loads`.
pub fn local_residual(
    quad: &CellQuadrature,
    ops: &LocalOperators,
    law: &MaterialLaw,
    beta: f64,
    dofs: &DVector<f64>,
    external: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(local_residual_tangent(quad, ops, law, beta, dofs, external, false)?.0)
}

/// Local tangent `(A(F(u)) : G du, G v)_T + beta (gamma S du, S v)_dT`.
pub fn local_tangent(
    quad: &CellQuadrature,
    ops: &LocalOperators,
    law: &MaterialLaw,
    beta: f64,
    dofs: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let zero = DVector::zeros(dofs.len());
    Ok(local_residual_tangent(quad, ops, law, beta, dofs, &zero, true)?
        .1
        .expect("tangent requested"))
}

/// Result of eliminating the cell unknowns of one local system.
#[derive(Debug, Clone)]
pub struct Condensed {
    /// `K_FF - K_FT K_TT^{-1} K_TF`.
    pub matrix: DMatrix<f64>,
    /// `R_F - K_FT K_TT^{-1} R_T`.
    pub rhs: DVector<f64>,
    /// `-K_TT^{-1} K_TF`.
    pub recovery_matrix: DMatrix<f64>,
    /// `-K_TT^{-1} R_T`.
    pub recovery_vector: DVector<f64>,
}

impl Condensed {
    /// Cell increment for the face increment `du_f`.
    pub fn recover(&self, du_f: &DVector<f64>) -> DVector<f64> {
        &self.recovery_vector + &self.recovery_matrix * du_f
    }
}

/// Static condensation of `K u = R` with the first `n_cell` unknowns
/// eliminated. For a Newton step the right-hand side is `-residual`.
pub fn condense(k: &DMatrix<f64>, rhs: &DVector<f64>, n_cell: usize) -> Result<Condensed> {
    let n = k.nrows();
    let nf = n - n_cell;
    let ktt = k.view((0, 0), (n_cell, n_cell)).into_owned();
    let ktf = k.view((0, n_cell), (n_cell, nf));
    let kft = k.view((n_cell, 0), (nf, n_cell));
    let lu = ktt.lu();
    let x = lu
        .solve(&ktf.into_owned())
        .ok_or_else(|| HhoError::Factorization("singular cell block in static condensation".into()))?;
    let y = lu
        .solve(&rhs.rows(0, n_cell).into_owned())
        .ok_or_else(|| HhoError::Factorization("singular cell block in static condensation".into()))?;
    let matrix = k.view((n_cell, n_cell), (nf, nf)) - kft * &x;
    let rhs_f = rhs.rows(n_cell, nf) - kft * &y;
    Ok(Condensed {
        matrix,
        rhs: rhs_f,
        recovery_matrix: -x,
        recovery_vector: y,
    })
}

/// Global system over the non-Dirichlet face unknowns.
#[derive(Debug, Clone)]
pub struct CondensedSystem {
    pub n: usize,
    pub triplets: Vec<Triplet<usize, usize, f64>>,
    pub rhs: Vec<f64>,
    pub recovery: Vec<Condensed>,
}

impl CondensedSystem {
    pub fn sparse(&self) -> Result<SparseColMat<usize, f64>> {
        SparseColMat::try_new_from_triplets(self.n, self.n, &self.triplets)
            .map_err(|e| HhoError::LinearSolve(format!("sparse assembly: {e:?}")))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for t in &self.triplets {
            m[(t.row, t.col)] += t.val;
        }
        m
    }
}

/// Factorization reused across solves with the same sparsity pattern.
#[derive(Default)]
pub struct LinearSolver {
    symbolic: Mutex<Option<(usize, usize, SymbolicLlt<usize>)>>,
}

impl std::fmt::Debug for LinearSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("LinearSolver")
    }
}

impl Clone for LinearSolver {
    fn clone(&self) -> Self {
        LinearSolver::default()
    }
}

fn residual_norm(a: &SparseColMat<usize, f64>, x: &[f64], b: &[f64]) -> f64 {
    let mut r: Vec<f64> = b.to_vec();
    for j in 0..a.ncols() {
        let rows = a.symbolic().row_idx_of_col_raw(j);
        let vals = a.val_of_col(j);
        for (&i, &v) in rows.iter().zip(vals) {
            r[i] -= v * x[j];
        }
    }
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl LinearSolver {
    /// Sparse Cholesky, falling back to LU when the matrix is not positive
    /// definite. The solution is checked against the system residual.
    pub fn solve(&self, a: &SparseColMat<usize, f64>, b: &[f64]) -> Result<Vec<f64>> {
        let n = a.nrows();
        if n == 0 {
            return Ok(Vec::new());
        }
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
        let mut solved = false;
        {
            let mut guard = self.symbolic.lock().unwrap_or_else(|p| p.into_inner());
            let nnz = a.compute_nnz();
            let reuse = matches!(&*guard, Some((m, z, _)) if *m == n && *z == nnz);
            if !reuse {
                *guard = SymbolicLlt::try_new(a.symbolic(), Side::Lower)
                    .ok()
                    .map(|s| (n, nnz, s));
            }
            if let Some((_, _, sym)) = guard.as_ref() {
                if let Ok(llt) = faer::sparse::linalg::solvers::Llt::try_new_with_symbolic(
                    sym.clone(),
                    a.as_ref(),
                    Side::Lower,
                ) {
                    llt.solve_in_place(x.as_mut());
                    solved = true;
                }
            }
        }
        let mut xv: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        let ok = |xv: &[f64]| {
            xv.iter().all(|v| v.is_finite()) && residual_norm(a, xv, b) <= 1e-8 * bnorm.max(f64::MIN_POSITIVE)
        };
        if !solved || !ok(&xv) {
            let lu = a
                .sp_lu()
                .map_err(|e| HhoError::LinearSolve(format!("sparse LU failed: {e:?}")))?;
            let mut x = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
            lu.solve_in_place(x.as_mut());
            xv = (0..n).map(|i| x[(i, 0)]).collect();
            if !xv.iter().all(|v| v.is_finite()) {
                return Err(HhoError::LinearSolve("singular global matrix".into()));
            }
            // one step of iterative refinement
            let r = {
                let mut r = b.to_vec();
                for j in 0..n {
                    let rows = a.symbolic().row_idx_of_col_raw(j);
                    for (&i, &v) in rows.iter().zip(a.val_of_col(j)) {
                        r[i] -= v * xv[j];
                    }
                }
                r
            };
            let mut dx = Mat::<f64>::from_fn(n, 1, |i, _| r[i]);
            lu.solve_in_place(dx.as_mut());
            for i in 0..n {
                xv[i] += dx[(i, 0)];
            }
            if !ok(&xv) {
                return Err(HhoError::LinearSolve(format!(
                    "linear residual {:.3e} exceeds tolerance (rhs norm {:.3e})",
                    residual_norm(a, &xv, b),
                    bnorm
                )));
            }
        }
        Ok(xv)
    }
}

/// Discrete displacement: cell and face coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub cells: Vec<DVector<f64>>,
    pub faces: Vec<DVector<f64>>,
    /// Load factor the state is in equilibrium with.
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub load: f64,
    pub iterations: usize,
    /// Residual norms, starting with the initial (effective) residual.
    pub residuals: Vec<f64>,
    /// Convergence threshold `max(abs_tol, rel_tol * residuals[0])`.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SolveLog {
    pub steps: Vec<StepLog>,
    pub bisections: usize,
}

impl SolveLog {
    pub fn total_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.iterations).sum()
    }
}

/// Assembled Newton system at a state, plus the effective residual norm.
struct Linearization {
    system: CondensedSystem,
    residual_norm: f64,
    /// Dirichlet increments applied in this step (per face).
    lift: Vec<Option<DVector<f64>>>,
}

/// Newton–Raphson solver over a fixed discretization and problem.
#[derive(Debug, Clone)]
pub struct Solver {
    pub disc: Discretization,
    pub problem: Problem,
    pub newton: NewtonConfig,
    /// Global index of each non-Dirichlet face.
    pub free_index: Vec<Option<usize>>,
    pub n_free_faces: usize,
    /// Face coefficients of the Dirichlet data at unit load.
    pub dirichlet_values: Vec<Option<DVector<f64>>>,
    /// Per-cell load vectors at unit load.
    pub external: Vec<DVector<f64>>,
    /// Quadrature order used for loads and boundary data.
    pub data_order: usize,
    linear: LinearSolver,
}

impl Solver {
    pub fn new(disc: Discretization, problem: Problem, newton: NewtonConfig) -> Result<Self> {
        newton.validate()?;
        problem.law.validate()?;
        problem.check_tags(&disc.mesh)?;
        let mesh = &disc.mesh;
        let layout = disc.layout;
        let data_order = (2 * disc.method.k + 4).min(crate::quadrature::MAX_ORDER);

        let mut free_index = vec![None; mesh.num_faces()];
        let mut n_free = 0;
        for (f, slot) in free_index.iter_mut().enumerate() {
            let dirichlet = mesh
                .boundary_tags
                .get(&f)
                .is_some_and(|t| problem.dirichlet.contains_key(t));
            if !dirichlet {
                *slot = Some(n_free);
                n_free += 1;
            }
        }

        let mut dirichlet_values = vec![None; mesh.num_faces()];
        for (&f, tag) in &mesh.boundary_tags {
            if let Some(ud) = problem.dirichlet.get(tag) {
                let owner = mesh.face_cells[f].0;
                let ctx = &disc.cells[owner];
                let i = ctx.faces.iter().position(|fd| fd.face == f).expect("face of owner");
                dirichlet_values[f] = Some(ctx.project_face(i, |x| ud(x), data_order)?);
            }
        }

        let external = disc
            .cells
            .par_iter()
            .map(|ctx| {
                let mut v = DVector::zeros(layout.total());
                let (nk, nf) = (layout.n_cell_scalar, layout.n_face_scalar);
                for (x, w) in ctx.cell_rule(data_order)?.iter() {
                    let f = (problem.body_force)(x);
                    let phi = ctx.basis_k.eval(x);
                    for c in 0..layout.dim {
                        for m in 0..nk {
                            v[c * nk + m] += w * f[c] * phi[m];
                        }
                    }
                }
                for (i, fd) in ctx.faces.iter().enumerate() {
                    let Some(tag) = mesh.boundary_tags.get(&fd.face) else { continue };
                    let Some(tn) = problem.neumann.get(tag) else { continue };
                    for (x, w) in ctx.face_rule(i, data_order)?.iter() {
                        let t = tn(x);
                        let psi = fd.basis.eval(x);
                        for c in 0..layout.dim {
                            for m in 0..nf {
                                v[layout.face_offset(i) + c * nf + m] += w * t[c] * psi[m];
                            }
                        }
                    }
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Solver {
            disc,
            problem,
            newton,
            free_index,
            n_free_faces: n_free,
            dirichlet_values,
            external,
            data_order,
            linear: LinearSolver::default(),
        })
    }

    pub fn layout(&self) -> DofLayout {
        self.disc.layout
    }

    pub fn beta(&self) -> f64 {
        if self.disc.method.is_stabilized() {
            self.disc.method.beta0 * self.problem.law.mu()
        } else {
            0.0
        }
    }

    /// Zero displacement at zero load.
    pub fn zero_state(&self) -> State {
        let l = self.layout();
        State {
            cells: vec![DVector::zeros(l.n_cell()); self.disc.num_cells()],
            faces: vec![DVector::zeros(l.n_face()); self.disc.mesh.num_faces()],
            load: 0.0,
        }
    }

    /// State holding the reduction of `u` (cell and face L2 projections),
    /// marked as in equilibrium with load factor `load`. Dirichlet faces take
    /// their prescribed values at that load.
    pub fn interpolate(&self, u: &(dyn Fn(&Point) -> Point + Sync), load: f64) -> Result<State> {
        let order = 2 * self.disc.method.k + 4;
        let mesh = &self.disc.mesh;
        let cells = self
            .disc
            .cells
            .par_iter()
            .map(|ctx| ctx.project_cell(u, order))
            .collect::<Result<Vec<_>>>()?;
        let faces = (0..mesh.num_faces())
            .into_par_iter()
            .map(|f| match &self.dirichlet_values[f] {
                Some(v) => Ok(v * load),
                None => {
                    let ctx = &self.disc.cells[mesh.face_cells[f].0];
                    let i = ctx.faces.iter().position(|fd| fd.face == f).expect("face of owner");
                    ctx.project_face(i, u, order)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(State { cells, faces, load })
    }

    /// Number of global (condensed) unknowns.
    pub fn n_global(&self) -> usize {
        self.n_free_faces * self.layout().n_face()
    }

    pub fn gather(&self, state: &State, cell: usize) -> DVector<f64> {
        let l = self.layout();
        let mut v = DVector::zeros(l.total());
        v.rows_mut(0, l.n_cell()).copy_from(&state.cells[cell]);
        for (i, &(f, _)) in self.disc.mesh.cell_faces[cell].iter().enumerate() {
            v.rows_mut(l.face_offset(i), l.n_face()).copy_from(&state.faces[f]);
        }
        v
    }

    pub fn external_at(&self, cell: usize, load: f64) -> DVector<f64> {
        &self.external[cell] * load
    }

    /// Local residual of every cell at the given state and load factor.
    pub fn local_residuals(&self, state: &State, load: f64) -> Result<Vec<DVector<f64>>> {
        let beta = self.beta();
        (0..self.disc.num_cells())
            .into_par_iter()
            .map(|c| {
                local_residual(
                    &self.disc.quad[c],
                    &self.disc.ops[c],
                    &self.problem.law,
                    beta,
                    &self.gather(state, c),
                    &self.external_at(c, load),
                )
            })
            .collect()
    }

    /// Discrete energy of `state` at load factor `load`.
    pub fn energy(&self, state: &State, load: f64) -> Result<f64> {
        let beta = self.beta();
        (0..self.disc.num_cells())
            .into_par_iter()
            .map(|c| {
                local_energy(
                    &self.disc.quad[c],
                    &self.disc.ops[c],
                    &self.problem.law,
                    beta,
                    &self.gather(state, c),
                    &self.external_at(c, load),
                )
            })
            .sum()
    }

    /// Euclidean norm of the residual over all cell unknowns and all
    /// non-Dirichlet face unknowns.
    pub fn residual_norm(&self, state: &State, load: f64) -> Result<f64> {
        let res = self.local_residuals(state, load)?;
        Ok(self.assembled_norm(&res))
    }

    fn assembled_norm(&self, res: &[DVector<f64>]) -> f64 {
        let l = self.layout();
        let mut faces = vec![0.0; self.n_global()];
        let mut sum = 0.0;
        for (c, r) in res.iter().enumerate() {
            sum += r.rows(0, l.n_cell()).norm_squared();
            for (i, &(f, _)) in self.disc.mesh.cell_faces[c].iter().enumerate() {
                if let Some(g) = self.free_index[f] {
                    for a in 0..l.n_face() {
                        faces[g * l.n_face() + a] += r[l.face_offset(i) + a];
                    }
                }
            }
        }
        (sum + faces.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Dirichlet increments taking the Dirichlet faces of `state` to `load`.
    fn dirichlet_lift(&self, state: &State, load: f64) -> Vec<Option<DVector<f64>>> {
        self.dirichlet_values
            .iter()
            .enumerate()
            .map(|(f, v)| v.as_ref().map(|v| v * load - &state.faces[f]))
            .collect()
    }

    fn linearize(&self, state: &State, load: f64, lift: Vec<Option<DVector<f64>>>) -> Result<Linearization> {
        let l = self.layout();
        let beta = self.beta();
        let mesh = &self.disc.mesh;
        let per_cell: Vec<(Condensed, DVector<f64>)> = (0..self.disc.num_cells())
            .into_par_iter()
            .map(|c| {
                let dofs = self.gather(state, c);
                let (mut r, k) = local_residual_tangent(
                    &self.disc.quad[c],
                    &self.disc.ops[c],
                    &self.problem.law,
                    beta,
                    &dofs,
                    &self.external_at(c, load),
                    true,
                )?;
                let k = k.expect("tangent requested");
                // move the prescribed Dirichlet increments to the right-hand side
                let mut du = DVector::zeros(l.total());
                let mut any = false;
                for (i, &(f, _)) in mesh.cell_faces[c].iter().enumerate() {
                    if let Some(d) = &lift[f] {
                        du.rows_mut(l.face_offset(i), l.n_face()).copy_from(d);
                        any = true;
                    }
                }
                if any {
                    r.gemv(1.0, &k, &du, 1.0);
                }
                let cond = condense(&k, &(-&r), l.n_cell())?;
                Ok((cond, r))
            })
            .collect::<Result<_>>()?;

        let nfl = l.n_face();
        let mut rhs = vec![0.0; self.n_global()];
        let mut triplets = Vec::with_capacity(per_cell.len() * l.n_faces_total() * l.n_faces_total());
        let mut recovery = Vec::with_capacity(per_cell.len());
        let mut residuals = Vec::with_capacity(per_cell.len());
        for (c, (cond, r)) in per_cell.into_iter().enumerate() {
            let faces = &mesh.cell_faces[c];
            for (i, &(fi, _)) in faces.iter().enumerate() {
                let Some(gi) = self.free_index[fi] else { continue };
                for a in 0..nfl {
                    rhs[gi * nfl + a] += cond.rhs[i * nfl + a];
                }
                for (j, &(fj, _)) in faces.iter().enumerate() {
                    let Some(gj) = self.free_index[fj] else { continue };
                    for b in 0..nfl {
                        for a in 0..nfl {
                            triplets.push(Triplet::new(
                                gi * nfl + a,
                                gj * nfl + b,
                                cond.matrix[(i * nfl + a, j * nfl + b)],
                            ));
                        }
                    }
                }
            }
            recovery.push(cond);
            residuals.push(r);
        }
        let residual_norm = self.assembled_norm(&residuals);
        Ok(Linearization {
            system: CondensedSystem {
                n: self.n_global(),
                triplets,
                rhs,
                recovery,
            },
            residual_norm,
            lift,
        })
    }

    /// Condensed Newton system at `state` for the load factor `load`, with the
    /// Dirichlet faces moved to their values at `load`.
    pub fn assemble(&self, state: &State, load: f64) -> Result<CondensedSystem> {
        let lift = self.dirichlet_lift(state, load);
        Ok(self.linearize(state, load, lift)?.system)
    }

    pub fn solve_linear(&self, system: &CondensedSystem) -> Result<Vec<f64>> {
        self.linear.solve(&system.sparse()?, &system.rhs)
    }

    /// Cell and face increments from a solved face system.
    fn recover(
        &self,
        system: &CondensedSystem,
        lift: &[Option<DVector<f64>>],
        x: &[f64],
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let l = self.layout();
        let nfl = l.n_face();
        let mesh = &self.disc.mesh;
        let dfaces: Vec<DVector<f64>> = (0..mesh.num_faces())
            .map(|f| match (self.free_index[f], &lift[f]) {
                (Some(g), _) => DVector::from_column_slice(&x[g * nfl..(g + 1) * nfl]),
                (None, Some(d)) => d.clone(),
                (None, None) => DVector::zeros(nfl),
            })
            .collect();
        let dcells = (0..self.disc.num_cells())
            .map(|c| {
                // Dirichlet increments were folded into the local right-hand side.
                let mut du_f = DVector::zeros(l.n_faces_total());
                for (i, &(f, _)) in mesh.cell_faces[c].iter().enumerate() {
                    if self.free_index[f].is_some() {
                        du_f.rows_mut(i * nfl, nfl).copy_from(&dfaces[f]);
                    }
                }
                system.recovery[c].recover(&du_f)
            })
            .collect();
        (dcells, dfaces)
    }

    /// One condensed Newton increment at `state` towards load factor `load`.
    pub fn condensed_increment(
        &self,
        state: &State,
        load: f64,
    ) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        let lift = self.dirichlet_lift(state, load);
        let lin = self.linearize(state, load, lift)?;
        let x = self.solve_linear(&lin.system)?;
        Ok(self.recover(&lin.system, &lin.lift, &x))
    }

    /// The same increment computed without static condensation, by a dense
    /// solve over all cell and non-Dirichlet face unknowns.
    pub fn monolithic_increment(
        &self,
        state: &State,
        load: f64,
    ) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        let l = self.layout();
        let mesh = &self.disc.mesh;
        let nc = self.disc.num_cells();
        let n_cell_total = nc * l.n_cell();
        let n = n_cell_total + self.n_global();
        let lift = self.dirichlet_lift(state, load);
        let beta = self.beta();
        let mut k_glob = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for c in 0..nc {
            let dofs = self.gather(state, c);
            let (r, k) = local_residual_tangent(
                &self.disc.quad[c],
                &self.disc.ops[c],
                &self.problem.law,
                beta,
                &dofs,
                &self.external_at(c, load),
                true,
            )?;
            let k = k.expect("tangent requested");
            // local index -> Some(global) or the Dirichlet increment value
            let mut map: Vec<Option<usize>> = vec![None; l.total()];
            let mut du = DVector::zeros(l.total());
            for a in 0..l.n_cell() {
                map[a] = Some(c * l.n_cell() + a);
            }
            for (i, &(f, _)) in mesh.cell_faces[c].iter().enumerate() {
                for a in 0..l.n_face() {
                    let loc = l.face_offset(i) + a;
                    match self.free_index[f] {
                        Some(g) => map[loc] = Some(n_cell_total + g * l.n_face() + a),
                        None => {
                            if let Some(d) = &lift[f] {
                                du[loc] = d[a];
                            }
                        }
                    }
                }
            }
            let r_eff = r + &k * &du;
            for a in 0..l.total() {
                let Some(ga) = map[a] else { continue };
                rhs[ga] -= r_eff[a];
                for b in 0..l.total() {
                    if let Some(gb) = map[b] {
                        k_glob[(ga, gb)] += k[(a, b)];
                    }
                }
            }
        }
        let x = k_glob
            .lu()
            .solve(&rhs)
            .ok_or_else(|| HhoError::LinearSolve("singular monolithic matrix".into()))?;
        let dcells = (0..nc)
            .map(|c| x.rows(c * l.n_cell(), l.n_cell()).into_owned())
            .collect();
        let dfaces = (0..mesh.num_faces())
            .map(|f| match (self.free_index[f], &lift[f]) {
                (Some(g), _) => x.rows(n_cell_total + g * l.n_face(), l.n_face()).into_owned(),
                (None, Some(d)) => d.clone(),
                (None, None) => DVector::zeros(l.n_face()),
            })
            .collect();
        Ok((dcells, dfaces))
    }

    /// Newton iterations at a fixed load factor, starting from `state`.
    pub fn newton(&self, state: &mut State, load: f64) -> Result<StepLog> {
        let cfg = self.newton;
        let mut residuals = Vec::new();
        let mut tol = f64::INFINITY;
        let mut lift = self.dirichlet_lift(state, load);
        for it in 0..=cfg.max_iters {
            let lin = self.linearize(state, load, lift)?;
            if !lin.residual_norm.is_finite() {
                return Err(HhoError::NonConvergence("non-finite residual".into()));
            }
            residuals.push(lin.residual_norm);
            if it == 0 {
                tol = cfg.abs_tol.max(cfg.rel_tol * lin.residual_norm);
            }
            if lin.residual_norm <= tol {
                state.load = load;
                return Ok(StepLog {
                    load,
                    iterations: it,
                    residuals,
                    tolerance: tol,
                });
            }
            if it == cfg.max_iters {
                break;
            }
            let x = self.solve_linear(&lin.system)?;
            let (dc, df) = self.recover(&lin.system, &lin.lift, &x);
            *state = self.line_search(state, load, &dc, &df, lin.residual_norm, it == 0)?;
            lift = vec![None; self.disc.mesh.num_faces()];
        }
        Err(HhoError::NonConvergence(format!(
            "load factor {load}: residual {:.3e} above tolerance {tol:.3e} after {} iterations",
            residuals.last().copied().unwrap_or(f64::NAN),
            cfg.max_iters
        )))
    }

    /// Moves `state` along a Newton increment. Dirichlet faces always take
    /// their full target values; the free unknowns take `damping / 2^t` of
    /// the increment for the first `t` that lowers the energy or the
    /// residual norm. Energy descent keeps the iteration stable far from the
    /// solution, where the Newton basin is small (large `lambda / mu`).
    fn line_search(
        &self,
        state: &State,
        load: f64,
        dc: &[DVector<f64>],
        df: &[DVector<f64>],
        residual: f64,
        lifted: bool,
    ) -> Result<State> {
        let cfg = self.newton;
        let trial = |alpha: f64| {
            let mut s = state.clone();
            for (u, d) in s.cells.iter_mut().zip(dc) {
                u.axpy(alpha, d, 1.0);
            }
            for (f, (u, d)) in s.faces.iter_mut().zip(df).enumerate() {
                u.axpy(if self.free_index[f].is_some() { alpha } else { 1.0 }, d, 1.0);
            }
            s
        };
        if cfg.line_search == 0 {
            return Ok(trial(cfg.damping));
        }
        let admissible = |v: Result<f64>| match v {
            Ok(r) if r.is_finite() => Ok(r),
            Ok(_) | Err(HhoError::NonPositiveJacobian { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        };
        // after a Dirichlet lift the reference is the lifted state itself
        let start = trial(0.0);
        let e0 = admissible(self.energy(&start, load))?;
        let r0 = if lifted {
            admissible(self.residual_norm(&start, load))?
        } else {
            residual
        };
        let mut alpha = cfg.damping;
        for t in 0..=cfg.line_search {
            let s = trial(alpha);
            let e = admissible(self.energy(&s, load))?;
            if e.is_finite() {
                let slack = 1e-12 * e0.abs().max(1.0);
                if e < e0 - slack
                    || admissible(self.residual_norm(&s, load))? < (1.0 - 1e-4 * alpha) * r0
                    || t == cfg.line_search
                {
                    return Ok(s);
                }
            }
            alpha *= 0.5;
        }
        Err(HhoError::NonConvergence(format!(
            "load factor {load}: no admissible step along the Newton direction"
        )))
    }

    /// Incremental loading from `state.load` to 1 with bisection on failure.
    pub fn solve(&self, state: &mut State) -> Result<SolveLog> {
        let cfg = self.newton;
        let nominal = 1.0 / cfg.load_steps as f64;
        let mut step = nominal;
        let mut log = SolveLog::default();
        let mut depth = 0;
        // A state that is already in equilibrium at full load needs no steps.
        if state.load >= 1.0 {
            log.steps.push(self.newton(state, 1.0)?);
            return Ok(log);
        }
        while state.load < 1.0 - 1e-14 {
            let target = (state.load + step).min(1.0);
            let saved = state.clone();
            match self.newton(state, target) {
                Ok(s) => {
                    log.steps.push(s);
                    if depth > 0 {
                        depth -= 1;
                        step = (step * 2.0).min(nominal);
                    }
                }
                Err(e @ (HhoError::NonPositiveJacobian { .. }
                | HhoError::NonConvergence(_)
                | HhoError::LinearSolve(_)
                | HhoError::Factorization(_))) => {
                    *state = saved;
                    depth += 1;
                    log.bisections += 1;
                    if depth > cfg.step_bisection_limit {
                        return Err(HhoError::NonConvergence(format!(
                            "load step from {} failed after {} bisections: {e}",
                            state.load, cfg.step_bisection_limit
                        )));
                    }
                    step *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(log)
    }
}

/// `lambda_max / lambda_min` of a symmetric matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
    max / min
}
