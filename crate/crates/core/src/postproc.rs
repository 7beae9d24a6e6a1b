//! Error norms, equilibrated tractions, derived fields and file export.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{Solver, State};
use crate::error::{HhoError, Result};
use crate::hho::CellContext;
use crate::material::unflatten;
use crate::mesh::{Mesh, Point};

pub type ExactDisplacement = dyn Fn(&Point) -> Point + Send + Sync;
pub type ExactGradient = dyn Fn(&Point) -> [f64; 9] + Send + Sync;

/// Error norms of a discrete solution against an exact one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    /// `||Pi_T u - u_T||`, the cell unknowns against the L2 projection of the
    /// exact displacement. This is the displacement error reported in tables.
    pub u: f64,
    /// `||u - u_T||`, limited to order `k + 1` by the projection error.
    pub u_full: f64,
    /// `||grad u - G(u_h)||`.
    pub gradient: f64,
}

/// Error norms over the mesh with quadrature of order `order` (at least
/// `2(k+2)` is recommended).
pub fn compute_errors(
    solver: &Solver,
    state: &State,
    u: &ExactDisplacement,
    grad: &ExactGradient,
    order: usize,
) -> Result<ErrorNorms> {
    let d = solver.disc.mesh.dim;
    let parts: Vec<[f64; 3]> = (0..solver.disc.num_cells())
        .into_par_iter()
        .map(|c| {
            let ctx = &solver.disc.cells[c];
            let ops = &solver.disc.ops[c];
            let dofs = solver.gather(state, c);
            let gcoef = &ops.g * &dofs;
            let proj = ctx.project_cell(u, order)?;
            let mut acc = [0.0; 3];
            for (x, w) in ctx.cell_rule(order)?.iter() {
                let uh = ctx.eval_cell(state.cells[c].as_slice(), x);
                let up = ctx.eval_cell(proj.as_slice(), x);
                let ue = u(x);
                acc[0] += w * (0..d).map(|l| (up[l] - uh[l]).powi(2)).sum::<f64>();
                acc[1] += w * (0..d).map(|l| (ue[l] - uh[l]).powi(2)).sum::<f64>();
                let gh = ops.eval_tensor(&gcoef, x);
                let ge = grad(x);
                acc[2] += w * (0..d * d).map(|r| (ge[(r / d) * 3 + r % d] - gh[r]).powi(2)).sum::<f64>();
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let sum = parts.iter().fold([0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
    Ok(ErrorNorms {
        u: sum[0].sqrt(),
        u_full: sum[1].sqrt(),
        gradient: sum[2].sqrt(),
    })
}

/// `log(e1 / e2) / log(h1 / h2)`.
pub fn observed_order(e1: f64, e2: f64, h1: f64, h2: f64) -> f64 {
    (e1 / e2).ln() / (h1 / h2).ln()
}

/// One line of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub err_u: f64,
    pub order_u: Option<f64>,
    #[serde(rename = "err_G")]
    pub err_g: f64,
    #[serde(rename = "order_G")]
    pub order_g: Option<f64>,
    pub newton_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rows: Vec<ConvergenceRow>,
}

impl ErrorReport {
    /// Appends a level; orders are filled from the previous row.
    pub fn push(&mut self, h: f64, err_u: f64, err_g: f64, newton_iters: usize) {
        let (order_u, order_g) = match self.rows.last() {
            Some(p) => (
                Some(observed_order(p.err_u, err_u, p.h, h)),
                Some(observed_order(p.err_g, err_g, p.h, h)),
            ),
            None => (None, None),
        };
        self.rows.push(ConvergenceRow {
            h,
            err_u,
            order_u,
            err_g,
            order_g,
            newton_iters,
        });
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        let io = |e: csv::Error| HhoError::Io {
            path: "<csv>".into(),
            source: std::io::Error::other(e.to_string()),
        };
        wr.write_record(["h", "err_u", "order_u", "err_G", "order_G", "newton_iters"])
            .map_err(io)?;
        for row in &self.rows {
            wr.serialize(row).map_err(io)?;
        }
        wr.flush().map_err(|source| HhoError::Io {
            path: "<csv>".into(),
            source,
        })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| HhoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(file)
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let rows = rd
            .deserialize()
            .collect::<std::result::Result<Vec<ConvergenceRow>, _>>()
            .map_err(|e| HhoError::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
        Ok(ErrorReport { rows })
    }

    pub fn print_table(&self) {
        println!(
            "{:>10} {:>12} {:>8} {:>12} {:>8} {:>7}",
            "h", "err_u", "order", "err_G", "order", "newton"
        );
        let fmt = |o: Option<f64>| o.filter(|v| v.is_finite()).map_or("-".to_string(), |v| format!("{v:.2}"));
        let err = |v: f64| if v.is_finite() { format!("{v:.4e}") } else { "-".to_string() };
        for r in &self.rows {
            println!(
                "{:>10.4e} {:>12} {:>8} {:>12} {:>8} {:>7}",
                r.h,
                err(r.err_u),
                fmt(r.order_u),
                err(r.err_g),
                fmt(r.order_g),
                r.newton_iters
            );
        }
    }
}

/// Discrete tractions `T_{T,F}` as face coefficients, per cell and local face.
#[derive(Debug, Clone, PartialEq)]
pub struct TractionField {
    pub cells: Vec<Vec<DVector<f64>>>,
}

/// Vector face mass for local face `i`.
fn face_mass(ctx: &CellContext, i: usize) -> DMatrix<f64> {
    let d = ctx.dim();
    let m = &ctx.faces[i].mass;
    let nf = m.nrows();
    let mut out = DMatrix::zeros(d * nf, d * nf);
    for c in 0..d {
        out.view_mut((c * nf, c * nf), (nf, nf)).copy_from(m);
    }
    out
}

/// `Pi^R_T(P)`, the projection of the stress at the solution onto the
/// gradient reconstruction space, using the residual quadrature.
pub fn stress_projection(solver: &Solver, state: &State, cell: usize) -> Result<DVector<f64>> {
    let ops = &solver.disc.ops[cell];
    let quad = &solver.disc.quad[cell];
    let d = solver.disc.mesh.dim;
    let dofs = solver.gather(state, cell);
    let mut rhs = DVector::zeros(ops.tensor.size());
    for (x, w) in quad.rule.iter() {
        let grad = ops.gradient_at(x, &dofs);
        let p = solver.problem.law.evaluate(&unflatten(grad.as_slice(), d))?.p;
        let pv = DVector::from_fn(d * d, |r, _| p[(r / d, r % d)]);
        rhs.gemv_tr(w, &ops.tensor.eval(x), &pv, 1.0);
    }
    ops.mass_r
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| HhoError::Factorization("tensor mass matrix".into()))
}

/// Equilibrated tractions. For the unstabilized method
/// `T = Pi_F(Pi^R_T(P) n)`; the stabilized method adds `beta` times the face
/// part of the stabilization, lifted by the inverse face mass.
pub fn compute_tractions(solver: &Solver, state: &State) -> Result<TractionField> {
    let beta = solver.beta();
    let l = solver.layout();
    let k = l.k;
    let p = solver.disc.method.grad_space.degree(k);
    let cells = (0..solver.disc.num_cells())
        .into_par_iter()
        .map(|c| {
            let ctx = &solver.disc.cells[c];
            let ops = &solver.disc.ops[c];
            let sigma = stress_projection(solver, state, c)?;
            let dofs = solver.gather(state, c);
            let stab = (beta > 0.0 && ops.has_stabilization()).then(|| &ops.stab_gram * &dofs);
            let nf = l.n_face_scalar;
            (0..l.n_faces)
                .map(|i| {
                    let face = &ctx.faces[i];
                    let mut rhs = DVector::zeros(l.n_face());
                    for (x, w) in ctx.face_rule(i, p + k)?.iter() {
                        let t = ops.eval_tensor(&sigma, x);
                        let psi = face.basis.eval(x);
                        for a in 0..l.dim {
                            let tn: f64 = (0..l.dim).map(|j| t[a * l.dim + j] * face.normal[j]).sum();
                            for m in 0..nf {
                                rhs[a * nf + m] += w * tn * psi[m];
                            }
                        }
                    }
                    if let Some(s) = &stab {
                        rhs.axpy(beta, &s.rows(l.face_offset(i), l.n_face()), 1.0);
                    }
                    face_mass(ctx, i)
                        .cholesky()
                        .map(|ch| ch.solve(&rhs))
                        .ok_or_else(|| HhoError::Factorization("face mass matrix".into()))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TractionField { cells })
}

/// Equilibrium defects of a traction field, measured in the face-tested norm
/// `|M_F t|` (the norm in which the Newton residual is measured).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TractionDefects {
    /// Max over interior faces of `|M_F (T_{T-,F} + T_{T+,F})|`.
    pub interior: f64,
    /// Max over Neumann faces of `|M_F (T_{T,F} - Pi_F T_n)|`.
    pub neumann: f64,
}

pub fn traction_defects(solver: &Solver, state: &State, tractions: &TractionField) -> Result<TractionDefects> {
    let mesh = &solver.disc.mesh;
    let load = state.load;
    let mut out = TractionDefects::default();
    for f in 0..mesh.num_faces() {
        let (owner, neighbor) = mesh.face_cells[f];
        let local = |c: usize| mesh.cell_faces[c].iter().position(|&(g, _)| g == f).expect("incident face");
        let io = local(owner);
        let ctx = &solver.disc.cells[owner];
        let m = face_mass(ctx, io);
        match neighbor {
            Some(nb) => {
                let sum = &tractions.cells[owner][io] + &tractions.cells[nb][local(nb)];
                out.interior = out.interior.max((&m * sum).norm());
            }
            None => {
                let Some(tn) = mesh.boundary_tags.get(&f).and_then(|t| solver.problem.neumann.get(t)) else {
                    continue;
                };
                let target = ctx.project_face(io, |x| tn(x), solver.data_order)? * load;
                let diff = &tractions.cells[owner][io] - target;
                out.neumann = out.neumann.max((&m * diff).norm());
            }
        }
    }
    Ok(out)
}

/// Max over cells of the local virtual-work defect
/// `(Pi^R P, grad dv)_T - sum_F (T_{T,F}, dv)_F - (f, dv)_T` tested with every
/// cell basis function, in the Euclidean norm of the tested vector.
pub fn check_local_virtual_work(solver: &Solver, state: &State, tractions: &TractionField) -> Result<f64> {
    let l = solver.layout();
    let k = l.k;
    let p = solver.disc.method.grad_space.degree(k);
    let (nk, nf, d) = (l.n_cell_scalar, l.n_face_scalar, l.dim);
    let defects = (0..solver.disc.num_cells())
        .into_par_iter()
        .map(|c| {
            let ctx = &solver.disc.cells[c];
            let ops = &solver.disc.ops[c];
            let sigma = stress_projection(solver, state, c)?;
            let mut v = -solver.external_at(c, state.load).rows(0, l.n_cell()).into_owned();
            let mut vals = vec![0.0; nk];
            let mut grads = vec![[0.0; 3]; nk];
            for (x, w) in ctx.cell_rule(p + k)?.iter() {
                let t = ops.eval_tensor(&sigma, x);
                ctx.basis_k.eval_with_grad(x, &mut vals, &mut grads);
                for a in 0..d {
                    for m in 0..nk {
                        let s: f64 = (0..d).map(|j| t[a * d + j] * grads[m][j]).sum();
                        v[a * nk + m] += w * s;
                    }
                }
            }
            for i in 0..l.n_faces {
                let face = &ctx.faces[i];
                let tr = &tractions.cells[c][i];
                for (x, w) in ctx.face_rule(i, 2 * k)?.iter() {
                    let phi = ctx.basis_k.eval(x);
                    let psi = face.basis.eval(x);
                    for a in 0..d {
                        let ta: f64 = (0..nf).map(|m| tr[a * nf + m] * psi[m]).sum();
                        for m in 0..nk {
                            v[a * nk + m] -= w * ta * phi[m];
                        }
                    }
                }
            }
            Ok(v.norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(defects.into_iter().fold(0.0, f64::max))
}

/// Per-cell derived quantities at the barycenter.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedFields {
    pub jacobian: Vec<f64>,
    pub von_mises: Vec<f64>,
    /// Vertex displacements (cell polynomials averaged over incident cells).
    pub displacement: Vec<Point>,
}

/// Von Mises stress of a Cauchy stress (deviator taken in the mesh dimension).
pub fn von_mises(sigma: &DMatrix<f64>) -> f64 {
    let d = sigma.nrows();
    let dev = sigma - DMatrix::identity(d, d) * (sigma.trace() / d as f64);
    (1.5 * dev.norm_squared()).sqrt()
}

pub fn derived_fields(solver: &Solver, state: &State) -> Result<DerivedFields> {
    let mesh = &solver.disc.mesh;
    let d = mesh.dim;
    let mut jacobian = Vec::with_capacity(mesh.num_cells());
    let mut vm = Vec::with_capacity(mesh.num_cells());
    let mut disp = vec![[0.0; 3]; mesh.vertices.len()];
    let mut count = vec![0usize; mesh.vertices.len()];
    for c in 0..mesh.num_cells() {
        let ctx = &solver.disc.cells[c];
        let dofs = solver.gather(state, c);
        let grad = solver.disc.ops[c].gradient_at(&ctx.geom.barycenter, &dofs);
        let gu = unflatten(grad.as_slice(), d);
        let f = &gu + DMatrix::identity(d, d);
        let j = f.determinant();
        jacobian.push(j);
        let sigma_vm = if solver.problem.law.is_linear() {
            solver.problem.law.evaluate(&gu).map(|r| von_mises(&r.p)).unwrap_or(f64::NAN)
        } else {
            match solver.problem.law.evaluate(&gu) {
                Ok(r) if j > 0.0 => von_mises(&(&r.p * f.transpose() / j)),
                _ => f64::NAN,
            }
        };
        vm.push(sigma_vm);
        for &v in &mesh.cells[c] {
            let u = ctx.eval_cell(state.cells[c].as_slice(), &mesh.vertices[v]);
            for l in 0..3 {
                disp[v][l] += u[l];
            }
            count[v] += 1;
        }
    }
    for (u, &n) in disp.iter_mut().zip(&count) {
        if n > 0 {
            for x in u.iter_mut() {
                *x /= n as f64;
            }
        }
    }
    Ok(DerivedFields {
        jacobian,
        von_mises: vm,
        displacement: disp,
    })
}

/// Legacy ASCII VTK unstructured grid with the vertex displacement and the
/// cell scalars `J` and `von_mises`.
pub fn write_vtk<W: Write>(mesh: &Mesh, fields: &DerivedFields, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "hho solution")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.vertices.len())?;
    for p in &mesh.vertices {
        writeln!(w, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
    }
    let nv = mesh.dim + 1;
    writeln!(w, "CELLS {} {}", mesh.num_cells(), mesh.num_cells() * (nv + 1))?;
    for c in &mesh.cells {
        let ids: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{} {}", nv, ids.join(" "))?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.num_cells())?;
    let kind = if mesh.dim == 3 { 10 } else { 5 };
    for _ in &mesh.cells {
        writeln!(w, "{kind}")?;
    }
    writeln!(w, "POINT_DATA {}", mesh.vertices.len())?;
    writeln!(w, "VECTORS displacement double")?;
    for u in &fields.displacement {
        writeln!(w, "{:.17e} {:.17e} {:.17e}", u[0], u[1], u[2])?;
    }
    writeln!(w, "CELL_DATA {}", mesh.num_cells())?;
    for (name, data) in [("J", &fields.jacobian), ("von_mises", &fields.von_mises)] {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in data {
            writeln!(w, "{v:.17e}")?;
        }
    }
    Ok(())
}

pub fn save_vtk(mesh: &Mesh, fields: &DerivedFields, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| HhoError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    write_vtk(mesh, fields, &mut w).map_err(io)?;
    w.flush().map_err(io)
}

/// Contents of a file written by [`write_vtk`].
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub points: Vec<Point>,
    pub cells: Vec<Vec<usize>>,
    pub displacement: Vec<Point>,
    pub jacobian: Vec<f64>,
    pub von_mises: Vec<f64>,
}

/// Reads back the subset of legacy VTK produced by [`write_vtk`].
pub fn read_vtk(text: &str) -> Result<VtkData> {
    // the first two lines are free text
    let toks: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .skip(2)
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i, t)))
        .collect();
    let mut pos = 0;
    let mut next = |what: &str| -> Result<(usize, &str)> {
        let t = toks.get(pos).copied().ok_or_else(|| HhoError::Parse {
            line: 0,
            message: format!("unexpected end of file, expected {what}"),
        })?;
        pos += 1;
        Ok(t)
    };
    fn num<T: std::str::FromStr>(t: (usize, &str)) -> Result<T> {
        t.1.parse().map_err(|_| HhoError::Parse {
            line: t.0 + 1,
            message: format!("bad number '{}'", t.1),
        })
    }
    let mut data = VtkData {
        points: Vec::new(),
        cells: Vec::new(),
        displacement: Vec::new(),
        jacobian: Vec::new(),
        von_mises: Vec::new(),
    };
    let mut scalar_target: Option<String> = None;
    let mut n_cell_data = 0;
    while let Ok(tok) = next("keyword") {
        match tok.1 {
            "POINTS" => {
                let n: usize = num(next("count")?)?;
                next("type")?;
                for _ in 0..n {
                    data.points.push([num(next("x")?)?, num(next("y")?)?, num(next("z")?)?]);
                }
            }
            "CELLS" => {
                let n: usize = num(next("count")?)?;
                next("size")?;
                for _ in 0..n {
                    let m: usize = num(next("cell size")?)?;
                    let mut c = Vec::with_capacity(m);
                    for _ in 0..m {
                        c.push(num(next("vertex")?)?);
                    }
                    data.cells.push(c);
                }
            }
            "CELL_TYPES" => {
                let n: usize = num(next("count")?)?;
                for _ in 0..n {
                    next("type")?;
                }
            }
            "VECTORS" => {
                next("name")?;
                next("type")?;
                for _ in 0..data.points.len() {
                    data.displacement.push([num(next("ux")?)?, num(next("uy")?)?, num(next("uz")?)?]);
                }
            }
            "CELL_DATA" => n_cell_data = num(next("count")?)?,
            "POINT_DATA" => {
                next("count")?;
            }
            "SCALARS" => {
                scalar_target = Some(next("name")?.1.to_string());
                next("type")?;
                next("components")?;
            }
            "LOOKUP_TABLE" => {
                next("table")?;
                let mut vals = Vec::with_capacity(n_cell_data);
                for _ in 0..n_cell_data {
                    vals.push(num(next("value")?)?);
                }
                match scalar_target.take().as_deref() {
                    Some("J") => data.jacobian = vals,
                    Some("von_mises") => data.von_mises = vals,
                    _ => {}
                }
            }
            _ => {}
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observed_order_synthetic() {
        // first-order data: halving h halves the error
        let mut rep = ErrorReport::default();
        rep.push(0.2, 0.1, 0.3, 3);
        rep.push(0.1, 0.05, 0.15, 3);
        assert!(rep.rows[0].order_u.is_none());
        assert!((rep.rows[1].order_u.unwrap() - 1.0).abs() < 1e-12);
        assert!((rep.rows[1].order_g.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut buf = Vec::new();
        ErrorReport::default().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "h,err_u,order_u,err_G,order_G,newton_iters\n");
    }

    #[test]
    fn report_round_trip() {
        let mut rep = ErrorReport::default();
        rep.push(0.5, 1e-2, 1e-1, 4);
        rep.push(0.25, 1.25e-3, 2.5e-2, 4);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[1].contains(",,"), "order columns empty on the first row: {}", lines[1]);
        assert_eq!(ErrorReport::read_csv(&text).unwrap(), rep);
    }

    #[test]
    fn von_mises_of_pressure_is_zero() {
        let s = DMatrix::<f64>::identity(3, 3) * -7.5;
        assert!(von_mises(&s).abs() < 1e-12);
        let mut shear = DMatrix::<f64>::zeros(3, 3);
        shear[(0, 1)] = 1.0;
        shear[(1, 0)] = 1.0;
        assert!((von_mises(&shear) - 3f64.sqrt()).abs() < 1e-14);
    }
}
