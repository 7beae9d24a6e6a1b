//! Local HHO machinery on one cell: unknown layout, L2 projections and
//! reductions, gradient and displacement reconstructions, stabilization and
//! the local strain semi-norm.
//!
//! Local unknowns are stored as one flat vector. The cell block comes first
//! (component-major: `c * Nk + m`), then one block per face in the cell's face
//! order (`c * Nf + m` inside the block).

use nalgebra::{DMatrix, DVector};

use crate::basis::{
    mass_matrix, mixed_mass_matrix, poly_dim, CellBasis, FaceBasis, GradSpace, ScaledMonomials,
    TensorBasis,
};
use crate::error::{HhoError, Result};
use crate::mesh::{CellGeometry, Mesh, Point};
use crate::quadrature::{physical_rule, QuadratureRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofLayout {
    pub dim: usize,
    pub k: usize,
    /// Scalar cell basis size `dim P^k_d`.
    pub n_cell_scalar: usize,
    /// Scalar face basis size `dim P^k_{d-1}`.
    pub n_face_scalar: usize,
    pub n_faces: usize,
}

impl DofLayout {
    pub fn new(dim: usize, k: usize) -> Self {
        DofLayout {
            dim,
            k,
            n_cell_scalar: poly_dim(dim, k),
            n_face_scalar: poly_dim(dim - 1, k),
            n_faces: dim + 1,
        }
    }

    pub fn n_cell(&self) -> usize {
        self.dim * self.n_cell_scalar
    }

    pub fn n_face(&self) -> usize {
        self.dim * self.n_face_scalar
    }

    pub fn n_faces_total(&self) -> usize {
        self.n_faces * self.n_face()
    }

    pub fn total(&self) -> usize {
        self.n_cell() + self.n_faces_total()
    }

    pub fn face_offset(&self, i: usize) -> usize {
        self.n_cell() + i * self.n_face()
    }

    /// Number of scalar unknowns of one component.
    fn scalar_total(&self) -> usize {
        self.n_cell_scalar + self.n_faces * self.n_face_scalar
    }

    /// Vector column of scalar local index `s` for component `c`.
    fn vector_col(&self, c: usize, s: usize) -> usize {
        if s < self.n_cell_scalar {
            c * self.n_cell_scalar + s
        } else {
            let r = s - self.n_cell_scalar;
            let (face, m) = (r / self.n_face_scalar, r % self.n_face_scalar);
            self.face_offset(face) + c * self.n_face_scalar + m
        }
    }
}

/// Structured view of a flat local unknown vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDofs {
    pub cell_coeffs: DVector<f64>,
    pub face_coeffs: Vec<DVector<f64>>,
}

impl LocalDofs {
    pub fn from_vector(layout: &DofLayout, v: &DVector<f64>) -> Self {
        LocalDofs {
            cell_coeffs: v.rows(0, layout.n_cell()).into_owned(),
            face_coeffs: (0..layout.n_faces)
                .map(|i| v.rows(layout.face_offset(i), layout.n_face()).into_owned())
                .collect(),
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.cell_coeffs.len() + self.face_coeffs.iter().map(|f| f.len()).sum::<usize>();
        let mut v = DVector::zeros(n);
        v.rows_mut(0, self.cell_coeffs.len()).copy_from(&self.cell_coeffs);
        let mut off = self.cell_coeffs.len();
        for f in &self.face_coeffs {
            v.rows_mut(off, f.len()).copy_from(f);
            off += f.len();
        }
        v
    }
}

/// Per-face data seen from one cell.
#[derive(Debug, Clone)]
pub struct FaceData {
    pub face: usize,
    pub vertices: Vec<Point>,
    /// Outward with respect to the cell.
    pub normal: Point,
    pub diameter: f64,
    pub measure: f64,
    /// Shared by both cells adjacent to the face.
    pub basis: FaceBasis,
    pub mass: DMatrix<f64>,
}

/// Geometry, bases and scalar mass matrices of one cell.
#[derive(Debug, Clone)]
pub struct CellContext {
    pub cell: usize,
    pub geom: CellGeometry,
    pub layout: DofLayout,
    pub basis_k: CellBasis,
    pub basis_k1: CellBasis,
    pub mass_k: DMatrix<f64>,
    pub faces: Vec<FaceData>,
}

fn spd_solve(m: &DMatrix<f64>, b: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| HhoError::Factorization(format!("{what} mass matrix is not positive definite")))?;
    Ok(chol.solve(&b))
}

impl CellContext {
    pub fn new(mesh: &Mesh, cell: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(HhoError::Config("polynomial degree must be at least 1".into()));
        }
        let geom = mesh.cell_geometry(cell).map_err(|e| match e {
            HhoError::DegenerateCell { measure, threshold, .. } => HhoError::DegenerateCell {
                cell,
                measure,
                threshold,
            },
            other => other,
        })?;
        let layout = DofLayout::new(mesh.dim, k);
        let basis_k = ScaledMonomials::cell(&geom, k);
        let basis_k1 = ScaledMonomials::cell(&geom, k + 1);
        let mass_k = mass_matrix(&basis_k, &physical_rule(&geom.vertices, 2 * k)?);
        let mut faces = Vec::with_capacity(geom.faces.len());
        for cf in &geom.faces {
            let fg = mesh.face_geometry(cf.face);
            let basis = ScaledMonomials::face(&fg, k);
            let mass = mass_matrix(&basis, &physical_rule(&fg.vertices, 2 * k)?);
            faces.push(FaceData {
                face: cf.face,
                vertices: fg.vertices,
                normal: cf.normal,
                diameter: cf.diameter,
                measure: cf.measure,
                basis,
                mass,
            });
        }
        Ok(CellContext {
            cell,
            geom,
            layout,
            basis_k,
            basis_k1,
            mass_k,
            faces,
        })
    }

    pub fn dim(&self) -> usize {
        self.geom.dim
    }

    pub fn k(&self) -> usize {
        self.layout.k
    }

    pub fn cell_rule(&self, order: usize) -> Result<QuadratureRule> {
        physical_rule(&self.geom.vertices, order)
    }

    pub fn face_rule(&self, i: usize, order: usize) -> Result<QuadratureRule> {
        physical_rule(&self.faces[i].vertices, order)
    }

    /// L2 projection of a vector field onto `P^k(T; R^d)`.
    pub fn project_cell<F: Fn(&Point) -> Point>(&self, v: F, order: usize) -> Result<DVector<f64>> {
        let (d, nk) = (self.dim(), self.layout.n_cell_scalar);
        let rule = self.cell_rule(order)?;
        let mut rhs = DMatrix::zeros(nk, d);
        for (x, w) in rule.iter() {
            let phi = self.basis_k.eval(x);
            let val = v(x);
            for c in 0..d {
                for m in 0..nk {
                    rhs[(m, c)] += w * val[c] * phi[m];
                }
            }
        }
        let sol = spd_solve(&self.mass_k, rhs, "cell")?;
        Ok(DVector::from_iterator(nk * d, sol.iter().copied()))
    }

    /// L2 projection of a vector field onto `P^k(F; R^d)` for local face `i`.
    pub fn project_face<F: Fn(&Point) -> Point>(
        &self,
        i: usize,
        v: F,
        order: usize,
    ) -> Result<DVector<f64>> {
        let (d, nf) = (self.dim(), self.layout.n_face_scalar);
        let face = &self.faces[i];
        let rule = self.face_rule(i, order)?;
        let mut rhs = DMatrix::zeros(nf, d);
        for (x, w) in rule.iter() {
            let psi = face.basis.eval(x);
            let val = v(x);
            for c in 0..d {
                for m in 0..nf {
                    rhs[(m, c)] += w * val[c] * psi[m];
                }
            }
        }
        let sol = spd_solve(&face.mass, rhs, "face")?;
        Ok(DVector::from_iterator(nf * d, sol.iter().copied()))
    }

    /// Reduction `I(v) = (Pi_T v, Pi_dT v)`.
    pub fn reduction<F: Fn(&Point) -> Point>(&self, v: F, order: usize) -> Result<DVector<f64>> {
        let l = &self.layout;
        let mut out = DVector::zeros(l.total());
        out.rows_mut(0, l.n_cell()).copy_from(&self.project_cell(&v, order)?);
        for i in 0..l.n_faces {
            out.rows_mut(l.face_offset(i), l.n_face())
                .copy_from(&self.project_face(i, &v, order)?);
        }
        Ok(out)
    }

    /// Modified reduction: the face blocks are the traces of the cell projection.
    pub fn reduction_tilde<F: Fn(&Point) -> Point>(&self, v: F, order: usize) -> Result<DVector<f64>> {
        let cell = self.project_cell(v, order)?;
        self.lift_cell(&cell)
    }

    /// Local unknowns `(v_T, v_T|dT)` for cell coefficients `v_T`.
    pub fn lift_cell(&self, cell: &DVector<f64>) -> Result<DVector<f64>> {
        let l = &self.layout;
        let (nk, nf) = (l.n_cell_scalar, l.n_face_scalar);
        let mut out = DVector::zeros(l.total());
        out.rows_mut(0, l.n_cell()).copy_from(cell);
        for i in 0..l.n_faces {
            let tr = self.trace_k(i)?;
            for c in 0..l.dim {
                let t = &tr * cell.rows(c * nk, nk);
                out.rows_mut(l.face_offset(i) + c * nf, nf).copy_from(&t);
            }
        }
        Ok(out)
    }

    /// Scalar trace operator `P^k(T) -> P^k(F_i)` (exact, as traces of
    /// degree-k polynomials on affine faces are degree-k polynomials).
    pub fn trace_k(&self, i: usize) -> Result<DMatrix<f64>> {
        let face = &self.faces[i];
        let rule = self.face_rule(i, 2 * self.k())?;
        spd_solve(&face.mass, mixed_mass_matrix(&face.basis, &self.basis_k, &rule), "face")
    }

    /// Scalar L2 projection of the trace of `P^{k+1}(T)` onto `P^k(F_i)`.
    fn trace_k1(&self, i: usize) -> Result<DMatrix<f64>> {
        let face = &self.faces[i];
        let rule = self.face_rule(i, 2 * self.k() + 1)?;
        spd_solve(&face.mass, mixed_mass_matrix(&face.basis, &self.basis_k1, &rule), "face")
    }

    /// Evaluates the cell polynomial (vector-valued) at `x`.
    pub fn eval_cell(&self, cell: &[f64], x: &Point) -> Point {
        let nk = self.layout.n_cell_scalar;
        let phi = self.basis_k.eval(x);
        let mut out = [0.0; 3];
        for c in 0..self.dim() {
            out[c] = (0..nk).map(|m| cell[c * nk + m] * phi[m]).sum();
        }
        out
    }

    /// Evaluates the gradient of the cell polynomial at `x`, row-major.
    pub fn eval_cell_grad(&self, cell: &[f64], x: &Point) -> [f64; 9] {
        let (d, nk) = (self.dim(), self.layout.n_cell_scalar);
        let grads = self.basis_k.eval_grad(x);
        let mut out = [0.0; 9];
        for c in 0..d {
            for m in 0..nk {
                for j in 0..d {
                    out[c * d + j] += cell[c * nk + m] * grads[m][j];
                }
            }
        }
        out
    }

    /// Evaluates the face polynomial (vector-valued) of local face `i` at `x`.
    pub fn eval_face(&self, i: usize, face: &[f64], x: &Point) -> Point {
        let nf = self.layout.n_face_scalar;
        let psi = self.faces[i].basis.eval(x);
        let mut out = [0.0; 3];
        for c in 0..self.dim() {
            out[c] = (0..nf).map(|m| face[c * nf + m] * psi[m]).sum();
        }
        out
    }

    /// Maps a scalar operator (rows per component, columns over the scalar
    /// layout) to the vector layout. `row_of(c, r)` gives the output row.
    fn expand_scalar<R: Fn(usize, usize) -> usize>(
        &self,
        scalar: &DMatrix<f64>,
        n_rows: usize,
        row_of: R,
    ) -> DMatrix<f64> {
        let l = &self.layout;
        let mut out = DMatrix::zeros(n_rows, l.total());
        for c in 0..l.dim {
            for s in 0..l.scalar_total() {
                let col = l.vector_col(c, s);
                for r in 0..scalar.nrows() {
                    out[(row_of(c, r), col)] = scalar[(r, s)];
                }
            }
        }
        out
    }

    /// Scalar selector of the cell block or of face `i`.
    fn selector(&self, face: Option<usize>) -> DMatrix<f64> {
        let l = &self.layout;
        let (n, off) = match face {
            None => (l.n_cell_scalar, 0),
            Some(i) => (l.n_face_scalar, l.n_cell_scalar + i * l.n_face_scalar),
        };
        let mut s = DMatrix::zeros(n, l.scalar_total());
        for a in 0..n {
            s[(a, off + a)] = 1.0;
        }
        s
    }
}

/// Gradient reconstruction into `space`: returns the tensor basis, `G`
/// (`size x ndofs`) and the tensor mass matrix.
pub fn build_gradient_reconstruction(
    ctx: &CellContext,
    space: GradSpace,
) -> Result<(TensorBasis, DMatrix<f64>, DMatrix<f64>)> {
    let (d, k) = (ctx.dim(), ctx.k());
    let l = &ctx.layout;
    let (nk, nf) = (l.n_cell_scalar, l.n_face_scalar);
    let tensor = TensorBasis::new(&ctx.geom, k, space);
    let nr = tensor.size();
    let p = space.degree(k);
    let mass = tensor.mass_matrix(&ctx.cell_rule(2 * p)?);

    let mut b = DMatrix::zeros(nr, l.total());
    let mut e = DMatrix::zeros(d * d, nr);
    let mut vals = vec![0.0; nk];
    let mut grads = vec![[0.0; 3]; nk];
    for (x, w) in ctx.cell_rule(p + k)?.iter() {
        tensor.eval_into(x, &mut e);
        ctx.basis_k.eval_with_grad(x, &mut vals, &mut grads);
        let gm = DMatrix::from_fn(d, nk, |j, m| grads[m][j]);
        for c in 0..d {
            b.columns_mut(c * nk, nk)
                .gemm_tr(w, &e.rows(c * d, d), &gm, 1.0);
        }
    }
    for (i, face) in ctx.faces.iter().enumerate() {
        for (x, w) in ctx.face_rule(i, p + k)?.iter() {
            tensor.eval_into(x, &mut e);
            let phi = DVector::from_vec(ctx.basis_k.eval(x));
            let psi = DVector::from_vec(face.basis.eval(x));
            for c in 0..d {
                // (tau n)_c for every basis tensor
                let mut tn = DVector::zeros(nr);
                for j in 0..d {
                    tn.axpy(face.normal[j], &e.row(c * d + j).transpose(), 1.0);
                }
                b.columns_mut(c * nk, nk).ger(-w, &tn, &phi, 1.0);
                b.columns_mut(l.face_offset(i) + c * nf, nf).ger(w, &tn, &psi, 1.0);
            }
        }
    }
    let g = spd_solve(&mass, b, "tensor")?;
    Ok((tensor, g, mass))
}

/// Displacement reconstruction `D^{k+1}`: maps local unknowns to
/// `P^{k+1}(T; R^d)` coefficients (component-major).
pub fn build_displacement_reconstruction(ctx: &CellContext) -> Result<DMatrix<f64>> {
    let k = ctx.k();
    let l = &ctx.layout;
    let (nk, nf) = (l.n_cell_scalar, l.n_face_scalar);
    let n1 = ctx.basis_k1.exps.len();
    let mut stiff = DMatrix::zeros(n1, n1);
    let mut rhs = DMatrix::zeros(n1, l.scalar_total());
    let mut v1 = vec![0.0; n1];
    let mut g1 = vec![[0.0; 3]; n1];
    let mut vk = vec![0.0; nk];
    let mut gk = vec![[0.0; 3]; nk];
    let dot = |a: &Point, b: &Point| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    for (x, w) in ctx.cell_rule(2 * k)?.iter() {
        ctx.basis_k1.eval_with_grad(x, &mut v1, &mut g1);
        ctx.basis_k.eval_with_grad(x, &mut vk, &mut gk);
        for a in 0..n1 {
            for b in 0..n1 {
                stiff[(a, b)] += w * dot(&g1[a], &g1[b]);
            }
            for m in 0..nk {
                rhs[(a, m)] += w * dot(&g1[a], &gk[m]);
            }
        }
    }
    for (i, face) in ctx.faces.iter().enumerate() {
        for (x, w) in ctx.face_rule(i, 2 * k + 1)?.iter() {
            ctx.basis_k1.eval_with_grad(x, &mut v1, &mut g1);
            let phi = ctx.basis_k.eval(x);
            let psi = face.basis.eval(x);
            for a in 0..n1 {
                let dn = w * dot(&g1[a], &face.normal);
                for m in 0..nk {
                    rhs[(a, m)] -= dn * phi[m];
                }
                for m in 0..nf {
                    rhs[(a, nk + i * nf + m)] += dn * psi[m];
                }
            }
        }
    }
    // The constant mode has a zero row in both the stiffness and the
    // right-hand side; it is replaced by the mean-value constraint.
    let mean_rule = ctx.cell_rule(k + 1)?;
    for a in 0..n1 {
        stiff[(0, a)] = 0.0;
    }
    for s in 0..l.scalar_total() {
        rhs[(0, s)] = 0.0;
    }
    for (x, w) in mean_rule.iter() {
        ctx.basis_k1.eval_with_grad(x, &mut v1, &mut g1);
        ctx.basis_k.eval_with_grad(x, &mut vk, &mut gk);
        for a in 0..n1 {
            stiff[(0, a)] += w * v1[a];
        }
        for m in 0..nk {
            rhs[(0, m)] += w * vk[m];
        }
    }
    let ds = stiff
        .lu()
        .solve(&rhs)
        .ok_or_else(|| HhoError::Factorization("displacement reconstruction system is singular".into()))?;
    Ok(ctx.expand_scalar(&ds, ctx.dim() * n1, |c, r| c * n1 + r))
}

/// Stabilization `S` (rows stacked like the face unknowns) and the Gram matrix
/// `S^T Gamma S` with `Gamma` the `h_F^{-1}`-weighted face mass.
pub fn build_stabilization(
    ctx: &CellContext,
    dmat: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = ctx.k();
    let l = &ctx.layout;
    let nf = l.n_face_scalar;
    let n1 = ctx.basis_k1.exps.len();
    // Scalar D: the component-0 block.
    let mut ds = DMatrix::zeros(n1, l.scalar_total());
    for s in 0..l.scalar_total() {
        let col = l.vector_col(0, s);
        for r in 0..n1 {
            ds[(r, s)] = dmat[(r, col)];
        }
    }
    let rule = ctx.cell_rule(2 * k + 1)?;
    let mk1 = mixed_mass_matrix(&ctx.basis_k, &ctx.basis_k1, &rule);
    let proj_k = spd_solve(&ctx.mass_k, mk1, "cell")?;
    let sel_t = ctx.selector(None);
    let cell_part = &proj_k * &ds - &sel_t;

    let mut stacked = DMatrix::zeros(l.n_faces * nf, l.scalar_total());
    let mut gram_s = DMatrix::zeros(l.scalar_total(), l.scalar_total());
    for i in 0..l.n_faces {
        let si = ctx.selector(Some(i)) - ctx.trace_k1(i)? * &ds + ctx.trace_k(i)? * &cell_part;
        let gamma = &ctx.faces[i].mass / ctx.faces[i].diameter;
        gram_s += si.transpose() * gamma * &si;
        stacked.rows_mut(i * nf, nf).copy_from(&si);
    }
    let s = ctx.expand_scalar(&stacked, l.n_faces_total(), |c, r| {
        let (i, m) = (r / nf, r % nf);
        i * l.n_face() + c * nf + m
    });
    let gram = expand_gram(ctx, &gram_s);
    Ok((s, gram))
}

fn expand_gram(ctx: &CellContext, gram_s: &DMatrix<f64>) -> DMatrix<f64> {
    let l = &ctx.layout;
    let mut g = DMatrix::zeros(l.total(), l.total());
    for c in 0..l.dim {
        for a in 0..l.scalar_total() {
            let ra = l.vector_col(c, a);
            for b in 0..l.scalar_total() {
                g[(ra, l.vector_col(c, b))] = gram_s[(a, b)];
            }
        }
    }
    g
}

/// Gram matrix of the local strain semi-norm
/// `|v|^2 = ||grad v_T||^2_T + sum_F h_F^{-1} ||v_T - v_F||^2_F`.
pub fn seminorm_gram(ctx: &CellContext) -> Result<DMatrix<f64>> {
    let k = ctx.k();
    let l = &ctx.layout;
    let nk = l.n_cell_scalar;
    let mut gram_s = DMatrix::zeros(l.scalar_total(), l.scalar_total());
    let mut vk = vec![0.0; nk];
    let mut gk = vec![[0.0; 3]; nk];
    for (x, w) in ctx.cell_rule(2 * k)?.iter() {
        ctx.basis_k.eval_with_grad(x, &mut vk, &mut gk);
        for a in 0..nk {
            for b in 0..nk {
                gram_s[(a, b)] += w * (gk[a][0] * gk[b][0] + gk[a][1] * gk[b][1] + gk[a][2] * gk[b][2]);
            }
        }
    }
    let sel_t = ctx.selector(None);
    for i in 0..l.n_faces {
        let j = ctx.trace_k(i)? * &sel_t - ctx.selector(Some(i));
        gram_s += j.transpose() * (&ctx.faces[i].mass / ctx.faces[i].diameter) * &j;
    }
    Ok(expand_gram(ctx, &gram_s))
}

/// All cached local operators of one cell.
#[derive(Debug, Clone)]
pub struct LocalOperators {
    pub tensor: TensorBasis,
    /// Gradient reconstruction, `tensor.size() x ndofs`.
    pub g: DMatrix<f64>,
    pub mass_r: DMatrix<f64>,
    /// Displacement reconstruction, `d * dim P^{k+1} x ndofs`.
    pub d: DMatrix<f64>,
    /// Stabilization, `n_faces * n_face x ndofs`; empty when not built.
    pub s: DMatrix<f64>,
    /// `S^T Gamma S`; empty when not built.
    pub stab_gram: DMatrix<f64>,
}

impl LocalOperators {
    /// Builds `G` into `space`; `D` and `S` only when `with_stabilization`.
    pub fn build(ctx: &CellContext, space: GradSpace, with_stabilization: bool) -> Result<Self> {
        let (tensor, g, mass_r) = build_gradient_reconstruction(ctx, space)?;
        let (d, s, stab_gram) = if with_stabilization {
            let d = build_displacement_reconstruction(ctx)?;
            let (s, gram) = build_stabilization(ctx, &d)?;
            (d, s, gram)
        } else {
            (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0), DMatrix::zeros(0, 0))
        };
        Ok(LocalOperators {
            tensor,
            g,
            mass_r,
            d,
            s,
            stab_gram,
        })
    }

    pub fn has_stabilization(&self) -> bool {
        self.stab_gram.nrows() > 0
    }

    /// Reconstructed gradient at `x`, row-major `d x d`.
    pub fn gradient_at(&self, x: &Point, dofs: &DVector<f64>) -> DVector<f64> {
        self.tensor.eval(x) * (&self.g * dofs)
    }

    /// `E(x_q) G` at every point of the rule.
    pub fn gradient_values(&self, rule: &QuadratureRule) -> Vec<DMatrix<f64>> {
        rule.points.iter().map(|x| self.tensor.eval(x) * &self.g).collect()
    }

    /// L2 projection of a row-major tensor field onto the reconstruction space.
    pub fn project_tensor<F: Fn(&Point) -> [f64; 9]>(
        &self,
        rule: &QuadratureRule,
        field: F,
    ) -> Result<DVector<f64>> {
        let d = self.tensor.dim;
        let mut rhs = DVector::zeros(self.tensor.size());
        for (x, w) in rule.iter() {
            let e = self.tensor.eval(x);
            let val = field(x);
            let v = DVector::from_fn(d * d, |r, _| val[r]);
            rhs.gemv_tr(w, &e, &v, 1.0);
        }
        let chol = self
            .mass_r
            .clone()
            .cholesky()
            .ok_or_else(|| HhoError::Factorization("tensor mass matrix".into()))?;
        Ok(chol.solve(&rhs))
    }

    /// Evaluates a tensor-space element at `x`, row-major.
    pub fn eval_tensor(&self, coeffs: &DVector<f64>, x: &Point) -> DVector<f64> {
        self.tensor.eval(x) * coeffs
    }

    /// Evaluates the displacement reconstruction at `x`.
    pub fn d_values_at(&self, ctx: &CellContext, dofs: &DVector<f64>, x: &Point) -> Point {
        let n1 = ctx.basis_k1.exps.len();
        let coeffs = &self.d * dofs;
        let phi = ctx.basis_k1.eval(x);
        let mut out = [0.0; 3];
        for c in 0..ctx.dim() {
            out[c] = (0..n1).map(|m| coeffs[c * n1 + m] * phi[m]).sum();
        }
        out
    }
}
