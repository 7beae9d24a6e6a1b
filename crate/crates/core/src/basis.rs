//! Scaled translated monomial bases on cells and faces, and tensor-valued
//! bases for the gradient reconstruction spaces.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::mesh::{dot, sub, CellGeometry, FaceGeometry, Point};
use crate::quadrature::QuadratureRule;

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// `dim P^k_d`.
pub fn poly_dim(d: usize, k: usize) -> usize {
    binomial(k + d, d)
}

/// Dimension of the homogeneous polynomials of degree `k` in `d` variables.
pub fn homogeneous_dim(d: usize, k: usize) -> usize {
    if d == 0 {
        return usize::from(k == 0);
    }
    binomial(k + d - 1, d - 1)
}

/// Multi-indices of total degree `<= k` in graded order; within a degree,
/// exponents are sorted lexicographically descending (x^2, xy, xz, y^2, ...).
pub fn exponents(d: usize, k: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity(poly_dim(d, k));
    for s in 0..=k {
        match d {
            0 => {
                if s == 0 {
                    out.push([0, 0, 0]);
                }
            }
            1 => out.push([s, 0, 0]),
            2 => {
                for a in (0..=s).rev() {
                    out.push([a, s - a, 0]);
                }
            }
            3 => {
                for a in (0..=s).rev() {
                    for b in (0..=s - a).rev() {
                        out.push([a, b, s - a - b]);
                    }
                }
            }
            _ => unreachable!("at most three variables"),
        }
    }
    out
}

/// Scalar monomials `xi^alpha` in the local coordinates
/// `xi_i = (x - origin) . axes_i`, where the axes already carry the `2/h` scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMonomials {
    pub degree: usize,
    pub exps: Vec<[usize; 3]>,
    pub origin: Point,
    pub axes: Vec<Point>,
}

/// Cell basis: centred at the barycenter, scaled by `h_T / 2`.
pub type CellBasis = ScaledMonomials;
/// Face basis: polynomials of the `d-1` tangential face coordinates.
pub type FaceBasis = ScaledMonomials;

/// Common interface of scalar bases used by [`mass_matrix`].
pub trait Basis {
    fn size(&self) -> usize;
    fn eval_into(&self, x: &Point, out: &mut [f64]);
}

impl ScaledMonomials {
    pub fn cell(geom: &CellGeometry, degree: usize) -> Self {
        let s = 2.0 / geom.diameter;
        let axes = (0..geom.dim)
            .map(|j| {
                let mut e = [0.0; 3];
                e[j] = s;
                e
            })
            .collect();
        ScaledMonomials {
            degree,
            exps: exponents(geom.dim, degree),
            origin: geom.barycenter,
            axes,
        }
    }

    pub fn face(geom: &FaceGeometry, degree: usize) -> Self {
        let s = 2.0 / geom.diameter;
        let axes: Vec<Point> = geom
            .tangents
            .iter()
            .map(|t| [t[0] * s, t[1] * s, t[2] * s])
            .collect();
        ScaledMonomials {
            degree,
            exps: exponents(axes.len(), degree),
            origin: geom.barycenter,
            axes,
        }
    }

    pub fn local_dim(&self) -> usize {
        self.axes.len()
    }

    pub fn local_coords(&self, x: &Point) -> [f64; 3] {
        let r = sub(x, &self.origin);
        let mut xi = [0.0; 3];
        for (i, a) in self.axes.iter().enumerate() {
            xi[i] = dot(&r, a);
        }
        xi
    }

    fn powers(&self, xi: &[f64; 3]) -> [[f64; 16]; 3] {
        let mut pw = [[0.0; 16]; 3];
        for l in 0..3 {
            pw[l][0] = 1.0;
            for e in 1..=self.degree {
                pw[l][e] = pw[l][e - 1] * xi[l];
            }
        }
        pw
    }

    pub fn eval(&self, x: &Point) -> Vec<f64> {
        let mut out = vec![0.0; self.exps.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// Values and physical gradients.
    pub fn eval_with_grad(&self, x: &Point, vals: &mut [f64], grads: &mut [Point]) {
        let xi = self.local_coords(x);
        let pw = self.powers(&xi);
        for (m, e) in self.exps.iter().enumerate() {
            vals[m] = pw[0][e[0]] * pw[1][e[1]] * pw[2][e[2]];
            let mut g = [0.0; 3];
            for (i, axis) in self.axes.iter().enumerate() {
                if e[i] == 0 {
                    continue;
                }
                let mut d = e[i] as f64;
                for l in 0..3 {
                    d *= if l == i { pw[l][e[l] - 1] } else { pw[l][e[l]] };
                }
                for l in 0..3 {
                    g[l] += d * axis[l];
                }
            }
            grads[m] = g;
        }
    }

    pub fn eval_grad(&self, x: &Point) -> Vec<Point> {
        let n = self.exps.len();
        let mut vals = vec![0.0; n];
        let mut grads = vec![[0.0; 3]; n];
        self.eval_with_grad(x, &mut vals, &mut grads);
        grads
    }
}

impl Basis for ScaledMonomials {
    fn size(&self) -> usize {
        self.exps.len()
    }

    fn eval_into(&self, x: &Point, out: &mut [f64]) {
        let xi = self.local_coords(x);
        let pw = self.powers(&xi);
        for (m, e) in self.exps.iter().enumerate() {
            out[m] = pw[0][e[0]] * pw[1][e[1]] * pw[2][e[2]];
        }
    }
}

/// Gram matrix of a scalar basis under the rule.
pub fn mass_matrix<B: Basis + ?Sized>(basis: &B, rule: &QuadratureRule) -> DMatrix<f64> {
    let n = basis.size();
    let mut m = DMatrix::zeros(n, n);
    let mut v = vec![0.0; n];
    for (x, w) in rule.iter() {
        basis.eval_into(x, &mut v);
        for j in 0..n {
            let wj = w * v[j];
            for i in j..n {
                m[(i, j)] += wj * v[i];
            }
        }
    }
    m.fill_upper_triangle_with_lower_triangle();
    m
}

/// Gram matrix between two scalar bases, `M[a, b] = (rows_a, cols_b)`.
pub fn mixed_mass_matrix<A: Basis + ?Sized, B: Basis + ?Sized>(
    rows: &A,
    cols: &B,
    rule: &QuadratureRule,
) -> DMatrix<f64> {
    let (nr, nc) = (rows.size(), cols.size());
    let mut m = DMatrix::zeros(nr, nc);
    let mut a = vec![0.0; nr];
    let mut b = vec![0.0; nc];
    for (x, w) in rule.iter() {
        rows.eval_into(x, &mut a);
        cols.eval_into(x, &mut b);
        for j in 0..nc {
            let wj = w * b[j];
            for i in 0..nr {
                m[(i, j)] += wj * a[i];
            }
        }
    }
    m
}

/// Target space of the gradient reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradSpace {
    /// `P^k(T; R^{dxd})`, used by the stabilized method.
    PkTensor,
    /// `P^{k+1}(T; R^{dxd})`.
    Pkp1Tensor,
    /// Row-wise Raviart–Thomas–Nedelec space of degree `k`.
    Rtn,
}

impl GradSpace {
    pub fn name(self) -> &'static str {
        match self {
            GradSpace::PkTensor => "pk",
            GradSpace::Pkp1Tensor => "pkp1",
            GradSpace::Rtn => "rtn",
        }
    }

    /// Highest polynomial degree of the space built on top of `P^k`.
    pub fn degree(self, k: usize) -> usize {
        match self {
            GradSpace::PkTensor => k,
            GradSpace::Pkp1Tensor | GradSpace::Rtn => k + 1,
        }
    }
}

impl std::str::FromStr for GradSpace {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pk" | "pk_tensor" => Ok(GradSpace::PkTensor),
            "pkp1" | "pkp1_tensor" => Ok(GradSpace::Pkp1Tensor),
            "rtn" | "rtn_k" => Ok(GradSpace::Rtn),
            other => Err(format!("unknown gradient space '{other}' (pk, pkp1, rtn)")),
        }
    }
}

/// Tensor-valued basis. Functions are ordered as the `d^2` polynomial blocks
/// `e_i (x) e_j phi_m` (index `(i d + j) Np + m`), followed for RTN by the
/// row-wise extras `e_i (x) (phi_h xi)` (index `d^2 Np + i Nh + h`) where
/// `phi_h` runs over the homogeneous monomials of top degree.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBasis {
    pub space: GradSpace,
    pub dim: usize,
    pub poly: ScaledMonomials,
    /// Number of homogeneous monomials used by the RTN extras (0 otherwise).
    pub n_homogeneous: usize,
}

impl TensorBasis {
    pub fn new(geom: &CellGeometry, k: usize, space: GradSpace) -> Self {
        let d = geom.dim;
        let (degree, nh) = match space {
            GradSpace::PkTensor => (k, 0),
            GradSpace::Pkp1Tensor => (k + 1, 0),
            GradSpace::Rtn => (k, homogeneous_dim(d, k)),
        };
        TensorBasis {
            space,
            dim: d,
            poly: ScaledMonomials::cell(geom, degree),
            n_homogeneous: nh,
        }
    }

    pub fn n_poly(&self) -> usize {
        self.poly.exps.len()
    }

    pub fn size(&self) -> usize {
        self.dim * self.dim * self.n_poly() + self.dim * self.n_homogeneous
    }

    /// Evaluation matrix `E` of size `d^2 x size`: column `a` holds the
    /// row-major entries of basis tensor `a` at `x`.
    pub fn eval_into(&self, x: &Point, e: &mut DMatrix<f64>) {
        let d = self.dim;
        let np = self.n_poly();
        let phi = self.poly.eval(x);
        e.fill(0.0);
        for ij in 0..d * d {
            for m in 0..np {
                e[(ij, ij * np + m)] = phi[m];
            }
        }
        if self.n_homogeneous > 0 {
            let xi = self.poly.local_coords(x);
            let first = np - self.n_homogeneous;
            let base = d * d * np;
            for i in 0..d {
                for h in 0..self.n_homogeneous {
                    let col = base + i * self.n_homogeneous + h;
                    for j in 0..d {
                        e[(i * d + j, col)] = phi[first + h] * xi[j];
                    }
                }
            }
        }
    }

    pub fn eval(&self, x: &Point) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.dim * self.dim, self.size());
        self.eval_into(x, &mut e);
        e
    }

    pub fn mass_matrix(&self, rule: &QuadratureRule) -> DMatrix<f64> {
        let n = self.size();
        let mut m = DMatrix::zeros(n, n);
        let mut e = DMatrix::zeros(self.dim * self.dim, n);
        for (x, w) in rule.iter() {
            self.eval_into(x, &mut e);
            m.gemm_tr(w, &e, &e, 1.0);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_cube_mesh;
    use crate::quadrature::physical_rule;

    fn cell() -> CellGeometry {
        generate_cube_mesh(1).cell_geometry(3).unwrap()
    }

    #[test]
    fn dimension_formulas() {
        for d in 2..=3 {
            for k in 0..=4 {
                assert_eq!(exponents(d, k).len(), poly_dim(d, k));
                let top = exponents(d, k).iter().filter(|e| e.iter().sum::<usize>() == k).count();
                assert_eq!(top, homogeneous_dim(d, k));
            }
        }
        assert_eq!(poly_dim(3, 1), 4);
        assert_eq!(poly_dim(3, 2), 10);
        assert_eq!(poly_dim(2, 2), 6);
    }

    #[test]
    fn constant_and_centering() {
        let g = cell();
        let b = ScaledMonomials::cell(&g, 3);
        let v = b.eval(&g.barycenter);
        assert_eq!(v[0], 1.0);
        for m in 1..=3 {
            assert!(v[m].abs() < 1e-15);
        }
        let grads = b.eval_grad(&[0.3, 0.2, 0.1]);
        assert_eq!(grads[0], [0.0; 3]);
        assert!((grads[1][0] - 2.0 / g.diameter).abs() < 1e-15);
        assert_eq!(grads[1][1], 0.0);
    }

    #[test]
    fn gradients_match_central_differences() {
        let g = cell();
        let b = ScaledMonomials::cell(&g, 3);
        let x = [0.4, 0.3, 0.25];
        let h = 1e-6 * g.diameter;
        let grads = b.eval_grad(&x);
        for l in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[l] += h;
            xm[l] -= h;
            let (vp, vm) = (b.eval(&xp), b.eval(&xm));
            for m in 0..b.size() {
                let fd = (vp[m] - vm[m]) / (2.0 * h);
                assert!((fd - grads[m][l]).abs() <= 1e-7 * grads[m][l].abs().max(1.0));
            }
        }
    }

    #[test]
    fn mass_matrix_constant_and_spd() {
        let g = cell();
        let rule = physical_rule(&g.vertices, 6).unwrap();
        let m0 = mass_matrix(&ScaledMonomials::cell(&g, 0), &rule);
        assert!((m0[(0, 0)] - g.measure).abs() < 1e-15);
        let m = mass_matrix(&ScaledMonomials::cell(&g, 3), &rule);
        assert!((&m - m.transpose()).amax() < 1e-14);
        assert!(m.clone().cholesky().is_some());
    }

    #[test]
    fn tensor_sizes_match_counts() {
        let g = cell();
        assert_eq!(TensorBasis::new(&g, 1, GradSpace::Rtn).size(), 45);
        assert_eq!(TensorBasis::new(&g, 2, GradSpace::Rtn).size(), 108);
        assert_eq!(TensorBasis::new(&g, 1, GradSpace::PkTensor).size(), 36);
        assert_eq!(TensorBasis::new(&g, 1, GradSpace::Pkp1Tensor).size(), 90);
    }

    #[test]
    fn grad_space_parses() {
        assert_eq!("RTN".parse::<GradSpace>().unwrap(), GradSpace::Rtn);
        assert_eq!("pkp1".parse::<GradSpace>().unwrap(), GradSpace::Pkp1Tensor);
        assert!("p2".parse::<GradSpace>().is_err());
    }
}
