//! Operator self-checks on random cells, run by `hho verify`.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::assembly::condense;
use crate::basis::{exponents, GradSpace};
use crate::error::Result;
use crate::hho::{CellContext, LocalOperators};
use crate::material::{unflatten, MaterialLaw};
use crate::mesh::{Mesh, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    /// Worst observed value.
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {:.3e} (tol {:.1e})", self.name, self.value, self.tolerance)
    }
}

/// A single perturbed reference tetrahedron, scaled by a factor in `[0.05, 1)`.
pub fn random_tetrahedron(rng: &mut StdRng) -> Result<Mesh> {
    let reference = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = rng.random_range(0.05..1.0);
    let shift: Point = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
    let vertices = reference
        .iter()
        .map(|p| {
            let mut q = [0.0; 3];
            for l in 0..3 {
                q[l] = shift[l] + scale * (p[l] + rng.random_range(-0.2..0.2));
            }
            q
        })
        .collect();
    Mesh::from_cells(3, vertices, vec![vec![0, 1, 2, 3]], &HashMap::new())
}

/// Random vector polynomial of total degree `deg` centered at `origin`.
pub struct RandomPolynomial {
    exps: Vec<[usize; 3]>,
    coeffs: Vec<[f64; 3]>,
    origin: Point,
}

impl RandomPolynomial {
    pub fn new(rng: &mut StdRng, deg: usize, origin: Point) -> Self {
        let exps = exponents(3, deg);
        let coeffs = exps
            .iter()
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        RandomPolynomial { exps, coeffs, origin }
    }

    pub fn value(&self, x: &Point) -> Point {
        let y = [x[0] - self.origin[0], x[1] - self.origin[1], x[2] - self.origin[2]];
        let mut out = [0.0; 3];
        for (e, c) in self.exps.iter().zip(&self.coeffs) {
            let m = y[0].powi(e[0] as i32) * y[1].powi(e[1] as i32) * y[2].powi(e[2] as i32);
            for l in 0..3 {
                out[l] += c[l] * m;
            }
        }
        out
    }

    /// Row-major gradient.
    pub fn gradient(&self, x: &Point) -> [f64; 9] {
        let y = [x[0] - self.origin[0], x[1] - self.origin[1], x[2] - self.origin[2]];
        let pw = |v: f64, n: usize| if n == 0 { 0.0 } else { n as f64 * v.powi(n as i32 - 1) };
        let mut out = [0.0; 9];
        for (e, c) in self.exps.iter().zip(&self.coeffs) {
            let p = [y[0].powi(e[0] as i32), y[1].powi(e[1] as i32), y[2].powi(e[2] as i32)];
            let dm = [pw(y[0], e[0]) * p[1] * p[2], p[0] * pw(y[1], e[1]) * p[2], p[0] * p[1] * pw(y[2], e[2])];
            for i in 0..3 {
                for j in 0..3 {
                    out[i * 3 + j] += c[i] * dm[j];
                }
            }
        }
        out
    }
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Relative difference in the L2 norm induced by the mass matrix `m`.
fn rel_l2(m: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let e = a - b;
    (e.dot(&(m * &e)) / b.dot(&(m * b)).max(f64::MIN_POSITIVE)).sqrt()
}

/// Worst relative `||G(I v) - Pi^R(grad v)||_T` for the RTN space.
fn commuting(rng: &mut StdRng, cells: usize, k: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..cells {
        let mesh = random_tetrahedron(rng)?;
        let ctx = CellContext::new(&mesh, 0, k)?;
        let ops = LocalOperators::build(&ctx, GradSpace::Rtn, false)?;
        let v = RandomPolynomial::new(rng, k + 2, ctx.geom.barycenter);
        let order = 2 * k + 4;
        let gv = &ops.g * ctx.reduction(|x| v.value(x), order)?;
        let proj = ops.project_tensor(&ctx.cell_rule(order + 2)?, |x| v.gradient(x))?;
        worst = worst.max(rel_l2(&ops.mass_r, &gv, &proj));
    }
    Ok(worst)
}

/// Worst relative `||G(I~ v) - grad Pi_T v||_T` for the `P^{k+1}` space.
fn weak_commuting(rng: &mut StdRng, cells: usize, k: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..cells {
        let mesh = random_tetrahedron(rng)?;
        let ctx = CellContext::new(&mesh, 0, k)?;
        let ops = LocalOperators::build(&ctx, GradSpace::Pkp1Tensor, false)?;
        let v = RandomPolynomial::new(rng, k + 2, ctx.geom.barycenter);
        let order = 2 * k + 4;
        let cell = ctx.project_cell(|x| v.value(x), order)?;
        let gv = &ops.g * ctx.lift_cell(&cell)?;
        let target = ops.project_tensor(&ctx.cell_rule(order)?, |x| ctx.eval_cell_grad(cell.as_slice(), x))?;
        worst = worst.max(rel_l2(&ops.mass_r, &gv, &target));
    }
    Ok(worst)
}

/// Worst `|S(I w)| / |I w|` over the `P^{k+1}` basis.
fn stabilization_consistency(rng: &mut StdRng, cells: usize, k: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..cells {
        let mesh = random_tetrahedron(rng)?;
        let ctx = CellContext::new(&mesh, 0, k)?;
        let ops = LocalOperators::build(&ctx, GradSpace::PkTensor, true)?;
        let basis = ctx.basis_k1.clone();
        for m in 0..basis.exps.len() {
            for c in 0..3 {
                let w = |x: &Point| {
                    let mut out = [0.0; 3];
                    out[c] = basis.eval(x)[m];
                    out
                };
                let iw = ctx.reduction(w, 2 * k + 2)?;
                worst = worst.max((&ops.s * &iw).norm() / iw.norm());
            }
        }
    }
    Ok(worst)
}

/// Worst relative gap between the tangent modulus and central differences of `P`.
fn tangent_fd(rng: &mut StdRng, samples: usize) -> Result<f64> {
    let laws = [MaterialLaw::neohookean(1.0, 10.0), MaterialLaw::Cavitation { mu: 1.0, lambda: 1.0 }];
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < samples {
        let g = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-0.5..0.5));
        let j = (&g + DMatrix::identity(3, 3)).determinant();
        if !(0.2..=5.0).contains(&j) {
            continue;
        }
        done += 1;
        let dir = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let eps = 1e-6;
        for law in &laws {
            let a = law.evaluate(&g)?.a;
            let pp = law.evaluate(&(&g + eps * &dir))?.p;
            let pm = law.evaluate(&(&g - eps * &dir))?.p;
            let fd = (pp - pm) / (2.0 * eps);
            let flat = DVector::from_fn(9, |r, _| dir[(r / 3, r % 3)]);
            let ad = unflatten((&a * flat).as_slice(), 3);
            worst = worst.max((ad - &fd).norm() / fd.norm());
        }
    }
    Ok(worst)
}

/// Worst relative gap between a condensed-and-recovered solve and a direct
/// solve of a random SPD local system.
fn condensation(rng: &mut StdRng, cells: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..cells {
        let mesh = random_tetrahedron(rng)?;
        let ctx = CellContext::new(&mesh, 0, 1)?;
        let ops = LocalOperators::build(&ctx, GradSpace::PkTensor, true)?;
        let l = ctx.layout;
        let n = l.total();
        let k = ops.g.transpose() * &ops.mass_r * &ops.g + &ops.stab_gram;
        let rhs = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let nc = l.n_cell();
        let cond = condense(&k, &rhs, nc)?;
        let nf = n - nc;
        // pin the rigid modes by fixing the first face block
        let pin = l.n_face();
        let kff = cond.matrix.view((pin, pin), (nf - pin, nf - pin)).into_owned();
        let faces_free = kff.lu().solve(&cond.rhs.rows(pin, nf - pin).into_owned()).unwrap_or_default();
        let mut faces = DVector::zeros(nf);
        faces.rows_mut(pin, nf - pin).copy_from(&faces_free);
        let cells_part = cond.recover(&faces);
        let mut full = DVector::zeros(n);
        full.rows_mut(0, nc).copy_from(&cells_part);
        full.rows_mut(nc, nf).copy_from(&faces);
        let keep: Vec<usize> = (0..nc).chain(nc + pin..n).collect();
        let kr = k.select_rows(&keep).select_columns(&keep);
        let rr = DVector::from_fn(keep.len(), |i, _| rhs[keep[i]]);
        let direct = kr.lu().solve(&rr).unwrap_or_default();
        let ours = DVector::from_fn(keep.len(), |i, _| full[keep[i]]);
        worst = worst.max(rel(&ours, &direct));
    }
    Ok(worst)
}

/// Runs the property checks on `cells` random cells per check.
pub fn run_checks(cells: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::new();
    for k in [1, 2] {
        out.push(CheckResult::new(format!("rtn commuting, k={k}"), commuting(&mut rng, cells, k)?, 1e-11));
        out.push(CheckResult::new(
            format!("pkp1 weak commuting, k={k}"),
            weak_commuting(&mut rng, cells, k)?,
            1e-11,
        ));
        out.push(CheckResult::new(
            format!("stabilization kills P^(k+1), k={k}"),
            stabilization_consistency(&mut rng, cells, k)?,
            1e-12,
        ));
    }
    out.push(CheckResult::new("tangent vs central differences", tangent_fd(&mut rng, 100)?, 1e-6));
    out.push(CheckResult::new("static condensation", condensation(&mut rng, cells)?, 1e-10));
    Ok(out)
}
