//! Hyperelastic constitutive laws.
//!
//! Fourth-order tensors are stored as `d^2 x d^2` matrices with row index
//! `i d + j` and column index `k d + l`, so that `(A : M)_ij = sum_kl A_ijkl M_kl`
//! is a matrix-vector product on row-major flattened matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HhoError, Result};

/// `{A (x) B}_ijkl = A_ij B_kl`.
pub fn outer(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    DMatrix::from_fn(d * d, d * d, |r, c| a[(r / d, r % d)] * b[(c / d, c % d)])
}

/// `{A (x)_ B}_ijkl = A_il B_jk`.
pub fn under(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    DMatrix::from_fn(d * d, d * d, |r, c| {
        let (i, j, k, l) = (r / d, r % d, c / d, c % d);
        a[(i, l)] * b[(j, k)]
    })
}

/// `{A (x)^- B}_ijkl = A_ik B_jl`.
pub fn over(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    DMatrix::from_fn(d * d, d * d, |r, c| {
        let (i, j, k, l) = (r / d, r % d, c / d, c % d);
        a[(i, k)] * b[(j, l)]
    })
}

/// The three products `(A (x) B, A (x)_ B, A (x)^- B)`.
pub fn tensor_products(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    (outer(a, b), under(a, b), over(a, b))
}

/// `A : M` for a fourth-order tensor and a `d x d` matrix.
pub fn apply(a4: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    let v = a4 * flatten(m);
    DMatrix::from_fn(d, d, |i, j| v[(i * d + j, 0)])
}

/// Row-major flattening into a `d^2 x 1` column.
pub fn flatten(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    DMatrix::from_fn(d * d, 1, |r, _| m[(r / d, r % d)])
}

pub fn unflatten(v: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| v[i * d + j])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VolumetricLaw {
    /// `Theta(J) = ln J`.
    #[default]
    LogJ,
}

impl VolumetricLaw {
    /// `(Theta, Theta', Theta'')` at `j`.
    pub fn eval(self, j: f64) -> (f64, f64, f64) {
        match self {
            VolumetricLaw::LogJ => (j.ln(), 1.0 / j, -1.0 / (j * j)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum MaterialLaw {
    Neohookean {
        mu: f64,
        lambda: f64,
        #[serde(default)]
        volumetric: VolumetricLaw,
    },
    Cavitation {
        mu: f64,
        lambda: f64,
    },
    LinearElastic {
        mu: f64,
        lambda: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationGradient {
    pub f: DMatrix<f64>,
    pub j: f64,
    pub f_inv_t: DMatrix<f64>,
}

impl DeformationGradient {
    pub fn new(f: DMatrix<f64>) -> Result<Self> {
        let j = f.determinant();
        if !(j > 0.0) {
            return Err(HhoError::NonPositiveJacobian { det: j });
        }
        let f_inv_t = f
            .clone()
            .try_inverse()
            .ok_or(HhoError::NonPositiveJacobian { det: j })?
            .transpose();
        Ok(DeformationGradient { f, j, f_inv_t })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialResponse {
    pub psi: f64,
    pub p: DMatrix<f64>,
    pub a: DMatrix<f64>,
}

/// Neohookean law `mu/2 (F:F - d) - mu ln J + lambda/2 Theta(J)^2`.
pub fn evaluate_neohookean(
    f: &DMatrix<f64>,
    mu: f64,
    lambda: f64,
    vol: VolumetricLaw,
) -> Result<MaterialResponse> {
    let d = f.nrows();
    let dg = DeformationGradient::new(f.clone())?;
    let (j, fit) = (dg.j, &dg.f_inv_t);
    let (th, dth, d2th) = vol.eval(j);
    let id = DMatrix::<f64>::identity(d, d);
    let psi = 0.5 * mu * (f.norm_squared() - d as f64) - mu * j.ln() + 0.5 * lambda * th * th;
    let p = mu * (f - fit) + (lambda * j * th * dth) * fit;
    let fi = fit.transpose();
    let fit_under_fi = under(fit, &fi);
    let a = mu * (over(&id, &id) + &fit_under_fi) - (lambda * j * th * dth) * fit_under_fi
        + (lambda * (j * th * (j * d2th + dth) + (j * dth).powi(2))) * outer(fit, fit);
    Ok(MaterialResponse { psi, p, a })
}

/// Cavitation law `2 mu / 3^{5/4} (F:F)^{3/4} - mu ln J + lambda/2 (ln J)^2`.
pub fn evaluate_cavitation(f: &DMatrix<f64>, mu: f64, lambda: f64) -> Result<MaterialResponse> {
    let d = f.nrows();
    let dg = DeformationGradient::new(f.clone())?;
    let (j, fit) = (dg.j, &dg.f_inv_t);
    let ff = f.norm_squared();
    let c = mu * 3f64.powf(-0.25);
    let lnj = j.ln();
    let id = DMatrix::<f64>::identity(d, d);
    let psi = 2.0 * mu * 3f64.powf(-1.25) * ff.powf(0.75) - mu * lnj + 0.5 * lambda * lnj * lnj;
    let p = (c * ff.powf(-0.25)) * f - mu * fit + (lambda * lnj) * fit;
    let fit_under_fi = under(fit, &fit.transpose());
    let a = (c * ff.powf(-0.25)) * over(&id, &id) - (0.5 * c * ff.powf(-1.25)) * outer(f, f)
        + (mu - lambda * lnj) * fit_under_fi
        + lambda * outer(fit, fit);
    Ok(MaterialResponse { psi, p, a })
}

/// Small-strain law `sigma = 2 mu eps + lambda tr(eps) I` with `eps = sym(grad u)`.
pub fn evaluate_linear_elastic(grad_u: &DMatrix<f64>, mu: f64, lambda: f64) -> MaterialResponse {
    let d = grad_u.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let eps = 0.5 * (grad_u + grad_u.transpose());
    let tr = eps.trace();
    let psi = mu * eps.norm_squared() + 0.5 * lambda * tr * tr;
    let p = 2.0 * mu * &eps + (lambda * tr) * &id;
    let a = mu * (over(&id, &id) + under(&id, &id)) + lambda * outer(&id, &id);
    MaterialResponse { psi, p, a }
}

impl MaterialLaw {
    pub fn neohookean(mu: f64, lambda: f64) -> Self {
        MaterialLaw::Neohookean {
            mu,
            lambda,
            volumetric: VolumetricLaw::LogJ,
        }
    }

    pub fn mu(&self) -> f64 {
        match *self {
            MaterialLaw::Neohookean { mu, .. }
            | MaterialLaw::Cavitation { mu, .. }
            | MaterialLaw::LinearElastic { mu, .. } => mu,
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            MaterialLaw::Neohookean { lambda, .. }
            | MaterialLaw::Cavitation { lambda, .. }
            | MaterialLaw::LinearElastic { lambda, .. } => lambda,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MaterialLaw::Neohookean { .. } => "neohookean",
            MaterialLaw::Cavitation { .. } => "cavitation",
            MaterialLaw::LinearElastic { .. } => "linear_elastic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu() > 0.0) || !(self.lambda() >= 0.0) {
            return Err(HhoError::Config(format!(
                "material parameters need mu > 0 and lambda >= 0 (mu = {}, lambda = {})",
                self.mu(),
                self.lambda()
            )));
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, MaterialLaw::LinearElastic { .. })
    }

    /// Response at the displacement gradient `grad_u` (so `F = I + grad_u`).
    pub fn evaluate(&self, grad_u: &DMatrix<f64>) -> Result<MaterialResponse> {
        let d = grad_u.nrows();
        match *self {
            MaterialLaw::Neohookean {
                mu,
                lambda,
                volumetric,
            } => evaluate_neohookean(&(grad_u + DMatrix::identity(d, d)), mu, lambda, volumetric),
            MaterialLaw::Cavitation { mu, lambda } => {
                evaluate_cavitation(&(grad_u + DMatrix::identity(d, d)), mu, lambda)
            }
            MaterialLaw::LinearElastic { mu, lambda } => {
                Ok(evaluate_linear_elastic(grad_u, mu, lambda))
            }
        }
    }
}

/// `nu = lambda / (2 (lambda + mu))`, for reporting.
pub fn poisson_ratio(mu: f64, lambda: f64) -> f64 {
    lambda / (2.0 * (lambda + mu))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(d: usize, v: &[f64]) -> DMatrix<f64> {
        unflatten(v, d)
    }

    #[test]
    fn identity_products() {
        let id = DMatrix::<f64>::identity(3, 3);
        let x = m(3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0]);
        assert_eq!(apply(&over(&id, &id), &x), x);
        assert_eq!(apply(&under(&id, &id), &x), x.transpose());
        let (a, b) = (x.clone() * 0.5, x.transpose() + &id);
        let lhs = apply(&outer(&a, &b), &x);
        let rhs = &a * b.dot(&x);
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn neohookean_reference_state() {
        let r = evaluate_neohookean(&DMatrix::identity(3, 3), 1.0, 10.0, VolumetricLaw::LogJ).unwrap();
        assert!(r.psi.abs() < 1e-15);
        assert!(r.p.amax() < 1e-15);
    }

    #[test]
    fn neohookean_pure_dilation() {
        let f = DMatrix::<f64>::identity(3, 3) * 2.0;
        let r = evaluate_neohookean(&f, 1.0, 0.0, VolumetricLaw::LogJ).unwrap();
        assert!((r.psi - (4.5 - 8f64.ln())).abs() < 1e-14);
        assert!((r.psi - 2.42056).abs() < 1e-5);
        assert!((r.p - DMatrix::<f64>::identity(3, 3) * 1.5).amax() < 1e-15);
    }

    #[test]
    fn cavitation_reference_energy() {
        let r = evaluate_cavitation(&DMatrix::identity(3, 3), 1.0, 1.0).unwrap();
        assert!((r.psi - 2.0 / 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn inverted_deformation_is_rejected() {
        let f = m(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -0.5]);
        assert!(matches!(
            evaluate_neohookean(&f, 1.0, 1.0, VolumetricLaw::LogJ),
            Err(HhoError::NonPositiveJacobian { .. })
        ));
        assert!(evaluate_cavitation(&f, 1.0, 1.0).is_err());
    }

    #[test]
    fn linear_elastic_basics() {
        let z = evaluate_linear_elastic(&DMatrix::zeros(3, 3), 1.0, 2.0);
        assert_eq!(z.p, DMatrix::zeros(3, 3));
        let eps = 1e-3;
        let r = evaluate_linear_elastic(&(DMatrix::identity(3, 3) * eps), 1.0, 2.0);
        assert!((r.p - DMatrix::<f64>::identity(3, 3) * ((2.0 + 3.0 * 2.0) * eps)).amax() < 1e-15);
    }

    #[test]
    fn poisson_ratio_values() {
        assert!((poisson_ratio(1.0, 4999.0) - 0.4999).abs() < 1e-12);
        assert_eq!(poisson_ratio(1.0, 0.0), 0.0);
    }
}
