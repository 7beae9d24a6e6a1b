//! Quadrature on reference and physical simplices.
//!
//! Rules are conical (collapsed-coordinate) products of Gauss–Jacobi rules
//! computed by the Golub–Welsch algorithm. A rule of order `p` uses
//! `p / 2 + 1` points per direction and has positive weights.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{HhoError, Result};
use crate::mesh::Point;

/// Highest exactness order shipped.
pub const MAX_ORDER: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    pub fn integrate<F: FnMut(&Point) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// Gauss–Jacobi rule for the weight `(1-u)^alpha` on `[0, 1]`.
fn gauss_jacobi(q: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let mut t = DMatrix::<f64>::zeros(q, q);
    for n in 0..q {
        let nf = n as f64;
        let s = 2.0 * nf + alpha;
        t[(n, n)] = if n == 0 {
            -alpha / (alpha + 2.0)
        } else {
            -alpha * alpha / (s * (s + 2.0))
        };
        if n + 1 < q {
            let m = nf + 1.0;
            let s = 2.0 * m + alpha;
            let b = (4.0 * m * (m + alpha) * m * (m + alpha) / (s * s * (s + 1.0) * (s - 1.0))).sqrt();
            t[(n, n + 1)] = b;
            t[(n + 1, n)] = b;
        }
    }
    let mu0 = 2f64.powf(alpha + 1.0) / (alpha + 1.0);
    let eig = SymmetricEigen::new(t);
    let mut pairs: Vec<(f64, f64)> = (0..q)
        .map(|i| {
            let x = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            ((x + 1.0) / 2.0, mu0 * v0 * v0 * 2f64.powf(-alpha - 1.0))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn build_reference(dim: usize, order: usize) -> QuadratureRule {
    let q = order / 2 + 1;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match dim {
        0 => {
            points.push([0.0; 3]);
            weights.push(1.0);
        }
        1 => {
            let (x, w) = gauss_jacobi(q, 0.0);
            for i in 0..q {
                points.push([x[i], 0.0, 0.0]);
                weights.push(w[i]);
            }
        }
        2 => {
            let (u, wu) = gauss_jacobi(q, 1.0);
            let (v, wv) = gauss_jacobi(q, 0.0);
            for i in 0..q {
                for j in 0..q {
                    points.push([u[i], (1.0 - u[i]) * v[j], 0.0]);
                    weights.push(wu[i] * wv[j]);
                }
            }
        }
        3 => {
            let (u, wu) = gauss_jacobi(q, 2.0);
            let (v, wv) = gauss_jacobi(q, 1.0);
            let (w, ww) = gauss_jacobi(q, 0.0);
            for i in 0..q {
                for j in 0..q {
                    for l in 0..q {
                        points.push([
                            u[i],
                            (1.0 - u[i]) * v[j],
                            (1.0 - u[i]) * (1.0 - v[j]) * w[l],
                        ]);
                        weights.push(wu[i] * wv[j] * ww[l]);
                    }
                }
            }
        }
        _ => unreachable!("simplex dimension is at most 3"),
    }
    QuadratureRule {
        points,
        weights,
        order,
    }
}

static TABLE: OnceLock<Vec<Vec<QuadratureRule>>> = OnceLock::new();

/// Rule on the reference simplex with vertices `0, e_1, .., e_dim`, exact for
/// polynomials of total degree `order`.
pub fn simplex_rule(dim: usize, order: usize) -> Result<&'static QuadratureRule> {
    if order > MAX_ORDER {
        return Err(HhoError::QuadratureOrder {
            requested: order,
            max: MAX_ORDER,
        });
    }
    if dim > 3 {
        return Err(HhoError::Dimension(format!("simplex dimension {dim}")));
    }
    let table = TABLE.get_or_init(|| {
        (0..=3)
            .map(|d| (0..=MAX_ORDER).map(|p| build_reference(d, p)).collect())
            .collect()
    });
    Ok(&table[dim][order])
}

/// Maps a reference rule onto the simplex spanned by `vertices` (which may be
/// embedded in a higher-dimensional space, e.g. a face of a tetrahedron).
pub fn map_rule(rule: &QuadratureRule, vertices: &[Point]) -> Result<QuadratureRule> {
    let m = vertices.len() - 1;
    let edges: Vec<Point> = (1..=m)
        .map(|i| {
            [
                vertices[i][0] - vertices[0][0],
                vertices[i][1] - vertices[0][1],
                vertices[i][2] - vertices[0][2],
            ]
        })
        .collect();
    // sqrt(det(E^T E)) is the ratio of physical to reference measure times m!
    let gram = DMatrix::from_fn(m, m, |a, b| {
        edges[a][0] * edges[b][0] + edges[a][1] * edges[b][1] + edges[a][2] * edges[b][2]
    });
    let scale = if m == 0 { 1.0 } else { gram.determinant().max(0.0).sqrt() };
    let diam = edges.iter().map(|e| crate::mesh::norm(e)).fold(0.0, f64::max);
    if m > 0 && scale <= 1e-14 * diam.powi(m as i32) {
        return Err(HhoError::DegenerateCell {
            cell: usize::MAX,
            measure: scale,
            threshold: 1e-14 * diam.powi(m as i32),
        });
    }
    let points = rule
        .points
        .iter()
        .map(|p| {
            let mut x = vertices[0];
            for (i, e) in edges.iter().enumerate() {
                for l in 0..3 {
                    x[l] += p[i] * e[l];
                }
            }
            x
        })
        .collect();
    Ok(QuadratureRule {
        points,
        weights: rule.weights.iter().map(|w| w * scale).collect(),
        order: rule.order,
    })
}

/// Physical rule of the given order on the simplex spanned by `vertices`.
pub fn physical_rule(vertices: &[Point], order: usize) -> Result<QuadratureRule> {
    map_rule(simplex_rule(vertices.len() - 1, order)?, vertices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    fn exact_monomial(dim: usize, a: [usize; 3]) -> f64 {
        let s: usize = a.iter().sum();
        a.iter().map(|&e| factorial(e)).product::<f64>() / factorial(s + dim)
    }

    #[test]
    fn centroid_rules() {
        let r2 = simplex_rule(2, 1).unwrap();
        assert_eq!(r2.len(), 1);
        assert!((r2.weights[0] - 0.5).abs() < 1e-15);
        assert!((r2.points[0][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((r2.points[0][1] - 1.0 / 3.0).abs() < 1e-15);
        let r3 = simplex_rule(3, 1).unwrap();
        assert_eq!(r3.len(), 1);
        assert!((r3.weights[0] - 1.0 / 6.0).abs() < 1e-15);
        for l in 0..3 {
            assert!((r3.points[0][l] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn x2y2_on_triangle() {
        let r = simplex_rule(2, 4).unwrap();
        let v = r.integrate(|p| p[0] * p[0] * p[1] * p[1]);
        assert!((v - 1.0 / 180.0).abs() < 1e-14);
    }

    #[test]
    fn monomial_exactness_sweep() {
        for dim in 1..=3 {
            for order in 0..=MAX_ORDER {
                let r = simplex_rule(dim, order).unwrap();
                assert!(r.weights.iter().all(|&w| w > 0.0));
                for a in 0..=order {
                    for b in 0..=(if dim > 1 { order - a } else { 0 }) {
                        for c in 0..=(if dim > 2 { order - a - b } else { 0 }) {
                            let e = [a, b, c];
                            let got = r.integrate(|p| {
                                p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32)
                            });
                            let want = exact_monomial(dim, e);
                            assert!(
                                ((got - want) / want).abs() < 1e-12,
                                "dim {dim} order {order} exponents {e:?}: {got} vs {want}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn order_above_table_is_rejected() {
        assert!(matches!(
            simplex_rule(3, MAX_ORDER + 1),
            Err(HhoError::QuadratureOrder { .. })
        ));
    }

    #[test]
    fn identity_and_scaling_maps() {
        let r = simplex_rule(3, 3).unwrap();
        let reference = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(&map_rule(r, &reference).unwrap(), r);
        let doubled: Vec<Point> = reference.iter().map(|p| [2.0 * p[0], 2.0 * p[1], 2.0 * p[2]]).collect();
        let m = map_rule(r, &doubled).unwrap();
        for (a, b) in m.weights.iter().zip(&r.weights) {
            assert!((a - 8.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn physical_weights_sum_to_measure() {
        let verts = [[0.1, 0.2, 0.3], [1.3, 0.1, 0.2], [0.4, 1.1, 0.0], [0.3, 0.5, 0.9]];
        let e = |i: usize| [verts[i][0] - verts[0][0], verts[i][1] - verts[0][1], verts[i][2] - verts[0][2]];
        let (a, b, c) = (e(1), e(2), e(3));
        let det = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0]);
        let r = physical_rule(&verts, 5).unwrap();
        let sum: f64 = r.weights.iter().sum();
        assert!((sum - det.abs() / 6.0).abs() < 1e-13);
        // a triangle face embedded in 3D
        let f = physical_rule(&verts[..3], 4).unwrap();
        let area = 0.5 * {
            let n = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
            (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
        };
        assert!((f.weights.iter().sum::<f64>() - area).abs() < 1e-14);
    }
}
