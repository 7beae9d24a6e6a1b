use std::collections::HashMap;
use std::f64::consts::PI;

use super::{Mesh, Point};

/// Structured box `[lo, hi]` split into `n[0] x n[1] x n[2]` sub-boxes, each cut
/// into six tetrahedra along the main diagonal (Kuhn split).
///
/// Boundary faces are tagged `x0, x1, y0, y1, z0, z1`.
pub fn generate_box_mesh(n: [usize; 3], lo: Point, hi: Point) -> Mesh {
    assert!(n.iter().all(|&m| m >= 1), "box mesh needs at least one subdivision");
    let idx = |i: usize, j: usize, k: usize| i + (n[0] + 1) * (j + (n[1] + 1) * k);
    let mut vertices = Vec::with_capacity((n[0] + 1) * (n[1] + 1) * (n[2] + 1));
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                let t = [
                    i as f64 / n[0] as f64,
                    j as f64 / n[1] as f64,
                    k as f64 / n[2] as f64,
                ];
                vertices.push([
                    lo[0] + (hi[0] - lo[0]) * t[0],
                    lo[1] + (hi[1] - lo[1]) * t[1],
                    lo[2] + (hi[2] - lo[2]) * t[2],
                ]);
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut cells = Vec::with_capacity(6 * n[0] * n[1] * n[2]);
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                for perm in PERMS {
                    let mut c = [i, j, k];
                    let mut tet = vec![idx(c[0], c[1], c[2])];
                    for axis in perm {
                        c[axis] += 1;
                        tet.push(idx(c[0], c[1], c[2]));
                    }
                    cells.push(tet);
                }
            }
        }
    }
    let mut mesh = Mesh::from_cells(3, vertices, cells, &HashMap::new())
        .expect("structured box mesh is valid");
    let tol = 1e-12 * (0..3).map(|l| hi[l] - lo[l]).fold(0.0, f64::max);
    mesh.retag(|x, tag| {
        for (axis, name) in ["x", "y", "z"].iter().enumerate() {
            if (x[axis] - lo[axis]).abs() < tol {
                return format!("{name}0");
            }
            if (x[axis] - hi[axis]).abs() < tol {
                return format!("{name}1");
            }
        }
        tag.to_string()
    });
    mesh
}

/// Unit cube with `n` subdivisions per edge: `6 n^3` tetrahedra.
pub fn generate_cube_mesh(n: usize) -> Mesh {
    generate_box_mesh([n, n, n], [0.0; 3], [1.0; 3])
}

/// Annulus centred at the origin, `n_radial` rings of `n_angular` quads, each
/// quad cut into two triangles. Boundary faces are tagged `inner` and `outer`.
pub fn generate_annulus_mesh(
    r_inner: f64,
    r_outer: f64,
    n_radial: usize,
    n_angular: usize,
) -> Mesh {
    assert!(0.0 < r_inner && r_inner < r_outer, "need 0 < r_inner < r_outer");
    assert!(n_radial >= 1 && n_angular >= 3, "annulus needs n_radial >= 1, n_angular >= 3");
    let idx = |i: usize, j: usize| i * n_angular + j % n_angular;
    let mut vertices = Vec::with_capacity((n_radial + 1) * n_angular);
    for i in 0..=n_radial {
        let r = r_inner + (r_outer - r_inner) * i as f64 / n_radial as f64;
        for j in 0..n_angular {
            let t = 2.0 * PI * j as f64 / n_angular as f64;
            vertices.push([r * t.cos(), r * t.sin(), 0.0]);
        }
    }
    let mut cells = Vec::with_capacity(2 * n_radial * n_angular);
    let mut tags = HashMap::new();
    for i in 0..n_radial {
        for j in 0..n_angular {
            let (a, b, c, d) = (idx(i, j), idx(i, j + 1), idx(i + 1, j + 1), idx(i + 1, j));
            cells.push(vec![a, b, c]);
            cells.push(vec![a, c, d]);
        }
    }
    for j in 0..n_angular {
        let mut inner = vec![idx(0, j), idx(0, j + 1)];
        inner.sort_unstable();
        tags.insert(inner, "inner".to_string());
        let mut outer = vec![idx(n_radial, j), idx(n_radial, j + 1)];
        outer.sort_unstable();
        tags.insert(outer, "outer".to_string());
    }
    Mesh::from_cells(2, vertices, cells, &tags).expect("structured annulus mesh is valid")
}
