//! Affine simplicial meshes: topology, face skeleton and per-cell geometry.
//!
//! Faces are identified by their sorted vertex tuple. The owner of a face is
//! the lowest-index incident cell, and the reference normal stored for a face
//! is the owner's outward normal.

mod generate;
mod gmsh;

use std::collections::{BTreeMap, HashMap};

use crate::error::{HhoError, Result};

pub use generate::{generate_annulus_mesh, generate_box_mesh, generate_cube_mesh};
pub use gmsh::{load_gmsh, parse_gmsh, write_gmsh};

/// Coordinates are always stored with three slots; trailing slots are zero in 2D.
pub type Point = [f64; 3];

/// Tag given to boundary faces that carry no physical tag.
pub const UNTAGGED: &str = "untagged";

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub dim: usize,
    pub vertices: Vec<Point>,
    pub cells: Vec<Vec<usize>>,
    /// Sorted vertex tuples.
    pub faces: Vec<Vec<usize>>,
    /// For each cell, `(face, sign)` with `sign = +1` when the cell owns the face.
    /// Local face `i` is the face opposite local vertex `i`.
    pub cell_faces: Vec<Vec<(usize, i8)>>,
    /// `(owner, neighbor)`; boundary faces have no neighbor.
    pub face_cells: Vec<(usize, Option<usize>)>,
    pub boundary_tags: BTreeMap<usize, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceGeometry {
    pub barycenter: Point,
    pub diameter: f64,
    pub measure: f64,
    /// Outward unit normal of the owner cell.
    pub normal: Point,
    /// Orthonormal tangential frame (d-1 vectors), built from the edges
    /// leaving the lowest-index vertex.
    pub tangents: Vec<Point>,
    pub vertices: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFace {
    pub face: usize,
    /// Outward unit normal with respect to this cell.
    pub normal: Point,
    pub measure: f64,
    pub diameter: f64,
    pub barycenter: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    pub dim: usize,
    pub barycenter: Point,
    pub diameter: f64,
    pub measure: f64,
    pub vertices: Vec<Point>,
    pub faces: Vec<CellFace>,
}

impl CellGeometry {
    /// The `gamma` weight of the strain semi-norm on local face `i`.
    pub fn face_weight(&self, i: usize) -> f64 {
        1.0 / self.faces[i].diameter
    }
}

pub(crate) fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scale(a: &Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn centroid(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for l in 0..3 {
            c[l] += p[l];
        }
    }
    scale(&c, 1.0 / n)
}

fn diameter(points: &[Point]) -> f64 {
    let mut h: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            h = h.max(norm(&sub(a, b)));
        }
    }
    h
}

/// Signed `d!`-scaled volume of a simplex (determinant of the edge matrix).
pub(crate) fn simplex_det(dim: usize, v: &[Point]) -> f64 {
    let e1 = sub(&v[1], &v[0]);
    let e2 = sub(&v[2], &v[0]);
    match dim {
        2 => e1[0] * e2[1] - e1[1] * e2[0],
        3 => dot(&e1, &cross(&e2, &sub(&v[3], &v[0]))),
        _ => unreachable!("mesh dimension is 2 or 3"),
    }
}

/// Unsigned measure of a (d-1)-simplex embedded in R^d.
fn facet_measure(dim: usize, v: &[Point]) -> f64 {
    match dim {
        2 => norm(&sub(&v[1], &v[0])),
        3 => 0.5 * norm(&cross(&sub(&v[1], &v[0]), &sub(&v[2], &v[0]))),
        _ => unreachable!(),
    }
}

fn facet_normal(dim: usize, v: &[Point]) -> Point {
    let n = match dim {
        2 => {
            let t = sub(&v[1], &v[0]);
            [t[1], -t[0], 0.0]
        }
        _ => cross(&sub(&v[1], &v[0]), &sub(&v[2], &v[0])),
    };
    scale(&n, 1.0 / norm(&n))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

impl Mesh {
    /// Builds the face skeleton from cell connectivity.
    ///
    /// Cells with negative orientation are reordered so that every cell
    /// Jacobian is positive. `tags` maps sorted boundary-face vertex tuples to
    /// tag names; untagged boundary faces receive [`UNTAGGED`].
    pub fn from_cells(
        dim: usize,
        vertices: Vec<Point>,
        mut cells: Vec<Vec<usize>>,
        tags: &HashMap<Vec<usize>, String>,
    ) -> Result<Mesh> {
        if dim != 2 && dim != 3 {
            return Err(HhoError::Dimension(format!("mesh dimension {dim}")));
        }
        for (c, cell) in cells.iter_mut().enumerate() {
            if cell.len() != dim + 1 {
                return Err(HhoError::Dimension(format!(
                    "cell {c} has {} vertices, expected {}",
                    cell.len(),
                    dim + 1
                )));
            }
            if let Some(&v) = cell.iter().find(|&&v| v >= vertices.len()) {
                return Err(HhoError::Dimension(format!("cell {c} references vertex {v}")));
            }
            let pts: Vec<Point> = cell.iter().map(|&v| vertices[v]).collect();
            let det = simplex_det(dim, &pts);
            let h = diameter(&pts);
            let measure = det.abs() / factorial(dim);
            let threshold = 1e-14 * h.powi(dim as i32);
            if measure < threshold {
                return Err(HhoError::DegenerateCell {
                    cell: c,
                    measure,
                    threshold,
                });
            }
            if det < 0.0 {
                cell.swap(0, 1);
            }
        }

        let mut lookup: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut faces: Vec<Vec<usize>> = Vec::new();
        let mut incident: Vec<Vec<usize>> = Vec::new();
        let mut cell_faces = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let mut local = Vec::with_capacity(dim + 1);
            for skip in 0..=dim {
                let mut key: Vec<usize> = (0..=dim)
                    .filter(|&i| i != skip)
                    .map(|i| cell[i])
                    .collect();
                key.sort_unstable();
                let f = *lookup.entry(key.clone()).or_insert_with(|| {
                    faces.push(key);
                    incident.push(Vec::new());
                    faces.len() - 1
                });
                incident[f].push(c);
                local.push(f);
            }
            cell_faces.push(local);
        }

        let mut face_cells = Vec::with_capacity(faces.len());
        for inc in &incident {
            match inc.len() {
                1 => face_cells.push((inc[0], None)),
                2 => face_cells.push((inc[0].min(inc[1]), Some(inc[0].max(inc[1])))),
                count => return Err(HhoError::NonConforming { count }),
            }
        }
        let cell_faces = cell_faces
            .into_iter()
            .enumerate()
            .map(|(c, local)| {
                local
                    .into_iter()
                    .map(|f| (f, if face_cells[f].0 == c { 1 } else { -1 }))
                    .collect()
            })
            .collect();

        let mut boundary_tags = BTreeMap::new();
        for (f, fc) in face_cells.iter().enumerate() {
            if fc.1.is_none() {
                let tag = tags.get(&faces[f]).cloned().unwrap_or_else(|| UNTAGGED.to_string());
                boundary_tags.insert(f, tag);
            }
        }

        Ok(Mesh {
            dim,
            vertices,
            cells,
            faces,
            cell_faces,
            face_cells,
            boundary_tags,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn is_boundary(&self, face: usize) -> bool {
        self.face_cells[face].1.is_none()
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = usize> + '_ {
        self.boundary_tags.keys().copied()
    }

    /// Distinct boundary tags, sorted.
    pub fn tag_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.boundary_tags.values().cloned().collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn cell_vertices(&self, cell: usize) -> Vec<Point> {
        self.cells[cell].iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn face_vertices(&self, face: usize) -> Vec<Point> {
        self.faces[face].iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn face_geometry(&self, face: usize) -> FaceGeometry {
        let dim = self.dim;
        let verts = self.face_vertices(face);
        let barycenter = centroid(&verts);
        let mut normal = facet_normal(dim, &verts);
        let owner = self.face_cells[face].0;
        let cell_center = centroid(&self.cell_vertices(owner));
        if dot(&normal, &sub(&barycenter, &cell_center)) < 0.0 {
            normal = scale(&normal, -1.0);
        }
        // faces[face] is sorted, so verts[0] is the lowest-index vertex.
        let mut tangents: Vec<Point> = Vec::with_capacity(dim - 1);
        for v in verts.iter().skip(1).take(dim - 1) {
            let mut t = sub(v, &verts[0]);
            for q in &tangents {
                let p = dot(&t, q);
                t = sub(&t, &scale(q, p));
            }
            tangents.push(scale(&t, 1.0 / norm(&t)));
        }
        FaceGeometry {
            barycenter,
            diameter: diameter(&verts),
            measure: facet_measure(dim, &verts),
            normal,
            tangents,
            vertices: verts,
        }
    }

    pub fn cell_geometry(&self, cell: usize) -> Result<CellGeometry> {
        let dim = self.dim;
        let vertices = self.cell_vertices(cell);
        let barycenter = centroid(&vertices);
        let h = diameter(&vertices);
        let measure = simplex_det(dim, &vertices).abs() / factorial(dim);
        let threshold = 1e-14 * h.powi(dim as i32);
        if measure < threshold {
            return Err(HhoError::DegenerateCell {
                cell,
                measure,
                threshold,
            });
        }
        let faces = self.cell_faces[cell]
            .iter()
            .map(|&(f, _)| {
                let verts = self.face_vertices(f);
                let fb = centroid(&verts);
                let mut n = facet_normal(dim, &verts);
                if dot(&n, &sub(&fb, &barycenter)) < 0.0 {
                    n = scale(&n, -1.0);
                }
                CellFace {
                    face: f,
                    normal: n,
                    measure: facet_measure(dim, &verts),
                    diameter: diameter(&verts),
                    barycenter: fb,
                }
            })
            .collect();
        Ok(CellGeometry {
            dim,
            barycenter,
            diameter: h,
            measure,
            vertices,
            faces,
        })
    }

    /// Mean of the cell diameters.
    pub fn average_diameter(&self) -> f64 {
        let total: f64 = (0..self.num_cells())
            .map(|c| diameter(&self.cell_vertices(c)))
            .sum();
        total / self.num_cells() as f64
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.num_cells())
            .map(|c| simplex_det(self.dim, &self.cell_vertices(c)).abs() / factorial(self.dim))
            .sum()
    }

    /// Replaces tags according to `f(face barycenter, current tag)`.
    pub fn retag<F: Fn(&Point, &str) -> String>(&mut self, f: F) {
        let updates: Vec<(usize, String)> = self
            .boundary_tags
            .iter()
            .map(|(&face, tag)| (face, f(&centroid(&self.face_vertices(face)), tag)))
            .collect();
        self.boundary_tags.extend(updates);
    }

    /// Copy with every interior vertex moved by a random offset of at most
    /// `amplitude` times its shortest incident edge, per coordinate.
    ///
    /// Breaks the symmetry of structured meshes. Boundary vertices stay put,
    /// so tags and boundary geometry are unchanged.
    pub fn jitter_interior(&self, amplitude: f64, seed: u64) -> Result<Mesh> {
        use rand::{Rng, SeedableRng};
        let mut on_boundary = vec![false; self.vertices.len()];
        for f in self.boundary_faces() {
            for &v in &self.faces[f] {
                on_boundary[v] = true;
            }
        }
        let mut shortest = vec![f64::INFINITY; self.vertices.len()];
        for cell in &self.cells {
            for (i, &a) in cell.iter().enumerate() {
                for &b in &cell[i + 1..] {
                    let len = norm(&sub(&self.vertices[a], &self.vertices[b]));
                    shortest[a] = shortest[a].min(len);
                    shortest[b] = shortest[b].min(len);
                }
            }
        }
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut out = self.clone();
        for (v, x) in out.vertices.iter_mut().enumerate() {
            if on_boundary[v] {
                continue;
            }
            for c in x.iter_mut().take(self.dim) {
                *c += amplitude * shortest[v] * rng.random_range(-1.0..1.0);
            }
        }
        for c in 0..out.num_cells() {
            let det = simplex_det(self.dim, &out.cell_vertices(c));
            let before = simplex_det(self.dim, &self.cell_vertices(c));
            if det * before <= 0.0 || det.abs() < 1e-3 * before.abs() {
                return Err(HhoError::DegenerateCell {
                    cell: c,
                    measure: det.abs() / factorial(self.dim),
                    threshold: 1e-3 * before.abs() / factorial(self.dim),
                });
            }
        }
        Ok(out)
    }
}
