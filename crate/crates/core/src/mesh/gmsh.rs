//! Reader and writer for the ASCII gmsh format, version 2.2.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Mesh, Point, UNTAGGED};
use crate::error::{HhoError, Result};

const LINE: u32 = 1;
const TRIANGLE: u32 = 2;
const TETRAHEDRON: u32 = 4;
const POINT: u32 = 15;

struct Element {
    kind: u32,
    physical: Option<i64>,
    nodes: Vec<usize>,
}

pub fn load_gmsh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| HhoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_gmsh(&text)
}

fn parse_err(line: usize, message: impl Into<String>) -> HhoError {
    HhoError::Parse {
        line: line + 1,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what}")))
}

pub fn parse_gmsh(text: &str) -> Result<Mesh> {
    let lines: Vec<&str> = text.lines().collect();
    let mut names: HashMap<i64, String> = HashMap::new();
    let mut node_ids: HashMap<i64, usize> = HashMap::new();
    let mut coords: Vec<Point> = Vec::new();
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;

    let mut i = 0;
    while i < lines.len() {
        let head = lines[i].trim();
        match head {
            "$MeshFormat" => {
                let mut tok = lines
                    .get(i + 1)
                    .ok_or_else(|| parse_err(i + 1, "truncated $MeshFormat"))?
                    .split_whitespace();
                let version: f64 = num(tok.next(), i + 1, "format version")?;
                let kind: u32 = num(tok.next(), i + 1, "file type")?;
                if !(2.0..3.0).contains(&version) || kind != 0 {
                    return Err(parse_err(i + 1, "only ASCII format 2.x is supported"));
                }
                saw_format = true;
                i += 2;
            }
            "$PhysicalNames" => {
                let count: usize = num(lines.get(i + 1).map(|s| s.trim()), i + 1, "name count")?;
                for l in i + 2..i + 2 + count {
                    let row = lines.get(l).ok_or_else(|| parse_err(l, "truncated $PhysicalNames"))?;
                    let mut tok = row.split_whitespace();
                    let _dim: u32 = num(tok.next(), l, "physical dimension")?;
                    let tag: i64 = num(tok.next(), l, "physical tag")?;
                    let name = tok.collect::<Vec<_>>().join(" ");
                    names.insert(tag, name.trim_matches('"').to_string());
                }
                i += 2 + count;
            }
            "$Nodes" => {
                let count: usize = num(lines.get(i + 1).map(|s| s.trim()), i + 1, "node count")?;
                for l in i + 2..i + 2 + count {
                    let row = lines.get(l).ok_or_else(|| parse_err(l, "truncated $Nodes"))?;
                    let mut tok = row.split_whitespace();
                    let id: i64 = num(tok.next(), l, "node id")?;
                    let x: f64 = num(tok.next(), l, "x coordinate")?;
                    let y: f64 = num(tok.next(), l, "y coordinate")?;
                    let z: f64 = num(tok.next(), l, "z coordinate")?;
                    node_ids.insert(id, coords.len());
                    coords.push([x, y, z]);
                }
                i += 2 + count;
            }
            "$Elements" => {
                let count: usize =
                    num(lines.get(i + 1).map(|s| s.trim()), i + 1, "element count")?;
                for l in i + 2..i + 2 + count {
                    let row = lines.get(l).ok_or_else(|| parse_err(l, "truncated $Elements"))?;
                    let tok: Vec<&str> = row.split_whitespace().collect();
                    let mut it = tok.iter().copied();
                    let _id: i64 = num(it.next(), l, "element id")?;
                    let kind: u32 = num(it.next(), l, "element type")?;
                    let ntags: usize = num(it.next(), l, "tag count")?;
                    let mut physical = None;
                    for t in 0..ntags {
                        let v: i64 = num(it.next(), l, "element tag")?;
                        if t == 0 {
                            physical = Some(v);
                        }
                    }
                    let expected = match kind {
                        POINT => 1,
                        LINE => 2,
                        TRIANGLE => 3,
                        TETRAHEDRON => 4,
                        other => return Err(HhoError::UnsupportedElement(other)),
                    };
                    let mut nodes = Vec::with_capacity(expected);
                    for _ in 0..expected {
                        let id: i64 = num(it.next(), l, "element node")?;
                        let v = *node_ids
                            .get(&id)
                            .ok_or_else(|| parse_err(l, format!("unknown node {id}")))?;
                        nodes.push(v);
                    }
                    elements.push(Element {
                        kind,
                        physical,
                        nodes,
                    });
                }
                i += 2 + count;
            }
            _ => i += 1,
        }
    }
    if !saw_format {
        return Err(parse_err(0, "missing $MeshFormat section"));
    }
    let dim = if elements.iter().any(|e| e.kind == TETRAHEDRON) {
        3
    } else if elements.iter().any(|e| e.kind == TRIANGLE) {
        2
    } else {
        return Err(parse_err(0, "no triangle or tetrahedron elements"));
    };
    let (cell_kind, facet_kind) = if dim == 3 {
        (TETRAHEDRON, TRIANGLE)
    } else {
        (TRIANGLE, LINE)
    };

    let mut cells = Vec::new();
    let mut tags = HashMap::new();
    for e in &elements {
        if e.kind == cell_kind {
            cells.push(e.nodes.clone());
        } else if e.kind == facet_kind {
            let mut key = e.nodes.clone();
            key.sort_unstable();
            let name = match e.physical {
                Some(p) => names.get(&p).cloned().unwrap_or_else(|| p.to_string()),
                None => UNTAGGED.to_string(),
            };
            tags.insert(key, name);
        }
    }
    Mesh::from_cells(dim, coords, cells, &tags)
}

/// Serializes a mesh with its boundary tags as physical groups.
pub fn write_gmsh(mesh: &Mesh) -> String {
    let mut names: Vec<String> = mesh.tag_names();
    names.sort();
    let ids: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i + 1)).collect();
    let cell_id = names.len() + 1;
    let mut out = String::from("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$PhysicalNames\n");
    let _ = writeln!(out, "{}", names.len() + 1);
    for n in &names {
        let _ = writeln!(out, "{} {} \"{}\"", mesh.dim - 1, ids[n.as_str()], n);
    }
    let _ = writeln!(out, "{} {} \"domain\"\n$EndPhysicalNames\n$Nodes\n{}", mesh.dim, cell_id, mesh.vertices.len());
    for (i, p) in mesh.vertices.iter().enumerate() {
        let _ = writeln!(out, "{} {:.17e} {:.17e} {:.17e}", i + 1, p[0], p[1], p[2]);
    }
    let (facet_kind, cell_kind) = if mesh.dim == 3 { (TRIANGLE, TETRAHEDRON) } else { (LINE, TRIANGLE) };
    let _ = writeln!(
        out,
        "$EndNodes\n$Elements\n{}",
        mesh.boundary_tags.len() + mesh.num_cells()
    );
    let mut id = 1;
    for (&f, tag) in &mesh.boundary_tags {
        let t = ids[tag.as_str()];
        let nodes: Vec<String> = mesh.faces[f].iter().map(|v| (v + 1).to_string()).collect();
        let _ = writeln!(out, "{id} {facet_kind} 2 {t} {t} {}", nodes.join(" "));
        id += 1;
    }
    for cell in &mesh.cells {
        let nodes: Vec<String> = cell.iter().map(|v| (v + 1).to_string()).collect();
        let _ = writeln!(out, "{id} {cell_kind} 2 {cell_id} {cell_id} {}", nodes.join(" "));
        id += 1;
    }
    out.push_str("$EndElements\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_cube_mesh;

    const TET: &str = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n\
$PhysicalNames\n2\n2 1 \"bottom\"\n3 2 \"solid\"\n$EndPhysicalNames\n\
$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n\
$Elements\n2\n1 2 2 1 1 1 2 3\n2 4 2 2 2 1 2 3 4\n$EndElements\n";

    #[test]
    fn reference_tetrahedron() {
        let m = parse_gmsh(TET).unwrap();
        assert_eq!(m.dim, 3);
        assert_eq!(m.num_cells(), 1);
        assert_eq!(m.num_faces(), 4);
        assert_eq!(m.boundary_faces().count(), 4);
        let tagged: Vec<_> = m.boundary_tags.values().filter(|t| *t == "bottom").collect();
        assert_eq!(tagged.len(), 1);
        assert_eq!(m.boundary_tags.values().filter(|t| *t == UNTAGGED).count(), 3);
    }

    #[test]
    fn quadrilateral_is_unsupported() {
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n$EndNodes\n$Elements\n1\n1 3 2 1 1 1 2 3 4\n$EndElements\n";
        assert!(matches!(parse_gmsh(text), Err(HhoError::UnsupportedElement(3))));
    }

    #[test]
    fn malformed_node_is_parse_error() {
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n1\n1 0 zero 0\n$EndNodes\n";
        assert!(matches!(parse_gmsh(text), Err(HhoError::Parse { line: 6, .. })));
    }

    #[test]
    fn round_trip_is_deterministic() {
        let m = generate_cube_mesh(2);
        let text = write_gmsh(&m);
        let a = parse_gmsh(&text).unwrap();
        let b = parse_gmsh(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.faces, m.faces);
        assert_eq!(a.boundary_tags, m.boundary_tags);
    }
}
