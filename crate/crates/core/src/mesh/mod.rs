//! Indexed triangle meshes.
//!
//! A [`Mesh`] is immutable once built: every constructor validates the
//! index and finiteness invariants, and transforms return new meshes with
//! the same connectivity.

mod io;

use std::collections::HashMap;
use std::fmt;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

pub use io::{load_mesh, save_mesh, save_mesh_with_colors, MeshFormat};

pub type Point = Point3<f64>;
pub type Vector = Vector3<f64>;
pub type Face = [usize; 3];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MeshMeta {
    pub dataset: String,
    pub category: String,
    pub template: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    id: String,
    vertices: Vec<Point>,
    faces: Vec<Face>,
    pub meta: MeshMeta,
}

impl Mesh {
    /// Builds a mesh, rejecting out-of-range indices, repeated indices within
    /// a face, non-finite positions and face-less (point cloud) input.
    pub fn new(id: impl Into<String>, vertices: Vec<Point>, faces: Vec<Face>) -> Result<Self> {
        let n = vertices.len();
        if faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no faces".into()));
        }
        if let Some(i) = vertices
            .iter()
            .position(|v| !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()))
        {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        let out_of_range: Vec<usize> = faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.iter().any(|&i| i >= n))
            .map(|(i, _)| i)
            .collect();
        if !out_of_range.is_empty() {
            return Err(Error::InvalidMesh(format!(
                "faces {out_of_range:?} reference vertices outside 0..{n}"
            )));
        }
        let degenerate: Vec<usize> = faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
            .map(|(i, _)| i)
            .collect();
        if !degenerate.is_empty() {
            return Err(Error::DegenerateFaces { faces: degenerate });
        }
        Ok(Self {
            id: id.into(),
            vertices,
            faces,
            meta: MeshMeta::default(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertex(&self, i: usize) -> &Point {
        &self.vertices[i]
    }

    pub fn triangle(&self, face: usize) -> [Point; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Same connectivity, new positions. Panics if the lengths differ.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Self {
        assert_eq!(vertices.len(), self.vertices.len());
        Self {
            id: self.id.clone(),
            vertices,
            faces: self.faces.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn map_vertices(&self, f: impl Fn(&Point) -> Point) -> Self {
        self.with_vertices(self.vertices.iter().map(f).collect())
    }

    /// Axis-aligned bounds as (min, max).
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn bounding_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    /// For every vertex, the faces that reference it, ascending.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                out[v].push(fi);
            }
        }
        out
    }

    /// Undirected edges with the faces incident to each, keyed by
    /// (smaller, larger) vertex index.
    pub fn edge_faces(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                map.entry(edge_key(f[k], f[(k + 1) % 3])).or_default().push(fi);
            }
        }
        map
    }

    /// Unique undirected edges sorted ascending.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| edge_key(f[k], f[(k + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    pub fn validate(&self) -> ValidationReport {
        let edge_faces = self.edge_faces();
        let mut report = ValidationReport {
            vertices: self.vertex_count(),
            faces: self.face_count(),
            ..Default::default()
        };
        let mut referenced = vec![false; self.vertex_count()];
        for f in &self.faces {
            for &v in f {
                referenced[v] = true;
            }
        }
        report.unreferenced_vertices = referenced.iter().filter(|r| !**r).count();
        let mut keys: Vec<_> = edge_faces.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let faces = &edge_faces[&key];
            match faces.len() {
                1 => report.boundary_edges += 1,
                2 => {
                    let d0 = directed(&self.faces[faces[0]], key);
                    let d1 = directed(&self.faces[faces[1]], key);
                    if d0 == d1 {
                        report.inconsistent_winding.push(key);
                    }
                }
                _ => report.non_manifold_edges.push(key),
            }
        }
        report.components = crate::geometry::connected_components(self, None).len();
        report
    }
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// True when the face traverses the edge from the smaller to the larger index.
fn directed(face: &Face, (a, b): (usize, usize)) -> bool {
    (0..3).any(|k| face[k] == a && face[(k + 1) % 3] == b)
}

/// Structural problems that do not prevent loading.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub vertices: usize,
    pub faces: usize,
    pub components: usize,
    pub boundary_edges: usize,
    pub unreferenced_vertices: usize,
    pub non_manifold_edges: Vec<(usize, usize)>,
    pub inconsistent_winding: Vec<(usize, usize)>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.non_manifold_edges.is_empty() && self.inconsistent_winding.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "vertices {}", self.vertices)?;
        writeln!(f, "faces {}", self.faces)?;
        writeln!(f, "components {}", self.components)?;
        writeln!(f, "boundary_edges {}", self.boundary_edges)?;
        writeln!(f, "unreferenced_vertices {}", self.unreferenced_vertices)?;
        writeln!(f, "non_manifold_edges {}", self.non_manifold_edges.len())?;
        for (a, b) in &self.non_manifold_edges {
            writeln!(f, "non_manifold_edge {a} {b}")?;
        }
        writeln!(f, "inconsistent_winding {}", self.inconsistent_winding.len())?;
        for (a, b) in &self.inconsistent_winding {
            writeln!(f, "inconsistent_winding_edge {a} {b}")?;
        }
        writeln!(f, "status {}", if self.is_clean() { "ok" } else { "warn" })
    }
}
