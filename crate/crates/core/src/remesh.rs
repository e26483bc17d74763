//! Quadric-error edge-collapse decimation with back-projected ground truth.
//!
//! Each vertex accumulates the area-weighted plane quadrics of its incident
//! faces; boundary edges add a heavily weighted constraint plane through the
//! edge, perpendicular to its face, so open scans keep their outlines. Edges
//! are collapsed cheapest first (ties: lowest `(min, max)` vertex pair),
//! rejecting collapses that would flip or flatten a face or violate the link
//! condition.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Matrix3;
use rand::Rng;

use crate::bvh::Bvh;
use crate::correspondence::DenseCorrespondence;
use crate::error::{Error, Result};
use crate::geometry::closest_point_unchecked;
use crate::mesh::{Face, Mesh, Point, Vector};

const BOUNDARY_WEIGHT: f64 = 1e3;
/// Collapses may rotate a neighbouring face normal by at most ~84°.
const MIN_NORMAL_COSINE: f64 = 0.1;
const SINGULAR_CONDITION: f64 = 1e12;

/// Symmetric 4×4 quadric stored as its upper triangle.
#[derive(Debug, Clone, Copy, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn plane(n: &Vector, d: f64, weight: f64) -> Self {
        let (a, b, c) = (n.x, n.y, n.z);
        Quadric(
            [a * a, a * b, a * c, a * d, b * b, b * c, b * d, c * c, c * d, d * d].map(|x| x * weight),
        )
    }

    fn add(&self, o: &Quadric) -> Quadric {
        let mut out = self.0;
        for (x, y) in out.iter_mut().zip(o.0.iter()) {
            *x += y;
        }
        Quadric(out)
    }

    fn error(&self, p: &Point) -> f64 {
        let q = &self.0;
        let (x, y, z) = (p.x, p.y, p.z);
        let e = q[0] * x * x
            + 2.0 * q[1] * x * y
            + 2.0 * q[2] * x * z
            + 2.0 * q[3] * x
            + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9];
        e.max(0.0)
    }

    /// Position minimising the quadric, if the system is well conditioned.
    fn minimizer(&self) -> Option<Point> {
        let q = &self.0;
        let a = Matrix3::new(q[0], q[1], q[2], q[1], q[4], q[5], q[2], q[5], q[7]);
        let ev = a.symmetric_eigenvalues();
        let (lo, hi) = (ev.min().abs(), ev.max().abs());
        if !(hi > 0.0) || lo * SINGULAR_CONDITION < hi {
            return None;
        }
        let x = a.try_inverse()? * Vector::new(-q[3], -q[6], -q[8]);
        x.iter().all(|c| c.is_finite()).then(|| Point::from(x))
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    edge: (usize, usize),
    target: Point,
    stamps: (u32, u32),
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: invert so the cheapest, lowest edge pops first
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.edge.cmp(&self.edge))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Outcome of one decimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct DecimationReport {
    pub requested: usize,
    pub achieved: usize,
    /// Largest quadric error of any accepted collapse.
    pub max_quadric_error: f64,
    /// Upper bound on the distance from any output vertex to the original
    /// surface: the distance to the nearest original face around the
    /// original vertices merged into it.
    pub max_deviation_bound: f64,
}

#[derive(Debug, Clone)]
pub struct Decimated {
    pub mesh: Mesh,
    pub report: DecimationReport,
}

struct Collapser<'a> {
    original: &'a Mesh,
    pos: Vec<Point>,
    quadrics: Vec<Quadric>,
    faces: Vec<Face>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<Vec<usize>>,
    alive: Vec<bool>,
    stamp: Vec<u32>,
    merged: Vec<Vec<usize>>,
    live_vertices: usize,
}

impl<'a> Collapser<'a> {
    fn new(mesh: &'a Mesh) -> Self {
        let n = mesh.vertex_count();
        let mut quadrics = vec![Quadric::default(); n];
        for f in mesh.faces() {
            let [a, b, c] = [mesh.vertex(f[0]), mesh.vertex(f[1]), mesh.vertex(f[2])];
            let cross = (b - a).cross(&(c - a));
            let area2 = cross.norm();
            if area2 == 0.0 {
                continue;
            }
            let nrm = cross / area2;
            let q = Quadric::plane(&nrm, -nrm.dot(&a.coords), 0.5 * area2);
            for &v in f {
                quadrics[v] = quadrics[v].add(&q);
            }
        }
        for ((a, b), fs) in sorted_edges(mesh) {
            if fs.len() != 1 {
                continue;
            }
            let f = mesh.faces()[fs[0]];
            let [p0, p1, p2] = [mesh.vertex(f[0]), mesh.vertex(f[1]), mesh.vertex(f[2])];
            let fnrm = (p1 - p0).cross(&(p2 - p0));
            let dir = mesh.vertex(b) - mesh.vertex(a);
            let len2 = dir.norm_squared();
            let n = dir.cross(&fnrm);
            if n.norm() == 0.0 || len2 == 0.0 {
                continue;
            }
            let n = n.normalize();
            let q = Quadric::plane(&n, -n.dot(&mesh.vertex(a).coords), BOUNDARY_WEIGHT * len2);
            quadrics[a] = quadrics[a].add(&q);
            quadrics[b] = quadrics[b].add(&q);
        }
        let mut referenced = vec![false; n];
        for f in mesh.faces() {
            for &v in f {
                referenced[v] = true;
            }
        }
        Self {
            original: mesh,
            pos: mesh.vertices().to_vec(),
            quadrics,
            faces: mesh.faces().to_vec(),
            face_alive: vec![true; mesh.face_count()],
            vertex_faces: mesh.vertex_faces(),
            alive: vec![true; n],
            stamp: vec![0; n],
            merged: (0..n).map(|v| vec![v]).collect(),
            live_vertices: n,
        }
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.vertex_faces[v]
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&w| w != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn candidate(&self, u: usize, v: usize) -> Candidate {
        let (u, v) = (u.min(v), u.max(v));
        let q = self.quadrics[u].add(&self.quadrics[v]);
        let (target, cost) = match q.minimizer() {
            Some(p) => (p, q.error(&p)),
            None => {
                let mid = Point::from((self.pos[u].coords + self.pos[v].coords) * 0.5);
                [mid, self.pos[u], self.pos[v]]
                    .into_iter()
                    .map(|p| (p, q.error(&p)))
                    .fold(None, |best: Option<(Point, f64)>, c| match best {
                        Some(b) if b.1 <= c.1 => Some(b),
                        _ => Some(c),
                    })
                    .expect("three options")
            }
        };
        Candidate {
            cost,
            edge: (u, v),
            target,
            stamps: (self.stamp[u], self.stamp[v]),
        }
    }

    /// Link condition plus normal-flip and degeneracy checks.
    fn can_collapse(&self, u: usize, v: usize, target: &Point) -> bool {
        let shared: Vec<usize> = self.vertex_faces[u]
            .iter()
            .copied()
            .filter(|f| self.faces[*f].contains(&v))
            .collect();
        if shared.is_empty() || shared.len() > 2 {
            return false;
        }
        let nu = self.neighbors(u);
        let nv = self.neighbors(v);
        let common = nu.iter().filter(|w| nv.binary_search(w).is_ok()).count();
        if common != shared.len() {
            return false;
        }
        // a boundary edge whose endpoints are both on other boundaries would pinch
        for (w, others) in [(u, v), (v, u)] {
            for &f in &self.vertex_faces[w] {
                let face = self.faces[f];
                if face.contains(&others) {
                    continue;
                }
                let old = self.face_normal(&face, None);
                let new = self.face_normal(&face, Some((w, target)));
                let (on, nn) = (old.norm(), new.norm());
                let scale = face
                    .iter()
                    .map(|&i| (self.pos[i] - target).norm_squared())
                    .fold(0.0, f64::max);
                if nn <= 1e-12 * scale || on == 0.0 {
                    return false;
                }
                if old.dot(&new) / (on * nn) < MIN_NORMAL_COSINE {
                    return false;
                }
            }
        }
        true
    }

    fn face_normal(&self, face: &Face, moved: Option<(usize, &Point)>) -> Vector {
        let p = |i: usize| match moved {
            Some((w, t)) if w == i => *t,
            _ => self.pos[i],
        };
        let (a, b, c) = (p(face[0]), p(face[1]), p(face[2]));
        (b - a).cross(&(c - a))
    }

    /// Merge `v` into `u` at `target`.
    fn collapse(&mut self, u: usize, v: usize, target: Point) {
        for f in std::mem::take(&mut self.vertex_faces[v]) {
            if self.faces[f].contains(&u) {
                self.face_alive[f] = false;
                for w in self.faces[f] {
                    if w != v {
                        self.vertex_faces[w].retain(|&g| g != f);
                    }
                }
            } else {
                for slot in self.faces[f].iter_mut() {
                    if *slot == v {
                        *slot = u;
                    }
                }
                self.vertex_faces[u].push(f);
            }
        }
        self.vertex_faces[u].sort_unstable();
        self.pos[u] = target;
        self.quadrics[u] = self.quadrics[u].add(&self.quadrics[v]);
        let moved = std::mem::take(&mut self.merged[v]);
        self.merged[u].extend(moved);
        self.alive[v] = false;
        self.stamp[u] += 1;
        self.stamp[v] += 1;
        self.live_vertices -= 1;
    }

    fn run(mut self, target: usize) -> Decimated {
        let mut heap = BinaryHeap::new();
        for ((a, b), _) in sorted_edges(self.original) {
            heap.push(self.candidate(a, b));
        }
        let mut max_cost: f64 = 0.0;
        while self.live_vertices > target {
            let Some(c) = heap.pop() else { break };
            let (u, v) = c.edge;
            if !self.alive[u] || !self.alive[v] || c.stamps != (self.stamp[u], self.stamp[v]) {
                continue;
            }
            if !self.can_collapse(u, v, &c.target) {
                continue;
            }
            self.collapse(u, v, c.target);
            max_cost = max_cost.max(c.cost);
            for w in self.neighbors(u) {
                heap.push(self.candidate(u, w));
            }
        }
        self.finish(target, max_cost)
    }

    fn finish(self, requested: usize, max_quadric_error: f64) -> Decimated {
        let mut remap = vec![usize::MAX; self.pos.len()];
        let mut vertices = Vec::with_capacity(self.live_vertices);
        for v in 0..self.pos.len() {
            if self.alive[v] {
                remap[v] = vertices.len();
                vertices.push(self.pos[v]);
            }
        }
        let faces: Vec<Face> = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, a)| **a)
            .map(|(f, _)| f.map(|i| remap[i]))
            .collect();

        let original_vf = self.original.vertex_faces();
        let mut bound: f64 = 0.0;
        for v in 0..self.pos.len() {
            if !self.alive[v] {
                continue;
            }
            let p = self.pos[v];
            let mut best = f64::INFINITY;
            for &ov in &self.merged[v] {
                for &f in &original_vf[ov] {
                    let [a, b, c] = self.original.triangle(f);
                    let (q, _) = closest_point_unchecked(&p, &a, &b, &c);
                    best = best.min((q - p).norm());
                }
                if original_vf[ov].is_empty() {
                    best = best.min((self.original.vertex(ov) - p).norm());
                }
            }
            bound = bound.max(best);
        }
        let achieved = vertices.len();
        let mut mesh = Mesh::new(format!("{}@{}", self.original.id(), achieved), vertices, faces)
            .expect("collapses keep the mesh valid");
        mesh.meta = self.original.meta.clone();
        Decimated {
            mesh,
            report: DecimationReport {
                requested,
                achieved,
                max_quadric_error,
                max_deviation_bound: bound,
            },
        }
    }
}

fn sorted_edges(mesh: &Mesh) -> Vec<((usize, usize), Vec<usize>)> {
    let mut v: Vec<_> = mesh.edge_faces().into_iter().collect();
    v.sort_unstable_by_key(|(k, _)| *k);
    v
}

/// Quadric decimation down to `target_vertices`. Stops early, with the
/// achieved count in the report, when no valid collapse remains.
pub fn decimate(mesh: &Mesh, target_vertices: usize) -> Result<Decimated> {
    if target_vertices < 4 || target_vertices > mesh.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "target {target_vertices} outside 4..={}",
            mesh.vertex_count()
        )));
    }
    if target_vertices == mesh.vertex_count() {
        return Ok(Decimated {
            mesh: mesh.clone(),
            report: DecimationReport {
                requested: target_vertices,
                achieved: target_vertices,
                max_quadric_error: 0.0,
                max_deviation_bound: 0.0,
            },
        });
    }
    Ok(Collapser::new(mesh).run(target_vertices))
}

/// Nearest point on `original` for every vertex of `decimated`, with the
/// projection distances.
pub fn back_correspondence_with_distances(decimated: &Mesh, original: &Mesh) -> (DenseCorrespondence, Vec<f64>) {
    let bvh = Bvh::new(original);
    let (map, dist): (Vec<_>, Vec<_>) = decimated
        .vertices()
        .iter()
        .map(|p| {
            let (sp, d) = bvh.project(p);
            (Some(sp), d)
        })
        .unzip();
    (DenseCorrespondence::new(decimated.id(), original.id(), map), dist)
}

pub fn back_correspondence(decimated: &Mesh, original: &Mesh) -> DenseCorrespondence {
    back_correspondence_with_distances(decimated, original).0
}

#[derive(Debug, Clone)]
pub struct RemeshResult {
    pub mesh: Mesh,
    /// Decimated vertex → point on the input mesh; never unmatched.
    pub to_original: DenseCorrespondence,
    pub target_count: usize,
    pub report: DecimationReport,
}

/// Remesh to a vertex count drawn uniformly from `[lo, hi]`. Inputs that
/// already have at most `lo` vertices are returned unchanged with the
/// identity correspondence.
pub fn remesh_with_correspondence(mesh: &Mesh, (lo, hi): (usize, usize), rng: &mut impl Rng) -> Result<RemeshResult> {
    if lo > hi || lo < 4 {
        return Err(Error::InvalidArgument(format!("invalid vertex range [{lo}, {hi}]")));
    }
    let drawn = rng.random_range(lo..=hi);
    if mesh.vertex_count() <= lo {
        let n = mesh.vertex_count();
        return Ok(RemeshResult {
            mesh: mesh.clone(),
            to_original: DenseCorrespondence::identity(mesh),
            target_count: n,
            report: DecimationReport {
                requested: n,
                achieved: n,
                max_quadric_error: 0.0,
                max_deviation_bound: 0.0,
            },
        });
    }
    let target = drawn.min(mesh.vertex_count());
    let dec = decimate(mesh, target)?;
    let to_original = if target == mesh.vertex_count() {
        DenseCorrespondence::identity(mesh)
    } else {
        back_correspondence(&dec.mesh, mesh)
    };
    Ok(RemeshResult {
        mesh: dec.mesh,
        to_original,
        target_count: target,
        report: dec.report,
    })
}
