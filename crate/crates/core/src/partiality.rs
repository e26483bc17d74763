//! Simulated single-view scans and overlap-constrained partial pairs.
//!
//! A scan normalizes the shape to the unit box, casts a square pinhole grid
//! of rays from a camera looking at the origin and keeps the faces hit
//! first. The partial shape is the largest hit component by area, with
//! vertex positions taken from the parent so it sits in the parent's pose.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::bvh::Bvh;
use crate::cache::{CachePolicy, KeyBuilder};
use crate::correspondence::{evaluate_surface_point, DenseCorrespondence};
use crate::error::{Error, Result};
use crate::geometry::{connected_components, normalize_to_unit_box, procrustes_align, BoxNormalization, RigidTransform};
use crate::mesh::{Mesh, Point, Vector};

pub const CAMERA_DISTANCE: f64 = 2.0;
pub const DEFAULT_RESOLUTION: usize = 256;
/// Retries on an empty scan before giving up.
pub const EMPTY_SCAN_RETRIES: usize = 5;
const FOV_MARGIN: f64 = 1.05;
const UP_SWITCH_ELEVATION: f64 = 85.0 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
}

impl CameraPose {
    /// Wraps the azimuth into `[0, 2π)`; rejects elevations outside
    /// `[-π/2, π/2]` and non-positive distances.
    pub fn new(azimuth: f64, elevation: f64, distance: f64) -> Result<Self> {
        if !azimuth.is_finite() || !(-FRAC_PI_2..=FRAC_PI_2).contains(&elevation) || !(distance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "camera pose ({azimuth}, {elevation}, {distance}) out of range"
            )));
        }
        Ok(Self {
            azimuth: wrap_angle(azimuth),
            elevation,
            distance,
        })
    }

    pub fn position(&self) -> Point {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        Point::new(ce * ca, ce * sa, se) * self.distance
    }

    /// Forward, right and up unit vectors of the view.
    pub fn basis(&self) -> (Vector, Vector, Vector) {
        let forward = -self.position().coords.normalize();
        let world_up = if self.elevation.abs() > UP_SWITCH_ELEVATION {
            Vector::x()
        } else {
            Vector::z()
        };
        let right = forward.cross(&world_up).normalize();
        let up = right.cross(&forward);
        (forward, right, up)
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Absolute azimuth difference on the circle, in `[0, π]`.
pub fn azimuth_disparity(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Uniform position on the sphere of radius [`CAMERA_DISTANCE`].
pub fn sample_camera(rng: &mut impl Rng) -> CameraPose {
    let azimuth = rng.random_range(0.0..TAU);
    let elevation = rng.random_range(-1.0f64..=1.0).asin();
    CameraPose {
        azimuth,
        elevation,
        distance: CAMERA_DISTANCE,
    }
}

/// Two poses whose azimuth and elevation each differ by at most `alpha`.
pub fn sample_constrained_pair(rng: &mut impl Rng, alpha: f64) -> (CameraPose, CameraPose) {
    assert!(alpha >= 0.0, "alpha must be non-negative");
    let first = sample_camera(rng);
    let mut offset = || if alpha > 0.0 { rng.random_range(-alpha..=alpha) } else { 0.0 };
    let (da, de) = (offset(), offset());
    let second = CameraPose {
        azimuth: wrap_angle(first.azimuth + da),
        elevation: (first.elevation + de).clamp(-FRAC_PI_2, FRAC_PI_2),
        distance: first.distance,
    };
    (first, second)
}

/// Sorted distinct faces hit first by a `width × height` pinhole grid of
/// rays. The field of view fits the unit box's bounding sphere with a 5%
/// margin.
pub fn cast_scan(mesh: &Mesh, camera: &CameraPose, resolution: (usize, usize)) -> Vec<usize> {
    cast_scan_bvh(&Bvh::new(mesh), camera, resolution)
}

pub fn cast_scan_bvh(bvh: &Bvh, camera: &CameraPose, (width, height): (usize, usize)) -> Vec<usize> {
    let origin = camera.position();
    let (forward, right, up) = camera.basis();
    let radius = 3f64.sqrt() / 2.0;
    let d = camera.distance.max(radius * 1.0001);
    let tan_half = FOV_MARGIN * radius / (d * d - radius * radius).sqrt();
    let mut hits: Vec<usize> = (0..height)
        .into_par_iter()
        .flat_map_iter(|j| {
            let sy = (1.0 - 2.0 * (j as f64 + 0.5) / height as f64) * tan_half;
            (0..width).filter_map(move |i| {
                let sx = (2.0 * (i as f64 + 0.5) / width as f64 - 1.0) * tan_half;
                let dir = (forward + right * sx + up * sy).normalize();
                bvh.first_hit(&origin, &dir).map(|h| h.face)
            })
        })
        .collect();
    hits.par_sort_unstable();
    hits.dedup();
    hits
}

/// Maps partial-shape coordinates of the normalized (and possibly aligned)
/// frame back to the parent's pose: `pose ∘ normalization⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Restore {
    pub normalization: BoxNormalization,
    pub pose: RigidTransform,
}

impl Restore {
    pub fn apply(&self, p: &Point) -> Point {
        self.pose.apply(&self.normalization.restore(p))
    }

    pub fn identity() -> Self {
        Self {
            normalization: BoxNormalization::identity(),
            pose: RigidTransform::identity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialMesh {
    pub mesh: Mesh,
    pub parent_id: String,
    /// Local vertex → parent vertex, strictly increasing.
    pub parent_vertex: Vec<usize>,
    /// Local face → parent face, strictly increasing; corner order is kept.
    pub parent_face: Vec<usize>,
    pub camera: CameraPose,
    pub restore: Restore,
}

impl PartialMesh {
    /// Parent face → local face lookup table.
    pub fn local_faces(&self, parent_face_count: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; parent_face_count];
        for (local, &p) in self.parent_face.iter().enumerate() {
            out[p] = Some(local);
        }
        out
    }

    pub fn local_vertices(&self, parent_vertex_count: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; parent_vertex_count];
        for (local, &p) in self.parent_vertex.iter().enumerate() {
            out[p] = Some(local);
        }
        out
    }
}

/// Keeps the largest-area component of `hit_faces` on `parent`. Vertex
/// positions are copied from `parent`, which is the restored pose.
pub fn extract_partial(parent: &Mesh, hit_faces: &[usize], camera: CameraPose, restore: Restore) -> Result<PartialMesh> {
    if hit_faces.is_empty() {
        return Err(Error::EmptyScan);
    }
    if let Some(&f) = hit_faces.iter().find(|&&f| f >= parent.face_count()) {
        return Err(Error::InvalidArgument(format!("hit face {f} out of range")));
    }
    let components = connected_components(parent, Some(hit_faces));
    let mut faces = components.into_iter().next().ok_or(Error::EmptyScan)?.faces;
    faces.sort_unstable();
    let mut local = vec![usize::MAX; parent.vertex_count()];
    let mut parent_vertex: Vec<usize> = faces.iter().flat_map(|&f| parent.faces()[f]).collect();
    parent_vertex.sort_unstable();
    parent_vertex.dedup();
    for (i, &v) in parent_vertex.iter().enumerate() {
        local[v] = i;
    }
    let vertices = parent_vertex.iter().map(|&v| *parent.vertex(v)).collect();
    let local_faces = faces.iter().map(|&f| parent.faces()[f].map(|v| local[v])).collect();
    let mut mesh = Mesh::new(format!("{}~partial", parent.id()), vertices, local_faces)?;
    mesh.meta = parent.meta.clone();
    Ok(PartialMesh {
        mesh,
        parent_id: parent.id().to_string(),
        parent_vertex,
        parent_face: faces,
        camera,
        restore,
    })
}

/// Restricts a parent-level correspondence to partial shapes. Targets whose
/// face was cut away from `target` become unmatched.
pub fn restrict_correspondence(
    corr: &DenseCorrespondence,
    source: &PartialMesh,
    target: &PartialMesh,
    target_parent_faces: usize,
) -> DenseCorrespondence {
    let lookup = target.local_faces(target_parent_faces);
    let map = source
        .parent_vertex
        .iter()
        .map(|&pv| {
            let sp = corr.map.get(pv).copied().flatten()?;
            let face = (*lookup.get(sp.face)?)?;
            Some(crate::correspondence::SurfacePoint {
                face,
                weights: sp.weights,
            })
        })
        .collect();
    DenseCorrespondence::new(source.mesh.id(), target.mesh.id(), map)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapStats {
    pub frac_x_to_y: f64,
    pub frac_y_to_x: f64,
    pub iterations_used: usize,
    pub within_range: bool,
}

/// Parent vertices and edges covered by a partial's kept faces.
struct Support {
    faces: Vec<bool>,
    vertices: Vec<bool>,
    edges: std::collections::HashSet<(usize, usize)>,
}

impl Support {
    fn new(p: &PartialMesh, parent_faces: &[crate::mesh::Face]) -> Self {
        let mut faces = vec![false; parent_faces.len()];
        let nv = parent_faces.iter().flatten().max().map_or(0, |v| v + 1);
        let mut vertices = vec![false; nv];
        let mut edges = std::collections::HashSet::new();
        for &f in &p.parent_face {
            faces[f] = true;
            let t = parent_faces[f];
            for k in 0..3 {
                vertices[t[k]] = true;
                edges.insert(crate::mesh::edge_key(t[k], t[(k + 1) % 3]));
            }
        }
        Self { faces, vertices, edges }
    }

    /// Whether the point lies on a kept face: its face is kept, or it sits
    /// on an edge or vertex of one.
    fn contains(&self, sp: &crate::correspondence::SurfacePoint, parent_faces: &[crate::mesh::Face]) -> bool {
        if self.faces.get(sp.face).copied().unwrap_or(false) {
            return true;
        }
        let Some(t) = parent_faces.get(sp.face) else { return false };
        let on: Vec<usize> = (0..3).filter(|&k| sp.weights[k] > 0.0).map(|k| t[k]).collect();
        match on[..] {
            [v] => self.vertices.get(v).copied().unwrap_or(false),
            [a, b] => self.edges.contains(&crate::mesh::edge_key(a, b)),
            _ => false,
        }
    }
}

fn mapped_fraction(src: &PartialMesh, dst: &PartialMesh, dst_parent: &[crate::mesh::Face], corr: &DenseCorrespondence) -> f64 {
    let support = Support::new(dst, dst_parent);
    let hits = src
        .parent_vertex
        .iter()
        .filter(|&&pv| matches!(corr.map.get(pv), Some(Some(sp)) if support.contains(sp, dst_parent)))
        .count();
    hits as f64 / src.mesh.vertex_count() as f64
}

/// Fraction of each partial's vertices whose parent maps onto a face kept
/// by the other partial. `parent_*` are the full shapes' face lists.
/// `iterations_used` is 1 and `within_range` false; callers that search
/// fill these in.
pub fn compute_overlap(
    px: &PartialMesh,
    py: &PartialMesh,
    parent_x: &Mesh,
    parent_y: &Mesh,
    corr_xy: &DenseCorrespondence,
    corr_yx: &DenseCorrespondence,
) -> Result<OverlapStats> {
    for (c, s, t) in [(corr_xy, px, py), (corr_yx, py, px)] {
        if c.source_id != s.parent_id || c.target_id != t.parent_id {
            return Err(Error::Correspondence {
                source_id: c.source_id.clone(),
                target_id: c.target_id.clone(),
                message: format!("expected {} -> {}", s.parent_id, t.parent_id),
            });
        }
    }
    Ok(OverlapStats {
        frac_x_to_y: mapped_fraction(px, py, parent_y.faces(), corr_xy),
        frac_y_to_x: mapped_fraction(py, px, parent_x.faces(), corr_yx),
        iterations_used: 1,
        within_range: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialParams {
    pub alpha: f64,
    pub min_overlap: f64,
    pub max_overlap: f64,
    pub max_iterations: usize,
    pub resolution: usize,
    /// Require both fractions in range instead of either.
    pub strict: bool,
}

impl Default for PartialParams {
    fn default() -> Self {
        Self {
            alpha: PI / 4.0,
            min_overlap: 0.1,
            max_overlap: 0.9,
            max_iterations: 10,
            resolution: DEFAULT_RESOLUTION,
            strict: false,
        }
    }
}

impl PartialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha {} must be non-negative", self.alpha)));
        }
        if !(0.0 <= self.min_overlap && self.min_overlap < self.max_overlap && self.max_overlap <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "overlap range [{}, {}] must satisfy 0 <= min < max <= 1",
                self.min_overlap, self.max_overlap
            )));
        }
        if self.max_iterations == 0 || self.resolution == 0 {
            return Err(Error::InvalidArgument("iterations and resolution must be positive".into()));
        }
        Ok(())
    }

    fn in_range(&self, f: f64) -> bool {
        (self.min_overlap..=self.max_overlap).contains(&f)
    }

    pub fn accepts(&self, s: &OverlapStats) -> bool {
        let (a, b) = (self.in_range(s.frac_x_to_y), self.in_range(s.frac_y_to_x));
        if self.strict {
            a && b
        } else {
            a || b
        }
    }

    /// Distance of the worse fraction from the range.
    fn miss(&self, s: &OverlapStats) -> f64 {
        let d = |f: f64| (self.min_overlap - f).max(f - self.max_overlap).max(0.0);
        d(s.frac_x_to_y).max(d(s.frac_y_to_x))
    }
}

/// Ray casting with an optional cache of hit-face sets.
#[derive(Debug, Clone, Default)]
pub struct Scanner {
    pub cache: Option<CachePolicy>,
}

impl Scanner {
    /// `normalized` must be the unit-box mesh the rays are cast against.
    pub fn scan(&self, normalized: &Mesh, bvh: &std::sync::OnceLock<Bvh>, camera: &CameraPose, resolution: usize) -> Result<Vec<usize>> {
        let compute = || Ok(cast_scan_bvh(bvh.get_or_init(|| Bvh::new(normalized)), camera, (resolution, resolution)));
        let Some(policy) = &self.cache else { return compute() };
        let key = KeyBuilder::new("raycast")
            .mesh(normalized)
            .f64(camera.azimuth)
            .f64(camera.elevation)
            .f64(camera.distance)
            .u64(resolution as u64)
            .finish();
        policy.fetch(
            &key,
            |dir| {
                let p = dir.join("faces.txt");
                let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                text.split_whitespace()
                    .map(|t| t.parse::<usize>().map_err(|e| Error::format(&p, "faces", e.to_string())))
                    .collect()
            },
            compute,
            |faces, dir| write_faces(faces, &dir.join("faces.txt")),
        )
    }
}

fn write_faces(faces: &[usize], path: &Path) -> Result<()> {
    let mut s = String::with_capacity(faces.len() * 7);
    for f in faces {
        s.push_str(&f.to_string());
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// One random single-view partial of `mesh`.
pub fn generate_partial(mesh: &Mesh, rng: &mut impl Rng, resolution: usize) -> Result<PartialMesh> {
    generate_partial_with(mesh, rng, resolution, &Scanner::default())
}

pub fn generate_partial_with(mesh: &Mesh, rng: &mut impl Rng, resolution: usize, scanner: &Scanner) -> Result<PartialMesh> {
    let (normalized, normalization) = normalize_to_unit_box(mesh)?;
    let restore = Restore {
        normalization,
        pose: RigidTransform::identity(),
    };
    let bvh = std::sync::OnceLock::new();
    for _ in 0..=EMPTY_SCAN_RETRIES {
        let camera = sample_camera(rng);
        let hits = scanner.scan(&normalized, &bvh, &camera, resolution)?;
        if !hits.is_empty() {
            return extract_partial(mesh, &hits, camera, restore);
        }
    }
    Err(Error::EmptyScan)
}

/// Outcome of the overlap-constrained search.
#[derive(Debug, Clone)]
pub struct PartialPair {
    pub x: PartialMesh,
    pub y: PartialMesh,
    pub stats: OverlapStats,
}

pub fn generate_partial_pair(
    mx: &Mesh,
    my: &Mesh,
    corr_xy: &DenseCorrespondence,
    corr_yx: &DenseCorrespondence,
    params: &PartialParams,
    rng: &mut impl Rng,
) -> Result<PartialPair> {
    generate_partial_pair_with(mx, my, corr_xy, corr_yx, params, rng, &Scanner::default())
}

/// Scans both shapes from nearby cameras until the overlap lands in range,
/// or returns the closest of `max_iterations` attempts. `my` is rigidly
/// aligned to `mx` from the correspondence so nearby cameras see the same
/// part; the emitted partials stay in the input poses.
pub fn generate_partial_pair_with(
    mx: &Mesh,
    my: &Mesh,
    corr_xy: &DenseCorrespondence,
    corr_yx: &DenseCorrespondence,
    params: &PartialParams,
    rng: &mut impl Rng,
    scanner: &Scanner,
) -> Result<PartialPair> {
    params.validate()?;
    corr_xy.validate(mx, my)?;
    corr_yx.validate(my, mx)?;
    let (mut src, mut dst) = (Vec::new(), Vec::new());
    for (v, sp) in corr_xy.map.iter().enumerate() {
        if let Some(sp) = sp {
            src.push(evaluate_surface_point(my, sp)?);
            dst.push(*mx.vertex(v));
        }
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!("only {} matched pairs for alignment", src.len())));
    }
    let align = procrustes_align(&src, &dst)?;
    let (nx, norm_x) = normalize_to_unit_box(mx)?;
    let (ny, norm_y) = normalize_to_unit_box(&align.apply_mesh(my))?;
    let restore_x = Restore {
        normalization: norm_x,
        pose: RigidTransform::identity(),
    };
    let restore_y = Restore {
        normalization: norm_y,
        pose: align.inverse(),
    };
    let (bvh_x, bvh_y) = (std::sync::OnceLock::new(), std::sync::OnceLock::new());

    let mut best: Option<(f64, PartialPair)> = None;
    for iteration in 1..=params.max_iterations {
        let (cx, cy) = sample_constrained_pair(rng, params.alpha);
        let hx = scanner.scan(&nx, &bvh_x, &cx, params.resolution)?;
        let hy = scanner.scan(&ny, &bvh_y, &cy, params.resolution)?;
        if hx.is_empty() || hy.is_empty() {
            log::debug!("empty scan on attempt {iteration}");
            continue;
        }
        let px = extract_partial(mx, &hx, cx, restore_x)?;
        let py = extract_partial(my, &hy, cy, restore_y)?;
        let mut stats = compute_overlap(&px, &py, mx, my, corr_xy, corr_yx)?;
        stats.iterations_used = iteration;
        if params.accepts(&stats) {
            stats.within_range = true;
            return Ok(PartialPair { x: px, y: py, stats });
        }
        let miss = params.miss(&stats);
        if best.as_ref().is_none_or(|(m, _)| miss < *m) {
            best = Some((miss, PartialPair { x: px, y: py, stats }));
        }
    }
    let (_, mut pair) = best.ok_or(Error::EmptyScan)?;
    pair.stats.iterations_used = params.max_iterations;
    pair.stats.within_range = false;
    Ok(pair)
}
