//! Bounding-volume hierarchy over mesh triangles.
//!
//! Serves two queries: first hit along a ray (scan simulation) and nearest
//! surface point (projection). Both return exactly what an exhaustive scan
//! over all faces returns, including tie-breaks: equal hit distances and
//! equal point distances resolve to the lowest face index.

use crate::correspondence::SurfacePoint;
use crate::geometry::closest_point_unchecked;
use crate::mesh::{Mesh, Point, Vector};

/// Parallel-ray threshold for the ray/triangle determinant.
pub const RAY_EPSILON: f64 = 1e-9;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Point,
    hi: Point,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            hi: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Point) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    /// Pads by a relative margin so rounding in the slab test can never cull
    /// a triangle that touches the box boundary.
    fn padded(mut self) -> Self {
        let pad = 1e-9 * (self.hi - self.lo).norm().max(1e-9);
        self.lo -= Vector::repeat(pad);
        self.hi += Vector::repeat(pad);
        self
    }

    fn distance_sq(&self, p: &Point) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.lo[k] {
                self.lo[k] - p[k]
            } else if p[k] > self.hi[k] {
                p[k] - self.hi[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Entry distance of the ray into the box, if it meets it before `t_max`.
    fn ray_entry(&self, origin: &Point, inv_dir: &Vector, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            if inv_dir[k].is_infinite() {
                if origin[k] < self.lo[k] || origin[k] > self.hi[k] {
                    return None;
                }
                continue;
            }
            let mut a = (self.lo[k] - origin[k]) * inv_dir[k];
            let mut b = (self.hi[k] - origin[k]) * inv_dir[k];
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub face: usize,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangles in leaf order, tagged with their face index.
    tris: Vec<(usize, [Point; 3])>,
}

impl Bvh {
    pub fn new(mesh: &Mesh) -> Self {
        let mut items: Vec<(usize, [Point; 3], Point)> = (0..mesh.face_count())
            .map(|f| {
                let t = mesh.triangle(f);
                let c = Point::from((t[0].coords + t[1].coords + t[2].coords) / 3.0);
                (f, t, c)
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * items.len() / LEAF_SIZE + 1);
        if !items.is_empty() {
            let n = items.len();
            build(&mut nodes, &mut items, 0, n);
        }
        Self {
            nodes,
            tris: items.into_iter().map(|(f, t, _)| (f, t)).collect(),
        }
    }

    pub fn face_count(&self) -> usize {
        self.tris.len()
    }

    /// Nearest hit with `t > RAY_EPSILON` along `origin + t·dir`.
    pub fn first_hit(&self, origin: &Point, dir: &Vector) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vector::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RayHit> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let t_max = best.map_or(f64::INFINITY, |h| h.t);
            let node = &self.nodes[ni];
            if node.bounds().ray_entry(origin, &inv, t_max).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for (face, tri) in &self.tris[start..end] {
                        if let Some(t) = intersect_triangle(origin, dir, tri) {
                            if better_hit(t, *face, best) {
                                best = Some(RayHit { face: *face, t });
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let tl = self.nodes[left].bounds().ray_entry(origin, &inv, t_max);
                    let tr = self.nodes[right].bounds().ray_entry(origin, &inv, t_max);
                    match (tl, tr) {
                        (Some(a), Some(b)) => {
                            // pop the nearer child first
                            if a <= b {
                                stack.push(right);
                                stack.push(left);
                            } else {
                                stack.push(left);
                                stack.push(right);
                            }
                        }
                        (Some(_), None) => stack.push(left),
                        (None, Some(_)) => stack.push(right),
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }

    /// Globally nearest surface point to `p` and its Euclidean distance.
    /// Equidistant faces resolve to the lowest face index.
    pub fn project(&self, p: &Point) -> (SurfacePoint, f64) {
        let mut best_d = f64::INFINITY;
        let mut best: Option<SurfacePoint> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds().distance_sq(p) > best_d {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for (face, [a, b, c]) in &self.tris[start..end] {
                        let (q, w) = closest_point_unchecked(p, a, b, c);
                        let d = (q - p).norm_squared();
                        if d < best_d || (d == best_d && best.is_some_and(|s| *face < s.face)) {
                            best_d = d;
                            best = Some(SurfacePoint { face: *face, weights: w });
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().distance_sq(p);
                    let dr = self.nodes[right].bounds().distance_sq(p);
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        (best.expect("non-empty mesh"), best_d.sqrt())
    }
}

fn better_hit(t: f64, face: usize, best: Option<RayHit>) -> bool {
    match best {
        None => true,
        Some(h) => t < h.t || (t == h.t && face < h.face),
    }
}

fn build(nodes: &mut Vec<Node>, items: &mut [(usize, [Point; 3], Point)], start: usize, end: usize) -> usize {
    let slice = &mut items[start..end];
    let mut bounds = Aabb::empty();
    let mut centroids = Aabb::empty();
    for (_, t, c) in slice.iter() {
        for p in t {
            bounds.grow(p);
        }
        centroids.grow(c);
    }
    let bounds = bounds.padded();
    let idx = nodes.len();
    if slice.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return idx;
    }
    let ext = centroids.hi - centroids.lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |a, b| a.2[axis].total_cmp(&b.2[axis]).then(a.0.cmp(&b.0)));
    nodes.push(Node::Leaf { bounds, start, end });
    let left = build(nodes, items, start, start + mid);
    let right = build(nodes, items, start + mid, end);
    nodes[idx] = Node::Inner { bounds, left, right };
    idx
}

/// Möller–Trumbore. Edges and corners count as hits so a ray through a
/// shared edge hits both faces at the same `t`.
pub fn intersect_triangle(origin: &Point, dir: &Vector, tri: &[Point; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < RAY_EPSILON {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - tri[0];
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv_det;
    (t > RAY_EPSILON).then_some(t)
}

/// Reference scans over every face, for validation.
pub fn first_hit_exhaustive(mesh: &Mesh, origin: &Point, dir: &Vector) -> Option<RayHit> {
    let mut best = None;
    for f in 0..mesh.face_count() {
        if let Some(t) = intersect_triangle(origin, dir, &mesh.triangle(f)) {
            if better_hit(t, f, best) {
                best = Some(RayHit { face: f, t });
            }
        }
    }
    best
}

pub fn project_exhaustive(mesh: &Mesh, p: &Point) -> (SurfacePoint, f64) {
    let mut best_d = f64::INFINITY;
    let mut best = None;
    for f in 0..mesh.face_count() {
        let [a, b, c] = mesh.triangle(f);
        let (q, w) = closest_point_unchecked(p, &a, &b, &c);
        let d = (q - p).norm_squared();
        if d < best_d {
            best_d = d;
            best = Some(SurfacePoint { face: f, weights: w });
        }
    }
    (best.expect("non-empty mesh"), best_d.sqrt())
}

/// Nearest surface point of `mesh` to `p`. Builds a throwaway index; use a
/// shared [`Bvh`] for repeated queries.
pub fn project_to_surface(p: &Point, mesh: &Mesh) -> SurfacePoint {
    Bvh::new(mesh).project(p).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::evaluate_surface_point;
    use crate::synth;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dir(rng: &mut ChaCha8Rng) -> Vector {
        loop {
            let v = Vector::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() > 1e-3 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn ray_through_interior_and_miss() {
        let m = synth::grid(2, 2, 1.0);
        let bvh = Bvh::new(&m);
        let o = Point::new(0.3, 0.2, 5.0);
        let d = Vector::new(0.0, 0.0, -1.0);
        let hit = bvh.first_hit(&o, &d).unwrap();
        assert_eq!(Some(hit), first_hit_exhaustive(&m, &o, &d));
        assert!((hit.t - 5.0).abs() < 1e-12);
        let away = Vector::new(0.0, 0.0, 1.0);
        assert_eq!(bvh.first_hit(&o, &away), None);
        assert_eq!(first_hit_exhaustive(&m, &o, &away), None);
    }

    #[test]
    fn shared_edge_hit_goes_to_lowest_face() {
        let m = synth::grid(2, 2, 1.0);
        // diagonal edge shared by faces 0 and 1
        let o = Point::new(0.5, 0.5, 1.0);
        let hit = Bvh::new(&m).first_hit(&o, &Vector::new(0.0, 0.0, -1.0)).unwrap();
        assert_eq!(hit.face, 0);
    }

    #[test]
    fn random_rays_match_exhaustive() {
        let m = synth::blob(3, 9);
        let bvh = Bvh::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hits = 0;
        for _ in 0..10_000 {
            let o = Point::from(random_dir(&mut rng) * 3.0);
            let target = Point::from(random_dir(&mut rng) * rng.random_range(0.0..1.2));
            let d = (target - o).normalize();
            let a = bvh.first_hit(&o, &d);
            let b = first_hit_exhaustive(&m, &o, &d);
            assert_eq!(a.map(|h| h.face), b.map(|h| h.face));
            hits += a.is_some() as usize;
        }
        assert!(hits > 5000);
    }

    #[test]
    fn axis_aligned_rays() {
        let m = synth::cube();
        let bvh = Bvh::new(&m);
        for d in [Vector::x(), -Vector::x(), Vector::y(), -Vector::z()] {
            let o = Point::from(-d * 3.0 + Vector::new(0.1, 0.05, 0.02));
            assert_eq!(bvh.first_hit(&o, &d).map(|h| h.face), first_hit_exhaustive(&m, &o, &d).map(|h| h.face));
            assert!(bvh.first_hit(&o, &d).is_some());
        }
    }

    #[test]
    fn projection_matches_exhaustive() {
        let m = synth::torus(30, 12, 1.0, 0.35);
        let bvh = Bvh::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let p = Point::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
            let (sp, d) = bvh.project(&p);
            let (_, d_ref) = project_exhaustive(&m, &p);
            assert_eq!(d, d_ref);
            let q = evaluate_surface_point(&m, &sp).unwrap();
            assert!(((q - p).norm() - d).abs() < 1e-12);
            assert!(sp.weights_valid());
        }
    }

    #[test]
    fn projection_of_points_on_surface_is_exact() {
        let m = synth::icosphere(2);
        let bvh = Bvh::new(&m);
        for (v, p) in m.vertices().iter().enumerate() {
            let (sp, d) = bvh.project(p);
            assert_eq!(d, 0.0);
            assert_eq!(sp.dominant_vertex(&m), v);
            // lowest incident face wins the tie
            let lowest = m.faces().iter().position(|f| f.contains(&v)).unwrap();
            assert_eq!(sp.face, lowest);
        }
        let sp = SurfacePoint { face: 17, weights: [0.2, 0.3, 0.5] };
        let p = evaluate_surface_point(&m, &sp).unwrap();
        let (back, d) = bvh.project(&p);
        assert!(d < 1e-12);
        assert!((evaluate_surface_point(&m, &back).unwrap() - p).norm() < 1e-9);
    }

    #[test]
    fn equidistant_faces_tie_to_lowest_index() {
        // two parallel unit triangles at z = ±1, query at the origin
        let v = vec![
            Point::new(0.0, 0.0, 1.0),
            Point::new(1.0, 0.0, 1.0),
            Point::new(0.0, 1.0, 1.0),
            Point::new(0.0, 0.0, -1.0),
            Point::new(1.0, 0.0, -1.0),
            Point::new(0.0, 1.0, -1.0),
        ];
        let m = Mesh::new("two", v, vec![[3, 4, 5], [0, 1, 2]]).unwrap();
        let (sp, d) = Bvh::new(&m).project(&Point::new(0.1, 0.1, 0.0));
        assert_eq!(sp.face, 0);
        assert_eq!(d, 1.0);
        assert_eq!(project_to_surface(&Point::new(0.1, 0.1, 0.0), &m).face, 0);
    }
}
