//! Geometric primitives shared by every stage: areas, components,
//! closest points, rigid alignment and normalising transforms.

use std::collections::HashMap;

use nalgebra::{Matrix3, Rotation3};

use crate::error::{Error, Result};
use crate::mesh::{edge_key, Mesh, Point, Vector};

pub fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

pub fn face_area(mesh: &Mesh, face: usize) -> f64 {
    let [a, b, c] = mesh.triangle(face);
    triangle_area(&a, &b, &c)
}

pub fn surface_area(mesh: &Mesh) -> f64 {
    (0..mesh.face_count()).map(|f| face_area(mesh, f)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Face indices, ascending.
    pub faces: Vec<usize>,
    pub area: f64,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller root so labels are deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Edge-connected components of the mesh, or of `face_subset` when given.
/// Faces are adjacent when they share a vertex pair, so non-manifold fans
/// join a single component. Sorted by area, largest first; equal areas are
/// ordered by their smallest face index.
pub fn connected_components(mesh: &Mesh, face_subset: Option<&[usize]>) -> Vec<Component> {
    let faces: Vec<usize> = match face_subset {
        Some(s) => {
            let mut s = s.to_vec();
            s.sort_unstable();
            s.dedup();
            s
        }
        None => (0..mesh.face_count()).collect(),
    };
    let mut uf = UnionFind::new(faces.len());
    let mut first_on_edge: HashMap<(usize, usize), usize> = HashMap::new();
    for (slot, &fi) in faces.iter().enumerate() {
        let f = mesh.faces()[fi];
        for k in 0..3 {
            let key = edge_key(f[k], f[(k + 1) % 3]);
            match first_on_edge.get(&key) {
                Some(&other) => uf.union(slot, other),
                None => {
                    first_on_edge.insert(key, slot);
                }
            }
        }
    }
    let mut groups: HashMap<usize, Component> = HashMap::new();
    for (slot, &fi) in faces.iter().enumerate() {
        let root = uf.find(slot);
        let c = groups.entry(root).or_insert_with(|| Component {
            faces: Vec::new(),
            area: 0.0,
        });
        c.faces.push(fi);
        c.area += face_area(mesh, fi);
    }
    let mut out: Vec<Component> = groups.into_values().collect();
    out.sort_by(|a, b| b.area.total_cmp(&a.area).then(a.faces[0].cmp(&b.faces[0])));
    out
}

/// Closest point of triangle `abc` to `p` with its barycentric weights.
/// Errors on a zero-area triangle.
pub fn closest_point_on_triangle(p: &Point, a: &Point, b: &Point, c: &Point) -> Result<(Point, [f64; 3])> {
    let ab = b - a;
    let ac = c - a;
    let scale = ab.norm_squared().max(ac.norm_squared()).max((c - b).norm_squared());
    if ab.cross(&ac).norm() <= 1e-14 * scale || scale == 0.0 {
        return Err(Error::Degenerate("triangle has zero area".into()));
    }
    Ok(closest_point_unchecked(p, a, b, c))
}

/// Region-based closest point (Ericson). Zero-area triangles fall back to
/// the closest of their three edges.
pub(crate) fn closest_point_unchecked(p: &Point, a: &Point, b: &Point, c: &Point) -> (Point, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return from_weights(a, b, c, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return from_weights(a, b, c, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return from_weights(a, b, c, [0.0, 1.0 - w, w]);
    }
    let sum = va + vb + vc;
    if !(sum > 0.0) || !sum.is_finite() {
        return closest_on_edges(p, a, b, c);
    }
    let v = vb / sum;
    let w = vc / sum;
    from_weights(a, b, c, [1.0 - v - w, v, w])
}

fn closest_on_edges(p: &Point, a: &Point, b: &Point, c: &Point) -> (Point, [f64; 3]) {
    let seg = |s: &Point, e: &Point| {
        let d = e - s;
        let len2 = d.norm_squared();
        if len2 > 0.0 {
            ((p - s).dot(&d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    let t_ab = seg(a, b);
    let t_bc = seg(b, c);
    let t_ca = seg(c, a);
    let candidates = [
        [1.0 - t_ab, t_ab, 0.0],
        [0.0, 1.0 - t_bc, t_bc],
        [t_ca, 0.0, 1.0 - t_ca],
    ];
    candidates
        .into_iter()
        .map(|w| from_weights(a, b, c, w))
        .min_by(|x, y| (x.0 - p).norm_squared().total_cmp(&(y.0 - p).norm_squared()))
        .expect("three candidates")
}

fn from_weights(a: &Point, b: &Point, c: &Point, w: [f64; 3]) -> (Point, [f64; 3]) {
    let mut w = w.map(|x| x.max(0.0));
    let s = w[0] + w[1] + w[2];
    if s != 1.0 {
        w = w.map(|x| x / s);
    }
    (blend(a, b, c, &w), w)
}

/// `w0·a + w1·b + w2·c`, exact for one-hot weights.
pub fn blend(a: &Point, b: &Point, c: &Point, w: &[f64; 3]) -> Point {
    Point::from(a.coords * w[0] + b.coords * w[1] + c.coords * w[2])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector::zeros(),
        }
    }

    /// Rejects rotations that are not orthonormal with determinant +1 (1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vector) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if ortho > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("rotation is not proper orthonormal".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn about_z(angle: f64) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector::z_axis(), angle).matrix(),
            translation: Vector::zeros(),
        }
    }

    pub fn apply(&self, p: &Point) -> Point {
        Point::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_mesh(&self, mesh: &Mesh) -> Mesh {
        mesh.map_vertices(|p| self.apply(p))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Least-squares rigid motion (no scale) taking `src` onto `dst`, via the
/// SVD of the centred cross-covariance with a reflection guard.
pub fn procrustes_align(src: &[Point], dst: &[Point]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::InvalidArgument(format!(
            "{} source points vs {} targets",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::Degenerate("procrustes needs at least 3 point pairs".into()));
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector::zeros(), |acc, p| acc + p.coords) / n;
    let cd = dst.iter().fold(Vector::zeros(), |acc, p| acc + p.coords) / n;
    let mut h = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let s = s.coords - cs;
        h += s * (d.coords - cd).transpose();
        scatter += s * s.transpose();
    }
    let mut spread: Vec<f64> = scatter.symmetric_eigenvalues().iter().copied().collect();
    spread.sort_by(|a, b| b.total_cmp(a));
    if !(spread[0] > 0.0) || spread[1] <= 1e-12 * spread[0] {
        return Err(Error::Degenerate("source points are collinear or coincident".into()));
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector::new(1.0, 1.0, d));
    let rotation = v * fix * u.transpose();
    let translation = cd - rotation * cs;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

/// Sum of squared distances between transformed `src` and `dst`.
pub fn alignment_residual(t: &RigidTransform, src: &[Point], dst: &[Point]) -> f64 {
    src.iter()
        .zip(dst)
        .map(|(s, d)| (t.apply(s) - d).norm_squared())
        .sum()
}

pub fn rotate_z(mesh: &Mesh, angle: f64) -> Mesh {
    RigidTransform::about_z(angle).apply_mesh(mesh)
}

/// Uniform scale about a centre: `normalized = (p - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxNormalization {
    pub center: Point,
    pub scale: f64,
}

impl BoxNormalization {
    pub fn identity() -> Self {
        Self {
            center: Point::origin(),
            scale: 1.0,
        }
    }

    pub fn forward(&self, p: &Point) -> Point {
        Point::from((p - self.center) * self.scale)
    }

    /// Inverse of [`forward`](Self::forward): back to the original pose.
    pub fn restore(&self, p: &Point) -> Point {
        self.center + p.coords / self.scale
    }
}

/// Centres the bounding box at the origin and scales its longest side to 1.
pub fn normalize_to_unit_box(mesh: &Mesh) -> Result<(Mesh, BoxNormalization)> {
    let (lo, hi) = mesh.bounds();
    let extent = (hi - lo).max();
    if !(extent > 0.0) {
        return Err(Error::Degenerate("mesh has zero extent".into()));
    }
    let norm = BoxNormalization {
        center: nalgebra::center(&lo, &hi),
        scale: 1.0 / extent,
    };
    Ok((mesh.map_vertices(|p| norm.forward(p)), norm))
}

/// Uniformly scales about the origin to unit surface area.
pub fn normalize_area(mesh: &Mesh) -> Result<Mesh> {
    let area = surface_area(mesh);
    if !(area > 0.0) {
        return Err(Error::Degenerate("mesh has zero area".into()));
    }
    let s = 1.0 / area.sqrt();
    Ok(mesh.map_vertices(|p| p * s))
}

pub fn scale_mesh(mesh: &Mesh, factor: f64) -> Mesh {
    mesh.map_vertices(|p| p * factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn p(x: f64, y: f64, z: f64) -> Point {
        Point::new(x, y, z)
    }

    #[test]
    fn unit_square_area_and_scaling() {
        let sq = synth::grid(2, 2, 1.0);
        assert!((surface_area(&sq) - 1.0).abs() < 1e-15);
        let s = 3.5;
        assert!((surface_area(&scale_mesh(&sq, s)) - s * s).abs() < 1e-12);
    }

    #[test]
    fn icosphere_area_matches_cross_product_sum() {
        let m = synth::icosphere(3);
        assert_eq!(m.face_count(), 1280);
        // independent accumulation in a different order and form
        let mut oracle = 0.0;
        for f in m.faces().iter().rev() {
            let (a, b, c) = (m.vertex(f[0]), m.vertex(f[1]), m.vertex(f[2]));
            let u = [b.x - a.x, b.y - a.y, b.z - a.z];
            let v = [c.x - a.x, c.y - a.y, c.z - a.z];
            let cr = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
            oracle += (cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2]).sqrt() / 2.0;
        }
        assert!((surface_area(&m) - oracle).abs() < 1e-12);
        assert!(surface_area(&m) < 4.0 * PI);
    }

    #[test]
    fn components_of_touching_and_disjoint_triangles() {
        let v = vec![p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(1., 1., 0.)];
        let joined = Mesh::new("a", v.clone(), vec![[0, 1, 2], [2, 1, 3]]).unwrap();
        assert_eq!(connected_components(&joined, None).len(), 1);
        let mut v2 = v;
        v2.extend([p(5., 0., 0.), p(6., 0., 0.), p(5., 1., 0.)]);
        let apart = Mesh::new("b", v2, vec![[0, 1, 2], [4, 5, 6]]).unwrap();
        let comps = connected_components(&apart, None);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].faces, vec![0]);
    }

    /// Independent component labelling by repeated flood fill over a face
    /// adjacency built from sorted edge lists.
    fn flood_components(mesh: &Mesh, subset: &[usize]) -> Vec<Vec<usize>> {
        let mut edges: Vec<((usize, usize), usize)> = Vec::new();
        for &fi in subset {
            let f = mesh.faces()[fi];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edges.push(((a.min(b), a.max(b)), fi));
            }
        }
        edges.sort();
        let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
        for w in edges.windows(2) {
            if w[0].0 == w[1].0 {
                adj.entry(w[0].1).or_default().push(w[1].1);
                adj.entry(w[1].1).or_default().push(w[0].1);
            }
        }
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for &start in subset {
            if !seen.insert(start) {
                continue;
            }
            let mut comp = vec![start];
            let mut stack = vec![start];
            while let Some(f) = stack.pop() {
                for &g in adj.get(&f).into_iter().flatten() {
                    if seen.insert(g) {
                        comp.push(g);
                        stack.push(g);
                    }
                }
            }
            comp.sort();
            out.push(comp);
        }
        out.sort();
        out
    }

    #[test]
    fn torus_minus_ring_splits_in_two() {
        let torus = synth::torus(24, 12, 1.0, 0.3);
        // drop two rings of faces on opposite sides: leaves two tubes
        let ring_faces = 12 * 2;
        let subset: Vec<usize> = (0..torus.face_count())
            .filter(|f| {
                let ring = f / ring_faces;
                ring != 0 && ring != 12
            })
            .collect();
        let comps = connected_components(&torus, Some(&subset));
        assert_eq!(comps.len(), 2);
        let mut union: Vec<usize> = comps.iter().flat_map(|c| c.faces.clone()).collect();
        union.sort();
        assert_eq!(union, subset);
        let mut mine: Vec<Vec<usize>> = comps.into_iter().map(|c| c.faces).collect();
        mine.sort();
        assert_eq!(mine, flood_components(&torus, &subset));
    }

    #[test]
    fn closest_point_special_cases() {
        let (a, b, c) = (p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.));
        let (q, w) = closest_point_on_triangle(&a, &a, &b, &c).unwrap();
        assert_eq!(w, [1.0, 0.0, 0.0]);
        assert_eq!(q, a);
        let centroid = p(1. / 3., 1. / 3., 2.0);
        let (q, w) = closest_point_on_triangle(&centroid, &a, &b, &c).unwrap();
        for x in w {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(q.z.abs() < 1e-15);
        assert!(closest_point_on_triangle(&a, &a, &b, &p(2., 0., 0.)).is_err());
    }

    #[test]
    fn closest_point_matches_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = p(rng.random(), rng.random(), rng.random());
            let b = p(rng.random(), rng.random(), rng.random());
            let c = p(rng.random(), rng.random(), rng.random());
            let q = p(2.0 * rng.random::<f64>() - 0.5, 2.0 * rng.random::<f64>() - 0.5, rng.random());
            let (cp, w) = closest_point_on_triangle(&q, &a, &b, &c).unwrap();
            let mut best = f64::INFINITY;
            for _ in 0..1_000_000 {
                // rejection sampling on the unit square folded onto the simplex
                let (u, v): (f64, f64) = (rng.random(), rng.random());
                if u + v > 1.0 {
                    continue;
                }
                let s = a + (b - a) * u + (c - a) * v;
                best = best.min((s - q).norm());
            }
            let d = (cp - q).norm();
            assert!(d <= best + 1e-12);
            assert!((d - best).abs() < 1e-3, "{d} vs {best}");
            let back = blend(&a, &b, &c, &w);
            assert!((back - cp).norm() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn closest_point_weights_are_convex(
            coords in prop::collection::vec(-10.0f64..10.0, 12)
        ) {
            let a = p(coords[0], coords[1], coords[2]);
            let b = p(coords[3], coords[4], coords[5]);
            let c = p(coords[6], coords[7], coords[8]);
            let q = p(coords[9], coords[10], coords[11]);
            let (cp, w) = closest_point_unchecked(&q, &a, &b, &c);
            prop_assert!(w.iter().all(|x| *x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!((blend(&a, &b, &c, &w) - cp).norm() < 1e-9);
            // no corner is closer than the returned point
            for corner in [a, b, c] {
                prop_assert!((cp - q).norm() <= (corner - q).norm() + 1e-9);
            }
        }
    }

    #[test]
    fn procrustes_identity_and_constructed_motion() {
        let src: Vec<Point> = synth::icosphere(1).vertices().to_vec();
        let t = procrustes_align(&src, &src).unwrap();
        assert!((t.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(t.translation.norm() < 1e-12);

        let truth = RigidTransform {
            rotation: RigidTransform::about_z(PI / 2.0).rotation,
            translation: Vector::new(1.0, 2.0, 3.0),
        };
        let dst: Vec<Point> = src.iter().map(|q| truth.apply(q)).collect();
        let t = procrustes_align(&src, &dst).unwrap();
        assert!((t.rotation - truth.rotation).abs().max() < 1e-9);
        assert!((t.translation - truth.translation).norm() < 1e-9);
        assert!(RigidTransform::new(t.rotation, t.translation).is_ok());
    }

    #[test]
    fn procrustes_rejects_collinear() {
        let src = vec![p(0., 0., 0.), p(1., 0., 0.), p(2., 0., 0.), p(3., 0., 0.)];
        assert!(procrustes_align(&src, &src).is_err());
        assert!(procrustes_align(&src[..2], &src[..2]).is_err());
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let axis = Vector::new(
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        );
        let axis = nalgebra::Unit::new_normalize(axis);
        *Rotation3::from_axis_angle(&axis, rng.random::<f64>() * 2.0 * PI).matrix()
    }

    #[test]
    fn procrustes_beats_random_search_on_noisy_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src: Vec<Point> = synth::icosphere(1).vertices().to_vec();
        let truth = RigidTransform {
            rotation: random_rotation(&mut rng),
            translation: Vector::new(0.3, -0.2, 0.5),
        };
        let normal = rand_distr_normal();
        let dst: Vec<Point> = src
            .iter()
            .map(|q| {
                let n = Vector::new(normal(&mut rng), normal(&mut rng), normal(&mut rng)) * 0.01;
                truth.apply(q) + n
            })
            .collect();
        let best = alignment_residual(&procrustes_align(&src, &dst).unwrap(), &src, &dst);
        assert!(best >= 0.0);
        for _ in 0..100_000 {
            let cand = RigidTransform {
                rotation: random_rotation(&mut rng),
                translation: Vector::new(rng.random(), rng.random(), rng.random()) - Vector::repeat(0.5),
            };
            assert!(best <= alignment_residual(&cand, &src, &dst));
        }
        // a perturbation of the truth is also no better
        assert!(best <= alignment_residual(&truth, &src, &dst) + 1e-15);
    }

    /// Box–Muller, to avoid pulling in a distributions crate for one test.
    fn rand_distr_normal() -> impl Fn(&mut ChaCha8Rng) -> f64 {
        |rng| {
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
        }
    }

    #[test]
    fn rotate_z_properties() {
        let m = synth::torus(12, 8, 1.0, 0.25).map_vertices(|q| q + Vector::new(0.3, 0.1, 0.7));
        assert_eq!(rotate_z(&m, 0.0), m);
        let full = rotate_z(&m, 2.0 * PI);
        for (a, b) in full.vertices().iter().zip(m.vertices()) {
            assert!((a - b).norm() < 1e-12);
        }
        let a0 = surface_area(&m);
        for ang in [0.3, 1.7, 4.0] {
            let r = rotate_z(&m, ang);
            assert!((surface_area(&r) - a0).abs() < 1e-9);
            assert_eq!(r.faces(), m.faces());
        }
    }

    #[test]
    fn unit_box_normalisation() {
        let cube = synth::cube();
        let (n, d) = normalize_to_unit_box(&cube).unwrap();
        assert_eq!(n, cube);
        assert_eq!(d, BoxNormalization::identity());

        let moved = cube.map_vertices(|q| Point::from(q.coords * 5.0) + Vector::new(10.0, 0.0, 0.0));
        let (n, d) = normalize_to_unit_box(&moved).unwrap();
        let (lo, hi) = n.bounds();
        assert!(((hi - lo).max() - 1.0).abs() < 1e-12);
        for (a, b) in n.vertices().iter().zip(moved.vertices()) {
            assert!((d.restore(a) - b).norm() < 1e-9);
        }

        let stretched = synth::torus(10, 6, 2.0, 0.5).map_vertices(|q| q + Vector::new(1.0, 2.0, 3.0));
        let (n, _) = normalize_to_unit_box(&stretched).unwrap();
        let (lo0, hi0) = stretched.bounds();
        let (lo1, hi1) = n.bounds();
        let e0 = hi0 - lo0;
        let e1 = hi1 - lo1;
        assert!((e0.x / e0.z - e1.x / e1.z).abs() < 1e-9);
        assert!((e0.y / e0.z - e1.y / e1.z).abs() < 1e-9);
    }

    #[test]
    fn area_normalisation() {
        let sq = synth::grid(3, 3, 2.0);
        assert!((surface_area(&sq) - 4.0).abs() < 1e-12);
        let n = normalize_area(&sq).unwrap();
        for (a, b) in n.vertices().iter().zip(sq.vertices()) {
            assert!((a - b * 0.5).norm() < 1e-15);
        }
        let unit = synth::grid(3, 3, 1.0);
        assert_eq!(normalize_area(&unit).unwrap(), unit);
        let m = synth::icosphere(2);
        let once = normalize_area(&m).unwrap();
        let twice = normalize_area(&once).unwrap();
        assert!((surface_area(&once) - 1.0).abs() < 1e-9);
        for (a, b) in once.vertices().iter().zip(twice.vertices()) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}
