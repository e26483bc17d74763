//! Procedural meshes for tests, examples and toy datasets.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::{Face, Mesh, Point, Vector};

/// Axis-aligned cube spanning [-0.5, 0.5]³, outward winding.
pub fn cube() -> Mesh {
    let mut v = Vec::new();
    for i in 0..8 {
        v.push(Point::new(
            if i & 1 == 0 { -0.5 } else { 0.5 },
            if i & 2 == 0 { -0.5 } else { 0.5 },
            if i & 4 == 0 { -0.5 } else { 0.5 },
        ));
    }
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    Mesh::new("cube", v, faces).expect("valid cube")
}

/// Planar grid of `nx × ny` vertices over [0, size]² in the z = 0 plane.
pub fn grid(nx: usize, ny: usize, size: f64) -> Mesh {
    assert!(nx >= 2 && ny >= 2);
    let mut v = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            v.push(Point::new(
                size * i as f64 / (nx - 1) as f64,
                size * j as f64 / (ny - 1) as f64,
                0.0,
            ));
        }
    }
    let mut f = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = j * nx + i;
            let b = a + 1;
            let c = a + nx;
            let d = c + 1;
            f.push([a, b, d]);
            f.push([a, d, c]);
        }
    }
    Mesh::new("grid", v, f).expect("valid grid")
}

/// Torus around the z axis. Faces are emitted ring by ring: ring `i` owns
/// faces `2·minor·i .. 2·minor·(i+1)`.
pub fn torus(major: usize, minor: usize, radius: f64, tube: f64) -> Mesh {
    let mut v = Vec::with_capacity(major * minor);
    for i in 0..major {
        let u = 2.0 * std::f64::consts::PI * i as f64 / major as f64;
        for j in 0..minor {
            let w = 2.0 * std::f64::consts::PI * j as f64 / minor as f64;
            let r = radius + tube * w.cos();
            v.push(Point::new(r * u.cos(), r * u.sin(), tube * w.sin()));
        }
    }
    let mut f = Vec::new();
    for i in 0..major {
        for j in 0..minor {
            let a = i * minor + j;
            let b = ((i + 1) % major) * minor + j;
            let c = ((i + 1) % major) * minor + (j + 1) % minor;
            let d = i * minor + (j + 1) % minor;
            f.push([a, b, c]);
            f.push([a, c, d]);
        }
    }
    Mesh::new("torus", v, f).expect("valid torus")
}

/// Unit icosphere: `level` midpoint subdivisions of an icosahedron
/// (12·… : level 3 has 642 vertices and 1280 faces).
pub fn icosphere(level: usize) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Point> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point::from(Vector::new(x, y, z).normalize()))
    .collect();
    let mut f: Vec<Face> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, v: &mut Vec<Point>| {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let m = (v[a].coords + v[b].coords).normalize();
                v.push(Point::from(m));
                v.len() - 1
            })
        };
        let mut next = Vec::with_capacity(f.len() * 4);
        for [a, b, c] in f {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        f = next;
    }
    Mesh::new("icosphere", v, f).expect("valid icosphere")
}

/// Smooth random radial bumps on an icosphere: a closed genus-0 blob.
pub fn blob(level: usize, seed: u64) -> Mesh {
    let sphere = icosphere(level);
    let waves = random_waves(seed, 6, 0.12);
    let mut m = sphere.map_vertices(|p| {
        let dir = p.coords;
        let r = 1.0 + waves.iter().map(|(k, a, ph)| a * (k.dot(&dir) + ph).sin()).sum::<f64>();
        Point::from(dir * r)
    });
    m.set_id(format!("blob{seed}"));
    m
}

/// Smooth random displacement of every vertex; connectivity is preserved so
/// the identity vertex map is the ground truth between input and output.
pub fn deform(mesh: &Mesh, seed: u64, amount: f64) -> Mesh {
    let waves = random_waves(seed, 4, amount);
    let mut dirs = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let axes: Vec<Vector> = (0..waves.len())
        .map(|_| random_unit(&mut dirs))
        .collect();
    mesh.map_vertices(|p| {
        let mut q = p.coords;
        for ((k, a, ph), axis) in waves.iter().zip(&axes) {
            q += axis * (a * (k.dot(&p.coords) + ph).sin());
        }
        Point::from(q)
    })
}

fn random_waves(seed: u64, count: usize, amplitude: f64) -> Vec<(Vector, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let k = random_unit(&mut rng) * rng.random_range(1.0..3.0);
            let a = amplitude * rng.random_range(0.3..1.0) / count as f64 * 2.0;
            let ph = rng.random_range(0.0..std::f64::consts::TAU);
            (k, a, ph)
        })
        .collect()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector {
    loop {
        let v = Vector::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Same surface with vertex order permuted; returns the mesh and the map
/// `old index -> new index`.
pub fn permute_vertices(mesh: &Mesh, seed: u64) -> (Mesh, Vec<usize>) {
    use rand::seq::SliceRandom;
    let n = mesh.vertex_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // order[new] = old
    let mut new_of_old = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        new_of_old[old] = new;
    }
    let vertices = order.iter().map(|&old| *mesh.vertex(old)).collect();
    let faces = mesh
        .faces()
        .iter()
        .map(|f| f.map(|i| new_of_old[i]))
        .collect();
    let mut out = Mesh::new(mesh.id(), vertices, faces).expect("permutation keeps validity");
    out.meta = mesh.meta.clone();
    (out, new_of_old)
}
