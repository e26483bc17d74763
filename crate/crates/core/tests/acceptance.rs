//! Acceptance checks, one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach stdout.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use corrbench::bvh::{first_hit_exhaustive, Bvh};
use corrbench::corrnet::{build_network, compose, Manifest, ShapeNetwork};
use corrbench::correspondence::{evaluate_surface_point, DenseCorrespondence};
use corrbench::geometry::{connected_components, normalize_area, normalize_to_unit_box, surface_area, RigidTransform};
use corrbench::mesh::{Mesh, Point};
use corrbench::metrics::{evaluate_instance, geodesic_error, EvalOptions, EvalReport, PredictedMatching, Target};
use corrbench::partiality::{extract_partial, generate_partial, generate_partial_pair, CameraPose, PartialParams, Restore};
use corrbench::pipeline::{
    categories_in, default_manifest, enumerate_pairs, generate_instance, run_generation, scale_table, GenerationConfig,
    MatchingInstance, Setting, BUILTIN_MANIFEST,
};
use corrbench::remesh::remesh_with_correspondence;
use corrbench::synth;
use corrbench::toy::{write_toy_dataset, ToySpec};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

struct Toy {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    manifest: Manifest,
    net: ShapeNetwork,
}

fn toy() -> Toy {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("data");
    let path = write_toy_dataset(&data, ToySpec::default()).unwrap();
    let manifest = Manifest::load(&path).unwrap();
    let net = build_network(&manifest, &data).unwrap();
    Toy {
        _dir: dir,
        root,
        data,
        manifest,
        net,
    }
}

fn toy_config(t: &Toy, lines: &str) -> GenerationConfig {
    let mut c = GenerationConfig::default();
    c.data_dir = t.data.clone();
    c.count_range = (300, 400);
    c.apply_text(lines, Path::new("acceptance")).unwrap();
    c.validate().unwrap();
    c
}

fn toy_instances(t: &Toy, setting: &str, n: usize) -> Vec<MatchingInstance> {
    let c = toy_config(t, &format!("setting = {setting}\nresolution = 128"));
    let scales = scale_table(&t.manifest);
    enumerate_pairs(&t.manifest, &c)
        .unwrap()
        .iter()
        .take(n)
        .map(|spec| generate_instance(spec, &t.net, &c, &scales).unwrap())
        .collect()
}

fn random_vertex_map(n: usize, targets: usize, unmatched: f64, r: &mut ChaCha8Rng) -> Vec<Option<usize>> {
    (0..n)
        .map(|_| (!r.random_bool(unmatched)).then(|| r.random_range(0..targets)))
        .collect()
}

fn floyd_warshall(mesh: &Mesh) -> Vec<Vec<f64>> {
    let n = mesh.vertex_count();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for (a, b) in mesh.edges() {
        let w = (mesh.vertex(a) - mesh.vertex(b)).norm();
        d[a][b] = d[a][b].min(w);
        d[b][a] = d[b][a].min(w);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

fn c1_metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut pairs = 0;
    let mut worst: f64 = 0.0;
    for i in 0..24u64 {
        let full = match i % 3 {
            0 => synth::blob(1, i),
            1 => synth::deform(&synth::grid(7, 8, 1.3), i, 0.1),
            _ => synth::torus(8, 6, 1.0, 0.35),
        };
        assert!(full.vertex_count() <= 60);
        let fw = floyd_warshall(&full);
        let norm = surface_area(&full).sqrt();
        // Every other pair targets a partial of the full shape.
        let (target_mesh, parent, setting) = if i % 2 == 0 {
            (full.clone(), None, Setting::FullFull)
        } else {
            let keep: Vec<usize> = (0..full.face_count() * 2 / 3).collect();
            let camera = CameraPose::new(0.0, 0.0, 2.0).unwrap();
            let p = extract_partial(&full, &keep, camera, Restore::identity()).unwrap();
            (p.mesh, Some(p.parent_vertex), Setting::PartialPartial)
        };
        let n_src = 20 + (i as usize % 30);
        let gt_map = random_vertex_map(n_src, target_mesh.vertex_count(), 0.2, &mut r);
        let gt = DenseCorrespondence::from_vertex_map("src", &target_mesh, &gt_map).unwrap();
        let pred = PredictedMatching::new(random_vertex_map(n_src, target_mesh.vertex_count(), 0.2, &mut r));
        let target = Target {
            mesh: &target_mesh,
            full: &full,
            parent: parent.as_deref(),
        };
        let got = geodesic_error(&pred, &gt, target, setting).map_err(|e| e.to_string())?;
        let lift = |v: usize| parent.as_ref().map_or(v, |p| p[v]);
        for v in 0..n_src {
            let expected = match (gt_map[v], pred.map[v]) {
                (None, None) => None,
                (None, Some(_)) => (setting == Setting::PartialPartial).then_some(f64::INFINITY),
                (Some(_), None) => Some(f64::INFINITY),
                (Some(g), Some(p)) => Some(fw[lift(g)][lift(p)] / norm),
            };
            match (expected, got.errors[v]) {
                (None, None) => {}
                (Some(a), Some(b)) if a.is_infinite() || b.is_infinite() => {
                    ensure!(a == b, "pair {i} vertex {v}: expected {a}, got {b}")
                }
                (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                (a, b) => return Err(format!("pair {i} vertex {v}: expected {a:?}, got {b:?}")),
            }
        }
        pairs += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(worst <= 1e-9, "max deviation {worst:e}");
    ensure!(secs < 10.0, "took {secs:.2} s");
    Ok(format!("{pairs} pairs, max deviation {worst:.1e}, {secs:.2} s"))
}

fn c2_metric_ceilings() -> Outcome {
    let t = toy();
    let mut n = 0;
    for setting in ["full_full", "partial_full", "partial_partial"] {
        for inst in toy_instances(&t, setting, 4) {
            let pred = PredictedMatching::from_correspondence(&inst.gt, &inst.y);
            let r = evaluate_instance(&inst, &pred, &EvalOptions::default()).map_err(|e| e.to_string())?;
            ensure!((r.auc - 100.0).abs() <= 1e-6, "{} {setting}: AUC {}", inst.id, r.auc);
            if setting == "partial_partial" {
                ensure!(r.iou == Some(100.0) && r.f1 == Some(100.0), "{}: IoU {:?} F1 {:?}", inst.id, r.iou, r.f1);
            }
            n += 1;
        }
    }
    Ok(format!("{n} instances over 3 settings"))
}

fn random_ray(r: &mut ChaCha8Rng, radius: f64) -> (Point, Vector3<f64>) {
    let dir = |r: &mut ChaCha8Rng| {
        let z: f64 = r.random_range(-1.0..=1.0);
        let a: f64 = r.random_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - z * z).sqrt();
        Vector3::new(s * a.cos(), s * a.sin(), z)
    };
    let origin = Point::from(dir(r) * radius);
    let aim = Point::from(dir(r) * radius * r.random_range(0.0..0.8));
    (origin, (aim - origin).normalize())
}

fn c3_ray_casting() -> Outcome {
    let meshes = [
        synth::blob(4, 7),
        synth::torus(48, 24, 1.0, 0.3),
        synth::deform(&synth::grid(40, 40, 2.0), 2, 0.2),
    ];
    let mut details = Vec::new();
    for (mi, mesh) in meshes.iter().enumerate() {
        let start = Instant::now();
        let bvh = Bvh::new(mesh);
        let radius = 2.0 * mesh.bounding_diagonal();
        let mut r = rng(30 + mi as u64);
        let mut hits = 0;
        for k in 0..10_000 {
            let (o, d) = random_ray(&mut r, radius);
            let a = bvh.first_hit(&o, &d);
            let b = first_hit_exhaustive(mesh, &o, &d);
            ensure!(a == b, "mesh {mi} ray {k}: bvh {a:?} vs exhaustive {b:?}");
            hits += a.is_some() as usize;
        }
        let (normalized, _) = normalize_to_unit_box(mesh).map_err(|e| e.to_string())?;
        for seed in 0..4 {
            let p = generate_partial(mesh, &mut rng(seed), 256).map_err(|e| e.to_string())?;
            let comps = connected_components(&p.mesh, None).len();
            ensure!(comps == 1, "mesh {mi} seed {seed}: {comps} components");
            for (local, &pv) in p.parent_vertex.iter().enumerate() {
                let restored = p.restore.apply(normalized.vertex(pv));
                let dev = (restored - p.mesh.vertex(local)).norm().max((p.mesh.vertex(local) - mesh.vertex(pv)).norm());
                ensure!(dev <= 1e-9, "mesh {mi} seed {seed} vertex {local}: off by {dev:e}");
            }
        }
        let secs = start.elapsed().as_secs_f64();
        ensure!(secs < 60.0, "mesh {mi} took {secs:.1} s");
        details.push(format!("{} faces {hits} hits {secs:.1}s", mesh.face_count()));
    }
    Ok(details.join("; "))
}

fn p2p_pairs(seed: u64) -> Result<Vec<(corrbench::partiality::OverlapStats, Mesh, Mesh)>, String> {
    let params = PartialParams::default();
    (0..200u64)
        .map(|i| {
            let x = synth::blob(3, 1000 + i);
            let mut y = corrbench::geometry::rotate_z(&synth::deform(&x, 2000 + i, 0.08), i as f64);
            y.set_id("y");
            let cxy = DenseCorrespondence::new(x.id(), y.id(), DenseCorrespondence::identity(&x).map);
            let cyx = DenseCorrespondence::new(y.id(), x.id(), DenseCorrespondence::identity(&y).map);
            let mut r = rng(corrbench::seed::derive_seed(seed, i, corrbench::seed::Role::Partial));
            let p = generate_partial_pair(&x, &y, &cxy, &cyx, &params, &mut r).map_err(|e| e.to_string())?;
            Ok((p.stats, p.x.mesh, p.y.mesh))
        })
        .collect()
}

fn c4_overlap_protocol() -> Outcome {
    let a = p2p_pairs(4)?;
    let within = a.iter().filter(|(s, ..)| s.within_range).count();
    for (i, (s, ..)) in a.iter().enumerate() {
        ensure!(s.within_range || s.iterations_used == 10, "pair {i}: out of range after {}", s.iterations_used);
    }
    let mut hist = [0usize; 10];
    for (s, ..) in &a {
        hist[((s.frac_x_to_y * 10.0) as usize).min(9)] += 1;
    }
    let b = p2p_pairs(4)?;
    ensure!(a == b, "second run differs");
    ensure!(within * 10 >= a.len() * 9, "only {within}/200 within range");
    Ok(format!("{within}/200 within range, overlap deciles {hist:?}"))
}

fn c5_remeshing() -> Outcome {
    let mut details = Vec::new();
    for seed in 0..3u64 {
        let mesh = synth::blob(5, seed);
        ensure!(mesh.vertex_count() > 10_000, "input too small");
        let a = remesh_with_correspondence(&mesh, (9000, 10_000), &mut rng(seed)).map_err(|e| e.to_string())?;
        let n = a.mesh.vertex_count();
        ensure!((9000..=10_000).contains(&n), "seed {seed}: {n} vertices");
        let mut worst: f64 = 0.0;
        for (v, sp) in a.to_original.map.iter().enumerate() {
            let sp = sp.ok_or(format!("seed {seed}: vertex {v} unmatched"))?;
            let q = evaluate_surface_point(&mesh, &sp).map_err(|e| e.to_string())?;
            worst = worst.max((q - a.mesh.vertex(v)).norm());
        }
        let bound = a.report.max_deviation_bound;
        ensure!(worst <= bound * (1.0 + 1e-9) + 1e-12, "seed {seed}: distance {worst:e} above bound {bound:e}");
        let b = remesh_with_correspondence(&mesh, (9000, 10_000), &mut rng(seed)).map_err(|e| e.to_string())?;
        let bits = |m: &Mesh| m.vertices().iter().flat_map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]).collect::<Vec<_>>();
        ensure!(bits(&a.mesh) == bits(&b.mesh) && a.mesh.faces() == b.mesh.faces(), "seed {seed}: not bit-identical");
        details.push(format!("{n} v, {worst:.1e} <= {bound:.1e}"));
    }
    Ok(details.join("; "))
}

fn vertex_corr(src: &str, target: &Mesh, to: &[Option<usize>]) -> DenseCorrespondence {
    DenseCorrespondence::from_vertex_map(src, target, to).unwrap()
}

fn c6_correspondence_algebra() -> Outcome {
    let base = synth::blob(2, 5);
    let id = DenseCorrespondence::identity(&base);
    let (mut perm_mesh, perm) = synth::permute_vertices(&base, 6);
    perm_mesh.set_id("perm");
    let c = vertex_corr(base.id(), &perm_mesh, &perm.iter().map(|&p| Some(p)).collect::<Vec<_>>());
    let left = compose(&id, &c, &base, &perm_mesh).map_err(|e| e.to_string())?;
    ensure!(left == c, "identity then map differs from map");
    let id_p = DenseCorrespondence::identity(&perm_mesh);
    let right = compose(&c, &id_p, &perm_mesh, &perm_mesh).map_err(|e| e.to_string())?;
    ensure!(right.map == c.map, "map then identity differs from map");
    // Permutation and its inverse cancel.
    let mut inv = vec![None; perm.len()];
    for (old, &new) in perm.iter().enumerate() {
        inv[new] = Some(old);
    }
    let back = vertex_corr("perm", &base, &inv);
    let round = compose(&c, &back, &perm_mesh, &base).map_err(|e| e.to_string())?;
    ensure!(round.to_vertex_map(&base) == (0..base.vertex_count()).map(Some).collect::<Vec<_>>(), "round trip not identity");

    // Randomized chains of vertex-exact maps with holes.
    let mut r = rng(66);
    let n = base.vertex_count();
    let mut chains = 0;
    for trial in 0..40 {
        let len = 2 + trial % 4;
        let meshes: Vec<Mesh> = (0..=len)
            .map(|k| {
                let (mut m, _) = synth::permute_vertices(&base, 100 * trial as u64 + k as u64);
                m.set_id(format!("m{k}"));
                m
            })
            .collect();
        let maps: Vec<Vec<Option<usize>>> = (0..len).map(|_| random_vertex_map(n, n, 0.15, &mut r)).collect();
        let mut acc = vertex_corr("m0", &meshes[1], &maps[0]);
        for k in 1..len {
            let step = vertex_corr(&format!("m{k}"), &meshes[k + 1], &maps[k]);
            acc = compose(&acc, &step, &meshes[k], &meshes[k + 1]).map_err(|e| e.to_string())?;
        }
        let got = acc.to_vertex_map(&meshes[len]);
        // A hit sits on the lowest face around its vertex; the next hop is
        // unmatched as soon as any corner of that face is.
        let step = |k: usize, u: usize| -> Option<usize> {
            if k == 0 {
                return maps[0][u];
            }
            let f = *meshes[k].vertex_faces()[u].iter().min().unwrap();
            meshes[k].faces()[f].iter().all(|&c| maps[k][c].is_some()).then(|| maps[k][u]).flatten()
        };
        for v in 0..n {
            let plain = maps.iter().try_fold(v, |cur, m| m[cur]);
            let expected = (0..len).try_fold(v, |cur, k| step(k, cur));
            ensure!(got[v] == expected, "chain {trial} vertex {v}: {:?} vs {expected:?}", got[v]);
            ensure!(plain.is_some() || got[v].is_none(), "chain {trial} vertex {v}: unmatched entry revived");
            ensure!(got[v].is_none() || got[v] == plain, "chain {trial} vertex {v}: wrong target");
        }
        chains += 1;
    }
    Ok(format!("identity/permutation exact, {chains} random chains of length 2..=5"))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn reports_match(a: &EvalReport, b: &EvalReport, what: &str) -> Result<(), String> {
    ensure!(a.errors.len() == b.errors.len(), "{what}: error count differs");
    for (v, (x, y)) in a.errors.iter().zip(&b.errors).enumerate() {
        match (x, y) {
            (None, None) => {}
            (Some(x), Some(y)) => ensure!(rel_close(*x, *y, 1e-9), "{what}: vertex {v} {x} vs {y}"),
            _ => return Err(format!("{what}: vertex {v} exclusion differs")),
        }
    }
    ensure!(rel_close(a.auc, b.auc, 1e-9), "{what}: AUC {} vs {}", a.auc, b.auc);
    ensure!(a.iou == b.iou && a.f1 == b.f1, "{what}: IoU/F1 differ");
    ensure!(a.lr_accuracy == b.lr_accuracy, "{what}: LR accuracy differs");
    Ok(())
}

fn c7_invariance() -> Outcome {
    let t = toy();
    let mut r = rng(77);
    let mut n = 0;
    for setting in ["full_full", "partial_partial"] {
        for inst in toy_instances(&t, setting, 3) {
            // Predictions: perturbed ground truth with some holes.
            let exact = inst.gt.to_vertex_map(&inst.y);
            let pred = PredictedMatching::new(
                exact
                    .iter()
                    .map(|g| match r.random_range(0..10) {
                        0 => None,
                        1..=3 => Some(r.random_range(0..inst.y.vertex_count())),
                        _ => *g,
                    })
                    .collect(),
            );
            let opts = EvalOptions::default();
            let base = evaluate_instance(&inst, &pred, &opts).map_err(|e| e.to_string())?;

            let rot = Rotation3::from_euler_angles(r.random(), r.random(), r.random()).into_inner();
            let rigid = RigidTransform::new(rot, Vector3::new(r.random(), -3.0, r.random())).map_err(|e| e.to_string())?;
            let mut moved = inst.clone();
            for m in [&mut moved.x, &mut moved.y, &mut moved.y_full] {
                *m = rigid.apply_mesh(m);
            }
            reports_match(&base, &evaluate_instance(&moved, &pred, &opts).map_err(|e| e.to_string())?, "rigid")?;

            let s = 0.37 + r.random::<f64>() * 5.0;
            let mut scaled = inst.clone();
            for m in [&mut scaled.y, &mut scaled.y_full] {
                *m = m.map_vertices(|p| Point::from(p.coords * s));
            }
            reports_match(&base, &evaluate_instance(&scaled, &pred, &opts).map_err(|e| e.to_string())?, "scale")?;

            let once = normalize_area(&inst.y_full).map_err(|e| e.to_string())?;
            let twice = normalize_area(&once).map_err(|e| e.to_string())?;
            for (p, q) in once.vertices().iter().zip(twice.vertices()) {
                ensure!((p - q).norm() <= 1e-9 * p.coords.norm().max(1.0), "normalize_area not idempotent");
            }
            n += 1;
        }
    }
    Ok(format!("{n} instances: rigid, scale and area normalization"))
}

fn c8_split_counts() -> Outcome {
    let manifest = default_manifest();
    let config = GenerationConfig {
        manifest: Some(BUILTIN_MANIFEST.into()),
        ..Default::default()
    };
    let pairs = enumerate_pairs(&manifest, &config).map_err(|e| e.to_string())?;
    let count = |s: &str| pairs.iter().filter(|p| p.split.to_string() == s).count();
    let (train, val, test) = (count("train"), count("val"), count("test"));
    ensure!((train, val, test) == (10185, 137, 142), "sizes {train}/{val}/{test}");
    let by_split = |s: &str| {
        let split = s.parse().unwrap();
        categories_in(&manifest, &pairs, split)
    };
    let shared = by_split("train").intersection(&by_split("test")).count();
    ensure!(shared == 0, "{shared} categories shared by train and test");
    Ok(format!("{train}/{val}/{test}, no shared train/test category"))
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c9_end_to_end() -> Outcome {
    let t = toy();
    let out = t.root.join("out");
    let c = toy_config(&t, &format!("setting = partial_partial\nglobal_seed = 9\noutput_dir = {}", out.display()));
    let s = run_generation(&c).map_err(|e| e.to_string())?;
    ensure!(s.generated == 10 && s.failed.is_empty(), "generated {} failed {:?}", s.generated, s.failed);
    let first = tree(&out);
    fs::remove_dir_all(&out).unwrap();
    run_generation(&c).map_err(|e| e.to_string())?;
    ensure!(tree(&out) == first, "repeat differs");

    let listed = fs::read_to_string(out.join("instances.txt")).unwrap();
    for line in listed.lines().skip(4) {
        fs::remove_dir_all(out.join(line.split(' ').next().unwrap())).unwrap();
    }
    fs::create_dir(out.join(".tmp-train-000005")).unwrap();
    fs::write(out.join(".tmp-train-000005/x.ply"), b"cut short").unwrap();
    let resumed = run_generation(&c).map_err(|e| e.to_string())?;
    ensure!((resumed.generated, resumed.skipped) == (6, 4), "resume generated {} skipped {}", resumed.generated, resumed.skipped);
    ensure!(tree(&out) == first, "resumed run differs");
    Ok(format!("{} files byte-identical across repeat and resume", first.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("metric oracle equivalence", c1_metric_oracle),
        ("metric ceilings", c2_metric_ceilings),
        ("ray-cast correctness", c3_ray_casting),
        ("overlap protocol", c4_overlap_protocol),
        ("remeshing contract", c5_remeshing),
        ("correspondence algebra", c6_correspondence_algebra),
        ("invariance suite", c7_invariance),
        ("split hygiene and counts", c8_split_counts),
        ("end-to-end determinism", c9_end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
