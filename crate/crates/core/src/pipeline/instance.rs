//! Generation of a single matching instance and its on-disk layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{GenerationConfig, Setting};
use super::pairs::PairSpec;
use crate::cache::{Cache, CachePolicy, KeyBuilder};
use crate::corrnet::{compose, project_template_pair, ShapeNetwork, Split};
use crate::correspondence::{
    load_correspondence, load_labels, save_correspondence, save_labels, CorrEncoding, DenseCorrespondence, VertexLabels,
};
use crate::error::{Error, Result};
use crate::geometry::{normalize_area, rotate_z, scale_mesh, surface_area};
use crate::mesh::{load_mesh, save_mesh, save_mesh_with_colors, Mesh, MeshFormat};
use crate::partiality::{generate_partial_pair_with, generate_partial_with, restrict_correspondence, OverlapStats, Scanner};
use crate::remesh::{remesh_with_correspondence, DecimationReport, RemeshResult};
use crate::seed::Role;

/// Scale and z-rotation applied to one emitted shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeTransform {
    pub scale: f64,
    pub rotation_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub source: String,
    pub target: String,
    pub source_dataset: String,
    pub source_category: String,
    pub target_dataset: String,
    pub target_category: String,
    /// Network path the ground truth was composed along.
    pub path: Vec<String>,
    pub global_seed: u64,
}

/// One emitted matching problem. `x` and `y` are the shapes handed to a
/// matcher; `gt` maps `x` vertices onto `y`. `y_full` is the full shape
/// behind `y` in the same pose, and the parent maps send partial vertices
/// to full-shape vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingInstance {
    pub id: String,
    pub split: Split,
    pub setting: Setting,
    pub x: Mesh,
    pub y: Mesh,
    pub y_full: Mesh,
    pub x_parent: Option<Vec<usize>>,
    pub y_parent: Option<Vec<usize>>,
    pub gt: DenseCorrespondence,
    pub transforms: [ShapeTransform; 2],
    pub overlap: Option<OverlapStats>,
    pub remesh: [Option<DecimationReport>; 2],
    pub provenance: Provenance,
    pub labels: Option<[VertexLabels; 2]>,
}

impl MatchingInstance {
    /// `y` vertex → `y_full` vertex.
    pub fn target_parent(&self, v: usize) -> usize {
        self.y_parent.as_ref().map_or(v, |p| p[v])
    }
}

struct Prepared {
    original: Mesh,
    emitted: Mesh,
    /// `None` when the remesh step left the shape unchanged.
    to_original: Option<DenseCorrespondence>,
    report: Option<DecimationReport>,
    scale: f64,
    /// Applied to the emitted shapes once the ground truth is built, so
    /// remeshed shapes keep exactly unit area under `normalize_area`.
    post_scale: f64,
}

fn policy(config: &GenerationConfig, sub: &str, reuse: bool, refresh: bool) -> Option<CachePolicy> {
    config.cache_dir.as_ref().map(|d| CachePolicy {
        cache: Cache::new(d.join(sub)),
        reuse,
        refresh,
    })
}

pub(crate) fn scanner(config: &GenerationConfig) -> Scanner {
    Scanner {
        cache: policy(
            config,
            "raycast",
            config.use_precomputed_partial_raycasting,
            config.update_precomputed_raycasting,
        ),
    }
}

fn write_report(r: &DecimationReport, id: &str, path: &Path) -> Result<()> {
    let text = format!(
        "id = {id}\nrequested = {}\nachieved = {}\nmax_quadric_error = {}\nmax_deviation_bound = {}\n",
        r.requested, r.achieved, r.max_quadric_error, r.max_deviation_bound
    );
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| Error::format(path, i + 1, "expected `key = value`"))?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str, path: &Path) -> Result<T> {
    kv.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format(path, key, "missing or malformed field"))
}

fn remeshed(config: &GenerationConfig, mesh: &Mesh, seed: u64) -> Result<RemeshResult> {
    let (lo, hi) = config.count_range;
    let compute = || remesh_with_correspondence(mesh, (lo, hi), &mut ChaCha8Rng::seed_from_u64(seed));
    let Some(policy) = policy(config, "remesh", config.use_precompute_remeshing, config.update_precomputed_remeshed) else {
        return compute();
    };
    let key = KeyBuilder::new("remesh").mesh(mesh).u64(seed).u64(lo as u64).u64(hi as u64).finish();
    policy.fetch(
        &key,
        |dir| {
            let meta_path = dir.join("report.txt");
            let kv = read_kv(&meta_path)?;
            let mut m = load_mesh(dir.join("mesh.ply"))?;
            m.set_id(kv.get("id").cloned().unwrap_or_default());
            let report = DecimationReport {
                requested: field(&kv, "requested", &meta_path)?,
                achieved: field(&kv, "achieved", &meta_path)?,
                max_quadric_error: field(&kv, "max_quadric_error", &meta_path)?,
                max_deviation_bound: field(&kv, "max_deviation_bound", &meta_path)?,
            };
            let to_original = load_correspondence(dir.join("to_original.corrb"))?;
            to_original.validate(&m, mesh)?;
            m.meta = mesh.meta.clone();
            Ok(RemeshResult {
                target_count: report.requested,
                mesh: m,
                to_original,
                report,
            })
        },
        compute,
        |r, dir| {
            save_mesh(&r.mesh, dir.join("mesh.ply"), MeshFormat::PlyBinary)?;
            save_correspondence(&r.to_original, dir.join("to_original.corrb"), CorrEncoding::Binary)?;
            write_report(&r.report, r.mesh.id(), &dir.join("report.txt"))
        },
    )
}

fn prepare(net: &ShapeNetwork, config: &GenerationConfig, id: &str, scale: f64, seed: u64) -> Result<Prepared> {
    let raw = net.mesh(id)?;
    let (original, applied) = if config.normalize_area {
        let area = surface_area(raw);
        (normalize_area(raw)?, 1.0 / area.sqrt())
    } else if scale != 1.0 {
        (scale_mesh(raw, scale), scale)
    } else {
        ((**raw).clone(), 1.0)
    };
    if !config.remesh {
        return Ok(Prepared {
            emitted: original.clone(),
            original,
            to_original: None,
            report: None,
            scale: applied,
            post_scale: 1.0,
        });
    }
    let r = remeshed(config, &original, seed)?;
    let unchanged = r.mesh.id() == original.id();
    let post_scale = if config.normalize_area && !unchanged {
        1.0 / surface_area(&r.mesh).sqrt()
    } else {
        1.0
    };
    Ok(Prepared {
        post_scale,
        emitted: r.mesh,
        to_original: (!unchanged).then_some(r.to_original),
        report: Some(r.report),
        original,
        scale: applied,
    })
}

/// Ground truth between the emitted full shapes: remesh back-map, network
/// correspondence, then projection onto the target's remeshed surface.
fn full_ground_truth(a: &Prepared, b: &Prepared, net_ab: &DenseCorrespondence) -> Result<DenseCorrespondence> {
    let mut c = match &a.to_original {
        Some(back) => compose(back, net_ab, &a.original, &b.original)?,
        None => net_ab.clone(),
    };
    if b.to_original.is_some() {
        let forward = project_template_pair(&b.original, &b.emitted, None)?;
        c = compose(&c, &forward, &b.original, &b.emitted)?;
    }
    Ok(c)
}

fn emitted_labels(net: &ShapeNetwork, p: &Prepared, parent: Option<&[usize]>, emitted_id: &str) -> Result<VertexLabels> {
    let source = net.propagate_annotation(p.original.id())?;
    let n = parent.map_or(p.emitted.vertex_count(), <[usize]>::len);
    let labels = (0..n)
        .map(|v| {
            let full = parent.map_or(v, |pv| pv[v]);
            let orig = match &p.to_original {
                Some(c) => c.map[full].map(|sp| sp.dominant_vertex(&p.original)),
                None => Some(full),
            };
            orig.map_or(VertexLabels::UNKNOWN, |o| source.labels[o])
        })
        .collect();
    Ok(VertexLabels::new(emitted_id, labels))
}

fn shape_scale(net: &ShapeNetwork, scales: &BTreeMap<String, f64>, id: &str) -> Result<f64> {
    let m = net.mesh(id)?;
    Ok(scales.get(&m.meta.dataset).copied().unwrap_or(1.0))
}

/// Builds the instance for `spec`; a pure function of its arguments.
/// `scales` maps dataset names to scale factors.
pub fn generate_instance(
    spec: &PairSpec,
    net: &ShapeNetwork,
    config: &GenerationConfig,
    scales: &BTreeMap<String, f64>,
) -> Result<MatchingInstance> {
    generate_inner(spec, net, config, scales).map_err(|e| Error::Instance {
        id: spec.id.clone(),
        source: Box::new(e),
    })
}

fn generate_inner(
    spec: &PairSpec,
    net: &ShapeNetwork,
    config: &GenerationConfig,
    scales: &BTreeMap<String, f64>,
) -> Result<MatchingInstance> {
    let gs = config.global_seed;
    let px = prepare(net, config, &spec.source, shape_scale(net, scales, &spec.source)?, spec.seed(gs, Role::RemeshX))?;
    let py = prepare(net, config, &spec.target, shape_scale(net, scales, &spec.target)?, spec.seed(gs, Role::RemeshY))?;
    let net_xy = net.correspondence_with_path(&spec.source, &spec.target)?;
    let gt_full = full_ground_truth(&px, &py, &net_xy.0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed(gs, Role::Partial));
    let scan = scanner(config);
    let (x, y, x_parent, y_parent, gt, overlap) = match config.setting {
        Setting::FullFull => (px.emitted.clone(), py.emitted.clone(), None, None, gt_full, None),
        Setting::PartialFull => {
            let part = generate_partial_with(&px.emitted, &mut rng, config.resolution, &scan)?;
            let map = part.parent_vertex.iter().map(|&v| gt_full.map[v]).collect();
            let gt = DenseCorrespondence::new(part.mesh.id(), py.emitted.id(), map);
            (part.mesh, py.emitted.clone(), Some(part.parent_vertex), None, gt, None)
        }
        Setting::PartialPartial => {
            let net_yx = net.correspondence_with_path(&spec.target, &spec.source)?;
            let gt_yx = full_ground_truth(&py, &px, &net_yx.0)?;
            let params = config.partial_params();
            let pair = generate_partial_pair_with(&px.emitted, &py.emitted, &gt_full, &gt_yx, &params, &mut rng, &scan)?;
            let gt = restrict_correspondence(&gt_full, &pair.x, &pair.y, py.emitted.face_count());
            (
                pair.x.mesh,
                pair.y.mesh,
                Some(pair.x.parent_vertex),
                Some(pair.y.parent_vertex),
                gt,
                Some(pair.stats),
            )
        }
    };

    let (rx, ry) = if config.one_axis_rotation {
        let mut r = ChaCha8Rng::seed_from_u64(spec.seed(gs, Role::Rotation));
        let tau = std::f64::consts::TAU;
        (r.random_range(0.0..tau), r.random_range(0.0..tau))
    } else {
        (0.0, 0.0)
    };
    let place = |m: &Mesh, s: f64, a: f64| {
        let m = if s == 1.0 { m.clone() } else { scale_mesh(m, s) };
        if a == 0.0 {
            m
        } else {
            rotate_z(&m, a)
        }
    };

    let labels = if net.has_annotations() {
        let lx = emitted_labels(net, &px, x_parent.as_deref(), x.id());
        let ly = emitted_labels(net, &py, y_parent.as_deref(), y.id());
        match (lx, ly) {
            (Ok(a), Ok(b)) => Some([a, b]),
            (Err(e), _) | (_, Err(e)) => {
                log::debug!("{}: no labels: {e}", spec.id);
                None
            }
        }
    } else {
        None
    };

    let meta = |id: &str| {
        let m = net.mesh(id).expect("checked above");
        (m.meta.dataset.clone(), m.meta.category.clone())
    };
    let (sd, sc) = meta(&spec.source);
    let (td, tc) = meta(&spec.target);
    Ok(MatchingInstance {
        id: spec.id.clone(),
        split: spec.split,
        setting: config.setting,
        x: place(&x, px.post_scale, rx),
        y: place(&y, py.post_scale, ry),
        y_full: place(&py.emitted, py.post_scale, ry),
        x_parent,
        y_parent,
        gt,
        transforms: [
            ShapeTransform {
                scale: px.scale * px.post_scale,
                rotation_z: rx,
            },
            ShapeTransform {
                scale: py.scale * py.post_scale,
                rotation_z: ry,
            },
        ],
        overlap,
        remesh: [px.report, py.report],
        provenance: Provenance {
            source: spec.source.clone(),
            target: spec.target.clone(),
            source_dataset: sd,
            source_category: sc,
            target_dataset: td,
            target_category: tc,
            path: net_xy.1.clone(),
            global_seed: gs,
        },
        labels,
    })
}

fn write_indices(v: &[usize], path: &Path) -> Result<()> {
    let mut s = String::with_capacity(v.len() * 6);
    for i in v {
        let _ = writeln!(s, "{i}");
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| l.trim().parse().map_err(|_| Error::format(path, i + 1, "bad index")))
        .collect()
}

fn position_colors(m: &Mesh) -> Vec<[u8; 3]> {
    let (lo, hi) = m.bounds();
    let ext = hi - lo;
    m.vertices()
        .iter()
        .map(|p| {
            let c = |k: usize| {
                let t = if ext[k] > 0.0 { (p[k] - lo[k]) / ext[k] } else { 0.5 };
                (t.clamp(0.0, 1.0) * 255.0).round() as u8
            };
            [c(0), c(1), c(2)]
        })
        .collect()
}

/// `x` coloured by position, `y` by the colours carried over by `gt`.
fn write_vis(inst: &MatchingInstance, dir: &Path) -> Result<()> {
    let cx = position_colors(&inst.x);
    let mut acc = vec![[0u32; 4]; inst.y.vertex_count()];
    for (v, e) in inst.gt.map.iter().enumerate() {
        if let Some(sp) = e {
            let t = sp.dominant_vertex(&inst.y);
            for k in 0..3 {
                acc[t][k] += cx[v][k] as u32;
            }
            acc[t][3] += 1;
        }
    }
    let cy: Vec<[u8; 3]> = acc
        .iter()
        .map(|a| match a[3] {
            0 => [128, 128, 128],
            n => [(a[0] / n) as u8, (a[1] / n) as u8, (a[2] / n) as u8],
        })
        .collect();
    save_mesh_with_colors(&inst.x, &cx, dir.join("vis_x.ply"))?;
    save_mesh_with_colors(&inst.y, &cy, dir.join("vis_y.ply"))
}

fn meta_text(inst: &MatchingInstance) -> String {
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    let p = &inst.provenance;
    put("id", inst.id.clone());
    put("split", inst.split.to_string());
    put("setting", inst.setting.to_string());
    put("source", p.source.clone());
    put("target", p.target.clone());
    put("source_dataset", p.source_dataset.clone());
    put("source_category", p.source_category.clone());
    put("target_dataset", p.target_dataset.clone());
    put("target_category", p.target_category.clone());
    put("path", p.path.join(","));
    put("path_length", (p.path.len().saturating_sub(1)).to_string());
    put("global_seed", p.global_seed.to_string());
    put("x_id", inst.x.id().to_string());
    put("y_id", inst.y.id().to_string());
    put("y_full_id", inst.y_full.id().to_string());
    put("x_vertices", inst.x.vertex_count().to_string());
    put("y_vertices", inst.y.vertex_count().to_string());
    put("gt_matched", inst.gt.matched_count().to_string());
    for (slot, t) in ["x", "y"].iter().zip(&inst.transforms) {
        put(&format!("scale_{slot}"), t.scale.to_string());
        put(&format!("rotation_{slot}"), t.rotation_z.to_string());
    }
    for (slot, r) in ["x", "y"].iter().zip(&inst.remesh) {
        if let Some(r) = r {
            put(&format!("remesh_{slot}_requested"), r.requested.to_string());
            put(&format!("remesh_{slot}_achieved"), r.achieved.to_string());
            put(&format!("remesh_{slot}_max_quadric_error"), r.max_quadric_error.to_string());
            put(&format!("remesh_{slot}_max_deviation_bound"), r.max_deviation_bound.to_string());
        }
    }
    if let Some(o) = &inst.overlap {
        put("overlap_x_to_y", o.frac_x_to_y.to_string());
        put("overlap_y_to_x", o.frac_y_to_x.to_string());
        put("overlap_iterations", o.iterations_used.to_string());
        put("overlap_within_range", o.within_range.to_string());
    }
    put("labels", inst.labels.is_some().to_string());
    s
}

/// Writes the instance files into `dir`, which must exist.
pub fn write_instance(inst: &MatchingInstance, dir: &Path, store_vis: bool) -> Result<()> {
    save_mesh(&inst.x, dir.join("x.ply"), MeshFormat::PlyBinary)?;
    save_mesh(&inst.y, dir.join("y.ply"), MeshFormat::PlyBinary)?;
    if inst.y_parent.is_some() {
        save_mesh(&inst.y_full, dir.join("y_full.ply"), MeshFormat::PlyBinary)?;
    }
    save_correspondence(&inst.gt, dir.join("gt.corr"), CorrEncoding::Text)?;
    if let Some(p) = &inst.x_parent {
        write_indices(p, &dir.join("x.parent"))?;
    }
    if let Some(p) = &inst.y_parent {
        write_indices(p, &dir.join("y.parent"))?;
    }
    if let Some([lx, ly]) = &inst.labels {
        save_labels(lx, dir.join("x.labels"))?;
        save_labels(ly, dir.join("y.labels"))?;
    }
    if store_vis {
        write_vis(inst, dir)?;
    }
    let meta = dir.join("meta.txt");
    fs::write(&meta, meta_text(inst)).map_err(|e| Error::io(&meta, e))
}

/// Reads an instance directory back.
pub fn load_instance(dir: &Path) -> Result<MatchingInstance> {
    let meta_path = dir.join("meta.txt");
    let kv = read_kv(&meta_path)?;
    let get = |k: &str| -> Result<String> { field(&kv, k, &meta_path) };
    let parse_enum = |k: &str| -> Result<String> { get(k) };
    let split: Split = parse_enum("split")?
        .parse()
        .map_err(|e: String| Error::format(&meta_path, "split", e))?;
    let setting: Setting = parse_enum("setting")?
        .parse()
        .map_err(|e: String| Error::format(&meta_path, "setting", e))?;
    let load = |name: &str, id: &str| -> Result<Mesh> {
        let mut m = load_mesh(dir.join(name))?;
        m.set_id(id);
        Ok(m)
    };
    let x = load("x.ply", &get("x_id")?)?;
    let y = load("y.ply", &get("y_id")?)?;
    let y_parent = dir.join("y.parent");
    let (y_full, y_parent) = if y_parent.exists() {
        (load("y_full.ply", &get("y_full_id")?)?, Some(read_indices(&y_parent)?))
    } else {
        (y.clone(), None)
    };
    let x_parent_path = dir.join("x.parent");
    let x_parent = x_parent_path.exists().then(|| read_indices(&x_parent_path)).transpose()?;
    let gt = load_correspondence(dir.join("gt.corr"))?;
    gt.validate(&x, &y)?;
    let remesh = ["x", "y"].map(|slot| -> Option<DecimationReport> {
        Some(DecimationReport {
            requested: field(&kv, &format!("remesh_{slot}_requested"), &meta_path).ok()?,
            achieved: field(&kv, &format!("remesh_{slot}_achieved"), &meta_path).ok()?,
            max_quadric_error: field(&kv, &format!("remesh_{slot}_max_quadric_error"), &meta_path).ok()?,
            max_deviation_bound: field(&kv, &format!("remesh_{slot}_max_deviation_bound"), &meta_path).ok()?,
        })
    });
    let transform = |slot: &str| -> Result<ShapeTransform> {
        Ok(ShapeTransform {
            scale: field(&kv, &format!("scale_{slot}"), &meta_path)?,
            rotation_z: field(&kv, &format!("rotation_{slot}"), &meta_path)?,
        })
    };
    let overlap = if kv.contains_key("overlap_x_to_y") {
        Some(OverlapStats {
            frac_x_to_y: field(&kv, "overlap_x_to_y", &meta_path)?,
            frac_y_to_x: field(&kv, "overlap_y_to_x", &meta_path)?,
            iterations_used: field(&kv, "overlap_iterations", &meta_path)?,
            within_range: field(&kv, "overlap_within_range", &meta_path)?,
        })
    } else {
        None
    };
    let labels = if dir.join("x.labels").exists() {
        let lx = load_labels(x.id(), dir.join("x.labels"))?;
        let ly = load_labels(y.id(), dir.join("y.labels"))?;
        lx.check_len(&x)?;
        ly.check_len(&y)?;
        Some([lx, ly])
    } else {
        None
    };
    let path = get("path")?;
    Ok(MatchingInstance {
        id: get("id")?,
        split,
        setting,
        transforms: [transform("x")?, transform("y")?],
        overlap,
        remesh,
        provenance: Provenance {
            source: get("source")?,
            target: get("target")?,
            source_dataset: get("source_dataset")?,
            source_category: get("source_category")?,
            target_dataset: get("target_dataset")?,
            target_category: get("target_category")?,
            path: path.split(',').filter(|s| !s.is_empty()).map(String::from).collect(),
            global_seed: field(&kv, "global_seed", &meta_path)?,
        },
        x,
        y,
        y_full,
        x_parent,
        y_parent,
        gt,
        labels,
    })
}
