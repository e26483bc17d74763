//! C ABI over `corrbench`.
//!
//! Objects are opaque handles created by `cb_*_load` / `cb_*_new` and
//! released with the matching `cb_*_free`. Every fallible call returns a
//! [`CbStatus`]; on failure [`cb_last_error`] copies the message of the most
//! recent error on the calling thread. Strings handed out by the library
//! are released with [`cb_string_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use corrbench::correspondence::{load_correspondence, DenseCorrespondence};
use corrbench::geodesic::geodesic_distances;
use corrbench::geometry::surface_area;
use corrbench::mesh::{load_mesh, Mesh, Point};
use corrbench::metrics::{self, evaluate_instance, EvalOptions, PredictedMatching};
use corrbench::pipeline::{load_instance, run_generation, GenerationConfig, MatchingInstance};
use corrbench::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    InvalidMesh = 5,
    Degenerate = 6,
    Correspondence = 7,
    Network = 8,
    Config = 9,
    Panic = 10,
    Other = 11,
}

/// Triangle mesh handle.
pub struct CbMesh(Mesh);

/// Dense correspondence handle.
pub struct CbCorrespondence(DenseCorrespondence);

/// Generated matching instance handle.
pub struct CbInstance(MatchingInstance);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> CbStatus {
    match e {
        Error::Io { .. } => CbStatus::Io,
        Error::Format { .. } => CbStatus::Format,
        Error::InvalidMesh(_) | Error::DegenerateFaces { .. } => CbStatus::InvalidMesh,
        Error::Degenerate(_) | Error::EmptyScan => CbStatus::Degenerate,
        Error::InvalidArgument(_) => CbStatus::InvalidArgument,
        Error::Correspondence { .. } => CbStatus::Correspondence,
        Error::Network(_) | Error::NoPath { .. } => CbStatus::Network,
        Error::Config { .. } | Error::UnknownKey { .. } => CbStatus::Config,
        Error::Instance { source, .. } => status_of(source),
    }
}

struct Fail(CbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CbStatus::NullArgument, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CbStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            CbStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CbStatus::InvalidArgument, format!("`{what}` is not UTF-8")))?;
    Ok(Path::new(s))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), Fail> {
    if got != want {
        return Err(Fail(
            CbStatus::InvalidArgument,
            format!("`{what}` holds {got} entries, expected {want}"),
        ));
    }
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `cap`) and returns its full length in bytes.
///
/// # Safety
/// `buf` must point to `cap` writable bytes or be null with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn cb_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads an OFF, PLY or OBJ mesh.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_mesh_load(path: *const c_char, out: *mut *mut CbMesh) -> CbStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = Box::into_raw(Box::new(CbMesh(load_mesh(path)?)));
        Ok(())
    })
}

/// Builds a mesh from `3 * vertex_count` coordinates and `3 * face_count`
/// vertex indices.
///
/// # Safety
/// The arrays must hold the stated number of elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_mesh_new(
    coords: *const f64,
    vertex_count: usize,
    indices: *const u32,
    face_count: usize,
    out: *mut *mut CbMesh,
) -> CbStatus {
    guard(|| {
        let c = in_slice(coords, 3 * vertex_count, "coords")?;
        let f = in_slice(indices, 3 * face_count, "indices")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let vertices = c.chunks_exact(3).map(|p| Point::new(p[0], p[1], p[2])).collect();
        let faces = f
            .chunks_exact(3)
            .map(|t| [t[0] as usize, t[1] as usize, t[2] as usize])
            .collect();
        *out = Box::into_raw(Box::new(CbMesh(Mesh::new("mesh", vertices, faces)?)));
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cb_mesh_free(mesh: *mut CbMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Vertex count, 0 for a null handle.
///
/// # Safety
/// `mesh` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cb_mesh_vertex_count(mesh: *const CbMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.vertex_count())
}

/// Face count, 0 for a null handle.
///
/// # Safety
/// `mesh` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cb_mesh_face_count(mesh: *const CbMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.face_count())
}

/// # Safety
/// `mesh` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_mesh_surface_area(mesh: *const CbMesh, out: *mut f64) -> CbStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        *out.as_mut().ok_or_else(|| null("out"))? = surface_area(&m.0);
        Ok(())
    })
}

/// Copies the `3 * vertex_count` coordinates into `out`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cb_mesh_vertices(mesh: *const CbMesh, out: *mut f64, len: usize) -> CbStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        check_len(len, 3 * m.0.vertex_count(), "out")?;
        let out = out_slice(out, len, "out")?;
        for (o, p) in out.chunks_exact_mut(3).zip(m.0.vertices()) {
            o.copy_from_slice(&[p.x, p.y, p.z]);
        }
        Ok(())
    })
}

/// Edge-graph geodesic distances from `source` to every vertex.
///
/// # Safety
/// `out` must hold `len == vertex_count` doubles.
#[no_mangle]
pub unsafe extern "C" fn cb_geodesic_distances(mesh: *const CbMesh, source: usize, out: *mut f64, len: usize) -> CbStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        check_len(len, m.0.vertex_count(), "out")?;
        if source >= m.0.vertex_count() {
            return Err(Fail(CbStatus::InvalidArgument, format!("source {source} out of range")));
        }
        out_slice(out, len, "out")?.copy_from_slice(&geodesic_distances(&m.0, source));
        Ok(())
    })
}

/// Loads a correspondence file (text or binary).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_correspondence_load(path: *const c_char, out: *mut *mut CbCorrespondence) -> CbStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = Box::into_raw(Box::new(CbCorrespondence(load_correspondence(path)?)));
        Ok(())
    })
}

/// # Safety
/// `corr` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cb_correspondence_free(corr: *mut CbCorrespondence) {
    if !corr.is_null() {
        drop(Box::from_raw(corr));
    }
}

/// Number of source vertices, 0 for a null handle.
///
/// # Safety
/// `corr` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cb_correspondence_len(corr: *const CbCorrespondence) -> usize {
    corr.as_ref().map_or(0, |c| c.0.len())
}

/// Dominant-vertex snap onto `target`; `-1` marks unmatched vertices.
///
/// # Safety
/// `out` must hold `len == cb_correspondence_len(corr)` values.
#[no_mangle]
pub unsafe extern "C" fn cb_correspondence_vertex_map(
    corr: *const CbCorrespondence,
    target: *const CbMesh,
    out: *mut i64,
    len: usize,
) -> CbStatus {
    guard(|| {
        let c = handle(corr, "corr")?;
        let t = handle(target, "target")?;
        check_len(len, c.0.len(), "out")?;
        if let Some(sp) = c.0.map.iter().flatten().find(|sp| sp.face >= t.0.face_count()) {
            return Err(Fail(CbStatus::Correspondence, format!("face {} outside target", sp.face)));
        }
        for (o, v) in out_slice(out, len, "out")?.iter_mut().zip(c.0.to_vertex_map(&t.0)) {
            *o = v.map_or(-1, |v| v as i64);
        }
        Ok(())
    })
}

fn masks<'a>(a: &'a [u8], b: &'a [u8]) -> (Vec<bool>, Vec<bool>) {
    (a.iter().map(|x| *x != 0).collect(), b.iter().map(|x| *x != 0).collect())
}

/// Intersection over union of two byte masks (nonzero = set).
///
/// # Safety
/// Both masks must hold `len` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_iou(pred: *const u8, gt: *const u8, len: usize, out: *mut f64) -> CbStatus {
    guard(|| {
        let (p, g) = masks(in_slice(pred, len, "pred")?, in_slice(gt, len, "gt")?);
        *out.as_mut().ok_or_else(|| null("out"))? = metrics::iou(&p, &g)?;
        Ok(())
    })
}

/// F1 score of two byte masks (nonzero = set).
///
/// # Safety
/// Both masks must hold `len` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_f1(pred: *const u8, gt: *const u8, len: usize, out: *mut f64) -> CbStatus {
    guard(|| {
        let (p, g) = masks(in_slice(pred, len, "pred")?, in_slice(gt, len, "gt")?);
        *out.as_mut().ok_or_else(|| null("out"))? = metrics::f1(&p, &g)?;
        Ok(())
    })
}

/// Loads an instance directory written by the generator.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_instance_load(dir: *const c_char, out: *mut *mut CbInstance) -> CbStatus {
    guard(|| {
        let dir = path_arg(dir, "dir")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = Box::into_raw(Box::new(CbInstance(load_instance(dir)?)));
        Ok(())
    })
}

/// # Safety
/// `inst` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cb_instance_free(inst: *mut CbInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Source (x) vertex count, 0 for a null handle.
///
/// # Safety
/// `inst` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cb_instance_source_vertices(inst: *const CbInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.0.x.vertex_count())
}

/// Writes the ground truth snapped to target vertices (`-1` unmatched).
///
/// # Safety
/// `out` must hold `len == cb_instance_source_vertices(inst)` values.
#[no_mangle]
pub unsafe extern "C" fn cb_instance_ground_truth(inst: *const CbInstance, out: *mut i64, len: usize) -> CbStatus {
    guard(|| {
        let i = handle(inst, "inst")?;
        check_len(len, i.0.x.vertex_count(), "out")?;
        for (o, v) in out_slice(out, len, "out")?.iter_mut().zip(i.0.gt.to_vertex_map(&i.0.y)) {
            *o = v.map_or(-1, |v| v as i64);
        }
        Ok(())
    })
}

/// Scores a vertex prediction (`-1` unmatched) and returns the JSON report
/// in `*json`, to be released with [`cb_string_free`]. `auc` may be null.
///
/// # Safety
/// `pred` must hold `len` values; `json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cb_instance_evaluate(
    inst: *const CbInstance,
    pred: *const i64,
    len: usize,
    auc: *mut f64,
    json: *mut *mut c_char,
) -> CbStatus {
    guard(|| {
        let i = handle(inst, "inst")?;
        let json = json.as_mut().ok_or_else(|| null("json"))?;
        let map = in_slice(pred, len, "pred")?
            .iter()
            .map(|&t| match t {
                -1 => Ok(None),
                t if t >= 0 => Ok(Some(t as usize)),
                t => Err(Fail(CbStatus::InvalidArgument, format!("bad prediction {t}"))),
            })
            .collect::<Result<_, _>>()?;
        let report = evaluate_instance(&i.0, &PredictedMatching::new(map), &EvalOptions::default())?;
        if let Some(a) = auc.as_mut() {
            *a = report.auc;
        }
        *json = CString::new(report.to_json()).expect("json has no NUL").into_raw();
        Ok(())
    })
}

/// Runs a generation from config text (`key = value` lines). The number of
/// generated and failed instances are written when the pointers are set.
///
/// # Safety
/// `config` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cb_run_generation(config: *const c_char, generated: *mut usize, failed: *mut usize) -> CbStatus {
    guard(|| {
        if config.is_null() {
            return Err(null("config"));
        }
        let text = CStr::from_ptr(config)
            .to_str()
            .map_err(|_| Fail(CbStatus::InvalidArgument, "config is not UTF-8".into()))?;
        let cfg = GenerationConfig::from_text(text, Path::new("<ffi>"))?;
        let s = run_generation(&cfg)?;
        if let Some(g) = generated.as_mut() {
            *g = s.generated;
        }
        if let Some(f) = failed.as_mut() {
            *f = s.failed.len();
        }
        Ok(())
    })
}
