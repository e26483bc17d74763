//! Dense point-to-surface correspondences and per-vertex labels.
//!
//! # Correspondence files
//!
//! Text form (`.corr`), one header line per field then one record per source
//! vertex:
//!
//! ```text
//! corrbench-correspondence 1
//! source <id>
//! target <id>
//! vertices <n>
//! <face> <w0> <w1> <w2>
//! ```
//!
//! An unmatched vertex is written as face `-1` with zero weights. Weights are
//! printed in shortest round-trip form so reloading is bit-exact.
//!
//! Binary form (`.corrb`), all integers and floats little-endian:
//! 8-byte magic `CBCORR\0\x01`, `u32` length and UTF-8 source id, `u32`
//! length and UTF-8 target id, `u64` record count, then per record `i64`
//! face (`-1` = unmatched) followed by three `f64` weights.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::blend;
use crate::mesh::{Mesh, Point};

const TEXT_MAGIC: &str = "corrbench-correspondence 1";
const BIN_MAGIC: &[u8; 8] = b"CBCORR\0\x01";

/// A point on a mesh face in barycentric form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub face: usize,
    pub weights: [f64; 3],
}

impl SurfacePoint {
    /// Checks weights are non-negative and sum to one (within 1e-9).
    pub fn new(face: usize, weights: [f64; 3]) -> Result<Self> {
        let sp = Self { face, weights };
        if !sp.weights_valid() {
            return Err(Error::InvalidArgument(format!(
                "barycentric weights {weights:?} are not convex"
            )));
        }
        Ok(sp)
    }

    pub fn at_corner(face: usize, corner: usize) -> Self {
        let mut weights = [0.0; 3];
        weights[corner] = 1.0;
        Self { face, weights }
    }

    pub fn weights_valid(&self) -> bool {
        self.weights.iter().all(|w| *w >= 0.0 && w.is_finite())
            && (self.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    }

    /// Corner slot with the largest weight; ties go to the corner whose
    /// vertex index is lowest.
    pub fn dominant_corner(&self, mesh: &Mesh) -> usize {
        let f = mesh.faces()[self.face];
        let mut best = 0;
        for k in 1..3 {
            let (w, bw) = (self.weights[k], self.weights[best]);
            if w > bw || (w == bw && f[k] < f[best]) {
                best = k;
            }
        }
        best
    }

    /// Vertex with maximal barycentric weight (ties: lowest vertex index).
    pub fn dominant_vertex(&self, mesh: &Mesh) -> usize {
        mesh.faces()[self.face][self.dominant_corner(mesh)]
    }
}

pub fn evaluate_surface_point(mesh: &Mesh, sp: &SurfacePoint) -> Result<Point> {
    if sp.face >= mesh.face_count() {
        return Err(Error::InvalidArgument(format!(
            "face {} out of range for {} faces",
            sp.face,
            mesh.face_count()
        )));
    }
    let [a, b, c] = mesh.triangle(sp.face);
    Ok(blend(&a, &b, &c, &sp.weights))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseCorrespondence {
    pub source_id: String,
    pub target_id: String,
    /// One entry per source vertex; `None` is the UNMATCHED sentinel.
    pub map: Vec<Option<SurfacePoint>>,
}

impl DenseCorrespondence {
    pub fn new(source_id: impl Into<String>, target_id: impl Into<String>, map: Vec<Option<SurfacePoint>>) -> Self {
        Self {
            source_id: source_id.into(),
            target_id: target_id.into(),
            map,
        }
    }

    /// Every vertex mapped onto itself at the corner of its lowest incident
    /// face. Vertices without faces are projected onto the surface.
    pub fn identity(mesh: &Mesh) -> Self {
        let vf = mesh.vertex_faces();
        let mut index = None;
        let map = (0..mesh.vertex_count())
            .map(|v| {
                Some(match vf[v].first() {
                    Some(&f) => {
                        let corner = mesh.faces()[f].iter().position(|&x| x == v).expect("incident");
                        SurfacePoint::at_corner(f, corner)
                    }
                    None => index
                        .get_or_insert_with(|| crate::bvh::Bvh::new(mesh))
                        .project(mesh.vertex(v))
                        .0,
                })
            })
            .collect();
        Self::new(mesh.id(), mesh.id(), map)
    }

    /// Vertex-to-vertex map onto `target`, each hit placed at a corner of
    /// the lowest incident face.
    pub fn from_vertex_map(source_id: impl Into<String>, target: &Mesh, to: &[Option<usize>]) -> Result<Self> {
        let corners = Self::identity(target);
        let map = to
            .iter()
            .map(|t| match t {
                None => Ok(None),
                Some(t) => corners.map.get(*t).copied().ok_or_else(|| {
                    Error::InvalidArgument(format!("vertex {t} outside target with {} vertices", target.vertex_count()))
                }),
            })
            .collect::<Result<_>>()?;
        Ok(Self::new(source_id, target.id(), map))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn matched_count(&self) -> usize {
        self.map.iter().filter(|e| e.is_some()).count()
    }

    pub fn matched_mask(&self) -> Vec<bool> {
        self.map.iter().map(Option::is_some).collect()
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Correspondence {
            source_id: self.source_id.clone(),
            target_id: self.target_id.clone(),
            message: message.into(),
        }
    }

    /// Checks length against the source and face indices and weights
    /// against the target.
    pub fn validate(&self, source: &Mesh, target: &Mesh) -> Result<()> {
        if self.map.len() != source.vertex_count() {
            return Err(self.err(format!(
                "{} entries for a source with {} vertices",
                self.map.len(),
                source.vertex_count()
            )));
        }
        for (i, sp) in self.map.iter().enumerate() {
            if let Some(sp) = sp {
                if sp.face >= target.face_count() {
                    return Err(self.err(format!(
                        "vertex {i} maps to face {} but target has {} faces",
                        sp.face,
                        target.face_count()
                    )));
                }
                if !sp.weights_valid() {
                    return Err(self.err(format!("vertex {i} has invalid weights {:?}", sp.weights)));
                }
            }
        }
        Ok(())
    }

    /// 3D positions of every matched entry on `target`.
    pub fn evaluate(&self, target: &Mesh) -> Result<Vec<Option<Point>>> {
        self.map
            .iter()
            .map(|e| e.as_ref().map(|sp| evaluate_surface_point(target, sp)).transpose())
            .collect()
    }

    /// Dominant-weight target vertex for every matched entry.
    pub fn to_vertex_map(&self, target: &Mesh) -> Vec<Option<usize>> {
        self.map
            .iter()
            .map(|e| e.as_ref().map(|sp| sp.dominant_vertex(target)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrEncoding {
    Text,
    Binary,
}

impl CorrEncoding {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("corrb") => CorrEncoding::Binary,
            _ => CorrEncoding::Text,
        }
    }
}

pub fn save_correspondence(c: &DenseCorrespondence, path: impl AsRef<Path>, encoding: CorrEncoding) -> Result<()> {
    let path = path.as_ref();
    for id in [&c.source_id, &c.target_id] {
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("shape id `{id}` must be non-empty without whitespace")));
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match encoding {
        CorrEncoding::Text => write_text(&mut w, c),
        CorrEncoding::Binary => write_binary(&mut w, c),
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_text(w: &mut impl Write, c: &DenseCorrespondence) -> std::io::Result<()> {
    writeln!(w, "{TEXT_MAGIC}")?;
    writeln!(w, "source {}", c.source_id)?;
    writeln!(w, "target {}", c.target_id)?;
    writeln!(w, "vertices {}", c.map.len())?;
    for e in &c.map {
        match e {
            Some(sp) => writeln!(w, "{} {} {} {}", sp.face, sp.weights[0], sp.weights[1], sp.weights[2])?,
            None => writeln!(w, "-1 0 0 0")?,
        }
    }
    Ok(())
}

fn write_binary(w: &mut impl Write, c: &DenseCorrespondence) -> std::io::Result<()> {
    w.write_all(BIN_MAGIC)?;
    for id in [&c.source_id, &c.target_id] {
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
    }
    w.write_all(&(c.map.len() as u64).to_le_bytes())?;
    for e in &c.map {
        let (face, weights) = match e {
            Some(sp) => (sp.face as i64, sp.weights),
            None => (-1i64, [0.0; 3]),
        };
        w.write_all(&face.to_le_bytes())?;
        for x in weights {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads either encoding, detected from the leading bytes.
pub fn load_correspondence(path: impl AsRef<Path>) -> Result<DenseCorrespondence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BIN_MAGIC) {
        read_binary(path, &bytes)
    } else {
        read_text(path, &bytes)
    }
}

/// Source id, target id and record count without reading the records.
pub fn peek_correspondence_header(path: impl AsRef<Path>) -> Result<(String, String, usize)> {
    use std::io::Read;
    let path = path.as_ref();
    let mut head = Vec::new();
    fs::File::open(path)
        .and_then(|f| f.take(4096).read_to_end(&mut head))
        .map_err(|e| Error::io(path, e))?;
    if head.starts_with(BIN_MAGIC) {
        let mut r = Cursor { path, bytes: &head, pos: 8 };
        let s = r.string()?;
        let t = r.string()?;
        let n = r.u64()? as usize;
        return Ok((s, t, n));
    }
    let src = String::from_utf8_lossy(&head);
    let lines: Vec<&str> = src.lines().take(4).collect();
    if lines.len() < 4 {
        return Err(Error::format(path, 1, "truncated correspondence header"));
    }
    let (s, t, n) = parse_text_header(path, &lines)?;
    Ok((s, t, n))
}

fn parse_text_header(path: &Path, lines: &[&str]) -> Result<(String, String, usize)> {
    if lines[0].trim() != TEXT_MAGIC {
        return Err(Error::format(path, 1, "missing correspondence header"));
    }
    let field = |i: usize, key: &str| -> Result<String> {
        lines[i]
            .trim()
            .strip_prefix(key)
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .ok_or_else(|| Error::format(path, i + 1, format!("expected `{key} <value>`")))
    };
    let s = field(1, "source")?;
    let t = field(2, "target")?;
    let n = field(3, "vertices")?
        .parse()
        .map_err(|_| Error::format(path, 4, "bad vertex count"))?;
    Ok((s, t, n))
}

fn read_text(path: &Path, bytes: &[u8]) -> Result<DenseCorrespondence> {
    let src = std::str::from_utf8(bytes).map_err(|e| Error::format(path, e.valid_up_to(), "not UTF-8"))?;
    let lines: Vec<&str> = src.lines().collect();
    if lines.len() < 4 {
        return Err(Error::format(path, lines.len() + 1, "truncated correspondence header"));
    }
    let (source_id, target_id, n) = parse_text_header(path, &lines[..4])?;
    let records: Vec<(usize, &str)> = lines[4..]
        .iter()
        .enumerate()
        .map(|(i, l)| (i + 5, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if records.len() != n {
        return Err(Error::format(
            path,
            records.last().map_or(5, |r| r.0),
            format!("expected {n} records, found {}", records.len()),
        ));
    }
    let mut map = Vec::with_capacity(n);
    for (ln, l) in records {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(Error::format(path, ln, "expected `<face> <w0> <w1> <w2>`"));
        }
        let face: i64 = toks[0]
            .parse()
            .map_err(|_| Error::format(path, ln, format!("bad face `{}`", toks[0])))?;
        let mut weights = [0.0; 3];
        for k in 0..3 {
            weights[k] = toks[k + 1]
                .parse()
                .map_err(|_| Error::format(path, ln, format!("bad weight `{}`", toks[k + 1])))?;
        }
        map.push(record(path, ln, face, weights)?);
    }
    Ok(DenseCorrespondence::new(source_id, target_id, map))
}

fn record(path: &Path, loc: impl ToString, face: i64, weights: [f64; 3]) -> Result<Option<SurfacePoint>> {
    match face {
        -1 => Ok(None),
        f if f >= 0 => SurfacePoint::new(f as usize, weights)
            .map(Some)
            .map_err(|e| Error::format(path, loc, e.to_string())),
        f => Err(Error::format(path, loc, format!("invalid face index {f}"))),
    }
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.path, format!("byte {}", self.pos), "unexpected end of data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let at = self.pos;
        let raw = self.take(n)?.to_vec();
        String::from_utf8(raw).map_err(|_| Error::format(self.path, format!("byte {at}"), "id is not UTF-8"))
    }
}

fn read_binary(path: &Path, bytes: &[u8]) -> Result<DenseCorrespondence> {
    let mut r = Cursor { path, bytes, pos: 8 };
    let source_id = r.string()?;
    let target_id = r.string()?;
    let n = r.u64()? as usize;
    let mut map = Vec::with_capacity(n.min(bytes.len() / 32));
    for _ in 0..n {
        let at = r.pos;
        let face = r.i64()?;
        let weights = [r.f64()?, r.f64()?, r.f64()?];
        map.push(record(path, format!("byte {at}"), face, weights)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, format!("byte {}", r.pos), "trailing data"));
    }
    Ok(DenseCorrespondence::new(source_id, target_id, map))
}

/// Categorical per-vertex annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexLabels {
    pub shape_id: String,
    pub labels: Vec<i32>,
}

impl VertexLabels {
    pub const UNKNOWN: i32 = -1;
    pub const LEFT: i32 = 0;
    pub const RIGHT: i32 = 1;

    pub fn new(shape_id: impl Into<String>, labels: Vec<i32>) -> Self {
        Self {
            shape_id: shape_id.into(),
            labels,
        }
    }

    pub fn check_len(&self, mesh: &Mesh) -> Result<()> {
        if self.labels.len() != mesh.vertex_count() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for shape {} with {} vertices",
                self.labels.len(),
                self.shape_id,
                mesh.vertex_count()
            )));
        }
        Ok(())
    }
}

/// One integer label per line.
pub fn load_labels(shape_id: &str, path: impl AsRef<Path>) -> Result<VertexLabels> {
    let path = path.as_ref();
    let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let labels = src
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<i32>()
                .map_err(|_| Error::format(path, i + 1, format!("bad label `{}`", l.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VertexLabels::new(shape_id, labels))
}

pub fn save_labels(labels: &VertexLabels, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(labels.labels.len() * 3);
    for l in &labels.labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use proptest::prelude::*;

    #[test]
    fn evaluate_corner_and_centroid() {
        let m = synth::icosphere(1);
        let [a, b, c] = m.triangle(7);
        assert_eq!(evaluate_surface_point(&m, &SurfacePoint::at_corner(7, 0)).unwrap(), a);
        let third = 1.0 / 3.0;
        let q = evaluate_surface_point(&m, &SurfacePoint::new(7, [third; 3]).unwrap()).unwrap();
        let centroid = Point::from((a.coords + b.coords + c.coords) / 3.0);
        assert!((q - centroid).norm() < 1e-15);
        assert!(evaluate_surface_point(&m, &SurfacePoint::at_corner(999, 0)).is_err());
    }

    #[test]
    fn weight_invariants_enforced() {
        assert!(SurfacePoint::new(0, [0.5, 0.5, 0.0]).is_ok());
        assert!(SurfacePoint::new(0, [0.5, 0.6, -0.1]).is_err());
        assert!(SurfacePoint::new(0, [0.5, 0.6, 0.0]).is_err());
    }

    #[test]
    fn dominant_vertex_tie_goes_to_lowest_index() {
        let m = synth::icosphere(0);
        let f = m.faces()[3];
        let sp = SurfacePoint::new(3, [0.5, 0.5, 0.0]).unwrap();
        assert_eq!(sp.dominant_vertex(&m), f[0].min(f[1]));
    }

    #[test]
    fn identity_evaluates_to_vertices() {
        let m = synth::torus(10, 6, 1.0, 0.3);
        let id = DenseCorrespondence::identity(&m);
        id.validate(&m, &m).unwrap();
        for (p, q) in id.evaluate(&m).unwrap().iter().zip(m.vertices()) {
            assert_eq!(p.unwrap(), *q);
        }
        assert_eq!(id.to_vertex_map(&m), (0..m.vertex_count()).map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn validate_rejects_bad_lengths_and_faces() {
        let m = synth::icosphere(0);
        let mut c = DenseCorrespondence::identity(&m);
        c.map.pop();
        assert!(c.validate(&m, &m).is_err());
        let mut c = DenseCorrespondence::identity(&m);
        c.map[0] = Some(SurfacePoint::at_corner(50, 0));
        assert!(c.validate(&m, &m).is_err());
    }

    #[test]
    fn header_peek_and_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = synth::icosphere(1);
        let c = DenseCorrespondence::identity(&m);
        for (name, enc) in [("a.corr", CorrEncoding::Text), ("a.corrb", CorrEncoding::Binary)] {
            let p = dir.path().join(name);
            save_correspondence(&c, &p, enc).unwrap();
            assert_eq!(
                peek_correspondence_header(&p).unwrap(),
                ("icosphere".to_string(), "icosphere".to_string(), 42)
            );
        }
        let p = dir.path().join("bad.corr");
        fs::write(&p, "corrbench-correspondence 1\nsource a\ntarget b\nvertices 2\n0 1 0 0\n").unwrap();
        assert!(matches!(load_correspondence(&p), Err(Error::Format { .. })));
        fs::write(&p, "corrbench-correspondence 1\nsource a\ntarget b\nvertices 1\n0 0.7 0.7 0\n").unwrap();
        assert!(load_correspondence(&p).is_err());
        fs::write(&p, "corrbench-correspondence 1\nsource a\ntarget b\nvertices 1\n-1 0 0 0\n").unwrap();
        assert_eq!(load_correspondence(&p).unwrap().map, vec![None]);
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.labels");
        let l = VertexLabels::new("x", vec![0, 1, -1, 1]);
        save_labels(&l, &p).unwrap();
        assert_eq!(load_labels("x", &p).unwrap(), l);
    }

    fn arb_entry() -> impl Strategy<Value = Option<SurfacePoint>> {
        prop_oneof![
            1 => Just(None),
            4 => (0usize..500, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(f, a, b)| {
                let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
                Some(SurfacePoint { face: f, weights: [(1.0 - a - b).max(0.0), a, b] })
            }),
        ]
    }

    proptest! {
        #[test]
        fn both_encodings_reload_bit_exact(map in prop::collection::vec(arb_entry(), 0..64)) {
            let dir = tempfile::tempdir().unwrap();
            let c = DenseCorrespondence::new("src", "dst", map);
            for (name, enc) in [("c.corr", CorrEncoding::Text), ("c.corrb", CorrEncoding::Binary)] {
                let p = dir.path().join(name);
                save_correspondence(&c, &p, enc).unwrap();
                let back = load_correspondence(&p).unwrap();
                prop_assert_eq!(&back, &c);
            }
        }
    }
}
