//! OFF, PLY (ASCII and binary) and OBJ readers and writers.
//!
//! Only positions and triangle connectivity are kept. Polygons with more than
//! three corners are fan-triangulated around their first corner; normals,
//! texture coordinates and colours are skipped.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Face, Mesh, Point};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    PlyAscii,
    PlyBinary,
    Obj,
}

impl MeshFormat {
    /// Format implied by a path's extension. PLY defaults to binary.
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "off" => Some(MeshFormat::Off),
            "ply" => Some(MeshFormat::PlyBinary),
            "obj" => Some(MeshFormat::Obj),
            _ => None,
        }
    }
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{}: unsupported mesh extension (expected off, ply or obj)",
            path.display()
        ))
    })?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (vertices, faces) = match format {
        MeshFormat::Off => parse_off(path, &bytes)?,
        MeshFormat::PlyAscii | MeshFormat::PlyBinary => parse_ply(path, &bytes)?,
        MeshFormat::Obj => parse_obj(path, &bytes)?,
    };
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    Mesh::new(id, vertices, faces)
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>, format: MeshFormat) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        MeshFormat::Off => write_off(&mut w, mesh),
        MeshFormat::PlyAscii => write_ply(&mut w, mesh, false, None),
        MeshFormat::PlyBinary => write_ply(&mut w, mesh, true, None),
        MeshFormat::Obj => write_obj(&mut w, mesh),
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Binary PLY with per-vertex RGB, for visual inspection only.
pub fn save_mesh_with_colors(mesh: &Mesh, colors: &[[u8; 3]], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if colors.len() != mesh.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "{} colours for {} vertices",
            colors.len(),
            mesh.vertex_count()
        )));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ply(&mut w, mesh, true, Some(colors))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn write_off(w: &mut impl Write, mesh: &Mesh) -> std::io::Result<()> {
    writeln!(w, "OFF")?;
    writeln!(w, "{} {} 0", mesh.vertex_count(), mesh.face_count())?;
    for v in mesh.vertices() {
        writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
    }
    for f in mesh.faces() {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

fn write_obj(w: &mut impl Write, mesh: &Mesh) -> std::io::Result<()> {
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in mesh.faces() {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

fn write_ply(
    w: &mut impl Write,
    mesh: &Mesh,
    binary: bool,
    colors: Option<&[[u8; 3]]>,
) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    if binary {
        writeln!(w, "format binary_little_endian 1.0")?;
    } else {
        writeln!(w, "format ascii 1.0")?;
    }
    writeln!(w, "element vertex {}", mesh.vertex_count())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property double {axis}")?;
    }
    if colors.is_some() {
        for c in ["red", "green", "blue"] {
            writeln!(w, "property uchar {c}")?;
        }
    }
    writeln!(w, "element face {}", mesh.face_count())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for (i, v) in mesh.vertices().iter().enumerate() {
        if binary {
            w.write_all(&v.x.to_le_bytes())?;
            w.write_all(&v.y.to_le_bytes())?;
            w.write_all(&v.z.to_le_bytes())?;
            if let Some(c) = colors {
                w.write_all(&c[i])?;
            }
        } else {
            write!(w, "{} {} {}", v.x, v.y, v.z)?;
            if let Some(c) = colors {
                write!(w, " {} {} {}", c[i][0], c[i][1], c[i][2])?;
            }
            writeln!(w)?;
        }
    }
    for f in mesh.faces() {
        if binary {
            w.write_all(&[3u8])?;
            for &i in f {
                w.write_all(&(i as i32).to_le_bytes())?;
            }
        } else {
            writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
        }
    }
    Ok(())
}

fn triangulate(path: &Path, line: usize, corners: &[usize], faces: &mut Vec<Face>) -> Result<()> {
    if corners.len() < 3 {
        return Err(Error::format(path, line, "face with fewer than 3 corners"));
    }
    for k in 1..corners.len() - 1 {
        faces.push([corners[0], corners[k], corners[k + 1]]);
    }
    Ok(())
}

fn parse_f64(path: &Path, line: usize, tok: Option<&str>) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::format(path, line, "missing number"))?;
    tok.parse()
        .map_err(|_| Error::format(path, line, format!("bad number `{tok}`")))
}

fn parse_usize(path: &Path, line: usize, tok: Option<&str>) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::format(path, line, "missing integer"))?;
    tok.parse()
        .map_err(|_| Error::format(path, line, format!("bad index `{tok}`")))
}

fn text<'a>(path: &Path, bytes: &'a [u8]) -> Result<&'a str> {
    std::str::from_utf8(bytes).map_err(|e| Error::format(path, e.valid_up_to(), "not valid UTF-8"))
}

fn parse_off(path: &Path, bytes: &[u8]) -> Result<(Vec<Point>, Vec<Face>)> {
    let src = text(path, bytes)?;
    // (line number, tokens) with comments and blank lines removed
    let mut lines = src.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    });
    let (ln, header) = lines
        .next()
        .ok_or_else(|| Error::format(path, 1, "empty file"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::format(path, ln, "missing OFF header"))?
        .trim();
    let (ln, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| Error::format(path, ln, "missing element counts"))?
    } else {
        (ln, rest)
    };
    let mut it = counts.split_whitespace();
    let nv = parse_usize(path, ln, it.next())?;
    let nf = parse_usize(path, ln, it.next())?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::format(path, "EOF", "truncated vertex list"))?;
        let mut it = l.split_whitespace();
        let x = parse_f64(path, ln, it.next())?;
        let y = parse_f64(path, ln, it.next())?;
        let z = parse_f64(path, ln, it.next())?;
        vertices.push(Point::new(x, y, z));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::format(path, "EOF", "truncated face list"))?;
        let mut it = l.split_whitespace();
        let k = parse_usize(path, ln, it.next())?;
        let corners = (0..k)
            .map(|_| parse_usize(path, ln, it.next()))
            .collect::<Result<Vec<_>>>()?;
        triangulate(path, ln, &corners, &mut faces)?;
    }
    Ok((vertices, faces))
}

fn parse_obj(path: &Path, bytes: &[u8]) -> Result<(Vec<Point>, Vec<Face>)> {
    let src = text(path, bytes)?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in src.lines().enumerate() {
        let ln = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let x = parse_f64(path, ln, it.next())?;
                let y = parse_f64(path, ln, it.next())?;
                let z = parse_f64(path, ln, it.next())?;
                vertices.push(Point::new(x, y, z));
            }
            Some("f") => {
                let mut corners = Vec::new();
                for tok in it {
                    let idx = tok.split('/').next().unwrap_or("");
                    let raw: i64 = idx
                        .parse()
                        .map_err(|_| Error::format(path, ln, format!("bad face index `{tok}`")))?;
                    // OBJ indices are 1-based; negatives count back from the end
                    let resolved = if raw > 0 {
                        raw - 1
                    } else {
                        vertices.len() as i64 + raw
                    };
                    if resolved < 0 || raw == 0 {
                        return Err(Error::format(path, ln, format!("bad face index `{tok}`")));
                    }
                    corners.push(resolved as usize);
                }
                triangulate(path, ln, &corners, &mut faces)?;
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    LittleEndian,
    BigEndian,
}

struct BinReader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
    big_endian: bool,
}

impl BinReader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.bytes.len() {
            return Err(Error::format(
                self.path,
                format!("byte {}", self.pos),
                "unexpected end of binary data",
            ));
        }
        let mut buf = [0u8; N];
        buf.copy_from_slice(&self.bytes[self.pos..end]);
        if self.big_endian {
            buf.reverse();
        }
        self.pos = end;
        Ok(buf)
    }

    fn read(&mut self, ty: Scalar) -> Result<f64> {
        Ok(match ty {
            Scalar::I8 => i8::from_le_bytes(self.take()?) as f64,
            Scalar::U8 => u8::from_le_bytes(self.take()?) as f64,
            Scalar::I16 => i16::from_le_bytes(self.take()?) as f64,
            Scalar::U16 => u16::from_le_bytes(self.take()?) as f64,
            Scalar::I32 => i32::from_le_bytes(self.take()?) as f64,
            Scalar::U32 => u32::from_le_bytes(self.take()?) as f64,
            Scalar::F32 => f32::from_le_bytes(self.take()?) as f64,
            Scalar::F64 => f64::from_le_bytes(self.take()?),
        })
    }
}

fn parse_ply(path: &Path, bytes: &[u8]) -> Result<(Vec<Point>, Vec<Face>)> {
    const END: &[u8] = b"end_header";
    let header_end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::format(path, 1, "missing end_header"))?;
    let mut body = header_end + END.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) == Some(&b'\n') {
        body += 1;
    }
    let header = text(path, &bytes[..header_end])?;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for (i, line) in header.lines().enumerate() {
        let ln = i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["ply"] | [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::LittleEndian,
                    "binary_big_endian" => Encoding::BigEndian,
                    other => return Err(Error::format(path, ln, format!("unknown format {other}"))),
                });
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: parse_usize(path, ln, Some(count))?,
                props: Vec::new(),
            }),
            ["property", "list", count_ty, item_ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(path, ln, "property before element"))?;
                let c = Scalar::parse(count_ty)
                    .ok_or_else(|| Error::format(path, ln, format!("bad type {count_ty}")))?;
                let t = Scalar::parse(item_ty)
                    .ok_or_else(|| Error::format(path, ln, format!("bad type {item_ty}")))?;
                el.props.push(Property::List(name.to_string(), c, t));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(path, ln, "property before element"))?;
                let t = Scalar::parse(ty)
                    .ok_or_else(|| Error::format(path, ln, format!("bad type {ty}")))?;
                el.props.push(Property::Scalar(name.to_string(), t));
            }
            _ => return Err(Error::format(path, ln, format!("unrecognised header line `{line}`"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::format(path, 1, "missing format line"))?;

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    match encoding {
        Encoding::Ascii => {
            let src = text(path, &bytes[body..])?;
            let header_lines = header.lines().count() + 1;
            let mut lines = src
                .lines()
                .enumerate()
                .map(|(i, l)| (i + 1 + header_lines, l))
                .filter(|(_, l)| !l.trim().is_empty());
            for el in &elements {
                for _ in 0..el.count {
                    let (ln, l) = lines
                        .next()
                        .ok_or_else(|| Error::format(path, "EOF", "truncated element data"))?;
                    let mut toks = l.split_whitespace();
                    let mut values = Vec::new();
                    let mut lists = Vec::new();
                    for p in &el.props {
                        match p {
                            Property::Scalar(name, _) => {
                                values.push((name.as_str(), parse_f64(path, ln, toks.next())?))
                            }
                            Property::List(name, _, _) => {
                                let k = parse_usize(path, ln, toks.next())?;
                                let items = (0..k)
                                    .map(|_| parse_usize(path, ln, toks.next()))
                                    .collect::<Result<Vec<_>>>()?;
                                lists.push((name.as_str(), items));
                            }
                        }
                    }
                    store_element(path, ln, el, &values, &lists, &mut vertices, &mut faces)?;
                }
            }
        }
        Encoding::LittleEndian | Encoding::BigEndian => {
            let mut r = BinReader {
                path,
                bytes,
                pos: body,
                big_endian: encoding == Encoding::BigEndian,
            };
            for el in &elements {
                for _ in 0..el.count {
                    let at = r.pos;
                    let mut values = Vec::new();
                    let mut lists = Vec::new();
                    for p in &el.props {
                        match p {
                            Property::Scalar(name, ty) => values.push((name.as_str(), r.read(*ty)?)),
                            Property::List(name, cty, ity) => {
                                let k = r.read(*cty)?;
                                if k < 0.0 {
                                    return Err(Error::format(path, format!("byte {at}"), "negative list length"));
                                }
                                let mut items = Vec::with_capacity(k as usize);
                                for _ in 0..k as usize {
                                    let v = r.read(*ity)?;
                                    if v < 0.0 {
                                        return Err(Error::format(path, format!("byte {at}"), "negative index"));
                                    }
                                    items.push(v as usize);
                                }
                                lists.push((name.as_str(), items));
                            }
                        }
                    }
                    store_element(path, format!("byte {at}"), el, &values, &lists, &mut vertices, &mut faces)?;
                }
            }
        }
    }
    Ok((vertices, faces))
}

fn store_element(
    path: &Path,
    loc: impl ToString,
    el: &Element,
    values: &[(&str, f64)],
    lists: &[(&str, Vec<usize>)],
    vertices: &mut Vec<Point>,
    faces: &mut Vec<Face>,
) -> Result<()> {
    match el.name.as_str() {
        "vertex" => {
            let get = |axis: &str| {
                values
                    .iter()
                    .find(|(n, _)| *n == axis)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| Error::format(path, loc.to_string(), format!("vertex lacks {axis}")))
            };
            vertices.push(Point::new(get("x")?, get("y")?, get("z")?));
        }
        "face" => {
            let (_, corners) = lists
                .iter()
                .find(|(n, _)| *n == "vertex_indices" || *n == "vertex_index")
                .ok_or_else(|| Error::format(path, loc.to_string(), "face lacks vertex_indices"))?;
            let ln = loc.to_string();
            triangulate(path, 0, corners, faces)
                .map_err(|_| Error::format(path, ln, "face with fewer than 3 corners"))?;
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn single_triangle_off() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tri.off");
        fs::write(&p, "OFF\n# comment\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.face_count(), 1);
        assert_eq!(m.id(), "tri");
    }

    #[test]
    fn out_of_range_off_index_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.off");
        fs::write(&p, "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n").unwrap();
        let err = load_mesh(&p).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)), "{err}");
    }

    #[test]
    fn degenerate_face_lists_offenders() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("deg.obj");
        fs::write(&p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 1 2\n").unwrap();
        match load_mesh(&p) {
            Err(Error::DegenerateFaces { faces }) => assert_eq!(faces, vec![1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_error_carries_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.off");
        fs::write(&p, "OFF\n3 1 0\n0 0 0\n1 zero 0\n0 1 0\n3 0 1 2\n").unwrap();
        match load_mesh(&p) {
            Err(Error::Format { location, .. }) => assert_eq!(location, "4"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn obj_quads_and_slashes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.obj");
        fs::write(
            &p,
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n",
        )
        .unwrap();
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn all_formats_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cube = synth::cube();
        let sphere = synth::icosphere(3).map_vertices(|p| p * std::f64::consts::PI);
        for (ext, fmt) in [
            ("off", MeshFormat::Off),
            ("ply", MeshFormat::PlyAscii),
            ("ply", MeshFormat::PlyBinary),
            ("obj", MeshFormat::Obj),
        ] {
            for m in [&cube, &sphere] {
                let p = dir.path().join(format!("m.{ext}"));
                save_mesh(m, &p, fmt).unwrap();
                let back = load_mesh(&p).unwrap();
                assert_eq!(back.vertices(), m.vertices(), "{fmt:?}");
                assert_eq!(back.faces(), m.faces(), "{fmt:?}");
            }
        }
    }

    #[test]
    fn reads_float32_big_endian_ply_with_extra_props() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("be.ply");
        let mut bytes = b"ply\nformat binary_big_endian 1.0\ncomment x\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n".to_vec();
        for v in [[0f32, 0., 0.], [1., 0., 0.], [0., 1., 0.]] {
            for c in v {
                bytes.extend_from_slice(&c.to_be_bytes());
            }
            bytes.push(7);
        }
        bytes.push(3);
        for i in [0u32, 1, 2] {
            bytes.extend_from_slice(&i.to_be_bytes());
        }
        fs::write(&p, bytes).unwrap();
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.vertex(1), &Point::new(1.0, 0.0, 0.0));
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cut.ply");
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\nend_header\n".to_vec();
        bytes.extend_from_slice(&[0u8; 30]);
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_mesh(&p), Err(Error::Format { .. })));
    }
}
