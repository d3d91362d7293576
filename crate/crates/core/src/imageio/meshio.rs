use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::{TriangleMesh, UvLayer};
use crate::real::Real;

/// Side information gathered while parsing a mesh file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MeshReadInfo {
    /// Polygons with more than three corners that were fan-triangulated.
    pub triangulated_polygons: usize,
    /// `mtllib` referenced by an OBJ file, if any.
    pub material_library: Option<String>,
}

fn parse_err(location: String, message: impl Into<String>) -> Error {
    Error::Parse {
        location,
        message: message.into(),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

pub fn read_mesh<T: Real>(path: impl AsRef<Path>) -> Result<(TriangleMesh<T>, MeshReadInfo)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match extension(path).as_str() {
        "obj" => {
            let text = String::from_utf8_lossy(&bytes);
            read_obj(&text)
        }
        "ply" => read_ply(&bytes),
        other => Err(Error::Format(format!(
            "{}: unsupported mesh extension '{other}'",
            path.display()
        ))),
    }
}

pub fn write_mesh<T: Real>(mesh: &TriangleMesh<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match extension(path).as_str() {
        "obj" => write_obj(mesh, None).into_bytes(),
        "ply" => write_ply(mesh),
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported mesh extension '{other}'",
                path.display()
            )))
        }
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn resolve_index(tok: &str, count: usize, line: usize) -> Result<u32> {
    let i: i64 = tok
        .parse()
        .map_err(|_| parse_err(format!("line {line}"), format!("bad index '{tok}'")))?;
    let idx = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        -1
    };
    if idx < 0 || idx as usize >= count {
        return Err(parse_err(
            format!("line {line}"),
            format!("index {i} out of range (have {count})"),
        ));
    }
    Ok(idx as u32)
}

/// Parses Wavefront OBJ text. Polygons are fan-triangulated.
pub fn read_obj<T: Real>(text: &str) -> Result<(TriangleMesh<T>, MeshReadInfo)> {
    let mut vertices = Vec::new();
    let mut coords = Vec::new();
    let mut faces = Vec::new();
    let mut uv_faces = Vec::new();
    let mut all_have_uv = true;
    let mut info = MeshReadInfo::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut toks = content.split_whitespace();
        let Some(tag) = toks.next() else { continue };
        match tag {
            "v" => {
                let xyz: Vec<f64> = toks
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(format!("line {line}"), e.to_string()))?;
                if xyz.len() != 3 {
                    return Err(parse_err(format!("line {line}"), "vertex needs 3 coordinates"));
                }
                vertices.push(Vec3::from_f64([xyz[0], xyz[1], xyz[2]]));
            }
            "vt" => {
                let uv: Vec<f64> = toks
                    .take(2)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(format!("line {line}"), e.to_string()))?;
                if uv.is_empty() {
                    return Err(parse_err(format!("line {line}"), "texture coordinate needs u"));
                }
                coords.push([T::lit(uv[0]), T::lit(*uv.get(1).unwrap_or(&0.0))]);
            }
            "f" => {
                let mut corners = Vec::new();
                for t in toks {
                    let mut parts = t.split('/');
                    let v = resolve_index(parts.next().unwrap_or(""), vertices.len(), line)?;
                    let vt = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve_index(s, coords.len(), line)?),
                        _ => None,
                    };
                    corners.push((v, vt));
                }
                if corners.len() < 3 {
                    return Err(parse_err(format!("line {line}"), "face needs 3 corners"));
                }
                if corners.len() > 3 {
                    info.triangulated_polygons += 1;
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    faces.push([tri[0].0, tri[1].0, tri[2].0]);
                    match (tri[0].1, tri[1].1, tri[2].1) {
                        (Some(a), Some(b), Some(c)) => uv_faces.push([a, b, c]),
                        _ => all_have_uv = false,
                    }
                }
            }
            "mtllib" => {
                info.material_library = toks.next().map(str::to_string);
            }
            _ => {}
        }
    }
    let mut mesh = TriangleMesh::new(vertices, faces);
    if all_have_uv && !coords.is_empty() && !mesh.faces.is_empty() {
        mesh.uv = Some(UvLayer {
            coords,
            faces: uv_faces,
        });
    }
    Ok((mesh, info))
}

/// OBJ text; `material` adds `mtllib <name>.mtl` / `usemtl <name>` lines.
pub fn write_obj<T: Real>(mesh: &TriangleMesh<T>, material: Option<&str>) -> String {
    let mut s = String::with_capacity(mesh.vertices.len() * 40 + mesh.faces.len() * 24);
    if let Some(m) = material {
        let _ = writeln!(s, "mtllib {m}.mtl");
    }
    for v in &mesh.vertices {
        let [x, y, z] = v.to_f64();
        let _ = writeln!(s, "v {x} {y} {z}");
    }
    if let Some(uv) = &mesh.uv {
        for c in &uv.coords {
            let _ = writeln!(s, "vt {} {}", c[0].as_f64(), c[1].as_f64());
        }
    }
    if let Some(m) = material {
        let _ = writeln!(s, "usemtl {m}");
    }
    match &mesh.uv {
        Some(uv) => {
            for (f, t) in mesh.faces.iter().zip(&uv.faces) {
                let _ = writeln!(
                    s,
                    "f {}/{} {}/{} {}/{}",
                    f[0] + 1,
                    t[0] + 1,
                    f[1] + 1,
                    t[1] + 1,
                    f[2] + 1,
                    t[2] + 1
                );
            }
        }
        None => {
            for f in &mesh.faces {
                let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
            }
        }
    }
    s
}

/// Binary little-endian PLY. Uvs are written per vertex, splitting seams.
pub fn write_ply<T: Real>(mesh: &TriangleMesh<T>) -> Vec<u8> {
    let (positions, uvs, faces): (Vec<Vec3<T>>, Option<Vec<[T; 2]>>, Vec<[u32; 3]>) =
        match &mesh.uv {
            None => (mesh.vertices.clone(), None, mesh.faces.clone()),
            Some(uv) => {
                let mut map: HashMap<(u32, u32), u32> = HashMap::new();
                let mut pos = Vec::new();
                let mut tex = Vec::new();
                let mut faces = Vec::with_capacity(mesh.faces.len());
                for (f, t) in mesh.faces.iter().zip(&uv.faces) {
                    let mut out = [0u32; 3];
                    for k in 0..3 {
                        out[k] = *map.entry((f[k], t[k])).or_insert_with(|| {
                            pos.push(mesh.vertices[f[k] as usize]);
                            tex.push(uv.coords[t[k] as usize]);
                            (pos.len() - 1) as u32
                        });
                    }
                    faces.push(out);
                }
                (pos, Some(tex), faces)
            }
        };
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    let _ = writeln!(header, "element vertex {}", positions.len());
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if uvs.is_some() {
        header.push_str("property float u\nproperty float v\n");
    }
    let _ = writeln!(header, "element face {}", faces.len());
    header.push_str("property list uchar int vertex_indices\nend_header\n");
    let mut out = header.into_bytes();
    for (i, p) in positions.iter().enumerate() {
        for c in p.to_f64() {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        if let Some(uv) = &uvs {
            for c in uv[i] {
                out.extend_from_slice(&(c.as_f64() as f32).to_le_bytes());
            }
        }
    }
    for f in &faces {
        out.push(3);
        for &v in f {
            out.extend_from_slice(&(v as i32).to_le_bytes());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Single(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Reads scalar values from either the binary or the ascii body.
struct PlyReader<'a> {
    data: &'a [u8],
    pos: usize,
    ascii: bool,
}

impl PlyReader<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        parse_err(format!("byte offset {}", self.pos), msg)
    }

    fn read(&mut self, ty: Scalar) -> Result<f64> {
        if self.ascii {
            while self.pos < self.data.len() && self.data[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            let start = self.pos;
            while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            let tok = std::str::from_utf8(&self.data[start..self.pos]).unwrap_or("");
            return tok
                .parse::<f64>()
                .map_err(|_| self.err(format!("bad ascii value '{tok}'")));
        }
        let n = ty.size();
        if self.pos + n > self.data.len() {
            return Err(self.err("unexpected end of data"));
        }
        let b = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b.try_into().unwrap()),
        })
    }
}

/// Parses ascii or binary little-endian PLY.
pub fn read_ply<T: Real>(bytes: &[u8]) -> Result<(TriangleMesh<T>, MeshReadInfo)> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| parse_err("header".into(), "missing end_header"))?;
    let mut body = end + END.len();
    while body < bytes.len() && bytes[body] != b'\n' {
        body += 1;
    }
    body += 1;
    let header = std::str::from_utf8(&bytes[..end])
        .map_err(|_| parse_err("header".into(), "header is not utf-8"))?;
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(parse_err("line 1".into(), "missing 'ply' magic"));
    }
    let mut ascii = None;
    let mut elements: Vec<Element> = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            Some("format") => {
                ascii = Some(match toks.get(1).copied() {
                    Some("ascii") => true,
                    Some("binary_little_endian") => false,
                    other => {
                        return Err(parse_err(
                            format!("line {lineno}"),
                            format!("unsupported format {other:?}"),
                        ))
                    }
                });
            }
            Some("element") => {
                let count = toks
                    .get(2)
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(format!("line {lineno}"), "bad element count"))?;
                elements.push(Element {
                    name: toks.get(1).unwrap_or(&"").to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(format!("line {lineno}"), "property before element"))?;
                let bad = || parse_err(format!("line {lineno}"), "bad property");
                if toks.get(1) == Some(&"list") {
                    let c = toks.get(2).and_then(|s| Scalar::parse(s)).ok_or_else(bad)?;
                    let v = toks.get(3).and_then(|s| Scalar::parse(s)).ok_or_else(bad)?;
                    el.props
                        .push(Property::List(toks.get(4).unwrap_or(&"").to_string(), c, v));
                } else {
                    let t = toks.get(1).and_then(|s| Scalar::parse(s)).ok_or_else(bad)?;
                    el.props
                        .push(Property::Single(toks.get(2).unwrap_or(&"").to_string(), t));
                }
            }
            _ => {}
        }
    }
    let ascii = ascii.ok_or_else(|| parse_err("header".into(), "missing format line"))?;
    let mut rd = PlyReader {
        data: bytes,
        pos: body,
        ascii,
    };
    let mut vertices = Vec::new();
    let mut uvs: Vec<[T; 2]> = Vec::new();
    let mut faces = Vec::new();
    let mut info = MeshReadInfo::default();
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            let mut uv = [None, None];
            let mut poly: Vec<u32> = Vec::new();
            for p in &el.props {
                match p {
                    Property::Single(name, ty) => {
                        let v = rd.read(*ty)?;
                        match name.as_str() {
                            "x" => xyz[0] = v,
                            "y" => xyz[1] = v,
                            "z" => xyz[2] = v,
                            "u" | "s" | "texture_u" => uv[0] = Some(v),
                            "v" | "t" | "texture_v" => uv[1] = Some(v),
                            _ => {}
                        }
                    }
                    Property::List(name, cty, vty) => {
                        let n = rd.read(*cty)? as usize;
                        let wanted = name == "vertex_indices" || name == "vertex_index";
                        for _ in 0..n {
                            let v = rd.read(*vty)?;
                            if wanted {
                                if v < 0.0 {
                                    return Err(rd.err("negative vertex index"));
                                }
                                poly.push(v as u32);
                            }
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => {
                    vertices.push(Vec3::from_f64(xyz));
                    if let [Some(u), Some(v)] = uv {
                        uvs.push([T::lit(u), T::lit(v)]);
                    }
                }
                "face" => {
                    if poly.len() < 3 {
                        return Err(rd.err("face with fewer than 3 vertices"));
                    }
                    if poly.len() > 3 {
                        info.triangulated_polygons += 1;
                    }
                    for k in 1..poly.len() - 1 {
                        faces.push([poly[0], poly[k], poly[k + 1]]);
                    }
                }
                _ => {}
            }
        }
    }
    if let Some(bad) = faces.iter().flatten().find(|&&v| v as usize >= vertices.len()) {
        return Err(parse_err(
            "face element".into(),
            format!("vertex index {bad} out of range"),
        ));
    }
    let mut mesh = TriangleMesh::new(vertices, faces);
    if !uvs.is_empty() && uvs.len() == mesh.vertices.len() {
        mesh.uv = Some(UvLayer {
            coords: uvs,
            faces: mesh.faces.clone(),
        });
    }
    Ok((mesh, info))
}
