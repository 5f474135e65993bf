use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Triangle mesh in the object's canonical frame (metres).
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Per-corner normals as given by the source file, if any.
    pub corner_normals: Option<Vec<[Vec3; 3]>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            triangles,
            corner_normals: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        if let Some(v) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("vertex {v} is not finite")));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&i) = tri.iter().find(|&&i| i >= self.vertices.len()) {
                return Err(Error::invalid(format!(
                    "triangle {t} references vertex {i} of {}",
                    self.vertices.len()
                )));
            }
        }
        if let Some(n) = &self.corner_normals {
            if n.len() != self.triangles.len() {
                return Err(Error::invalid("corner normal count does not match triangle count"));
            }
        }
        Ok(())
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Non-normalized face normal (length = twice the area), following winding.
    pub fn face_cross(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a))
    }

    pub fn face_normal(&self, t: usize) -> Option<Vec3> {
        self.face_cross(t).try_normalize(0.0)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.face_cross(t).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Area-weighted average of incident face normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let n = self.face_cross(t);
            for &i in tri {
                acc[i] += n;
            }
        }
        acc.into_iter().map(|n| n.try_normalize(0.0).unwrap_or_else(Vec3::zeros)).collect()
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for tri in &self.triangles {
            for &i in tri {
                lo = lo.inf(&self.vertices[i]);
                hi = hi.sup(&self.vertices[i]);
            }
        }
        (lo, hi)
    }

    /// True when every undirected edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        let mut edges: HashMap<(usize, usize), u32> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        edges.values().all(|&c| c == 2)
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
        }
        for t in &self.triangles {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
        }
        out
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_obj()).map_err(|e| Error::io(path, e))
    }
}

/// Loads an OBJ (by `.obj` extension) or binary STL (otherwise `.stl`).
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("obj") => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_obj(&text)
        }
        Some("stl") => parse_stl(&fs::read(path).map_err(|e| Error::io(path, e))?),
        _ => Err(Error::invalid(format!(
            "{}: unsupported mesh extension (expected .obj or .stl)",
            path.display()
        ))),
    }
}

fn text_err(line: usize, message: impl Into<String>) -> Error {
    Error::TextFormat {
        line,
        message: message.into(),
    }
}

fn parse_floats<'a>(line: usize, mut it: impl Iterator<Item = &'a str>) -> Result<Vec3> {
    let mut v = [0.0; 3];
    for c in v.iter_mut() {
        let tok = it.next().ok_or_else(|| text_err(line, "expected three coordinates"))?;
        *c = tok
            .parse::<f64>()
            .map_err(|_| text_err(line, format!("bad number '{tok}'")))?;
        if !c.is_finite() {
            return Err(text_err(line, format!("non-finite coordinate '{tok}'")));
        }
    }
    Ok(Vec3::from(v))
}

/// Resolves a 1-based (or negative, relative) OBJ index.
fn resolve_index(line: usize, tok: &str, count: usize, kind: &str) -> Result<usize> {
    let raw: i64 = tok
        .parse()
        .map_err(|_| text_err(line, format!("bad {kind} index '{tok}'")))?;
    let idx = if raw > 0 {
        raw - 1
    } else if raw < 0 {
        count as i64 + raw
    } else {
        -1
    };
    if idx < 0 || idx as usize >= count {
        return Err(text_err(
            line,
            format!("{kind} index {raw} out of range ({count} defined)"),
        ));
    }
    Ok(idx as usize)
}

/// Parses the OBJ subset `v`, `vn`, `f`; polygons are fan-triangulated.
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    let mut corner_normals: Vec<[Option<usize>; 3]> = Vec::new();
    let mut last_face_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => vertices.push(parse_floats(line, toks)?),
            Some("vn") => normals.push(parse_floats(line, toks)?),
            Some("f") => {
                last_face_line = line;
                let mut corners = Vec::new();
                for tok in toks {
                    let mut parts = tok.split('/');
                    let v = resolve_index(line, parts.next().unwrap_or(""), vertices.len(), "vertex")?;
                    let _texcoord = parts.next();
                    let n = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve_index(line, s, normals.len(), "normal")?),
                        _ => None,
                    };
                    corners.push((v, n));
                }
                if corners.len() < 3 {
                    return Err(text_err(line, "face needs at least three vertices"));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    triangles.push(tri.map(|c| c.0));
                    corner_normals.push(tri.map(|c| c.1));
                }
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(text_err(text.lines().count().max(1), "mesh has no faces"));
    }
    let corner_normals = if corner_normals.iter().all(|c| c.iter().all(Option::is_some)) {
        Some(
            corner_normals
                .iter()
                .map(|c| c.map(|n| normals[n.unwrap()].try_normalize(0.0).unwrap_or_else(Vec3::zeros)))
                .collect(),
        )
    } else {
        None
    };
    let mesh = TriangleMesh {
        vertices,
        triangles,
        corner_normals,
    };
    mesh.validate().map_err(|e| text_err(last_face_line, e.to_string()))?;
    Ok(mesh)
}

/// Parses binary STL; stored facet normals are ignored in favour of winding.
pub fn parse_stl(bytes: &[u8]) -> Result<TriangleMesh> {
    let fmt = |offset: usize, message: String| Error::BinaryFormat {
        offset: offset as u64,
        message,
    };
    if bytes.len() < 84 {
        return Err(fmt(bytes.len(), "truncated STL header".into()));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let expected = count
        .checked_mul(50)
        .and_then(|n| n.checked_add(84))
        .ok_or_else(|| fmt(80, "triangle count overflows".into()))?;
    if bytes.len() < expected {
        return Err(fmt(bytes.len(), format!("truncated STL: {count} triangles need {expected} bytes")));
    }
    if count == 0 {
        return Err(fmt(80, "STL contains no triangles".into()));
    }
    let mut vertices = Vec::with_capacity(3 * count);
    let mut triangles = Vec::with_capacity(count);
    let mut index: HashMap<[u32; 3], usize> = HashMap::new();
    for t in 0..count {
        let base = 84 + 50 * t + 12;
        let mut tri = [0usize; 3];
        for (k, slot) in tri.iter_mut().enumerate() {
            let off = base + 12 * k;
            let bits: [u32; 3] =
                std::array::from_fn(|a| u32::from_le_bytes(bytes[off + 4 * a..off + 4 * a + 4].try_into().unwrap()));
            let p = bits.map(f32::from_bits);
            if !p.iter().all(|c| c.is_finite()) {
                return Err(fmt(off, "non-finite STL vertex".into()));
            }
            *slot = *index.entry(bits).or_insert_with(|| {
                vertices.push(Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64));
                vertices.len() - 1
            });
        }
        triangles.push(tri);
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn to_stl(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = vec![0u8; 80];
    out.extend_from_slice(&(mesh.triangles.len() as u32).to_le_bytes());
    for t in 0..mesh.triangles.len() {
        let n = mesh.face_normal(t).unwrap_or_else(Vec3::zeros);
        for v in std::iter::once(n).chain(mesh.corners(t)) {
            for c in v.iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&[0, 0]);
    }
    out
}
