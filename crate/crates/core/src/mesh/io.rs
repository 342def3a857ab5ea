//! ASCII mesh readers and writers: OFF, OBJ, PLY surfaces and `.node`/`.ele`
//! tetrahedral meshes.
//!
//! Writers print coordinates with 17 significant digits so that a written
//! mesh reloads bit-identically.

use std::fmt::Write as _;
use std::path::Path;

use super::geometry::Vec3;
use super::{SurfaceMesh, TetMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceFormat {
    Off,
    Obj,
    Ply,
}

impl SurfaceFormat {
    /// Format implied by the file extension (case-insensitive).
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "off" => Ok(SurfaceFormat::Off),
            "obj" => Ok(SurfaceFormat::Obj),
            "ply" => Ok(SurfaceFormat::Ply),
            _ => Err(Error::parse(
                path,
                0,
                format!("unknown surface format extension {ext:?} (expected off, obj or ply)"),
            )),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a surface mesh, picking the format from the extension.
pub fn load_surface_mesh(path: &Path) -> Result<SurfaceMesh> {
    let format = SurfaceFormat::from_path(path)?;
    load_surface_mesh_as(path, format)
}

pub fn load_surface_mesh_as(path: &Path, format: SurfaceFormat) -> Result<SurfaceMesh> {
    let text = read_text(path)?;
    let (v, t) = match format {
        SurfaceFormat::Off => parse_off(&text, path)?,
        SurfaceFormat::Obj => parse_obj(&text, path)?,
        SurfaceFormat::Ply => parse_ply(&text, path)?,
    };
    SurfaceMesh::new(v, t)
}

/// Non-empty, comment-stripped lines with 1-based line numbers.
fn content_lines(text: &str, comment: char) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(move |(i, l)| {
        let l = l.split(comment).next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_f64(tok: Option<&str>, path: &Path, line: usize, what: &str) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::parse(path, line, format!("missing {what}")))?;
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what} {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite {what} {tok:?}")));
    }
    Ok(v)
}

fn parse_usize(tok: Option<&str>, path: &Path, line: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::parse(path, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what} {tok:?}")))
}

fn parse_point<'a>(
    toks: &mut impl Iterator<Item = &'a str>,
    path: &Path,
    line: usize,
) -> Result<Vec3> {
    Ok(Vec3::new(
        parse_f64(toks.next(), path, line, "x coordinate")?,
        parse_f64(toks.next(), path, line, "y coordinate")?,
        parse_f64(toks.next(), path, line, "z coordinate")?,
    ))
}

/// Fan triangulation of a polygon.
fn push_polygon(poly: &[usize], tris: &mut Vec<[usize; 3]>) {
    for k in 1..poly.len() - 1 {
        tris.push([poly[0], poly[k], poly[k + 1]]);
    }
}

type RawMesh = (Vec<Vec3>, Vec<[usize; 3]>);

pub(crate) fn parse_off(text: &str, path: &Path) -> Result<RawMesh> {
    let mut lines = content_lines(text, '#');
    let (l0, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty OFF file"))?;
    // The counts may share the header line ("OFF 8 12 0").
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| Error::parse(path, l0, "missing OFF header"))?
        .trim();
    let (lc, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| Error::parse(path, l0, "missing OFF counts line"))?
    } else {
        (l0, rest)
    };
    let mut toks = counts.split_whitespace();
    let nv = parse_usize(toks.next(), path, lc, "vertex count")?;
    let nf = parse_usize(toks.next(), path, lc, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, lc, "unexpected end of file in vertex list"))?;
        vertices.push(parse_point(&mut l.split_whitespace(), path, ln)?);
    }
    let mut tris = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(path, lc, "unexpected end of file in face list"))?;
        let mut toks = l.split_whitespace();
        let k = parse_usize(toks.next(), path, ln, "polygon size")?;
        if k < 3 {
            return Err(Error::parse(path, ln, format!("polygon with {k} vertices")));
        }
        let poly = (0..k)
            .map(|_| parse_usize(toks.next(), path, ln, "vertex index"))
            .collect::<Result<Vec<_>>>()?;
        push_polygon(&poly, &mut tris);
    }
    Ok((vertices, tris))
}

pub(crate) fn parse_obj(text: &str, path: &Path) -> Result<RawMesh> {
    let mut vertices = Vec::new();
    let mut tris = Vec::new();
    for (ln, l) in content_lines(text, '#') {
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some("v") => vertices.push(parse_point(&mut toks, path, ln)?),
            Some("f") => {
                let mut poly = Vec::new();
                for tok in toks {
                    // "i", "i/t", "i//n" or "i/t/n"; negative indices count from the end.
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| Error::parse(path, ln, format!("invalid face index {tok:?}")))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(Error::parse(path, ln, "face index 0 is not valid in OBJ"));
                    };
                    if resolved < 0 {
                        return Err(Error::parse(
                            path,
                            ln,
                            format!("relative face index {idx} before any vertex"),
                        ));
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(Error::parse(path, ln, format!("face with {} vertices", poly.len())));
                }
                push_polygon(&poly, &mut tris);
            }
            _ => {}
        }
    }
    Ok((vertices, tris))
}

pub(crate) fn parse_ply(text: &str, path: &Path) -> Result<RawMesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(path, 1, "missing ply magic")),
    }

    struct Element {
        name: String,
        count: usize,
        props: Vec<String>,
        list_index: Option<usize>,
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut header_end = 0;
    for (ln, l) in lines.by_ref() {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.first().copied() {
            Some("format") => {
                if toks.get(1) != Some(&"ascii") {
                    return Err(Error::parse(path, ln, "only ascii PLY is supported"));
                }
            }
            Some("element") => {
                let name = toks
                    .get(1)
                    .ok_or_else(|| Error::parse(path, ln, "element without name"))?;
                let count = parse_usize(toks.get(2).copied(), path, ln, "element count")?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                    list_index: None,
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, ln, "property before element"))?;
                if toks.get(1) == Some(&"list") {
                    el.list_index = Some(el.props.len());
                }
                let pname = toks
                    .last()
                    .ok_or_else(|| Error::parse(path, ln, "property without name"))?;
                el.props.push(pname.to_string());
            }
            Some("end_header") => {
                header_end = ln;
                break;
            }
            _ => {}
        }
    }
    if header_end == 0 {
        return Err(Error::parse(path, 1, "missing end_header"));
    }

    let mut body = lines.filter(|(_, l)| !l.is_empty());
    let mut vertices = Vec::new();
    let mut tris = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let (ln, l) = body.next().ok_or_else(|| {
                Error::parse(path, header_end, format!("unexpected end of file in element {}", el.name))
            })?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let coord = |name: &str| -> Result<f64> {
                        let k = el.props.iter().position(|p| p == name).ok_or_else(|| {
                            Error::parse(path, header_end, format!("vertex has no {name} property"))
                        })?;
                        parse_f64(toks.get(k).copied(), path, ln, name)
                    };
                    vertices.push(Vec3::new(coord("x")?, coord("y")?, coord("z")?));
                }
                "face" => {
                    // Scalar properties before the list shift its position.
                    let k = el.list_index.ok_or_else(|| {
                        Error::parse(path, header_end, "face element has no list property")
                    })?;
                    let n = parse_usize(toks.get(k).copied(), path, ln, "polygon size")?;
                    if n < 3 {
                        return Err(Error::parse(path, ln, format!("polygon with {n} vertices")));
                    }
                    let poly = (0..n)
                        .map(|j| parse_usize(toks.get(k + 1 + j).copied(), path, ln, "vertex index"))
                        .collect::<Result<Vec<_>>>()?;
                    push_polygon(&poly, &mut tris);
                }
                _ => {}
            }
        }
    }
    Ok((vertices, tris))
}

fn fmt_point(out: &mut String, p: &Vec3) {
    let _ = write!(out, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z);
}

pub fn write_surface_mesh(path: &Path, mesh: &SurfaceMesh) -> Result<()> {
    match SurfaceFormat::from_path(path)? {
        SurfaceFormat::Off => write_off(path, mesh),
        SurfaceFormat::Obj => write_obj(path, mesh),
        SurfaceFormat::Ply => write_ply(path, mesh),
    }
}

pub fn write_off(path: &Path, mesh: &SurfaceMesh) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n{} {} 0", mesh.num_vertices(), mesh.num_triangles());
    for v in mesh.vertices() {
        fmt_point(&mut s, v);
        s.push('\n');
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    write_text(path, &s)
}

pub fn write_obj(path: &Path, mesh: &SurfaceMesh) -> Result<()> {
    write_obj_points(path, mesh.vertices(), mesh.triangles())
}

/// OBJ output from raw positions, used for deformed states that need not
/// pass mesh validation.
pub fn write_obj_points(path: &Path, vertices: &[Vec3], triangles: &[[usize; 3]]) -> Result<()> {
    let mut s = String::new();
    for v in vertices {
        s.push_str("v ");
        fmt_point(&mut s, v);
        s.push('\n');
    }
    for t in triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    write_text(path, &s)
}

pub fn write_ply(path: &Path, mesh: &SurfaceMesh) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header",
        mesh.num_vertices(),
        mesh.num_triangles()
    );
    for v in mesh.vertices() {
        fmt_point(&mut s, v);
        s.push('\n');
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    write_text(path, &s)
}

/// Loads a `.node`/`.ele` pair. Indices may start at 0 or 1; the base is
/// taken from the first node line.
pub fn load_tet_mesh(node_path: &Path, ele_path: &Path) -> Result<TetMesh> {
    let node_text = read_text(node_path)?;
    let ele_text = read_text(ele_path)?;

    let mut lines = content_lines(&node_text, '#');
    let (lh, header) = lines
        .next()
        .ok_or_else(|| Error::parse(node_path, 1, "empty node file"))?;
    let mut toks = header.split_whitespace();
    let n = parse_usize(toks.next(), node_path, lh, "node count")?;
    let dim = parse_usize(toks.next(), node_path, lh, "dimension")?;
    if dim != 3 {
        return Err(Error::parse(node_path, lh, format!("dimension {dim}, expected 3")));
    }
    let mut nodes = Vec::with_capacity(n);
    let mut base = None;
    for k in 0..n {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(node_path, lh, format!("expected {n} nodes, found {k}")))?;
        let mut toks = l.split_whitespace();
        let id = parse_usize(toks.next(), node_path, ln, "node index")?;
        let b = *base.get_or_insert(id);
        if b > 1 || id != b + k {
            return Err(Error::parse(
                node_path,
                ln,
                format!("node index {id} out of sequence (expected {})", b.min(1) + k),
            ));
        }
        nodes.push(parse_point(&mut toks, node_path, ln)?);
    }
    let base = base.unwrap_or(1);

    let mut lines = content_lines(&ele_text, '#');
    let (lh, header) = lines
        .next()
        .ok_or_else(|| Error::parse(ele_path, 1, "empty element file"))?;
    let mut toks = header.split_whitespace();
    let m = parse_usize(toks.next(), ele_path, lh, "element count")?;
    let per = parse_usize(toks.next(), ele_path, lh, "nodes per element")?;
    if per != 4 {
        return Err(Error::parse(
            ele_path,
            lh,
            format!("{per} nodes per element; only linear tets (4) are supported"),
        ));
    }
    let mut tets = Vec::with_capacity(m);
    for k in 0..m {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(ele_path, lh, format!("expected {m} elements, found {k}")))?;
        let mut toks = l.split_whitespace();
        parse_usize(toks.next(), ele_path, ln, "element index")?;
        let mut t = [0usize; 4];
        for slot in &mut t {
            let id = parse_usize(toks.next(), ele_path, ln, "node index")?;
            if id < base || id - base >= n {
                return Err(Error::parse(
                    ele_path,
                    ln,
                    format!("node index {id} out of range for {n} nodes with base {base}"),
                ));
            }
            *slot = id - base;
        }
        tets.push(t);
    }
    TetMesh::new(nodes, tets)
}

/// Writes a 1-based `.node` file.
pub fn write_node_file(path: &Path, nodes: &[Vec3]) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "{} 3 0 0", nodes.len());
    for (i, p) in nodes.iter().enumerate() {
        let _ = write!(s, "{} ", i + 1);
        fmt_point(&mut s, p);
        s.push('\n');
    }
    write_text(path, &s)
}

/// Writes a 1-based `.node`/`.ele` pair.
pub fn write_tet_mesh(node_path: &Path, ele_path: &Path, mesh: &TetMesh) -> Result<()> {
    write_node_file(node_path, mesh.nodes())?;
    let mut s = String::new();
    let _ = writeln!(s, "{} 4 0", mesh.num_tets());
    for (e, t) in mesh.tets().iter().enumerate() {
        let _ = writeln!(s, "{} {} {} {} {}", e + 1, t[0] + 1, t[1] + 1, t[2] + 1, t[3] + 1);
    }
    write_text(ele_path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn off_single_triangle() {
        let (v, t) = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", p()).unwrap();
        assert_eq!((v.len(), t.len()), (3, 1));
    }

    #[test]
    fn off_reports_line_number() {
        let err = parse_off("OFF\n3 1 0\n0 0 0\n1 x 0\n0 1 0\n3 0 1 2\n", p()).unwrap_err();
        assert!(err.to_string().contains(":4"), "{err}");
    }

    #[test]
    fn obj_quads_and_slashes() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\nf -4 -3 -2\n";
        let (v, t) = parse_obj(text, p()).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(t, vec![[0, 1, 2], [0, 2, 3], [0, 1, 2]]);
    }

    #[test]
    fn ply_with_extra_properties() {
        let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nelement face 1\nproperty uchar flags\nproperty list uchar int vertex_indices\nend_header\n0 0 0 9\n1 0 0 9\n0 1 0 9\n7 3 0 1 2\n";
        let (v, t) = parse_ply(text, p()).unwrap();
        assert_eq!(v[1], Vec3::x());
        assert_eq!(t, vec![[0, 1, 2]]);
    }
}
