//! ASCII OFF reading and writing.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{SurfaceMesh, Vec3};
use crate::error::{Error, Result};

/// Parse an ASCII OFF stream. Only triangular faces are accepted.
pub fn read_off<R: BufRead>(reader: R) -> Result<SurfaceMesh> {
    let mut tokens: Vec<(usize, String)> = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("");
        tokens.extend(content.split_whitespace().map(|t| (ln + 1, t.to_string())));
    }
    let mut it = tokens.into_iter();
    let (line, head) = it.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    if head != "OFF" {
        return Err(Error::Parse { line, msg: format!("expected `OFF` header, found `{head}`") });
    }
    let mut next_num = |what: &str| -> Result<(usize, String)> {
        it.next().ok_or_else(|| Error::Parse { line: 0, msg: format!("unexpected end of file reading {what}") })
    };
    let parse_usize = |(line, t): (usize, String)| -> Result<usize> {
        t.parse().map_err(|_| Error::Parse { line, msg: format!("expected integer, found `{t}`") })
    };
    let parse_f64 = |(line, t): (usize, String)| -> Result<f64> {
        t.parse().map_err(|_| Error::Parse { line, msg: format!("expected number, found `{t}`") })
    };
    let nv = parse_usize(next_num("vertex count")?)?;
    let nf = parse_usize(next_num("face count")?)?;
    let _ne = parse_usize(next_num("edge count")?)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = parse_f64(next_num("vertex")?)?;
        let y = parse_f64(next_num("vertex")?)?;
        let z = parse_f64(next_num("vertex")?)?;
        vertices.push(Vec3::new(x, y, z));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let tok = next_num("face")?;
        let line = tok.0;
        let k = parse_usize(tok)?;
        if k != 3 {
            return Err(Error::Parse { line, msg: format!("only triangles are supported, found a {k}-gon") });
        }
        let a = parse_usize(next_num("face")?)?;
        let b = parse_usize(next_num("face")?)?;
        let c = parse_usize(next_num("face")?)?;
        triangles.push([a, b, c]);
    }
    SurfaceMesh::new(vertices, triangles)
}

/// Write `mesh` as ASCII OFF with full round-trip precision.
pub fn write_off<W: Write>(mesh: &SurfaceMesh, mut out: W) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "OFF");
    let _ = writeln!(s, "{} {} {}", mesh.n_vertices(), mesh.n_faces(), mesh.edges().len());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}
