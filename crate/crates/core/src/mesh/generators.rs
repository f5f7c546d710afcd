//! Built-in mesh generators. All outputs are oriented so that face normals
//! point "outward" (+z for planar meshes, away from the axis or center
//! otherwise).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::str::FromStr;

use super::{SurfaceMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshKind {
    Plate,
    Annulus,
    CylinderSlit,
    SphericalCap,
}

impl MeshKind {
    pub fn generate(self, resolution: usize) -> Result<SurfaceMesh> {
        if resolution < 1 {
            return Err(Error::InvalidParameter("resolution must be positive".into()));
        }
        match self {
            MeshKind::Plate => unit_square_plate(resolution),
            MeshKind::Annulus => annulus(resolution),
            MeshKind::CylinderSlit => cylinder_slit(resolution),
            MeshKind::SphericalCap => spherical_cap(resolution),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MeshKind::Plate => "plate",
            MeshKind::Annulus => "annulus",
            MeshKind::CylinderSlit => "cylinder",
            MeshKind::SphericalCap => "cap",
        }
    }
}

impl FromStr for MeshKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plate" => Ok(MeshKind::Plate),
            "annulus" => Ok(MeshKind::Annulus),
            "cylinder" => Ok(MeshKind::CylinderSlit),
            "cap" => Ok(MeshKind::SphericalCap),
            other => Err(Error::InvalidParameter(format!("unknown mesh kind `{other}`"))),
        }
    }
}

/// Split the quad `(a, b, c, d)` (counter-clockwise) along `a-c` or `b-d`.
fn push_quad(tris: &mut Vec<[usize; 3]>, a: usize, b: usize, c: usize, d: usize, flip: bool) {
    if flip {
        tris.push([a, b, d]);
        tris.push([b, c, d]);
    } else {
        tris.push([a, b, c]);
        tris.push([a, c, d]);
    }
}

/// Unit square `[0,1]^2` in the `z = 0` plane, `n x n` quads with
/// diagonals alternating in a checkerboard pattern.
pub fn unit_square_plate(n: usize) -> Result<SurfaceMesh> {
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut verts = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            verts.push(Vec3::new(i as f64 * h, j as f64 * h, 0.0));
        }
    }
    let mut tris = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            push_quad(&mut tris, idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1), (i + j) % 2 == 1);
        }
    }
    SurfaceMesh::new(verts, tris)
}

/// Planar annulus `0.5 <= r <= 1` with `n` radial and `8n` angular segments.
pub fn annulus(n: usize) -> Result<SurfaceMesh> {
    let (r0, r1) = (0.5, 1.0);
    let nt = 8 * n;
    let idx = |i: usize, j: usize| j * nt + (i % nt);
    let mut verts = Vec::with_capacity(nt * (n + 1));
    for j in 0..=n {
        let r = r0 + (r1 - r0) * j as f64 / n as f64;
        for i in 0..nt {
            let t = 2.0 * PI * i as f64 / nt as f64;
            verts.push(Vec3::new(r * t.cos(), r * t.sin(), 0.0));
        }
    }
    let mut tris = Vec::with_capacity(2 * nt * n);
    for j in 0..n {
        for i in 0..nt {
            // (r, t) -> (r+, t) -> (r+, t+) -> (r, t+) is counter-clockwise from +z
            push_quad(&mut tris, idx(i, j), idx(i, j + 1), idx(i + 1, j + 1), idx(i + 1, j), (i + j) % 2 == 1);
        }
    }
    SurfaceMesh::new(verts, tris)
}

/// Unit-radius cylinder `z in [-1, 1]` cut open along the generator through
/// `(1, 0, 0)`. The slit is represented by duplicated vertex columns at
/// `theta = 0` and `theta = 2 pi`, so it belongs to the boundary. Uses `6n`
/// angular and `2n` axial segments; `(-1, 0, 0)` is always a vertex.
pub fn cylinder_slit(n: usize) -> Result<SurfaceMesh> {
    let nt = 6 * n;
    let nz = 2 * n;
    let idx = |i: usize, j: usize| j * (nt + 1) + i;
    let mut verts = Vec::with_capacity((nt + 1) * (nz + 1));
    for j in 0..=nz {
        let z = -1.0 + 2.0 * j as f64 / nz as f64;
        for i in 0..=nt {
            let t = 2.0 * PI * i as f64 / nt as f64;
            let (s, c) = if i == nt { (0.0, 1.0) } else { t.sin_cos() };
            verts.push(Vec3::new(c, s, z));
        }
    }
    let mut tris = Vec::with_capacity(2 * nt * nz);
    for j in 0..nz {
        for i in 0..nt {
            push_quad(&mut tris, idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1), (i + j) % 2 == 1);
        }
    }
    SurfaceMesh::new(verts, tris)
}

/// Join two concentric rings (given by vertex ids and angles in `[0, 2pi)`,
/// both increasing) with a strip of counter-clockwise triangles.
fn zip_rings(tris: &mut Vec<[usize; 3]>, inner: &[(usize, f64)], outer: &[(usize, f64)]) {
    let (m, n) = (inner.len(), outer.len());
    let ang = |ring: &[(usize, f64)], k: usize| ring[k % ring.len()].1 + 2.0 * PI * (k / ring.len()) as f64;
    let (mut i, mut j) = (0, 0);
    while i < m || j < n {
        let a = inner[i % m].0;
        let b = outer[j % n].0;
        let take_outer = j < n && (i >= m || ang(outer, j + 1) < ang(inner, i + 1));
        if take_outer {
            tris.push([a, b, outer[(j + 1) % n].0]);
            j += 1;
        } else {
            tris.push([a, b, inner[(i + 1) % m].0]);
            i += 1;
        }
    }
}

/// Spherical cap of the unit sphere around `+z` with polar angle up to
/// `pi / 3`, built from `n` concentric rings of `6k` vertices.
pub fn spherical_cap(n: usize) -> Result<SurfaceMesh> {
    let theta_max = PI / 3.0;
    let mut verts = vec![Vec3::new(0.0, 0.0, 1.0)];
    let mut rings: Vec<Vec<(usize, f64)>> = vec![vec![(0, 0.0)]];
    for k in 1..=n {
        let polar = theta_max * k as f64 / n as f64;
        let count = 6 * k;
        let mut ring = Vec::with_capacity(count);
        for m in 0..count {
            let az = 2.0 * PI * m as f64 / count as f64;
            ring.push((verts.len(), az));
            verts.push(Vec3::new(polar.sin() * az.cos(), polar.sin() * az.sin(), polar.cos()));
        }
        rings.push(ring);
    }
    let mut tris = Vec::new();
    for r in &rings[1..2.min(rings.len())] {
        for m in 0..r.len() {
            tris.push([0, r[m].0, r[(m + 1) % r.len()].0]);
        }
    }
    for k in 2..=n {
        zip_rings(&mut tris, &rings[k - 1], &rings[k]);
    }
    SurfaceMesh::new(verts, tris)
}

/// Closed unit sphere from a subdivided icosahedron (`level` subdivisions).
pub fn icosphere(level: usize) -> Result<SurfaceMesh> {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, p, 0.0),
        (1.0, p, 0.0),
        (-1.0, -p, 0.0),
        (1.0, -p, 0.0),
        (0.0, -1.0, p),
        (0.0, 1.0, p),
        (0.0, -1.0, -p),
        (0.0, 1.0, -p),
        (p, 0.0, -1.0),
        (p, 0.0, 1.0),
        (-p, 0.0, -1.0),
        (-p, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
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
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for t in &tris {
            let ab = midpoint(t[0], t[1], &mut verts);
            let bc = midpoint(t[1], t[2], &mut verts);
            let ca = midpoint(t[2], t[0], &mut verts);
            next.extend_from_slice(&[[t[0], ab, ca], [t[1], bc, ab], [t[2], ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    SurfaceMesh::new(verts, tris)
}
