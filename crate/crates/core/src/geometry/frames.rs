use nalgebra::{Matrix3, Matrix3x2};

use crate::error::{Error, Result};
use crate::mesh::{SurfaceMesh, Vec3};

/// Orthonormal tangent basis with unit normal, `normal = e1 x e2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub e1: Vec3,
    pub e2: Vec3,
    pub normal: Vec3,
}

impl Frame {
    /// Columns `[e1 e2]`; maps frame components to ambient vectors.
    pub fn basis(&self) -> Matrix3x2<f64> {
        Matrix3x2::from_columns(&[self.e1, self.e2])
    }

    pub fn to_ambient(&self, c: [f64; 2]) -> Vec3 {
        self.e1 * c[0] + self.e2 * c[1]
    }

    /// Components of the tangential projection of `v`.
    pub fn components(&self, v: &Vec3) -> [f64; 2] {
        [self.e1.dot(v), self.e2.dot(v)]
    }

    pub fn rotated(&self, r: &Matrix3<f64>) -> Frame {
        Frame { e1: r * self.e1, e2: r * self.e2, normal: r * self.normal }
    }
}

/// How the first tangent direction of each frame is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameRule {
    /// Project a fixed ambient axis onto the tangent plane.
    Axis(Vec3),
    /// Use `axis x normal`, i.e. the direction circling the axis.
    AroundAxis(Vec3),
}

impl Default for FrameRule {
    fn default() -> Self {
        FrameRule::Axis(Vec3::x())
    }
}

impl FrameRule {
    pub fn frame(&self, normal: Vec3) -> Frame {
        let tangent = |a: Vec3| a - normal * normal.dot(&a);
        let mut t = match *self {
            FrameRule::Axis(a) => tangent(a),
            FrameRule::AroundAxis(a) => a.cross(&normal),
        };
        if t.norm() < 1e-8 {
            // fall back to the coordinate axis least aligned with the normal
            let n = normal.abs();
            let a = if n.x <= n.y && n.x <= n.z {
                Vec3::x()
            } else if n.y <= n.z {
                Vec3::y()
            } else {
                Vec3::z()
            };
            t = tangent(a);
        }
        let e1 = t.normalize();
        let e2 = normal.cross(&e1);
        Frame { e1, e2, normal }
    }
}

/// Smallest rotation taking unit vector `from` onto unit vector `to`.
pub fn smallest_rotation(from: &Vec3, to: &Vec3) -> Matrix3<f64> {
    let v = from.cross(to);
    let c = from.dot(to);
    if c < -1.0 + 1e-12 {
        // antiparallel: rotate by pi about any axis orthogonal to `from`
        let axis = FrameRule::default().frame(*from).e1;
        return Matrix3::identity() * -1.0 + axis * axis.transpose() * 2.0;
    }
    let vx = v.cross_matrix();
    Matrix3::identity() + vx + vx * vx / (1.0 + c)
}

/// Vertex normals with Max's weights: each incident corner contributes
/// `(a x b) / (|a|^2 |b|^2)` for its edge vectors `a`, `b`. Exact for
/// interior vertices whose 1-ring lies on a common sphere.
///
/// A boundary vertex only sees half a ring, so its normal is instead
/// extrapolated from an affine fit of the interior normals in its 2-ring.
pub fn vertex_normals(mesh: &SurfaceMesh) -> Vec<Vec3> {
    let x = mesh.vertices();
    let mut n = vec![Vec3::zeros(); mesh.n_vertices()];
    for t in mesh.triangles() {
        for k in 0..3 {
            let (v, a, b) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            let (ea, eb) = (x[a] - x[v], x[b] - x[v]);
            n[v] += ea.cross(&eb) / (ea.norm_squared() * eb.norm_squared());
        }
    }
    let n: Vec<Vec3> = n.into_iter().map(|v| v.normalize()).collect();
    let mut out = n.clone();
    for v in mesh.boundary_vertices() {
        if let Some(fit) = extrapolated_normal(mesh, &n, v) {
            out[v] = fit;
        }
    }
    out
}

fn extrapolated_normal(mesh: &SurfaceMesh, n: &[Vec3], v: usize) -> Option<Vec3> {
    let x = mesh.vertices();
    let mut ring: Vec<usize> = mesh.vertex_neighbors(v).to_vec();
    for &u in mesh.vertex_neighbors(v) {
        ring.extend_from_slice(mesh.vertex_neighbors(u));
    }
    ring.sort_unstable();
    ring.dedup();
    ring.retain(|&u| u != v && !mesh.is_boundary_vertex(u));
    if ring.len() < 3 {
        return None;
    }
    let frame = FrameRule::default().frame(n[v]);
    // least squares N(u) = c + B u over planar coordinates u around x_v
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Matrix3::<f64>::zeros();
    for &u in &ring {
        let c = frame.components(&(x[u] - x[v]));
        let row = nalgebra::Vector3::new(1.0, c[0], c[1]);
        ata += row * row.transpose();
        atb += row * n[u].transpose();
    }
    let h2 = ata[(1, 1)] + ata[(2, 2)];
    if ata.determinant() <= 1e-10 * h2 * h2 * ata[(0, 0)] {
        return None;
    }
    let sol = ata.try_inverse()? * atb;
    let c = Vec3::new(sol[(0, 0)], sol[(0, 1)], sol[(0, 2)]);
    (c.norm() > 0.5).then(|| c.normalize())
}

/// Area-weighted vertex normals.
pub fn area_weighted_normals(mesh: &SurfaceMesh) -> Vec<Vec3> {
    let mut n = vec![Vec3::zeros(); mesh.n_vertices()];
    for (f, t) in mesh.triangles().iter().enumerate() {
        let w = mesh.face_normal(f) * mesh.face_area(f);
        for &v in t {
            n[v] += w;
        }
    }
    n.into_iter().map(|v| v.normalize()).collect()
}

#[derive(Debug, Clone)]
pub struct Frames {
    pub vertex: Vec<Frame>,
    pub face: Vec<Frame>,
}

/// Per-vertex frames (about [`vertex_normals`]) and per-face frames
/// (about the oriented triangle normal).
pub fn build_frames(mesh: &SurfaceMesh, rule: FrameRule) -> Result<Frames> {
    let vertex: Vec<Frame> = vertex_normals(mesh).into_iter().map(|n| rule.frame(n)).collect();
    if let Some(v) = vertex.iter().position(|f| !f.normal.iter().all(|x| x.is_finite())) {
        return Err(Error::InvalidMesh(format!("vertex {v} has no well-defined normal")));
    }
    let face = (0..mesh.n_faces()).map(|f| rule.frame(mesh.face_normal(f))).collect();
    Ok(Frames { vertex, face })
}
