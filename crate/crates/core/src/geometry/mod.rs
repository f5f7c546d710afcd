//! Discrete Riemannian surface: frames, fundamental forms and the
//! piecewise-linear tensor calculus used by the shell model.

mod fields;
mod frames;
mod geodesic;

pub use fields::*;
pub use frames::{area_weighted_normals, build_frames, smallest_rotation, vertex_normals, Frame, FrameRule, Frames};
pub use geodesic::{dijkstra, eps_neighborhood, geodesic_ball, log_map, DistanceField, MeshSet};

use nalgebra::{Matrix3, Matrix3x2};

use crate::error::Result;
use crate::mesh::{SurfaceMesh, Vec3};

/// Second and third fundamental forms per face, plus the volume element.
#[derive(Debug, Clone)]
pub struct FundamentalForms {
    pub pi: CovTensor2Field,
    pub c: CovTensor2Field,
    pub eps: Mat2,
}

/// A mesh together with frames, P1 gradient data and curvature tensors.
#[derive(Debug, Clone)]
pub struct Geometry {
    mesh: SurfaceMesh,
    rule: FrameRule,
    frames: Frames,
    /// Gradients of the barycentric hats, in the face frame.
    grads: Vec<[Vec2; 3]>,
    /// Maps vertex-frame components of each corner into the face frame.
    transfer: Vec<[Mat2; 3]>,
    forms: FundamentalForms,
    dpi: Tensor3Field,
}

impl Geometry {
    pub fn new(mesh: SurfaceMesh) -> Result<Self> {
        Self::with_rule(mesh, FrameRule::default())
    }

    pub fn with_rule(mesh: SurfaceMesh, rule: FrameRule) -> Result<Self> {
        let frames = build_frames(&mesh, rule)?;
        let mut grads = Vec::with_capacity(mesh.n_faces());
        let mut transfer = Vec::with_capacity(mesh.n_faces());
        for (f, tri) in mesh.triangles().iter().enumerate() {
            let ff = &frames.face[f];
            let x = mesh.vertices();
            let p: Vec<Vec2> = tri.iter().map(|&v| Vec2::from(ff.components(&(x[v] - x[tri[0]])))).collect();
            let two_a = (p[1] - p[0]).perp(&(p[2] - p[0]));
            let rot = |d: Vec2| Vec2::new(-d.y, d.x) / two_a;
            grads.push([rot(p[2] - p[1]), rot(p[0] - p[2]), rot(p[1] - p[0])]);
            let fb = ff.basis();
            transfer.push(tri.map(|v| fb.transpose() * frames.vertex[v].basis()));
        }
        let mut g = Geometry {
            mesh,
            rule,
            frames,
            grads,
            transfer,
            forms: FundamentalForms {
                pi: CovTensor2Field(Vec::new()),
                c: CovTensor2Field(Vec::new()),
                eps: eps(),
            },
            dpi: Tensor3Field(Vec::new()),
        };
        g.forms = g.compute_forms();
        g.dpi = g.tensor_derivative(&g.forms.pi);
        Ok(g)
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn frame_rule(&self) -> FrameRule {
        self.rule
    }

    pub fn vertex_frame(&self, v: usize) -> &Frame {
        &self.frames.vertex[v]
    }

    pub fn face_frame(&self, f: usize) -> &Frame {
        &self.frames.face[f]
    }

    pub fn frames(&self) -> &Frames {
        &self.frames
    }

    pub fn hat_gradients(&self, f: usize) -> &[Vec2; 3] {
        &self.grads[f]
    }

    pub fn corner_transfer(&self, f: usize) -> &[Mat2; 3] {
        &self.transfer[f]
    }

    pub fn forms(&self) -> &FundamentalForms {
        &self.forms
    }

    /// Least-squares covariant derivative of the second fundamental form.
    pub fn d_pi(&self) -> &Tensor3Field {
        &self.dpi
    }

    pub fn n_vertices(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn n_faces(&self) -> usize {
        self.mesh.n_faces()
    }

    // ---- per-face kernels on corner values ----

    pub fn face_gradient_local(&self, f: usize, w: [f64; 3]) -> Vec2 {
        let g = &self.grads[f];
        g[0] * w[0] + g[1] * w[1] + g[2] * w[2]
    }

    /// `DW[(i, j)] = <D_{e_j} W, e_i>` of the tangential projection of the
    /// affine interpolant.
    pub fn face_differential_local(&self, f: usize, w: [Vec2; 3]) -> Mat2 {
        let (g, t) = (&self.grads[f], &self.transfer[f]);
        (0..3).map(|k| (t[k] * w[k]) * g[k].transpose()).sum()
    }

    pub fn face_average_local(&self, f: usize, w: [Vec2; 3]) -> Vec2 {
        let t = &self.transfer[f];
        (t[0] * w[0] + t[1] * w[1] + t[2] * w[2]) / 3.0
    }

    fn corners<T: Copy>(&self, f: usize, data: &[T]) -> [T; 3] {
        self.mesh.triangles()[f].map(|v| data[v])
    }

    // ---- field-level operators ----

    pub fn covariant_gradient(&self, w: &ScalarField) -> FaceVector {
        FaceVector((0..self.n_faces()).map(|f| self.face_gradient_local(f, self.corners(f, &w.0))).collect())
    }

    pub fn covariant_differential(&self, w: &TangentField) -> CovTensor2Field {
        CovTensor2Field((0..self.n_faces()).map(|f| self.face_differential_local(f, self.corners(f, &w.0))).collect())
    }

    pub fn face_average_scalar(&self, w: &ScalarField) -> FaceScalar {
        FaceScalar((0..self.n_faces()).map(|f| self.corners(f, &w.0).iter().sum::<f64>() / 3.0).collect())
    }

    pub fn face_average_vector(&self, w: &TangentField) -> FaceVector {
        FaceVector((0..self.n_faces()).map(|f| self.face_average_local(f, self.corners(f, &w.0))).collect())
    }

    /// Area-weighted average of incident face values at each vertex.
    pub fn face_to_vertex_scalar(&self, s: &FaceScalar) -> ScalarField {
        let a = self.mesh.face_areas();
        ScalarField(
            (0..self.n_vertices())
                .map(|v| {
                    let fs = self.mesh.vertex_faces(v);
                    fs.iter().map(|&f| a[f] * s.0[f]).sum::<f64>() / fs.iter().map(|&f| a[f]).sum::<f64>()
                })
                .collect(),
        )
    }

    /// Area-weighted average of incident face vectors, projected onto the
    /// vertex tangent plane.
    pub fn face_to_vertex_vector(&self, s: &FaceVector) -> TangentField {
        let a = self.mesh.face_areas();
        TangentField(
            (0..self.n_vertices())
                .map(|v| {
                    let fs = self.mesh.vertex_faces(v);
                    let amb: Vec3 = fs.iter().map(|&f| self.frames.face[f].basis() * s.0[f] * a[f]).sum();
                    let tot: f64 = fs.iter().map(|&f| a[f]).sum();
                    self.frames.vertex[v].basis().transpose() * amb / tot
                })
                .collect(),
        )
    }

    /// Area-weighted vertex average of a face tensor, in vertex frames.
    pub fn face_to_vertex_tensor(&self, t: &CovTensor2Field) -> Vec<Mat2> {
        let a = self.mesh.face_areas();
        (0..self.n_vertices())
            .map(|v| {
                let fs = self.mesh.vertex_faces(v);
                let mut amb = Matrix3::zeros();
                for &f in fs {
                    let b = self.frames.face[f].basis();
                    amb += b * t.0[f] * b.transpose() * a[f];
                }
                let tot: f64 = fs.iter().map(|&f| a[f]).sum();
                let vb = self.frames.vertex[v].basis();
                vb.transpose() * amb * vb / tot
            })
            .collect()
    }

    /// `G(V, T)` with `DV` taken from the vertex field `V`.
    pub fn g_map(&self, v: &TangentField, t: &CovTensor2Field) -> Result<CovTensor2Field> {
        let dv = self.covariant_differential(v);
        if dv.len() != t.len() {
            return Err(crate::error::Error::FrameMismatch(format!("g_map: {} faces vs {}", t.len(), dv.len())));
        }
        Ok(CovTensor2Field(dv.0.iter().zip(&t.0).map(|(d, t)| g_map_local(d, t)).collect()))
    }

    // ---- integration ----

    /// One-point quadrature of a piecewise constant integrand.
    pub fn integrate(&self, s: &FaceScalar) -> f64 {
        s.0.iter().zip(self.mesh.face_areas()).map(|(x, a)| x * a).sum()
    }

    /// Exact L2 product of two P1 scalar fields.
    pub fn l2_inner(&self, a: &ScalarField, b: &ScalarField) -> f64 {
        self.mesh
            .triangles()
            .iter()
            .zip(self.mesh.face_areas())
            .map(|(t, &area)| {
                let (x, y) = (t.map(|v| a.0[v]), t.map(|v| b.0[v]));
                let diag: f64 = (0..3).map(|k| x[k] * y[k]).sum();
                area / 12.0 * (diag + x.iter().sum::<f64>() * y.iter().sum::<f64>())
            })
            .sum()
    }

    /// Exact L2 product of two P1 tangent fields, interpolated as ambient
    /// vectors.
    pub fn l2_inner_tangent(&self, a: &TangentField, b: &TangentField) -> f64 {
        let amb = |w: &TangentField, v: usize| self.frames.vertex[v].basis() * w.0[v];
        self.mesh
            .triangles()
            .iter()
            .zip(self.mesh.face_areas())
            .map(|(t, &area)| {
                let (x, y) = (t.map(|v| amb(a, v)), t.map(|v| amb(b, v)));
                let diag: f64 = (0..3).map(|k| x[k].dot(&y[k])).sum();
                let sx: Vec3 = x.iter().sum();
                let sy: Vec3 = y.iter().sum();
                area / 12.0 * (diag + sx.dot(&sy))
            })
            .sum()
    }

    /// `sum_f area_f <A_f, B_f>` for face tensors.
    pub fn l2_inner_tensor(&self, a: &CovTensor2Field, b: &CovTensor2Field) -> Result<f64> {
        Ok(self.integrate(&inner(a, b)?))
    }

    // ---- curvature ----

    fn compute_forms(&self) -> FundamentalForms {
        let normals: Vec<Vec3> = self.frames.vertex.iter().map(|f| f.normal).collect();
        let mut pi = Vec::with_capacity(self.n_faces());
        for f in 0..self.n_faces() {
            let fb = self.frames.face[f].basis();
            let n = self.corners(f, &normals);
            let g = &self.grads[f];
            let dn: Matrix3x2<f64> = (0..3).map(|k| n[k] * g[k].transpose()).sum();
            pi.push(sym2(&(fb.transpose() * dn)));
        }
        let c = pi.iter().map(|p| p * p).collect();
        FundamentalForms { pi: CovTensor2Field(pi), c: CovTensor2Field(c), eps: eps() }
    }

    /// Express the face tensor of face `from` in the frame of face `to`,
    /// transporting by the smallest rotation between their normals.
    pub fn transport_tensor(&self, t: &Mat2, from: usize, to: usize) -> Mat2 {
        let (a, b) = (&self.frames.face[from], &self.frames.face[to]);
        let r = smallest_rotation(&a.normal, &b.normal);
        let p = b.basis().transpose() * r * a.basis();
        p * t * p.transpose()
    }

    /// Covariant derivative of a face tensor by least squares over the
    /// edge-adjacent faces.
    pub fn tensor_derivative(&self, t: &CovTensor2Field) -> Tensor3Field {
        let mut out = Vec::with_capacity(self.n_faces());
        for f in 0..self.n_faces() {
            let c0 = self.mesh.face_centroid(f);
            let fb = self.frames.face[f].basis();
            let mut normal = Mat2::zeros();
            let mut rhs = [Vec2::zeros(); 4];
            let mut count = 0;
            for n in self.mesh.face_neighbors(f) {
                let d = self.mesh.face_centroid(n) - c0;
                let mut dl = fb.transpose() * d;
                if dl.norm() > 0.0 {
                    dl *= d.norm() / dl.norm();
                }
                let diff = self.transport_tensor(&t.0[n], n, f) - t.0[f];
                normal += dl * dl.transpose();
                for (k, r) in rhs.iter_mut().enumerate() {
                    *r += dl * diff[(k / 2, k % 2)];
                }
                count += 1;
            }
            if count == 0 {
                log::warn!("face {f} has no neighbors; its tensor derivative is set to zero");
                out.push([Mat2::zeros(); 2]);
                continue;
            }
            let pinv = normal.pseudo_inverse(1e-12 * normal.trace()).unwrap_or_else(|_| Mat2::zeros());
            let mut d = [Mat2::zeros(); 2];
            for (k, r) in rhs.iter().enumerate() {
                let grad = pinv * r;
                d[0][(k / 2, k % 2)] = grad[0];
                d[1][(k / 2, k % 2)] = grad[1];
            }
            out.push(d);
        }
        Tensor3Field(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{cylinder_slit, icosphere, unit_square_plate};
    use std::f64::consts::PI;

    fn plate(n: usize) -> Geometry {
        Geometry::new(unit_square_plate(n).unwrap()).unwrap()
    }

    fn field<F: Fn(&Vec3) -> Vec2>(g: &Geometry, f: F) -> TangentField {
        TangentField(g.mesh().vertices().iter().map(f).collect())
    }

    #[test]
    fn plate_forms_vanish() {
        let g = plate(5);
        assert_eq!(g.forms().pi.max_abs(), 0.0);
        assert_eq!(g.forms().c.max_abs(), 0.0);
        assert!(g.d_pi().0.iter().all(|d| d[0].amax() == 0.0 && d[1].amax() == 0.0));
    }

    #[test]
    fn affine_scalar_is_reproduced() {
        let g = plate(6);
        let w = ScalarField(g.mesh().vertices().iter().map(|p| p.x).collect());
        for d in g.covariant_gradient(&w).0 {
            assert!((d - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_and_rotation_fields() {
        let g = plate(6);
        let c = field(&g, |_| Vec2::new(0.3, -1.2));
        assert!(g.covariant_differential(&c).max_abs() < 1e-13);
        let r = field(&g, |p| Vec2::new(-p.y, p.x));
        for d in g.covariant_differential(&r).0 {
            assert!((d - Mat2::new(0.0, -1.0, 1.0, 0.0)).amax() < 1e-12);
        }
    }

    #[test]
    fn cylinder_shape_operator() {
        // closed-form shape operator of the unit cylinder is diag(1, 0) with
        // e1 circumferential; compare away from the boundary rows
        let mut errs = Vec::new();
        for n in [4, 8] {
            let g = Geometry::with_rule(cylinder_slit(n).unwrap(), FrameRule::AroundAxis(Vec3::z())).unwrap();
            let err = (0..g.n_faces())
                .filter(|&f| g.mesh().triangles()[f].iter().all(|&v| !g.mesh().is_boundary_vertex(v)))
                .map(|f| (g.forms().pi.0[f] - Mat2::new(1.0, 0.0, 0.0, 0.0)).amax())
                .fold(0.0, f64::max);
            errs.push(err);
            let c_err = (0..g.n_faces())
                .filter(|&f| g.mesh().triangles()[f].iter().all(|&v| !g.mesh().is_boundary_vertex(v)))
                .map(|f| (g.forms().c.0[f] - Mat2::new(1.0, 0.0, 0.0, 0.0)).amax())
                .fold(0.0, f64::max);
            assert!(c_err < 0.1, "{c_err}");
        }
        assert!(errs[0] < 0.1 && errs[1] <= errs[0] + 1e-12, "{errs:?}");
    }

    #[test]
    fn sphere_forms_and_area() {
        let mut pi_errs = Vec::new();
        let mut area_errs = Vec::new();
        let mut dpi = Vec::new();
        for level in [2, 3, 4] {
            let g = Geometry::new(icosphere(level).unwrap()).unwrap();
            pi_errs.push(g.forms().pi.0.iter().map(|p| (p - Mat2::identity()).amax()).fold(0.0, f64::max));
            let one = FaceScalar(vec![1.0; g.n_faces()]);
            area_errs.push((g.integrate(&one) - 4.0 * PI).abs());
            dpi.push(g.d_pi().0.iter().map(|d| d[0].amax().max(d[1].amax())).fold(0.0, f64::max));
            for (p, c) in g.forms().pi.0.iter().zip(&g.forms().c.0) {
                assert!((p - p.transpose()).amax() < 1e-15);
                assert!(c.symmetric_eigenvalues().min() > -1e-14);
            }
        }
        // exact vertex normals make the P1 normal gradient the identity map
        assert!(pi_errs.iter().all(|&e| e < 1e-10), "{pi_errs:?}");
        // area converges at second order
        assert!(area_errs[1] < area_errs[0] / 3.0 && area_errs[2] < area_errs[1] / 3.0, "{area_errs:?}");
        assert!(dpi.iter().all(|&e| e < 1e-8), "{dpi:?}");
    }

    #[test]
    fn cylinder_interior_product_with_e1() {
        let g = Geometry::with_rule(cylinder_slit(8).unwrap(), FrameRule::AroundAxis(Vec3::z())).unwrap();
        let w = FaceVector(vec![Vec2::new(1.0, 0.0); g.n_faces()]);
        let ip = interior_product(&w, &g.forms().pi).unwrap();
        let f = (0..g.n_faces())
            .find(|&f| g.mesh().triangles()[f].iter().all(|&v| !g.mesh().is_boundary_vertex(v)))
            .unwrap();
        assert!((ip.0[f] - Vec2::new(1.0, 0.0)).norm() < 0.05);
    }

    #[test]
    fn integration_on_plate() {
        let g = plate(8);
        let one = FaceScalar(vec![1.0; g.n_faces()]);
        assert!((g.integrate(&one) - 1.0).abs() < 1e-12);
        let two = ScalarField::constant(g.n_vertices(), 2.0);
        assert!((g.l2_inner(&two, &two) - 4.0).abs() < 1e-12);
        let w = field(&g, |_| Vec2::new(0.0, 2.0));
        assert!((g.l2_inner_tangent(&w, &w) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn p1_mass_of_linear_field() {
        // int_0^1 int_0^1 x^2 = 1/3, reproduced exactly by the P1 product
        let g = plate(4);
        let x = ScalarField(g.mesh().vertices().iter().map(|p| p.x).collect());
        assert!((g.l2_inner(&x, &x) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn vertex_transfers_round_trip_constants() {
        let g = plate(5);
        let c = FaceVector(vec![Vec2::new(1.0, 2.0); g.n_faces()]);
        for v in g.face_to_vertex_vector(&c).0 {
            assert!((v - Vec2::new(1.0, 2.0)).norm() < 1e-14);
        }
        let t = CovTensor2Field(vec![Mat2::new(1.0, 2.0, 3.0, 4.0); g.n_faces()]);
        for m in g.face_to_vertex_tensor(&t) {
            assert!((m - Mat2::new(1.0, 2.0, 3.0, 4.0)).amax() < 1e-14);
        }
    }

    #[test]
    fn g_map_with_radial_field() {
        let g = plate(4);
        let v = field(&g, |p| Vec2::new(p.x - 0.5, p.y - 0.5));
        let t = CovTensor2Field(vec![Mat2::new(1.0, 2.0, 0.0, 3.0); g.n_faces()]);
        for m in g.g_map(&v, &t).unwrap().0 {
            assert!((m - Mat2::new(1.0, 1.0, 1.0, 3.0)).amax() < 1e-12);
        }
    }
}
