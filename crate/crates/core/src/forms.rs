//! Material parameters, the energy densities `b` and `J`, the assembled
//! mass/stiffness/damping operators and the coercivity and Korn constants.

use nalgebra::{DMatrix, SMatrix};
use serde::{Deserialize, Serialize};

use crate::eigen::smallest_generalized;
use crate::error::{Error, Result};
use crate::geometry::{inner2, sym2, CovTensor2Field, FaceScalar, Geometry, Mat2, ScalarField, TangentField, Vec2};
use crate::kinematics::{face_strain, face_strains, FaceStrain, LocalDofs, ShellState, DOFS_PER_VERTEX};
use crate::mesh::SurfaceMesh;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Tolerance and iteration cap for the eigenvalue constants.
pub const EIGEN_TOL: f64 = 1e-10;
pub const EIGEN_MAX_ITER: usize = 500;

/// Young's modulus, Poisson ratio and thickness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub e_young: f64,
    pub mu_poisson: f64,
    pub h_thickness: f64,
}

impl MaterialParams {
    pub fn new(e_young: f64, mu_poisson: f64, h_thickness: f64) -> Result<Self> {
        if !(mu_poisson > 0.0 && mu_poisson < 0.5) {
            return Err(Error::InvalidParameter(format!("Poisson ratio must lie in (0, 1/2), got {mu_poisson}")));
        }
        if !(h_thickness > 0.0 && h_thickness.is_finite()) {
            return Err(Error::InvalidParameter(format!("thickness must be positive, got {h_thickness}")));
        }
        if !(e_young > 0.0 && e_young.is_finite()) {
            return Err(Error::InvalidParameter(format!("Young's modulus must be positive, got {e_young}")));
        }
        Ok(MaterialParams { e_young, mu_poisson, h_thickness })
    }

    pub fn alpha(&self) -> f64 {
        self.e_young / (1.0 + self.mu_poisson)
    }

    pub fn beta(&self) -> f64 {
        self.mu_poisson / (1.0 - 2.0 * self.mu_poisson)
    }

    pub fn gamma(&self) -> f64 {
        self.h_thickness * self.h_thickness / 12.0
    }
}

pub fn b_local(t1: &Mat2, t2: &Mat2, beta: f64) -> f64 {
    inner2(t1, t2) + beta * t1.trace() * t2.trace()
}

/// `b(T1, T2) = <T1, T2> + beta tr(T1) tr(T2)` per face.
pub fn b_form(t1: &CovTensor2Field, t2: &CovTensor2Field, beta: f64) -> Result<FaceScalar> {
    if t1.len() != t2.len() {
        return Err(Error::FrameMismatch(format!("b_form: {} faces vs {}", t1.len(), t2.len())));
    }
    Ok(FaceScalar(t1.0.iter().zip(&t2.0).map(|(a, b)| b_local(a, b, beta)).collect()))
}

/// Pointwise energy density `J(xi, u)` from the strains of both states.
pub fn j_local(s: &FaceStrain, t: &FaceStrain, p: &MaterialParams) -> f64 {
    let (beta, gamma) = (p.beta(), p.gamma());
    let rg = gamma.sqrt();
    2.0 * inner2(&s.upsilon, &t.upsilon)
        + 4.0 * s.phi0.dot(&t.phi0)
        + 2.0 * beta * (s.upsilon.trace() + s.w2 / rg) * (t.upsilon.trace() + t.w2 / rg)
        + 2.0 * beta * s.chi0.trace() * t.chi0.trace()
        + 2.0 * inner2(&s.chi0, &t.chi0)
        + s.dw2.dot(&t.dw2)
        + 2.0 / gamma * s.w2 * t.w2
}

pub fn j_density(geom: &Geometry, xi: &ShellState, u: &ShellState, p: &MaterialParams) -> Result<FaceScalar> {
    let (a, b) = (face_strains(geom, xi)?, face_strains(geom, u)?);
    Ok(FaceScalar(a.iter().zip(&b).map(|(s, t)| j_local(s, t, p)).collect()))
}

/// Map between the full interleaved vertex layout and the free
/// (unclamped) degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    per_vertex: usize,
    n_vertices: usize,
    free: Vec<usize>,
    index: Vec<Option<usize>>,
}

impl DofMap {
    /// Every component of every vertex in `clamped` is removed.
    pub fn new(n_vertices: usize, per_vertex: usize, clamped: &[bool]) -> Result<Self> {
        let mut free = Vec::new();
        let mut index = vec![None; n_vertices * per_vertex];
        for v in (0..n_vertices).filter(|&v| !clamped[v]) {
            for c in 0..per_vertex {
                index[per_vertex * v + c] = Some(free.len());
                free.push(per_vertex * v + c);
            }
        }
        if free.is_empty() {
            return Err(Error::EmptySystem);
        }
        Ok(DofMap { per_vertex, n_vertices, free, index })
    }

    /// Shell layout clamped on the mesh boundary.
    pub fn clamped_shell(mesh: &SurfaceMesh) -> Result<Self> {
        Self::new(mesh.n_vertices(), DOFS_PER_VERTEX, mesh.boundary_mask())
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_full(&self) -> usize {
        self.n_vertices * self.per_vertex
    }

    pub fn per_vertex(&self) -> usize {
        self.per_vertex
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn index(&self, full: usize) -> Option<usize> {
        self.index[full]
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&g| full[g]).collect()
    }

    pub fn extend(&self, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_full()];
        for (&g, &v) in self.free.iter().zip(free) {
            out[g] = v;
        }
        out
    }

    pub fn state_to_free(&self, s: &ShellState) -> Vec<f64> {
        self.restrict(&s.to_vector())
    }

    pub fn free_to_state(&self, x: &[f64]) -> ShellState {
        ShellState::from_vector(&self.extend(x)).expect("shell layout")
    }
}

/// Mass, stiffness and damping on the free degrees of freedom.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub damping: CsrMatrix,
    pub dof_map: DofMap,
    pub params: MaterialParams,
    pub damping_profile: ScalarField,
}

impl AssembledSystem {
    pub fn n(&self) -> usize {
        self.dof_map.n_free()
    }

    /// Same mass and stiffness with a different damping coefficient.
    pub fn with_damping(&self, geom: &Geometry, a: &ScalarField) -> Result<AssembledSystem> {
        Ok(AssembledSystem {
            damping: assemble_weighted_mass(geom, &self.dof_map, a)?,
            damping_profile: a.clone(),
            ..self.clone()
        })
    }
}

/// 18x18 element stiffness `area * J(e_i, e_j)` obtained by probing the
/// strain kernel with unit corner values.
fn element_stiffness(geom: &Geometry, f: usize, p: &MaterialParams, weight: f64) -> SMatrix<f64, 18, 18> {
    let strains: Vec<FaceStrain> = (0..18)
        .map(|k| {
            let mut x: LocalDofs = [[0.0; DOFS_PER_VERTEX]; 3];
            x[k / DOFS_PER_VERTEX][k % DOFS_PER_VERTEX] = 1.0;
            face_strain(geom, f, &x)
        })
        .collect();
    let area = geom.mesh().face_area(f) * weight;
    let mut ke = SMatrix::<f64, 18, 18>::zeros();
    for i in 0..18 {
        for j in i..18 {
            let v = area * j_local(&strains[i], &strains[j], p);
            ke[(i, j)] = v;
            ke[(j, i)] = v;
        }
    }
    ke
}

fn scatter<const N: usize>(
    b: &mut TripletBuilder,
    map: &DofMap,
    tri: &[usize; 3],
    per_vertex: usize,
    ke: &SMatrix<f64, N, N>,
) {
    let global = |k: usize| map.index(per_vertex * tri[k / per_vertex] + k % per_vertex);
    for i in 0..N {
        let Some(gi) = global(i) else { continue };
        for j in 0..N {
            if let Some(gj) = global(j) {
                if ke[(i, j)] != 0.0 {
                    b.add(gi, gj, ke[(i, j)]);
                }
            }
        }
    }
}

/// Stiffness of `int p J` with `p` averaged per face (`p = 1` gives the
/// shell stiffness).
pub fn assemble_weighted_stiffness(
    geom: &Geometry,
    params: &MaterialParams,
    map: &DofMap,
    p: Option<&ScalarField>,
) -> Result<CsrMatrix> {
    let mut b = TripletBuilder::new(map.n_free());
    for (f, tri) in geom.mesh().triangles().iter().enumerate() {
        let w = p.map_or(1.0, |p| tri.iter().map(|&v| p.0[v]).sum::<f64>() / 3.0);
        if w == 0.0 {
            continue;
        }
        scatter(&mut b, map, tri, DOFS_PER_VERTEX, &element_stiffness(geom, f, params, w));
    }
    Ok(b.build())
}

/// Integrals `int a phi_i phi_j` of P1 hats with P1 weight `a`, per corner
/// pair of a face (`a = None` gives the plain mass).
fn corner_products(area: f64, a: Option<[f64; 3]>) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, mij) in row.iter_mut().enumerate() {
            *mij = match a {
                None => area / 12.0 * if i == j { 2.0 } else { 1.0 },
                Some(a) => (0..3)
                    .map(|k| {
                        let w = match (i == j, j == k, i == k) {
                            (true, true, _) => 1.0 / 10.0,
                            (true, false, _) | (false, true, _) | (false, false, true) => 1.0 / 30.0,
                            (false, false, false) => 1.0 / 60.0,
                        };
                        area * w * a[k]
                    })
                    .sum(),
            };
        }
    }
    m
}

/// Consistent mass weighted by a P1 coefficient `a` on the shell layout;
/// tangent blocks carry the Gram matrix of the two vertex frames.
pub fn assemble_weighted_mass(geom: &Geometry, map: &DofMap, a: &ScalarField) -> Result<CsrMatrix> {
    if a.len() != geom.n_vertices() {
        return Err(Error::FrameMismatch(format!("coefficient has {} values for {} vertices", a.len(), geom.n_vertices())));
    }
    Ok(mass_like(geom, map, Some(a)))
}

pub fn assemble_mass(geom: &Geometry, map: &DofMap) -> CsrMatrix {
    mass_like(geom, map, None)
}

fn mass_like(geom: &Geometry, map: &DofMap, a: Option<&ScalarField>) -> CsrMatrix {
    let per = map.per_vertex();
    let mut b = TripletBuilder::new(map.n_free());
    for (f, tri) in geom.mesh().triangles().iter().enumerate() {
        let corner_a = a.map(|a| tri.map(|v| a.0[v]));
        if corner_a.is_some_and(|c| c.iter().all(|&x| x == 0.0)) {
            continue;
        }
        let m = corner_products(geom.mesh().face_area(f), corner_a);
        for i in 0..3 {
            for j in 0..3 {
                let gram = geom.vertex_frame(tri[i]).basis().transpose() * geom.vertex_frame(tri[j]).basis();
                let mut add = |ci: usize, cj: usize, v: f64| {
                    if let (Some(gi), Some(gj)) = (map.index(per * tri[i] + ci), map.index(per * tri[j] + cj)) {
                        if v != 0.0 {
                            b.add(gi, gj, v);
                        }
                    }
                };
                // tangent blocks: (0,1) and, in the shell layout, (2,3)
                let tangent_blocks: &[usize] = if per == DOFS_PER_VERTEX { &[0, 2] } else { &[0] };
                for &o in tangent_blocks {
                    for r in 0..2 {
                        for c in 0..2 {
                            add(o + r, o + c, m[i][j] * gram[(r, c)]);
                        }
                    }
                }
                if per == DOFS_PER_VERTEX {
                    add(4, 4, m[i][j]);
                    add(5, 5, m[i][j]);
                }
            }
        }
    }
    b.build()
}

/// Mass, stiffness and damping with the boundary clamped.
pub fn assemble(geom: &Geometry, params: &MaterialParams, a: &ScalarField) -> Result<AssembledSystem> {
    if a.0.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidParameter("damping coefficient must be finite and nonnegative".into()));
    }
    let map = DofMap::clamped_shell(geom.mesh())?;
    Ok(AssembledSystem {
        stiffness: assemble_weighted_stiffness(geom, params, &map, None)?,
        mass: assemble_mass(geom, &map),
        damping: assemble_weighted_mass(geom, &map, a)?,
        dof_map: map,
        params: *params,
        damping_profile: a.clone(),
    })
}

/// `E = 1/2 v^T M v + 1/2 u^T K u` on free degrees of freedom.
pub fn energy(sys: &AssembledSystem, u: &[f64], v: &[f64]) -> f64 {
    0.5 * sys.mass.quad_form(v) + 0.5 * sys.stiffness.quad_form(u)
}

/// Smallest generalized eigenvalue of `(K, M)`.
pub fn coercivity_constant(sys: &AssembledSystem) -> Result<f64> {
    Ok(smallest_generalized(&sys.stiffness, &sys.mass, 1, EIGEN_TOL, EIGEN_MAX_ITER)?.values[0])
}

/// Matrices of the tangent-field (W only) quadratic forms over clamped
/// fields: `|DW + D*W|^2`, `|DW|^2`, `b(S(W), S(W))` and `|W|^2`.
#[derive(Debug, Clone)]
pub struct TangentForms {
    pub map: DofMap,
    pub sym_sq: CsrMatrix,
    pub grad_sq: CsrMatrix,
    pub b_ss: CsrMatrix,
    pub mass: CsrMatrix,
}

/// `DW` on face `f` for a 6-vector of corner components.
fn local_dw(geom: &Geometry, f: usize, x: &[f64; 6]) -> Mat2 {
    geom.face_differential_local(f, [0, 1, 2].map(|k| Vec2::new(x[2 * k], x[2 * k + 1])))
}

pub fn tangent_forms(geom: &Geometry, beta: f64) -> Result<TangentForms> {
    let map = DofMap::new(geom.n_vertices(), 2, geom.mesh().boundary_mask())?;
    let mut bs = [TripletBuilder::new(map.n_free()), TripletBuilder::new(map.n_free()), TripletBuilder::new(map.n_free())];
    for (f, tri) in geom.mesh().triangles().iter().enumerate() {
        let area = geom.mesh().face_area(f);
        let d: Vec<Mat2> = (0..6)
            .map(|k| {
                let mut x = [0.0; 6];
                x[k] = 1.0;
                local_dw(geom, f, &x)
            })
            .collect();
        let mut ke = [SMatrix::<f64, 6, 6>::zeros(); 3];
        for i in 0..6 {
            for j in 0..6 {
                let (si, sj) = (sym2(&d[i]), sym2(&d[j]));
                ke[0][(i, j)] = area * 4.0 * inner2(&si, &sj);
                ke[1][(i, j)] = area * inner2(&d[i], &d[j]);
                ke[2][(i, j)] = area * b_local(&si, &sj, beta);
            }
        }
        for (b, k) in bs.iter_mut().zip(&ke) {
            scatter(b, &map, tri, 2, k);
        }
    }
    let [a, b, c] = bs;
    Ok(TangentForms { mass: mass_like(geom, &map, None), sym_sq: a.build(), grad_sq: b.build(), b_ss: c.build(), map })
}

/// Korn constants of a clamped mesh and the resulting bound on `DW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KornConstants {
    /// `min |DW + D*W|^2 / (|W|^2 + |DW|^2)` over clamped `W`.
    pub lambda: f64,
    /// `4 / lambda`, the constant the proof produces.
    pub lambda0_proof: f64,
    /// `max(1, 4 / lambda)`.
    pub lambda0: f64,
    /// `max |DW|^2 / int [b(S, S) + |W|^2]`, the sharp constant.
    pub lambda0_direct: f64,
    /// `(lambda0 - lambda0_direct) / lambda0`: the normalized smallest
    /// eigenvalue of `lambda0 (B + M) - D` relative to `B + M`.
    pub bound_margin: f64,
}

pub fn korn_lambda(geom: &Geometry) -> Result<f64> {
    let t = tangent_forms(geom, 0.0)?;
    let h1 = CsrMatrix::linear_combination(&[(1.0, &t.mass), (1.0, &t.grad_sq)]);
    Ok(smallest_generalized(&t.sym_sq, &h1, 1, EIGEN_TOL, EIGEN_MAX_ITER)?.values[0])
}

pub fn korn_constants(geom: &Geometry, beta: f64) -> Result<KornConstants> {
    let t = tangent_forms(geom, beta)?;
    let h1 = CsrMatrix::linear_combination(&[(1.0, &t.mass), (1.0, &t.grad_sq)]);
    let lambda = smallest_generalized(&t.sym_sq, &h1, 1, EIGEN_TOL, EIGEN_MAX_ITER)?.values[0];
    let lambda0_proof = 4.0 / lambda;
    let lambda0 = lambda0_proof.max(1.0);
    if lambda0_proof < 1.0 {
        log::info!("4/lambda = {lambda0_proof} < 1; using lambda0 = 1");
    }
    let b48 = CsrMatrix::linear_combination(&[(1.0, &t.b_ss), (1.0, &t.mass)]);
    let inv = smallest_generalized(&b48, &t.grad_sq, 1, EIGEN_TOL, EIGEN_MAX_ITER)?.values[0];
    let lambda0_direct = 1.0 / inv;
    Ok(KornConstants { lambda, lambda0_proof, lambda0, lambda0_direct, bound_margin: (lambda0 - lambda0_direct) / lambda0 })
}

pub fn lambda0(geom: &Geometry, beta: f64) -> Result<f64> {
    Ok(korn_constants(geom, beta)?.lambda0)
}

/// Dense copies of the tangent forms, for brute-force checks on small meshes.
pub fn dense_tangent_forms(geom: &Geometry, beta: f64) -> Result<[DMatrix<f64>; 4]> {
    let t = tangent_forms(geom, beta)?;
    Ok([t.sym_sq.to_dense(), t.grad_sq.to_dense(), t.b_ss.to_dense(), t.mass.to_dense()])
}

/// Tangent field from free W-only coefficients.
pub fn tangent_from_free(map: &DofMap, x: &[f64]) -> TangentField {
    let full = map.extend(x);
    TangentField(full.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect())
}
