//! Linearized Naghdi strain operators on P1 shell states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    interior_product3_local, sym2, CovTensor2Field, FaceVector, Geometry, Mat2, ScalarField, TangentField, Vec2,
};

/// Degrees of freedom carried by each vertex: `W1` (2), `W2` (2), `w1`, `w2`.
pub const DOFS_PER_VERTEX: usize = 6;

/// Shell state `xi = (W1, W2, w1, w2)`: two tangent fields in vertex frames
/// and two normal scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellState {
    pub w1_vec: TangentField,
    pub w2_vec: TangentField,
    pub w1: ScalarField,
    pub w2: ScalarField,
}

impl ShellState {
    pub fn zeros(n_vertices: usize) -> Self {
        ShellState {
            w1_vec: TangentField::zeros(n_vertices),
            w2_vec: TangentField::zeros(n_vertices),
            w1: ScalarField::zeros(n_vertices),
            w2: ScalarField::zeros(n_vertices),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.w1.len()
    }

    /// Interleaved layout `[W1a, W1b, W2a, W2b, w1, w2]` per vertex.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(DOFS_PER_VERTEX * self.n_vertices());
        for v in 0..self.n_vertices() {
            let (a, b) = (self.w1_vec.0[v], self.w2_vec.0[v]);
            out.extend_from_slice(&[a.x, a.y, b.x, b.y, self.w1.0[v], self.w2.0[v]]);
        }
        out
    }

    pub fn from_vector(x: &[f64]) -> Result<Self> {
        if x.len() % DOFS_PER_VERTEX != 0 {
            return Err(Error::FrameMismatch(format!("state vector of length {} is not a multiple of 6", x.len())));
        }
        let n = x.len() / DOFS_PER_VERTEX;
        let mut s = ShellState::zeros(n);
        for v in 0..n {
            let c = &x[DOFS_PER_VERTEX * v..DOFS_PER_VERTEX * (v + 1)];
            s.w1_vec.0[v] = Vec2::new(c[0], c[1]);
            s.w2_vec.0[v] = Vec2::new(c[2], c[3]);
            s.w1.0[v] = c[4];
            s.w2.0[v] = c[5];
        }
        Ok(s)
    }

    /// Zero every component on the given vertices.
    pub fn clamp(&mut self, mask: &[bool]) {
        for (v, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            self.w1_vec.0[v] = Vec2::zeros();
            self.w2_vec.0[v] = Vec2::zeros();
            self.w1.0[v] = 0.0;
            self.w2.0[v] = 0.0;
        }
    }

    pub fn scaled_add(&self, s: f64, other: &ShellState) -> ShellState {
        let x: Vec<f64> = self.to_vector().iter().zip(other.to_vector()).map(|(a, b)| a + s * b).collect();
        ShellState::from_vector(&x).expect("same layout")
    }
}

/// Everything the energy density needs on one face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceStrain {
    pub upsilon: Mat2,
    pub chi0: Mat2,
    pub phi0: Vec2,
    pub dw2: Vec2,
    pub w2: f64,
}

/// Corner values of one face: `[W1a, W1b, W2a, W2b, w1, w2]` per corner.
pub type LocalDofs = [[f64; DOFS_PER_VERTEX]; 3];

/// Strains on face `f` from its corner values.
pub fn face_strain(geom: &Geometry, f: usize, x: &LocalDofs) -> FaceStrain {
    let w1v = x.map(|c| Vec2::new(c[0], c[1]));
    let w2v = x.map(|c| Vec2::new(c[2], c[3]));
    let w1 = x.map(|c| c[4]);
    let w2 = x.map(|c| c[5]);
    let forms = geom.forms();
    let (pi, c) = (&forms.pi.0[f], &forms.c.0[f]);
    let w1_bar = w1.iter().sum::<f64>() / 3.0;
    let w2_bar = w2.iter().sum::<f64>() / 3.0;
    let w1v_bar = geom.face_average_local(f, w1v);
    let w2v_bar = geom.face_average_local(f, w2v);
    let dw1v = geom.face_differential_local(f, w1v);
    let dw2v = geom.face_differential_local(f, w2v);
    let k_ol = -sym2(&interior_product3_local(&w1v_bar, &geom.d_pi().0[f])) + c * w1_bar + pi * w2_bar;
    FaceStrain {
        upsilon: sym2(&dw1v) + pi * w1_bar,
        chi0: sym2(&dw2v) + k_ol,
        phi0: geom.face_gradient_local(f, w1) * 0.5 - pi.transpose() * w1v_bar + w2v_bar * 0.5,
        dw2: geom.face_gradient_local(f, w2),
        w2: w2_bar,
    }
}

pub fn local_dofs(state: &ShellState, tri: &[usize; 3]) -> LocalDofs {
    tri.map(|v| {
        let (a, b) = (state.w1_vec.0[v], state.w2_vec.0[v]);
        [a.x, a.y, b.x, b.y, state.w1.0[v], state.w2.0[v]]
    })
}

fn check(geom: &Geometry, xi: &ShellState) -> Result<()> {
    let n = geom.n_vertices();
    let lens = [xi.w1_vec.len(), xi.w2_vec.len(), xi.w1.len(), xi.w2.len()];
    if lens.iter().any(|&l| l != n) {
        return Err(Error::FrameMismatch(format!("state lengths {lens:?} vs {n} vertices")));
    }
    Ok(())
}

/// Per-face strains of a state.
pub fn face_strains(geom: &Geometry, xi: &ShellState) -> Result<Vec<FaceStrain>> {
    check(geom, xi)?;
    Ok(geom.mesh().triangles().iter().enumerate().map(|(f, t)| face_strain(geom, f, &local_dofs(xi, t))).collect())
}

/// The three strain fields of a state.
#[derive(Debug, Clone)]
pub struct StrainSet {
    pub upsilon: CovTensor2Field,
    pub chi0: CovTensor2Field,
    pub phi0: FaceVector,
}

pub fn strains(geom: &Geometry, xi: &ShellState) -> Result<StrainSet> {
    let s = face_strains(geom, xi)?;
    Ok(StrainSet {
        upsilon: CovTensor2Field(s.iter().map(|s| s.upsilon).collect()),
        chi0: CovTensor2Field(s.iter().map(|s| s.chi0).collect()),
        phi0: FaceVector(s.iter().map(|s| s.phi0).collect()),
    })
}

/// `Upsilon = sym(DW1) + w1 Pi`.
pub fn strain_upsilon(geom: &Geometry, xi: &ShellState) -> Result<CovTensor2Field> {
    Ok(strains(geom, xi)?.upsilon)
}

/// `chi0 = sym(DW2) - sym(i(W1) D Pi) + w1 c + w2 Pi`.
pub fn strain_chi0(geom: &Geometry, xi: &ShellState) -> Result<CovTensor2Field> {
    Ok(strains(geom, xi)?.chi0)
}

/// `phi0 = Dw1 / 2 - i(W1) Pi + W2 / 2`.
pub fn strain_phi0(geom: &Geometry, xi: &ShellState) -> Result<FaceVector> {
    Ok(strains(geom, xi)?.phi0)
}

/// Change-of-curvature computed from `V = W2 - i(W1) Pi` instead of `W2`:
/// `sym(DV) + sym(Pi . DW1) + w2 Pi + w1 c`, with `V` formed at vertices
/// from area-averaged vertex curvature.
pub fn strain_chi0_from_v(geom: &Geometry, xi: &ShellState) -> Result<CovTensor2Field> {
    check(geom, xi)?;
    let pi_v = geom.face_to_vertex_tensor(&geom.forms().pi);
    let v = TangentField(
        (0..geom.n_vertices()).map(|k| xi.w2_vec.0[k] - pi_v[k].transpose() * xi.w1_vec.0[k]).collect(),
    );
    let dv = geom.covariant_differential(&v);
    let dw1 = geom.covariant_differential(&xi.w1_vec);
    let w1 = geom.face_average_scalar(&xi.w1);
    let w2 = geom.face_average_scalar(&xi.w2);
    let forms = geom.forms();
    Ok(CovTensor2Field(
        (0..geom.n_faces())
            .map(|f| {
                let pi = &forms.pi.0[f];
                sym2(&dv.0[f]) + sym2(&(pi * dw1.0[f])) + pi * w2.0[f] + forms.c.0[f] * w1.0[f]
            })
            .collect(),
    ))
}

/// Multiplier `m(xi) = (D_V W1, D_V W2, V(w1), V(w2))`, evaluated per face
/// and averaged back to vertices.
pub fn multiplier_m(geom: &Geometry, xi: &ShellState, v: &TangentField) -> Result<ShellState> {
    check(geom, xi)?;
    if v.len() != geom.n_vertices() {
        return Err(Error::FrameMismatch(format!("V has {} vertices, mesh has {}", v.len(), geom.n_vertices())));
    }
    let vf = geom.face_average_vector(v);
    let along = |d: &CovTensor2Field| FaceVector(d.0.iter().zip(&vf.0).map(|(d, v)| d * v).collect());
    let dot = |g: &FaceVector| crate::geometry::FaceScalar(g.0.iter().zip(&vf.0).map(|(g, v)| g.dot(v)).collect());
    Ok(ShellState {
        w1_vec: geom.face_to_vertex_vector(&along(&geom.covariant_differential(&xi.w1_vec))),
        w2_vec: geom.face_to_vertex_vector(&along(&geom.covariant_differential(&xi.w2_vec))),
        w1: geom.face_to_vertex_scalar(&dot(&geom.covariant_gradient(&xi.w1))),
        w2: geom.face_to_vertex_scalar(&dot(&geom.covariant_gradient(&xi.w2))),
    })
}
