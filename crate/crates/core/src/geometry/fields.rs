//! Field containers and the pointwise tensor algebra on them.
//!
//! Vertex fields store tangent vectors in the vertex frame; face fields
//! store vectors and rank-2 tensors in the face frame. A 2x2 matrix `T`
//! represents the covariant tensor with `T[(i, j)] = T(e_i, e_j)`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// One value per vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField(pub Vec<f64>);

/// Two frame components per vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentField(pub Vec<Vec2>);

/// One value per face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceScalar(pub Vec<f64>);

/// A vector (or 1-form) per face, in the face frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceVector(pub Vec<Vec2>);

/// A piecewise constant rank-2 covariant tensor, in face frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovTensor2Field(pub Vec<Mat2>);

/// Per-face covariant derivative of a rank-2 tensor:
/// `d[c][(a, b)] = (D_{e_c} T)(e_a, e_b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3Field(pub Vec<[Mat2; 2]>);

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        ScalarField(vec![0.0; n])
    }
    pub fn constant(n: usize, c: f64) -> Self {
        ScalarField(vec![c; n])
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TangentField {
    pub fn zeros(n: usize) -> Self {
        TangentField(vec![Vec2::zeros(); n])
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FaceScalar {
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl FaceVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl CovTensor2Field {
    pub fn zeros(n: usize) -> Self {
        CovTensor2Field(vec![Mat2::zeros(); n])
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, t| m.max(t.amax()))
    }
}

/// Volume element in an oriented orthonormal frame, `eps(e1, e2) = 1`.
pub fn eps() -> Mat2 {
    Mat2::new(0.0, 1.0, -1.0, 0.0)
}

pub fn sym2(t: &Mat2) -> Mat2 {
    (t + t.transpose()) * 0.5
}

pub fn inner2(a: &Mat2, b: &Mat2) -> f64 {
    a.component_mul(b).sum()
}

fn check(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::FrameMismatch(format!("{what}: {a} faces vs {b} faces")));
    }
    Ok(())
}

pub fn sym(t: &CovTensor2Field) -> CovTensor2Field {
    CovTensor2Field(t.0.iter().map(sym2).collect())
}

pub fn transpose(t: &CovTensor2Field) -> CovTensor2Field {
    CovTensor2Field(t.0.iter().map(|m| m.transpose()).collect())
}

pub fn trace(t: &CovTensor2Field) -> FaceScalar {
    FaceScalar(t.0.iter().map(|m| m.trace()).collect())
}

pub fn inner(a: &CovTensor2Field, b: &CovTensor2Field) -> Result<FaceScalar> {
    check(a.len(), b.len(), "inner")?;
    Ok(FaceScalar(a.0.iter().zip(&b.0).map(|(x, y)| inner2(x, y)).collect()))
}

/// `(i(W)T)(Y) = T(W, Y)`.
pub fn interior_product(w: &FaceVector, t: &CovTensor2Field) -> Result<FaceVector> {
    check(w.len(), t.len(), "interior_product")?;
    Ok(FaceVector(w.0.iter().zip(&t.0).map(|(w, t)| t.transpose() * w).collect()))
}

/// `(i(W)DT)(Y, Z) = (D_Z T)(W, Y)`.
pub fn interior_product3_local(w: &Vec2, dt: &[Mat2; 2]) -> Mat2 {
    let mut out = Mat2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            out[(i, j)] = w[0] * dt[j][(0, i)] + w[1] * dt[j][(1, i)];
        }
    }
    out
}

pub fn interior_product3(w: &FaceVector, dt: &Tensor3Field) -> Result<CovTensor2Field> {
    check(w.len(), dt.0.len(), "interior_product3")?;
    Ok(CovTensor2Field(w.0.iter().zip(&dt.0).map(|(w, d)| interior_product3_local(w, d)).collect()))
}

/// `G(V, T)` for a known differential `DV`: the symmetric part of
/// `(X, Y) -> sym(T)(X, D_Y V)`.
pub fn g_map_local(dv: &Mat2, t: &Mat2) -> Mat2 {
    sym2(&(sym2(t) * dv))
}
