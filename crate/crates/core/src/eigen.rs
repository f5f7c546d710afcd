//! Extreme eigenpairs of symmetric-definite pencils `A x = lambda B x`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, EnvelopeCholesky};

/// Eigenpairs in ascending order; vectors are `B`-orthonormal.
/// Convergence means a relative residual below `tol`, or Ritz values
/// unchanged to `tol` between restarts with residual below `sqrt(tol)`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Largest relative residual `|A x - lambda B x| / |A x|` among the pairs.
    pub residual: f64,
}

/// All eigenpairs of the dense pencil `(a, b)` with `b` SPD, ascending.
pub fn dense_generalized(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let chol = b.clone().cholesky().ok_or(Error::NotPositiveDefinite { pivot: 0, value: f64::NAN })?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(Error::NotPositiveDefinite { pivot: 0, value: 0.0 })?;
    let mut c = &linv * a * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let q = DMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, idx[k])]);
    let vectors = linv.transpose() * q;
    Ok((values, vectors))
}

fn columns_mul(m: &CsrMatrix, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for k in 0..x.ncols() {
        let col: Vec<f64> = x.column(k).iter().copied().collect();
        out.set_column(k, &DVector::from_vec(m.mul(&col)));
    }
    out
}

/// Orthonormal basis of the span of `cols` (Gram-Schmidt applied twice),
/// dropping directions that are numerically dependent.
fn orthonormal_basis(cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cols.len());
    for c in cols {
        let n0 = c.norm();
        if n0 == 0.0 {
            continue;
        }
        let mut v = c / n0;
        for _ in 0..2 {
            for q in &basis {
                let d = q.dot(&v);
                v.axpy(-d, q, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-12 {
            basis.push(v / nv);
        }
    }
    DMatrix::from_columns(&basis)
}

/// Krylov depth per restart of [`smallest_generalized`].
const KRYLOV_DEPTH: usize = 8;

/// The `k` smallest eigenpairs of `A x = lambda B x` for SPD `A` and `B`,
/// by restarted block Krylov iteration: Rayleigh-Ritz on the span of
/// `(A^{-1} B)^j X`, `j = 1..=KRYLOV_DEPTH`, for a block `X` of `max(k + 8, 12)` columns.
pub fn smallest_generalized(
    a: &CsrMatrix,
    b: &CsrMatrix,
    k: usize,
    tol: f64,
    max_iter: usize,
) -> Result<EigenPairs> {
    let n = a.n();
    if n == 0 {
        return Err(Error::EmptySystem);
    }
    let k = k.clamp(1, n);
    let p = (k + 8).max(12).min(n);
    let chol = EnvelopeCholesky::factor(a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-1.0..1.0));
    let mut residual = f64::INFINITY;
    let mut prev: Option<Vec<f64>> = None;
    for it in 1..=max_iter {
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(p * KRYLOV_DEPTH);
        let mut y = x.clone();
        for _ in 0..KRYLOV_DEPTH {
            let by = columns_mul(b, &y);
            for c in 0..y.ncols() {
                let col: Vec<f64> = by.column(c).iter().copied().collect();
                let mut s = DVector::from_vec(chol.solve(&col));
                let nrm = s.norm();
                if nrm > 0.0 {
                    s /= nrm;
                }
                y.set_column(c, &s);
            }
            cols.extend(y.column_iter().map(|c| c.into_owned()));
            if cols.len() >= n {
                break;
            }
        }
        let q = orthonormal_basis(&cols);
        let aq = columns_mul(a, &q);
        let bq = columns_mul(b, &q);
        let ar = q.transpose() * &aq;
        let br = q.transpose() * &bq;
        let (theta, z) = dense_generalized(&(&ar + ar.transpose()).scale(0.5), &(&br + br.transpose()).scale(0.5))?;
        let keep = p.min(theta.len());
        let zk = z.columns(0, keep).into_owned();
        x = &q * &zk;
        let ax = &aq * &zk;
        let bxr = &bq * &zk;
        residual = (0..k.min(keep))
            .map(|c| {
                let r = ax.column(c) - bxr.column(c) * theta[c];
                r.norm() / ax.column(c).norm().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max);
        // clustered spectra: Ritz values settle long before the vectors do
        let settled = prev.as_ref().is_some_and(|pv: &Vec<f64>| {
            (0..k.min(keep)).all(|c| (pv[c] - theta[c]).abs() <= tol * theta[c].abs())
        }) && residual < tol.sqrt();
        prev = Some(theta.iter().take(k).copied().collect());
        if residual < tol || settled {
            return Ok(EigenPairs {
                values: theta.iter().take(k).copied().collect(),
                vectors: (0..k).map(|c| x.column(c).iter().copied().collect()).collect(),
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::EigenNotConverged { iterations: max_iter, residual })
}

/// Smallest eigenvalue of `(A, B)` where `A` may be merely symmetric: the
/// pencil is shifted by `sigma B` so that `A + sigma B` is SPD.
pub fn smallest_generalized_shifted(
    a: &CsrMatrix,
    b: &CsrMatrix,
    sigma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<EigenPairs> {
    let shifted = CsrMatrix::linear_combination(&[(1.0, a), (sigma, b)]);
    let mut e = smallest_generalized(&shifted, b, 1, tol, max_iter)?;
    for v in &mut e.values {
        *v -= sigma;
    }
    Ok(e)
}
