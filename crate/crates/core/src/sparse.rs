//! Sparse symmetric matrices: CSR storage, reverse Cuthill-McKee ordering,
//! envelope Cholesky and preconditioned conjugate gradients.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Accumulates `(row, col, value)` entries; duplicates are summed.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        TripletBuilder { n, entries: Vec::new() }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i, j, v));
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0; self.n + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix { n: self.n, indptr, indices, values }
    }
}

/// Square matrix in compressed sparse row form with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(n: usize) -> Self {
        TripletBuilder::new(n).build()
    }

    pub fn identity(n: usize) -> Self {
        let mut b = TripletBuilder::new(n);
        for i in 0..n {
            b.add(i, i, 1.0);
        }
        b.build()
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut b = TripletBuilder::new(a.nrows());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    b.add(i, j, a[(i, j)]);
                }
            }
        }
        b.build()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul(x))
    }

    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul(y))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|`.
    pub fn symmetry_error(&self) -> f64 {
        (0..self.n).flat_map(|i| self.row(i).map(move |(j, v)| (v - self.get(j, i)).abs())).fold(0.0, f64::max)
    }

    /// `sum_k c_k A_k` over matrices of equal size.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        let n = terms.first().map_or(0, |t| t.1.n);
        let mut b = TripletBuilder::new(n);
        for &(c, m) in terms {
            assert_eq!(m.n, n, "matrix sizes differ");
            for i in 0..n {
                for (j, v) in m.row(i) {
                    b.add(i, j, c * v);
                }
            }
        }
        b.build()
    }

    /// Principal submatrix on `keep` (in the given order).
    pub fn submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut b = TripletBuilder::new(keep.len());
        for (new, &old) in keep.iter().enumerate() {
            for (j, v) in self.row(old) {
                if map[j] != usize::MAX {
                    b.add(new, map[j], v);
                }
            }
        }
        b.build()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }
}

/// Reverse Cuthill-McKee permutation (`perm[new] = old`) of the symmetric
/// sparsity pattern of `a`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n();
    let adj: Vec<Vec<usize>> = (0..n).map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j != i).collect()).collect();
    let deg: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_last = |start: usize, seen: &[bool]| -> (usize, usize) {
        // farthest node (lowest degree among the last level) and eccentricity
        let mut level = vec![usize::MAX; n];
        level[start] = 0;
        let mut q = VecDeque::from([start]);
        let mut last = start;
        while let Some(v) = q.pop_front() {
            for &u in &adj[v] {
                if level[u] == usize::MAX && !seen[u] {
                    level[u] = level[v] + 1;
                    q.push_back(u);
                    if level[u] > level[last] || (level[u] == level[last] && deg[u] < deg[last]) {
                        last = u;
                    }
                }
            }
        }
        (last, level[last])
    };
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| deg[v]);
    for &s in &by_degree {
        if seen[s] {
            continue;
        }
        // pseudo-peripheral start
        let mut start = s;
        let mut ecc = 0;
        for _ in 0..4 {
            let (far, e) = bfs_last(start, &seen);
            if e <= ecc {
                break;
            }
            start = far;
            ecc = e;
        }
        seen[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&u| !seen[u]).collect();
            nb.sort_by_key(|&u| deg[u]);
            for u in nb {
                seen[u] = true;
                q.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Cholesky factor stored by rows over each row's envelope, after a
/// symmetric reordering.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    rowptr: Vec<usize>,
    vals: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factor with a reverse Cuthill-McKee ordering.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        Self::factor_with(a, rcm_ordering(a))
    }

    pub fn factor_with(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.n();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (i, f) in first.iter_mut().enumerate() {
            for (j, _) in a.row(perm[i]) {
                *f = (*f).min(inv[j]);
            }
        }
        let mut rowptr = vec![0; n + 1];
        for i in 0..n {
            rowptr[i + 1] = rowptr[i] + i - first[i] + 1;
        }
        let mut vals = vec![0.0; rowptr[n]];
        for i in 0..n {
            for (j, v) in a.row(perm[i]) {
                let jj = inv[j];
                if jj <= i {
                    vals[rowptr[i] + jj - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let (fi, ri) = (first[i], rowptr[i]);
            for j in fi..i {
                let (fj, rj) = (first[j], rowptr[j]);
                let k0 = fi.max(fj);
                let mut s = vals[ri + j - fi];
                for k in k0..j {
                    s -= vals[ri + k - fi] * vals[rj + k - fj];
                }
                vals[ri + j - fi] = s / vals[rj + j - fj];
            }
            let mut d = vals[ri + i - fi];
            for k in fi..i {
                d -= vals[ri + k - fi] * vals[ri + k - fi];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: perm[i], value: d });
            }
            vals[ri + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky { perm, first, rowptr, vals })
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.vals.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let (fi, ri) = (self.first[i], self.rowptr[i]);
            let mut s = y[i];
            for k in fi..i {
                s -= self.vals[ri + k - fi] * y[k];
            }
            y[i] = s / self.vals[ri + i - fi];
        }
        for i in (0..n).rev() {
            let (fi, ri) = (self.first[i], self.rowptr[i]);
            y[i] /= self.vals[ri + i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.vals[ri + k - fi] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for SPD `a`, starting from `x`.
/// Stops when `|b - A x| <= tol |b|`.
pub fn pcg<P: Fn(&[f64]) -> Vec<f64>>(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    precond: P,
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let bn = norm(b);
    if bn == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = b.to_vec();
    axpy(-1.0, &a.mul(x), &mut r);
    let mut res = norm(&r) / bn;
    if res <= tol {
        return Ok(SolveStats { iterations: 0, relative_residual: res });
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; b.len()];
    for it in 1..=max_iter {
        a.matvec_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        res = norm(&r) / bn;
        if res <= tol {
            return Ok(SolveStats { iterations: it, relative_residual: res });
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::SolverNotConverged { iterations: max_iter, residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 2D five-point Laplacian plus a shift, on an `m x m` grid.
    fn laplacian(m: usize, shift: f64) -> CsrMatrix {
        let mut b = TripletBuilder::new(m * m);
        for i in 0..m {
            for j in 0..m {
                let k = i * m + j;
                b.add(k, k, 4.0 + shift);
                if i > 0 {
                    b.add(k, k - m, -1.0);
                }
                if i + 1 < m {
                    b.add(k, k + m, -1.0);
                }
                if j > 0 {
                    b.add(k, k - 1, -1.0);
                }
                if j + 1 < m {
                    b.add(k, k + 1, -1.0);
                }
            }
        }
        b.build()
    }

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::new(2);
        b.add(0, 1, 1.0);
        b.add(0, 1, 2.5);
        b.add(1, 0, 3.5);
        let a = b.build();
        assert_eq!(a.get(0, 1), 3.5);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.symmetry_error(), 0.0);
    }

    #[test]
    fn cholesky_matches_dense_solve() {
        let a = laplacian(9, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b: Vec<f64> = (0..a.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = EnvelopeCholesky::factor(&a).unwrap().solve(&b);
        let dense = a.to_dense().lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        for (u, v) in x.iter().zip(dense.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn rcm_is_permutation_and_shrinks_envelope() {
        let a = laplacian(12, 0.0);
        // scramble the numbering, then check RCM recovers a narrow envelope
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut scramble: Vec<usize> = (0..a.n()).collect();
        for i in (1..scramble.len()).rev() {
            scramble.swap(i, rng.gen_range(0..=i));
        }
        let s = a.submatrix(&scramble);
        let mut p = rcm_ordering(&s);
        let natural = EnvelopeCholesky::factor_with(&s, (0..s.n()).collect()).unwrap().envelope_size();
        let rcm = EnvelopeCholesky::factor(&s).unwrap().envelope_size();
        assert!(rcm * 3 < natural, "{rcm} vs {natural}");
        p.sort_unstable();
        assert_eq!(p, (0..a.n()).collect::<Vec<_>>());
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(matches!(EnvelopeCholesky::factor(&a), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn pcg_converges_with_and_without_preconditioner() {
        let a = laplacian(15, 0.01);
        let b = vec![1.0; a.n()];
        let mut x = vec![0.0; a.n()];
        let plain = pcg(&a, &b, &mut x, |r| r.to_vec(), 1e-10, 1000).unwrap();
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        let mut y = vec![0.0; a.n()];
        let pre = pcg(&a, &b, &mut y, |r| chol.solve(r), 1e-10, 10).unwrap();
        assert!(pre.iterations <= 2 && plain.iterations > 10);
        assert!(x.iter().zip(&y).all(|(u, v)| (u - v).abs() < 1e-7));
        let mut z = vec![0.0; a.n()];
        assert!(matches!(pcg(&a, &b, &mut z, |r| r.to_vec(), 1e-14, 3), Err(Error::SolverNotConverged { .. })));
    }

    proptest! {
        #[test]
        fn random_spd_solves(seed in 0u64..1000, n in 1usize..25) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = DMatrix::from_fn(n, n, |_, _| if rng.gen_bool(0.3) { rng.gen_range(-1.0..1.0) } else { 0.0 });
            let a = &g * g.transpose() + DMatrix::identity(n, n);
            let csr = CsrMatrix::from_dense(&a);
            let b: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
            let x = EnvelopeCholesky::factor(&csr).unwrap().solve(&b);
            let r: Vec<f64> = csr.mul(&x).iter().zip(&b).map(|(u, v)| u - v).collect();
            prop_assert!(norm(&r) < 1e-10 * (1.0 + norm(&b)));
        }
    }
}
