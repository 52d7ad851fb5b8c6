//! Sparse Cholesky factorization with a reusable symbolic analysis.
//!
//! The sampler refactors matrices with a fixed sparsity pattern thousands of
//! times, so the fill-reducing ordering, elimination tree, and the full
//! pattern of `L` (including the scatter slots of the up-looking numeric
//! phase) are computed once in [`SymbolicCholesky::analyze`]. Numeric
//! factorization is then a straight pass over precomputed index arrays.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::error::{Error, Result};
use crate::math;
use crate::sparse::CsrMatrix;

const NONE: usize = usize::MAX;

/// Exact minimum-degree ordering on the graph of a symmetric pattern.
///
/// Returns `perm` with `perm[new] = old`. Ties are broken by the lowest
/// original index, so the ordering is deterministic.
pub fn minimum_degree(pattern: &CsrMatrix) -> Vec<usize> {
    let n = pattern.nrows();
    assert_eq!(n, pattern.ncols());
    let mut adj: Vec<Vec<usize>> = (0..n)
        .map(|r| {
            let (cols, _) = pattern.row(r);
            cols.iter().copied().filter(|&c| c != r).collect()
        })
        .collect();
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|v| Reverse((adj[v].len(), v))).collect();
    let mut order = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        order.push(v);
        let nbrs = core::mem::take(&mut adj[v]);
        for &u in &nbrs {
            // adj[u] <- (adj[u] ∪ nbrs) \ {u, v}
            merged.clear();
            let a = &adj[u];
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < nbrs.len() {
                let x = match (a.get(i), nbrs.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        j += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        i += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        j += 1;
                        y
                    }
                    (Some(&x), None) => {
                        i += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        j += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if x != u && x != v {
                    merged.push(x);
                }
            }
            core::mem::swap(&mut adj[u], &mut merged);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    order
}

/// Symbolic analysis of `P A P^T = L L^T` for a fixed symmetric pattern.
#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// Upper triangle of the permuted input, CSC; `c_src` points into the
    /// value array of the input pattern.
    c_colptr: Vec<usize>,
    c_rowidx: Vec<usize>,
    c_src: Vec<usize>,
    /// Pattern of `L`, CSC, diagonal first in each column.
    l_colptr: Vec<usize>,
    l_rowidx: Vec<usize>,
    /// For each row `k`, the columns `j < k` with `L[k, j] != 0` in
    /// topological order, and the slot in `l_rowidx` holding `L[k, j]`.
    row_ptr: Vec<usize>,
    row_cols: Vec<usize>,
    row_slots: Vec<usize>,
    input_nnz: usize,
}

impl SymbolicCholesky {
    /// Analyze a symmetric pattern (both triangles stored) under ordering `perm`.
    pub fn analyze(pattern: &CsrMatrix, perm: Vec<usize>) -> Self {
        let n = pattern.nrows();
        assert_eq!(n, pattern.ncols());
        assert_eq!(perm.len(), n);
        let mut inv_perm = vec![NONE; n];
        for (new, &old) in perm.iter().enumerate() {
            assert!(inv_perm[old] == NONE, "perm is not a permutation");
            inv_perm[old] = new;
        }

        // permuted upper triangle in CSC: column k holds rows i <= k
        let mut c_colptr = Vec::with_capacity(n + 1);
        c_colptr.push(0);
        let mut c_rowidx = Vec::new();
        let mut c_src = Vec::new();
        let mut col: Vec<(usize, usize)> = Vec::new();
        for k in 0..n {
            col.clear();
            let old = perm[k];
            let start = pattern.indptr()[old];
            let (cols, _) = pattern.row(old);
            for (off, &c_old) in cols.iter().enumerate() {
                let i = inv_perm[c_old];
                if i <= k {
                    col.push((i, start + off));
                }
            }
            col.sort_unstable();
            for &(i, src) in &col {
                c_rowidx.push(i);
                c_src.push(src);
            }
            c_colptr.push(c_rowidx.len());
        }

        // elimination tree
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &i0 in &c_rowidx[c_colptr[k]..c_colptr[k + 1]] {
                let mut i = i0;
                while i != NONE && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == NONE {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        // row patterns via elimination-tree reach
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut row_cols = Vec::new();
        let mut mark = vec![NONE; n];
        let mut stack = vec![0usize; n];
        let mut path = vec![0usize; n];
        let mut col_count = vec![1usize; n];
        for k in 0..n {
            let mut top = n;
            mark[k] = k;
            for &i0 in &c_rowidx[c_colptr[k]..c_colptr[k + 1]] {
                let mut i = i0;
                if i > k {
                    continue;
                }
                let mut len = 0;
                while mark[i] != k {
                    path[len] = i;
                    len += 1;
                    mark[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    stack[top] = path[len];
                }
            }
            for &j in &stack[top..n] {
                row_cols.push(j);
                col_count[j] += 1;
            }
            row_ptr.push(row_cols.len());
        }

        let mut l_colptr = vec![0usize; n + 1];
        for j in 0..n {
            l_colptr[j + 1] = l_colptr[j] + col_count[j];
        }
        let mut l_rowidx = vec![0usize; l_colptr[n]];
        let mut next: Vec<usize> = l_colptr[..n].to_vec();
        let mut row_slots = vec![0usize; row_cols.len()];
        for k in 0..n {
            // diagonal lands first: row k is the first row touching column k
            l_rowidx[next[k]] = k;
            next[k] += 1;
            for q in row_ptr[k]..row_ptr[k + 1] {
                let j = row_cols[q];
                let slot = next[j];
                next[j] += 1;
                l_rowidx[slot] = k;
                row_slots[q] = slot;
            }
        }

        Self {
            n,
            perm,
            c_colptr,
            c_rowidx,
            c_src,
            l_colptr,
            l_rowidx,
            row_ptr,
            row_cols,
            row_slots,
            input_nnz: pattern.nnz(),
        }
    }

    /// Analyze with a minimum-degree ordering of the pattern itself.
    pub fn analyze_min_degree(pattern: &CsrMatrix) -> Self {
        let perm = minimum_degree(pattern);
        Self::analyze(pattern, perm)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn nnz_l(&self) -> usize {
        self.l_rowidx.len()
    }

    /// Floating-point operations of one numeric factorization.
    pub fn flops(&self) -> u64 {
        (0..self.n)
            .map(|j| {
                let c = (self.l_colptr[j + 1] - self.l_colptr[j]) as u64;
                c * c
            })
            .sum()
    }

    /// Numeric factorization of a matrix whose values are laid out on the
    /// analyzed pattern.
    pub fn factor(&self, values: &[f64]) -> Result<CholeskyFactor> {
        let mut f = CholeskyFactor {
            lx: vec![0.0; self.nnz_l()],
            work: vec![0.0; self.n],
        };
        f.refactor(self, values)?;
        Ok(f)
    }
}

/// Numeric values of `L`; pair with the [`SymbolicCholesky`] that produced it.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lx: Vec<f64>,
    work: Vec<f64>,
}

impl CholeskyFactor {
    /// Recompute `L` in place for new values on the same pattern.
    pub fn refactor(&mut self, sym: &SymbolicCholesky, values: &[f64]) -> Result<()> {
        assert_eq!(values.len(), sym.input_nnz, "values do not match analyzed pattern");
        let x = &mut self.work;
        let lx = &mut self.lx;
        let lp = &sym.l_colptr;
        let li = &sym.l_rowidx;
        for k in 0..sym.n {
            for p in sym.c_colptr[k]..sym.c_colptr[k + 1] {
                x[sym.c_rowidx[p]] = values[sym.c_src[p]];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for q in sym.row_ptr[k]..sym.row_ptr[k + 1] {
                let j = sym.row_cols[q];
                let slot = sym.row_slots[q];
                let lkj = x[j] / lx[lp[j]];
                x[j] = 0.0;
                for p in (lp[j] + 1)..slot {
                    x[li[p]] -= lx[p] * lkj;
                }
                d -= lkj * lkj;
                lx[slot] = lkj;
            }
            if !(d > 0.0) || !d.is_finite() {
                // leave the workspace clean for the next attempt
                x.iter_mut().for_each(|v| *v = 0.0);
                return Err(Error::NotPositiveDefinite { pivot: k });
            }
            lx[lp[k]] = math::sqrt(d);
        }
        Ok(())
    }

    pub fn logdet(&self, sym: &SymbolicCholesky) -> f64 {
        2.0 * (0..sym.n)
            .map(|j| math::ln(self.lx[sym.l_colptr[j]]))
            .sum::<f64>()
    }

    /// In-place `L y = b` on a permuted vector.
    fn forward(&self, sym: &SymbolicCholesky, y: &mut [f64]) {
        let lp = &sym.l_colptr;
        for j in 0..sym.n {
            y[j] /= self.lx[lp[j]];
            let yj = y[j];
            for p in (lp[j] + 1)..lp[j + 1] {
                y[sym.l_rowidx[p]] -= self.lx[p] * yj;
            }
        }
    }

    /// In-place `L^T x = y` on a permuted vector.
    fn backward(&self, sym: &SymbolicCholesky, x: &mut [f64]) {
        let lp = &sym.l_colptr;
        for j in (0..sym.n).rev() {
            let mut s = x[j];
            for p in (lp[j] + 1)..lp[j + 1] {
                s -= self.lx[p] * x[sym.l_rowidx[p]];
            }
            x[j] = s / self.lx[lp[j]];
        }
    }

    /// Solve `A x = b` in the original ordering.
    pub fn solve(&self, sym: &SymbolicCholesky, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = sym.perm.iter().map(|&old| b[old]).collect();
        self.forward(sym, &mut y);
        self.backward(sym, &mut y);
        let mut out = vec![0.0; sym.n];
        for (new, &old) in sym.perm.iter().enumerate() {
            out[old] = y[new];
        }
        out
    }

    /// Draw from `N(A^{-1} b, A^{-1})` given standard normal noise `z`
    /// (indexed in factor order).
    pub fn sample_canonical(&self, sym: &SymbolicCholesky, b: &[f64], z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), sym.n);
        let mut y: Vec<f64> = sym.perm.iter().map(|&old| b[old]).collect();
        self.forward(sym, &mut y);
        for (v, zi) in y.iter_mut().zip(z) {
            *v += zi;
        }
        self.backward(sym, &mut y);
        let mut out = vec![0.0; sym.n];
        for (new, &old) in sym.perm.iter().enumerate() {
            out[old] = y[new];
        }
        out
    }

    /// `L^{-T} z` mapped back to the original ordering: a draw from `N(0, A^{-1})`.
    pub fn sample_zero_mean(&self, sym: &SymbolicCholesky, z: &[f64]) -> Vec<f64> {
        let mut y = z.to_vec();
        self.backward(sym, &mut y);
        let mut out = vec![0.0; sym.n];
        for (new, &old) in sym.perm.iter().enumerate() {
            out[old] = y[new];
        }
        out
    }

    /// Dense `L` in permuted ordering; testing aid.
    pub fn to_dense_lower(&self, sym: &SymbolicCholesky) -> Vec<f64> {
        let n = sym.n;
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for p in sym.l_colptr[j]..sym.l_colptr[j + 1] {
                out[sym.l_rowidx[p] * n + j] = self.lx[p];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseCholesky;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 2-D grid Laplacian plus a diagonal shift, both triangles stored.
    fn grid_matrix(side: usize, shift: f64) -> CsrMatrix {
        let n = side * side;
        let mut t = Vec::new();
        for i in 0..side {
            for j in 0..side {
                let v = i * side + j;
                t.push((v, v, 4.0 + shift));
                if i + 1 < side {
                    t.push((v, v + side, -1.0));
                    t.push((v + side, v, -1.0));
                }
                if j + 1 < side {
                    t.push((v, v + 1, -1.0));
                    t.push((v + 1, v, -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn matches_dense_factorization() {
        let a = grid_matrix(6, 0.3);
        let sym = SymbolicCholesky::analyze_min_degree(&a);
        let f = sym.factor(a.values()).unwrap();
        let dense = DenseCholesky::factor(&a.to_dense(), 36).unwrap();
        assert!((f.logdet(&sym) - dense.logdet()).abs() < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b: Vec<f64> = (0..36).map(|_| rng.random::<f64>() - 0.5).collect();
        let x = f.solve(&sym, &b);
        let back = a.mul_vec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstructs_permuted_matrix() {
        let a = grid_matrix(5, 1.0);
        let sym = SymbolicCholesky::analyze_min_degree(&a);
        let f = sym.factor(a.values()).unwrap();
        let l = f.to_dense_lower(&sym);
        let n = 25;
        let p = sym.perm();
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| l[i * n + k] * l[j * n + k]).sum();
                assert!((s - a.get(p[i], p[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn min_degree_reduces_fill() {
        let a = grid_matrix(20, 0.1);
        let natural = SymbolicCholesky::analyze(&a, (0..400).collect());
        let md = SymbolicCholesky::analyze_min_degree(&a);
        assert!(md.nnz_l() < natural.nnz_l());
        assert!(md.flops() < natural.flops());
    }

    #[test]
    fn refactor_reuses_pattern() {
        let a = grid_matrix(4, 0.5);
        let sym = SymbolicCholesky::analyze_min_degree(&a);
        let mut f = sym.factor(a.values()).unwrap();
        let scaled: Vec<f64> = a.values().iter().map(|v| v * 3.0).collect();
        f.refactor(&sym, &scaled).unwrap();
        let want = sym.factor(a.values()).unwrap().logdet(&sym) + 16.0 * libm::log(3.0);
        assert!((f.logdet(&sym) - want).abs() < 1e-10);
    }

    #[test]
    fn indefinite_is_reported() {
        let a = grid_matrix(3, -4.5);
        let sym = SymbolicCholesky::analyze_min_degree(&a);
        assert!(matches!(sym.factor(a.values()), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn canonical_sample_with_zero_noise_is_mean() {
        let a = grid_matrix(4, 0.2);
        let sym = SymbolicCholesky::analyze_min_degree(&a);
        let f = sym.factor(a.values()).unwrap();
        let b: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let s = f.sample_canonical(&sym, &b, &[0.0; 16]);
        let m = f.solve(&sym, &b);
        for (u, v) in s.iter().zip(&m) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
