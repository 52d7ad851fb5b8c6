//! Small dense linear algebra on row-major `Vec<f64>` storage.
//!
//! Used for exact field simulation, least squares, and verification oracles.
//! Nothing here is on the sampler's per-iteration path.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Lower Cholesky factor of a dense SPD matrix, row-major `n x n`.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (upper, row_i) = l.split_at_mut(i * n);
                let row_i = &mut row_i[..n];
                let row_j = if j == i { &row_i[..j] } else { &upper[j * n..j * n + j] };
                let dot: f64 = row_i[..j].iter().zip(row_j).map(|(a, b)| a * b).sum();
                let s = a[i * n + j] - dot;
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i });
                    }
                    row_i[i] = math::sqrt(s);
                } else {
                    row_i[j] = s / upper[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn l(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// `L x` for a vector `x`.
    pub fn mul_lower(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let row = &self.l[i * n..i * n + i + 1];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / self.l[i * n + i];
        }
        x
    }

    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.l[i * n + i];
            let xi = x[i];
            for k in 0..i {
                x[k] -= self.l[i * n + k] * xi;
            }
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.n).map(|i| math::ln(self.l[i * self.n + i])).sum::<f64>()
    }

    /// Dense inverse; verification use only.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}

/// `y = A x` for row-major `A` with `x.len()` columns.
pub fn mat_vec(a: &[f64], x: &[f64]) -> Vec<f64> {
    let m = x.len();
    a.chunks_exact(m)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Ordinary least squares via the normal equations. `x` is row-major `n x p`.
pub fn least_squares(x: &[f64], y: &[f64], p: usize) -> Result<Vec<f64>> {
    let n = y.len();
    assert_eq!(x.len(), n * p);
    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.chunks_exact(p).zip(y) {
        for a in 0..p {
            xty[a] += row[a] * yi;
            for b in 0..p {
                xtx[a * p + b] += row[a] * row[b];
            }
        }
    }
    let chol = DenseCholesky::factor(&xtx, p).map_err(|_| Error::RankDeficient)?;
    // reject near-singular systems that slip past the pivot check
    let max_d = (0..p).map(|i| chol.l(i, i)).fold(0.0, f64::max);
    let min_d = (0..p).map(|i| chol.l(i, i)).fold(f64::INFINITY, f64::min);
    if min_d <= max_d * 1e-7 {
        return Err(Error::RankDeficient);
    }
    Ok(chol.solve(&xty))
}
