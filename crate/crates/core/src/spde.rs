//! SPDE precision matrix for the Matérn field with smoothness one.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::bessel::x_k1;
use crate::cholesky::{CholeskyFactor, SymbolicCholesky};
use crate::error::{Error, Result};
use crate::fem::FemMatrices;
use crate::sparse::CsrMatrix;

/// Largest `n` accepted by [`approx_covariance`].
pub const MAX_DENSE_COVARIANCE: usize = 5000;

/// Matérn plus nugget parameters. The smoothness is fixed at one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    pub phi: f64,
    pub gamma: f64,
    pub tau: f64,
}

impl MaternParams {
    pub const NU: f64 = 1.0;

    pub fn new(phi: f64, gamma: f64, tau: f64) -> Result<Self> {
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::InvalidArgument(format!("phi must be positive, got {phi}")));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { phi, gamma, tau })
    }

    pub fn correlation(&self, d: f64, same_site: bool) -> f64 {
        matern_correlation(d, self.phi, self.gamma, same_site)
    }
}

/// `gamma (d/phi) K1(d/phi) + (1 - gamma) [same_site]`.
pub fn matern_correlation(d: f64, phi: f64, gamma: f64, same_site: bool) -> f64 {
    let nugget = if same_site { 1.0 - gamma } else { 0.0 };
    gamma * x_k1(d / phi) + nugget
}

/// The phi-independent part of `Q`: the union pattern, the FEM matrices laid
/// out on it, and its symbolic factorization.
#[derive(Debug)]
pub struct SpdeStructure {
    pattern: CsrMatrix,
    d: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    symbolic: SymbolicCholesky,
}

impl SpdeStructure {
    pub fn new(fem: &FemMatrices) -> Self {
        let pattern = fem.g2.pattern_union(&fem.g1).pattern_union(&fem.d_matrix());
        let d = fem.d_matrix().values_on_pattern(&pattern);
        let g1 = fem.g1.values_on_pattern(&pattern);
        let g2 = fem.g2.values_on_pattern(&pattern);
        let symbolic = SymbolicCholesky::analyze_min_degree(&pattern);
        Self { pattern, d, g1, g2, symbolic }
    }

    pub fn dim(&self) -> usize {
        self.pattern.nrows()
    }

    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    pub fn symbolic(&self) -> &SymbolicCholesky {
        &self.symbolic
    }

    /// Values of `Q_phi` on [`Self::pattern`].
    pub fn q_values(&self, phi: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.d.len()];
        self.q_values_into(phi, &mut out);
        out
    }

    pub fn q_values_into(&self, phi: f64, out: &mut [f64]) {
        let s = phi * phi / (4.0 * PI);
        let a = s / (phi * phi * phi * phi);
        let b = 2.0 * s / (phi * phi);
        for (k, o) in out.iter_mut().enumerate() {
            *o = a * self.d[k] + b * self.g1[k] + s * self.g2[k];
        }
    }
}

/// `Q_phi = (phi^2 / 4 pi) (phi^-4 D + 2 phi^-2 G1 + G2)` with its factor.
#[derive(Debug, Clone)]
pub struct SpdePrecision {
    phi: f64,
    structure: Arc<SpdeStructure>,
    values: Vec<f64>,
    chol: CholeskyFactor,
    logdet: f64,
}

impl SpdePrecision {
    pub fn new(phi: f64, structure: Arc<SpdeStructure>) -> Result<Self> {
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::InvalidArgument(format!("phi must be positive, got {phi}")));
        }
        let values = structure.q_values(phi);
        let chol = structure.symbolic.factor(&values).map_err(|e| {
            Error::Numerical(format!("factorizing Q at phi = {phi}: {e}"))
        })?;
        let logdet = chol.logdet(&structure.symbolic);
        Ok(Self { phi, structure, values, chol, logdet })
    }

    /// Rebuild for a new `phi`, reusing buffers. On failure `self` is left
    /// inconsistent and must be rebuilt or discarded.
    pub fn set_phi(&mut self, phi: f64) -> Result<()> {
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::InvalidArgument(format!("phi must be positive, got {phi}")));
        }
        self.structure.q_values_into(phi, &mut self.values);
        self.chol
            .refactor(&self.structure.symbolic, &self.values)
            .map_err(|e| Error::Numerical(format!("factorizing Q at phi = {phi}: {e}")))?;
        self.phi = phi;
        self.logdet = self.chol.logdet(&self.structure.symbolic);
        Ok(())
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn dim(&self) -> usize {
        self.structure.dim()
    }

    pub fn structure(&self) -> &Arc<SpdeStructure> {
        &self.structure
    }

    /// Values of `Q` on the structure's pattern.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let p = &self.structure.pattern;
        CsrMatrix::from_parts(
            p.nrows(),
            p.ncols(),
            p.indptr().to_vec(),
            p.indices().to_vec(),
            self.values.clone(),
        )
    }

    /// `x^T Q x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let p = &self.structure.pattern;
        let mut total = 0.0;
        for r in 0..p.nrows() {
            let range = p.indptr()[r]..p.indptr()[r + 1];
            let mut s = 0.0;
            for (&c, &v) in p.indices()[range.clone()].iter().zip(&self.values[range]) {
                s += v * x[c];
            }
            total += x[r] * s;
        }
        total
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve(&self.structure.symbolic, b)
    }

    /// Draw from `N(0, Q^-1)` given standard normal noise.
    pub fn sample(&self, z: &[f64]) -> Vec<f64> {
        self.chol.sample_zero_mean(&self.structure.symbolic, z)
    }
}

pub fn build_precision(phi: f64, fem: &FemMatrices) -> Result<SpdePrecision> {
    SpdePrecision::new(phi, Arc::new(SpdeStructure::new(fem)))
}

/// `diag(A Q^-1 A^T)`, one sparse solve per row of `A`.
pub fn projected_variances(a: &CsrMatrix, q: &SpdePrecision) -> Vec<f64> {
    let mut rhs = vec![0.0; q.dim()];
    (0..a.nrows())
        .map(|i| {
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                rhs[c] = v;
            }
            let x = q.solve(&rhs);
            for &c in cols {
                rhs[c] = 0.0;
            }
            cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
        })
        .collect()
}

/// Dense `gamma A Q^-1 A^T + (1 - gamma) I`, row-major. Verification only.
pub fn approx_covariance(a: &CsrMatrix, q: &SpdePrecision, gamma: f64) -> Result<Vec<f64>> {
    let n = a.nrows();
    if n > MAX_DENSE_COVARIANCE {
        return Err(Error::TooLarge(format!(
            "dense covariance for {n} locations (limit {MAX_DENSE_COVARIANCE})"
        )));
    }
    let mut out = vec![0.0; n * n];
    let mut rhs = vec![0.0; q.dim()];
    for j in 0..n {
        let (cols, vals) = a.row(j);
        for (&c, &v) in cols.iter().zip(vals) {
            rhs[c] = v;
        }
        let x = q.solve(&rhs);
        for &c in cols {
            rhs[c] = 0.0;
        }
        let col = a.mul_vec(&x);
        for i in 0..n {
            out[i * n + j] = gamma * col[i];
        }
        out[j * n + j] += 1.0 - gamma;
    }
    // symmetrize away solve round-off
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (out[i * n + j] + out[j * n + i]);
            out[i * n + j] = m;
            out[j * n + i] = m;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseCholesky;
    use crate::fem::{assemble_fem, projection_matrix};
    use crate::mesh::{build_mesh, Mesh, MeshOptions, Point};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::vec::Vec;

    fn grid(k: usize) -> Vec<Point> {
        let mut pts = Vec::new();
        for i in 1..=k {
            for j in 1..=k {
                pts.push([i as f64 / k as f64, j as f64 / k as f64]);
            }
        }
        pts
    }

    fn small_mesh() -> Mesh {
        let mut rng = StdRng::seed_from_u64(21);
        let pts: Vec<Point> = (0..40).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let opts = MeshOptions {
            max_edge_interior: 0.2,
            max_edge_exterior: 0.3,
            boundary_extension: 0.15,
            cutoff: 0.02,
        };
        build_mesh(&pts, &opts).unwrap()
    }

    #[test]
    fn correlation_values() {
        assert_eq!(matern_correlation(0.0, 0.3, 0.7, true), 1.0);
        assert!((matern_correlation(1e-14, 0.3, 0.9, false) - 0.9).abs() < 1e-9);
        assert!((matern_correlation(0.25, 0.25, 1.0, false) - 0.6019072301972346).abs() < 1e-12);
        assert_eq!(matern_correlation(0.4, 0.2, 0.0, false), 0.0);
    }

    #[test]
    fn correlation_is_non_increasing() {
        let mut prev = f64::INFINITY;
        for i in 1..2000 {
            let r = matern_correlation(i as f64 * 1e-3, 0.2, 0.8, false);
            assert!(r <= prev);
            prev = r;
        }
    }

    #[test]
    fn params_validation() {
        assert!(MaternParams::new(0.1, 0.5, 1.0).is_ok());
        assert!(MaternParams::new(0.0, 0.5, 1.0).is_err());
        assert!(MaternParams::new(0.1, 1.5, 1.0).is_err());
        assert!(MaternParams::new(0.1, 0.5, -1.0).is_err());
    }

    #[test]
    fn q_matches_naive_assembly() {
        let mesh = small_mesh();
        let fem = assemble_fem(&mesh).unwrap();
        let phi = 0.17;
        let q = build_precision(phi, &fem).unwrap().to_csr();
        let s = phi * phi / (4.0 * PI);
        let n = fem.dim();
        let g1 = fem.g1.to_dense();
        let g2 = fem.g2.to_dense();
        for i in 0..n {
            for j in 0..n {
                let d = if i == j { fem.d[i] } else { 0.0 };
                let want = s * d / phi.powi(4) + s * 2.0 * g1[i * n + j] / phi.powi(2) + s * g2[i * n + j];
                assert!((q.get(i, j) - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
        let pattern = fem.g2.pattern_union(&fem.g1).pattern_union(&fem.d_matrix());
        assert_eq!(q.indices(), pattern.indices());
    }

    #[test]
    fn logdet_matches_dense() {
        let mesh = small_mesh();
        assert!(mesh.num_nodes() <= 200);
        let fem = assemble_fem(&mesh).unwrap();
        for phi in [0.05, 0.2, 0.6] {
            let q = build_precision(phi, &fem).unwrap();
            let dense = DenseCholesky::factor(&q.to_csr().to_dense(), q.dim()).unwrap();
            let rel = (q.logdet() - dense.logdet()).abs() / dense.logdet().abs().max(1.0);
            assert!(rel < 1e-6, "phi {phi}: {} vs {}", q.logdet(), dense.logdet());
        }
    }

    #[test]
    fn q_is_positive_definite() {
        let mesh = small_mesh();
        let fem = assemble_fem(&mesh).unwrap();
        let q = build_precision(0.3, &fem).unwrap();
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..50 {
            let v: Vec<f64> = (0..q.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
            assert!(q.quad_form(&v) > 0.0);
        }
    }

    #[test]
    fn gamma_zero_gives_identity() {
        let mesh = small_mesh();
        let fem = assemble_fem(&mesh).unwrap();
        let q = build_precision(0.2, &fem).unwrap();
        let a = projection_matrix(&mesh, &[[0.3, 0.3], [0.5, 0.6], [0.7, 0.2]]).unwrap();
        let c = approx_covariance(&a, &q, 0.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c[i * 3 + j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn refuses_large_dense_covariance() {
        let mesh = small_mesh();
        let fem = assemble_fem(&mesh).unwrap();
        let q = build_precision(0.2, &fem).unwrap();
        let a = projection_matrix(&mesh, &vec![[0.5, 0.5]; MAX_DENSE_COVARIANCE + 1]).unwrap();
        assert!(matches!(approx_covariance(&a, &q, 0.5), Err(Error::TooLarge(_))));
    }

    #[test]
    fn interior_marginal_variance_is_near_one() {
        let mesh = build_mesh(&grid(20), &MeshOptions::default()).unwrap();
        let opts = MeshOptions::default();
        let fem = assemble_fem(&mesh).unwrap();
        let q = build_precision(0.15 * core::f64::consts::SQRT_2, &fem).unwrap();
        let mut rng = StdRng::seed_from_u64(8);
        let mut pts = Vec::new();
        while pts.len() < 200 {
            let p = [rng.random::<f64>(), rng.random::<f64>()];
            if mesh.in_data_hull(p) && mesh.distance_to_data_boundary(p) > opts.boundary_extension / 2.0 {
                pts.push(p);
            }
        }
        let a = projection_matrix(&mesh, &pts).unwrap();
        for v in projected_variances(&a, &q) {
            assert!((0.9..=1.1).contains(&v), "variance {v}");
        }
    }
}
