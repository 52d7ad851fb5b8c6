//! Piecewise-linear finite-element matrices and projection onto mesh nodes.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, PointLocation};
use crate::sparse::CsrMatrix;

/// Lumped mass `D`, stiffness `G1` and `G2 = G1 D^-1 G1`.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    /// Diagonal of the lumped mass matrix.
    pub d: Vec<f64>,
    pub g1: CsrMatrix,
    pub g2: CsrMatrix,
}

impl FemMatrices {
    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn d_matrix(&self) -> CsrMatrix {
        CsrMatrix::diagonal_from(&self.d)
    }
}

pub fn assemble_fem(mesh: &Mesh) -> Result<FemMatrices> {
    let n = mesh.num_nodes();
    let mut d_trip = Vec::with_capacity(3 * mesh.num_triangles());
    let mut g_trip = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let [p0, p1, p2] = mesh.triangle_points(t);
        let area = mesh.triangle_area(t);
        if !(area > 0.0) {
            return Err(Error::ZeroAreaTriangle(t));
        }
        // Edge vectors opposite each vertex; grad of hat i is perp(e_i) / (2 area).
        let e = [sub(p2, p1), sub(p0, p2), sub(p1, p0)];
        for i in 0..3 {
            d_trip.push((tri[i], 0, area / 3.0));
            for j in 0..3 {
                let dot = e[i][0] * e[j][0] + e[i][1] * e[j][1];
                g_trip.push((tri[i], tri[j], dot / (4.0 * area)));
            }
        }
    }
    let d_csr = CsrMatrix::from_triplets(n, 1, d_trip);
    let d: Vec<f64> = (0..n).map(|i| d_csr.get(i, 0)).collect();
    if let Some(j) = d.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::DegenerateInput(format!("mesh node {j} belongs to no triangle")));
    }
    let g1 = CsrMatrix::from_triplets(n, n, g_trip);
    let inv_d: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
    let mut scaled = g1.clone();
    scaled.scale_rows(&inv_d);
    let g2 = g1.matmul(&scaled);
    Ok(FemMatrices { d, g1, g2 })
}

fn sub(a: Point, b: Point) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Sparse `n x N` interpolation matrix holding barycentric weights.
///
/// Fails with the indices of every location that is not inside the mesh.
pub fn projection_matrix(mesh: &Mesh, locations: &[Point]) -> Result<CsrMatrix> {
    let mut indptr = Vec::with_capacity(locations.len() + 1);
    indptr.push(0);
    let mut indices = Vec::with_capacity(3 * locations.len());
    let mut values = Vec::with_capacity(3 * locations.len());
    let mut outside = Vec::new();
    for (i, &p) in locations.iter().enumerate() {
        match mesh.locate(p) {
            PointLocation::Inside { triangle, barycentric } => {
                let tri = mesh.triangles()[triangle];
                let mut row: [(usize, f64); 3] =
                    [(tri[0], barycentric[0]), (tri[1], barycentric[1]), (tri[2], barycentric[2])];
                row.sort_unstable_by_key(|e| e.0);
                for (c, w) in row {
                    if w != 0.0 {
                        indices.push(c);
                        values.push(w);
                    }
                }
            }
            PointLocation::Outside => outside.push(i),
        }
        indptr.push(indices.len());
    }
    if !outside.is_empty() {
        return Err(Error::OutsideMesh(outside));
    }
    Ok(CsrMatrix::from_parts(locations.len(), mesh.num_nodes(), indptr, indices, values))
}

/// Indices of locations outside the mesh.
pub fn outside_locations(mesh: &Mesh, locations: &[Point]) -> Vec<usize> {
    locations
        .iter()
        .enumerate()
        .filter(|(_, &p)| !mesh.locate(p).is_inside())
        .map(|(i, _)| i)
        .collect()
}
