use alloc::vec;
use alloc::vec::Vec;

use super::geometry::Point;
use crate::math;

/// Uniform bucket grid over triangle bounding boxes.
#[derive(Debug, Clone)]
pub(crate) struct TriangleIndex {
    lo: Point,
    cell: [f64; 2],
    dims: [usize; 2],
    start: Vec<usize>,
    items: Vec<usize>,
    diag2: f64,
}

impl TriangleIndex {
    pub fn new(nodes: &[Point], triangles: &[[usize; 3]]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let span = [(hi[0] - lo[0]).max(1e-300), (hi[1] - lo[1]).max(1e-300)];
        let side = math::ceil(math::sqrt(triangles.len() as f64 / 2.0)).max(1.0);
        let aspect = span[0] / span[1];
        let nx = (side * math::sqrt(aspect)).clamp(1.0, 4096.0) as usize;
        let ny = (side / math::sqrt(aspect)).clamp(1.0, 4096.0) as usize;
        let cell = [span[0] / nx as f64, span[1] / ny as f64];
        let dims = [nx, ny];
        let cell_of = |v: f64, k: usize| -> usize {
            let c = math::floor((v - lo[k]) / cell[k]);
            (c.max(0.0) as usize).min(dims[k] - 1)
        };
        let mut counts = vec![0usize; nx * ny + 1];
        let ranges: Vec<[usize; 4]> = triangles
            .iter()
            .map(|t| {
                let xs = t.map(|v| nodes[v][0]);
                let ys = t.map(|v| nodes[v][1]);
                let x0 = cell_of(xs.iter().copied().fold(f64::INFINITY, f64::min), 0);
                let x1 = cell_of(xs.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0);
                let y0 = cell_of(ys.iter().copied().fold(f64::INFINITY, f64::min), 1);
                let y1 = cell_of(ys.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1);
                [x0, x1, y0, y1]
            })
            .collect();
        for r in &ranges {
            for ix in r[0]..=r[1] {
                for iy in r[2]..=r[3] {
                    counts[iy * nx + ix + 1] += 1;
                }
            }
        }
        for c in 0..nx * ny {
            counts[c + 1] += counts[c];
        }
        let start = counts.clone();
        let mut next = counts;
        let mut items = vec![0usize; start[nx * ny]];
        // triangles in increasing index order, so each bucket is sorted
        for (t, r) in ranges.iter().enumerate() {
            for ix in r[0]..=r[1] {
                for iy in r[2]..=r[3] {
                    let c = iy * nx + ix;
                    items[next[c]] = t;
                    next[c] += 1;
                }
            }
        }
        Self {
            lo,
            cell,
            dims,
            start,
            items,
            diag2: span[0] * span[0] + span[1] * span[1],
        }
    }

    pub fn bbox_diag2(&self) -> f64 {
        self.diag2
    }

    /// Triangles whose bounding box overlaps the cell of `p`, ascending.
    pub fn candidates(&self, p: Point) -> &[usize] {
        let fx = math::floor((p[0] - self.lo[0]) / self.cell[0]);
        let fy = math::floor((p[1] - self.lo[1]) / self.cell[1]);
        // allow points a hair outside the box to reach the edge cells
        let tol = 1e-9;
        if fx < -tol || fy < -tol || fx > self.dims[0] as f64 + tol || fy > self.dims[1] as f64 + tol {
            return &[];
        }
        let ix = (fx.max(0.0) as usize).min(self.dims[0] - 1);
        let iy = (fy.max(0.0) as usize).min(self.dims[1] - 1);
        let c = iy * self.dims[0] + ix;
        &self.items[self.start[c]..self.start[c + 1]]
    }
}
