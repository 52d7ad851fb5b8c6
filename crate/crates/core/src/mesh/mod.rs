//! Triangulated meshes over (a dilation of) the convex hull of the data.
//!
//! [`build_mesh`] merges input points closer than `cutoff`, dilates their
//! convex hull by `boundary_extension`, and refines a Delaunay triangulation
//! until interior edges are at most `max_edge_interior`, exterior edges at
//! most `max_edge_exterior`, and no angle is below 21 degrees (except where
//! the input forces edges shorter than the cutoff).

mod delaunay;
mod geometry;
mod index;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

pub use geometry::{convex_hull, diameter, distance_to_boundary, in_convex_polygon, polygon_area, Point};
use index::TriangleIndex;

use crate::error::{Error, Result};
use crate::math;

/// Minimum angle targeted by refinement, in degrees.
pub const MIN_ANGLE_DEG: f64 = 21.0;
const MAX_VERTICES: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshOptions {
    pub max_edge_interior: f64,
    pub max_edge_exterior: f64,
    /// Outward dilation of the data hull; zero meshes the hull itself.
    pub boundary_extension: f64,
    /// Input points closer than this are merged into one node.
    pub cutoff: f64,
}

impl Default for MeshOptions {
    /// Calibrated for data on the unit square: roughly 550 to 700 nodes.
    fn default() -> Self {
        Self::scaled_to(core::f64::consts::SQRT_2)
    }
}

impl MeshOptions {
    /// Defaults expressed relative to the data diameter.
    pub fn scaled_to(diameter: f64) -> Self {
        let s = diameter / core::f64::consts::SQRT_2;
        Self {
            max_edge_interior: 0.08 * s,
            max_edge_exterior: 0.18 * s,
            boundary_extension: 0.4 * s,
            cutoff: 0.045 * s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("max_edge_interior", self.max_edge_interior)?;
        positive("max_edge_exterior", self.max_edge_exterior)?;
        positive("cutoff", self.cutoff)?;
        if !(self.boundary_extension >= 0.0 && self.boundary_extension.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "boundary_extension must be non-negative, got {}",
                self.boundary_extension
            )));
        }
        if self.max_edge_exterior < self.max_edge_interior {
            return Err(Error::InvalidArgument(
                "max_edge_exterior must be at least max_edge_interior".into(),
            ));
        }
        Ok(())
    }
}

/// Result of locating a point in a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointLocation {
    Inside { triangle: usize, barycentric: [f64; 3] },
    Outside,
}

impl PointLocation {
    pub fn is_inside(&self) -> bool {
        matches!(self, PointLocation::Inside { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    data_hull: Vec<Point>,
    index: TriangleIndex,
    area_tol: f64,
}

impl Mesh {
    /// Assemble a mesh from explicit parts, validating orientation and indices.
    ///
    /// `data_hull` is the convex polygon of the original data (used for
    /// extrapolation flags); pass the mesh outline when unknown.
    pub fn from_parts(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<bool>,
        data_hull: Vec<Point>,
    ) -> Result<Self> {
        if nodes.len() < 3 || triangles.is_empty() {
            return Err(Error::DegenerateInput("mesh needs at least 3 nodes and 1 triangle".into()));
        }
        if boundary.len() != nodes.len() {
            return Err(Error::InvalidArgument("boundary flags do not match node count".into()));
        }
        if nodes.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidArgument("non-finite node coordinate".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nodes.len()) {
                return Err(Error::InvalidArgument(format!("triangle {t} references a missing node")));
            }
            let area = geometry::orient(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::ZeroAreaTriangle(t));
            }
        }
        let index = TriangleIndex::new(&nodes, &triangles);
        let diag2 = index.bbox_diag2();
        Ok(Self {
            nodes,
            triangles,
            boundary,
            data_hull,
            index,
            area_tol: 1e-10 * diag2,
        })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    /// Convex hull of the (merged) input points, counter-clockwise.
    pub fn data_hull(&self) -> &[Point] {
        &self.data_hull
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * geometry::orient(a, b, c)
    }

    /// Unique undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| {
                [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
                    .map(|(a, b)| (a.min(b), a.max(b)))
            })
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Whether `p` lies inside the convex hull of the original data.
    pub fn in_data_hull(&self, p: Point) -> bool {
        in_convex_polygon(&self.data_hull, p)
    }

    /// Distance from `p` to the boundary of the data hull.
    pub fn distance_to_data_boundary(&self, p: Point) -> f64 {
        distance_to_boundary(&self.data_hull, p)
    }

    /// Find the triangle containing `p`. Points on shared edges go to the
    /// lowest-index triangle.
    pub fn locate(&self, p: Point) -> PointLocation {
        if !p[0].is_finite() || !p[1].is_finite() {
            return PointLocation::Outside;
        }
        for &t in self.index.candidates(p) {
            let [a, b, c] = self.triangle_points(t);
            let s0 = geometry::orient(b, c, p);
            let s1 = geometry::orient(c, a, p);
            let s2 = geometry::orient(a, b, p);
            if s0 < -self.area_tol || s1 < -self.area_tol || s2 < -self.area_tol {
                continue;
            }
            let mut w = [s0.max(0.0), s1.max(0.0), s2.max(0.0)];
            let total = w[0] + w[1] + w[2];
            if !(total > 0.0) {
                continue;
            }
            for x in &mut w {
                *x /= total;
            }
            return PointLocation::Inside { triangle: t, barycentric: w };
        }
        PointLocation::Outside
    }
}

/// Merge points closer than `cutoff`; hull vertices are visited first so the
/// hull of the merged set matches the hull of the input. Returns kept input
/// indices in input order.
fn merge_points(points: &[Point], cutoff: f64) -> Vec<usize> {
    let hull = convex_hull(points, false);
    let mut visit: Vec<usize> = hull.clone();
    let mut is_hull = vec![false; points.len()];
    for &h in &hull {
        is_hull[h] = true;
    }
    visit.extend((0..points.len()).filter(|&i| !is_hull[i]));

    let cell = cutoff;
    let key = |p: Point| ((math::floor(p[0] / cell)) as i64, (math::floor(p[1] / cell)) as i64);
    let mut grid: alloc::collections::BTreeMap<(i64, i64), Vec<usize>> = Default::default();
    let mut keep = vec![false; points.len()];
    for &i in &visit {
        let p = points[i];
        let (kx, ky) = key(p);
        let mut close = false;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = grid.get(&(kx + dx, ky + dy)) {
                    if list.iter().any(|&j| geometry::dist(points[j], p) < cutoff) {
                        close = true;
                        break 'search;
                    }
                }
            }
        }
        if !close {
            keep[i] = true;
            grid.entry((kx, ky)).or_default().push(i);
        }
    }
    (0..points.len()).filter(|&i| keep[i]).collect()
}

/// Outward offset of a convex polygon by `ext`, with arcs at the corners
/// sampled so consecutive boundary points are at most `max_edge` apart.
fn dilate_hull(hull: &[Point], ext: f64, max_edge: f64) -> Vec<Point> {
    let n = hull.len();
    let normal = |a: Point, b: Point| {
        let d = geometry::dist(a, b);
        [(b[1] - a[1]) / d, -(b[0] - a[0]) / d]
    };
    let mut out = Vec::new();
    for i in 0..n {
        let prev = hull[(i + n - 1) % n];
        let cur = hull[i];
        let next = hull[(i + 1) % n];
        let n_in = normal(prev, cur);
        let n_out = normal(cur, next);
        let a0 = math::atan2(n_in[1], n_in[0]);
        let mut a1 = math::atan2(n_out[1], n_out[0]);
        while a1 < a0 {
            a1 += 2.0 * core::f64::consts::PI;
        }
        let sweep = a1 - a0;
        // chord for angle step h is 2 ext sin(h/2) <= max_edge
        let steps = math::ceil(sweep * ext / max_edge).max(1.0) as usize;
        for k in 0..=steps {
            let ang = a0 + sweep * k as f64 / steps as f64;
            out.push([cur[0] + ext * math::cos(ang), cur[1] + ext * math::sin(ang)]);
        }
        // straight run to the next corner
        let start = [cur[0] + ext * n_out[0], cur[1] + ext * n_out[1]];
        let end = [next[0] + ext * n_out[0], next[1] + ext * n_out[1]];
        let len = geometry::dist(start, end);
        let pieces = math::ceil(len / max_edge).max(1.0) as usize;
        for k in 1..pieces {
            let t = k as f64 / pieces as f64;
            out.push([start[0] + t * (end[0] - start[0]), start[1] + t * (end[1] - start[1])]);
        }
    }
    out
}

fn check_non_degenerate(points: &[Point], kept: &[usize]) -> Result<Vec<usize>> {
    if kept.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "{} distinct point(s) after merging, need at least 3",
            kept.len()
        )));
    }
    let pts: Vec<Point> = kept.iter().map(|&i| points[i]).collect();
    let hull = convex_hull(&pts, false);
    if hull.len() < 3 {
        return Err(Error::DegenerateInput("input points are collinear".into()));
    }
    Ok(hull)
}

/// Build a refined triangulation covering the dilated hull of `points`.
pub fn build_mesh(points: &[Point], opts: &MeshOptions) -> Result<Mesh> {
    opts.validate()?;
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::InvalidArgument("non-finite input coordinate".into()));
    }
    let kept = merge_points(points, opts.cutoff);
    let hull_local = check_non_degenerate(points, &kept)?;
    let kept_pts: Vec<Point> = kept.iter().map(|&i| points[i]).collect();
    let data_hull: Vec<Point> = hull_local.iter().map(|&i| kept_pts[i]).collect();

    let (boundary, interior): (Vec<Point>, Vec<Point>) = if opts.boundary_extension > 0.0 {
        (
            dilate_hull(&data_hull, opts.boundary_extension, opts.max_edge_exterior),
            kept_pts.clone(),
        )
    } else {
        // the hull itself is the boundary; collinear hull points become
        // segment endpoints so no input point sits in the middle of a segment
        let loose = convex_hull(&kept_pts, true);
        let mut on_hull = vec![false; kept_pts.len()];
        for &i in &loose {
            on_hull[i] = true;
        }
        (
            loose.iter().map(|&i| kept_pts[i]).collect(),
            (0..kept_pts.len()).filter(|&i| !on_hull[i]).map(|i| kept_pts[i]).collect(),
        )
    };

    let hull_for_class = data_hull.clone();
    let all_interior = opts.boundary_extension == 0.0;
    let is_interior = move |p: Point| all_interior || in_convex_polygon(&hull_for_class, p);
    let params = delaunay::RefineParams {
        max_edge_interior: opts.max_edge_interior,
        max_edge_exterior: opts.max_edge_exterior,
        min_angle_rad: MIN_ANGLE_DEG.to_radians(),
        min_feature: 0.5 * opts.cutoff,
        max_vertices: MAX_VERTICES,
        is_interior: &is_interior,
    };
    let (tri, _, on_boundary) = delaunay::refined_triangulation(&boundary, &interior, &params)?;

    // input points first, then boundary, then Steiner points
    let first = delaunay::FIRST_REAL_VERTEX;
    let n_real = tri.num_vertices() - first;
    let mut remap = vec![delaunay::NONE; tri.num_vertices()];
    let mut nodes = Vec::with_capacity(n_real);
    let mut flags = Vec::with_capacity(n_real);
    for v in first..tri.num_vertices() {
        remap[v] = nodes.len();
        nodes.push(tri.point(v));
        flags.push(on_boundary[v]);
    }
    let triangles: Vec<[usize; 3]> = tri
        .domain_triangles()
        .map(|t| tri.vertices(t).map(|v| remap[v]))
        .collect();
    Mesh::from_parts(nodes, triangles, flags, data_hull)
}

/// Unrefined Delaunay triangulation of the convex hull of `points`.
pub fn delaunay(points: &[Point]) -> Result<Mesh> {
    let kept: Vec<usize> = (0..points.len()).collect();
    let hull = check_non_degenerate(points, &kept)?;
    let data_hull: Vec<Point> = hull.iter().map(|&i| points[i]).collect();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let mut tri = delaunay::Triangulation::new(lo, hi);
    for &p in points {
        tri.insert(p);
    }
    let first = delaunay::FIRST_REAL_VERTEX;
    let nodes: Vec<Point> = (first..tri.num_vertices()).map(|v| tri.point(v)).collect();
    let triangles: Vec<[usize; 3]> = tri
        .domain_triangles()
        .map(|t| tri.vertices(t).map(|v| v - first))
        .collect();
    let hull_set = convex_hull(&nodes, true);
    let mut flags = vec![false; nodes.len()];
    for i in hull_set {
        flags[i] = true;
    }
    Mesh::from_parts(nodes, triangles, flags, data_hull)
}
