//! Incremental Bowyer-Watson triangulation inside a bounding super-triangle,
//! with Ruppert-style refinement over a convex domain.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::geometry::{
    circumcenter, dist, incircle_exact, min_angle, orient_exact, Point,
};
use crate::error::{Error, Result};

pub(crate) const NONE: usize = usize::MAX;
const SUPER: usize = 3;

#[derive(Debug, Clone, Copy)]
struct Tri {
    v: [usize; 3],
    /// `n[i]` is the neighbour across the edge opposite `v[i]`.
    n: [usize; 3],
    alive: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Triangulation {
    pts: Vec<Point>,
    tris: Vec<Tri>,
    free: Vec<usize>,
    vert_tri: Vec<usize>,
    last: usize,
    created: Vec<usize>,
}

impl Triangulation {
    /// Empty triangulation whose super-triangle encloses `[lo, hi]` by a wide margin.
    pub fn new(lo: Point, hi: Point) -> Self {
        let cx = 0.5 * (lo[0] + hi[0]);
        let cy = 0.5 * (lo[1] + hi[1]);
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300);
        let r = span * 1e6;
        let pts = vec![
            [cx - 2.0 * r, cy - r],
            [cx + 2.0 * r, cy - r],
            [cx, cy + 2.0 * r],
        ];
        let tris = vec![Tri { v: [0, 1, 2], n: [NONE; 3], alive: true }];
        Self {
            pts,
            tris,
            free: Vec::new(),
            vert_tri: vec![0, 0, 0],
            last: 0,
            created: Vec::new(),
        }
    }

    pub fn point(&self, v: usize) -> Point {
        self.pts[v]
    }

    pub fn num_vertices(&self) -> usize {
        self.pts.len()
    }

    /// Triangles created by the most recent insertion.
    pub fn created(&self) -> &[usize] {
        &self.created
    }

    pub fn is_alive(&self, t: usize) -> bool {
        self.tris[t].alive
    }

    pub fn vertices(&self, t: usize) -> [usize; 3] {
        self.tris[t].v
    }

    /// True when the triangle does not touch the super-triangle.
    pub fn is_domain(&self, t: usize) -> bool {
        self.tris[t].v.iter().all(|&v| v >= SUPER)
    }

    fn tri_points(&self, t: usize) -> [Point; 3] {
        let v = self.tris[t].v;
        [self.pts[v[0]], self.pts[v[1]], self.pts[v[2]]]
    }

    /// Visibility walk to a triangle containing `p` (boundary inclusive).
    fn locate(&self, p: Point) -> usize {
        let mut t = if self.tris[self.last].alive {
            self.last
        } else {
            self.tris.iter().position(|t| t.alive).expect("no live triangle")
        };
        let max_steps = 4 * self.tris.len() + 16;
        'walk: for step in 0..max_steps {
            let tri = self.tris[t];
            for k in 0..3 {
                let i = (k + step) % 3;
                let a = self.pts[tri.v[(i + 1) % 3]];
                let b = self.pts[tri.v[(i + 2) % 3]];
                if orient_exact(a, b, p) < 0.0 {
                    let nb = tri.n[i];
                    if nb == NONE {
                        break;
                    }
                    t = nb;
                    continue 'walk;
                }
            }
            return t;
        }
        // fall back to exhaustive search
        (0..self.tris.len())
            .find(|&t| {
                self.tris[t].alive && {
                    let [a, b, c] = self.tri_points(t);
                    orient_exact(a, b, p) >= 0.0
                        && orient_exact(b, c, p) >= 0.0
                        && orient_exact(c, a, p) >= 0.0
                }
            })
            .expect("point outside super-triangle")
    }

    /// Index of the live triangle containing `p`, if any lies in the domain.
    pub fn locate_domain(&self, p: Point) -> Option<usize> {
        let t = self.locate(p);
        self.is_domain(t).then_some(t)
    }

    /// Insert a point; returns its vertex index (an existing index if `p`
    /// coincides with a vertex).
    pub fn insert(&mut self, p: Point) -> usize {
        self.created.clear();
        let t0 = self.locate(p);
        for &v in &self.tris[t0].v {
            if self.pts[v] == p {
                return v;
            }
        }
        let pid = self.pts.len();
        self.pts.push(p);
        self.vert_tri.push(NONE);

        // cavity: triangles whose circumcircle strictly contains p
        let mut cavity = vec![t0];
        self.tris[t0].alive = false;
        // (a, b, outside triangle) for each cavity boundary edge, a->b ccw
        let mut boundary: Vec<(usize, usize, usize)> = Vec::new();
        let mut stack = vec![t0];
        while let Some(t) = stack.pop() {
            let tri = self.tris[t];
            for i in 0..3 {
                let nb = tri.n[i];
                let a = tri.v[(i + 1) % 3];
                let b = tri.v[(i + 2) % 3];
                if nb == NONE {
                    boundary.push((a, b, NONE));
                    continue;
                }
                if !self.tris[nb].alive {
                    // already in the cavity
                    continue;
                }
                let [pa, pb, pc] = self.tri_points(nb);
                if incircle_exact(pa, pb, pc, p) > 0.0 {
                    self.tris[nb].alive = false;
                    cavity.push(nb);
                    stack.push(nb);
                } else {
                    boundary.push((a, b, nb));
                }
            }
        }

        // fan new triangles (a, b, p); reuse freed slots in cavity order
        let mut slots: Vec<usize> = Vec::with_capacity(boundary.len());
        let mut reuse = cavity.clone();
        reuse.reverse();
        for _ in 0..boundary.len() {
            let t = match reuse.pop().or_else(|| self.free.pop()) {
                Some(t) => t,
                None => {
                    self.tris.push(Tri { v: [0; 3], n: [NONE; 3], alive: false });
                    self.tris.len() - 1
                }
            };
            slots.push(t);
        }
        self.free.extend(reuse);
        for (k, &(a, b, out)) in boundary.iter().enumerate() {
            let t = slots[k];
            self.tris[t] = Tri { v: [a, b, pid], n: [NONE, NONE, out], alive: true };
            if out != NONE {
                let o = &mut self.tris[out];
                for j in 0..3 {
                    let (oa, ob) = (o.v[(j + 1) % 3], o.v[(j + 2) % 3]);
                    if oa == b && ob == a {
                        o.n[j] = t;
                    }
                }
            }
            self.vert_tri[a] = t;
            self.vert_tri[b] = t;
        }
        // link the fan: tri (a, b, p) meets (b, c, p) across edge b-p
        for k in 0..boundary.len() {
            let (a, b, _) = boundary[k];
            let t = slots[k];
            for m in 0..boundary.len() {
                let (a2, b2, _) = boundary[m];
                if a2 == b {
                    self.tris[t].n[0] = slots[m];
                }
                if b2 == a {
                    self.tris[t].n[1] = slots[m];
                }
            }
        }
        self.vert_tri[pid] = slots[0];
        self.last = slots[0];
        self.created.extend_from_slice(&slots);
        pid
    }

    /// Triangle containing directed edge `a -> b` (so the triangle lies to its left).
    pub fn find_edge(&self, a: usize, b: usize) -> Option<(usize, usize)> {
        let start = self.vert_tri[a];
        if start == NONE {
            return None;
        }
        let mut t = start;
        for _ in 0..self.tris.len() {
            let tri = self.tris[t];
            let i = tri.v.iter().position(|&v| v == a)?;
            if tri.v[(i + 1) % 3] == b {
                return Some((t, tri.v[(i + 2) % 3]));
            }
            // rotate across the edge (a, v[i+2])
            t = tri.n[(i + 1) % 3];
            if t == NONE || t == start {
                return None;
            }
        }
        None
    }

    /// Live domain triangles (no super-vertex).
    pub fn domain_triangles(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.tris.len()).filter(move |&t| self.tris[t].alive && self.is_domain(t))
    }
}

/// Boundary segment, oriented with the domain on its left.
#[derive(Debug, Clone, Copy)]
struct Segment {
    a: usize,
    b: usize,
    alive: bool,
    /// Too short to split at working precision.
    frozen: bool,
}

/// Split segment `k` at its midpoint. Returns false and freezes the segment
/// when it cannot be halved at working precision.
fn split_segment(
    tri: &mut Triangulation,
    segments: &mut Vec<Segment>,
    k: usize,
    tiny: f64,
    seg_queue: &mut VecDeque<usize>,
    tri_queue: &mut VecDeque<usize>,
) -> bool {
    let seg = segments[k];
    if seg.frozen {
        return false;
    }
    let (pa, pb) = (tri.point(seg.a), tri.point(seg.b));
    let m = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
    if dist(pa, pb) <= tiny || m == pa || m == pb {
        segments[k].frozen = true;
        return false;
    }
    let id = tri.insert(m);
    tri_queue.extend(tri.created().iter().copied());
    segments[k].alive = false;
    segments.push(Segment { a: seg.a, b: id, alive: true, frozen: false });
    segments.push(Segment { a: id, b: seg.b, alive: true, frozen: false });
    seg_queue.push_back(segments.len() - 2);
    seg_queue.push_back(segments.len() - 1);
    true
}

pub(crate) struct RefineParams<'a> {
    /// Length limit for triangles whose centroid satisfies `is_interior`.
    pub max_edge_interior: f64,
    pub max_edge_exterior: f64,
    pub min_angle_rad: f64,
    /// Shortest edge below which skinny triangles are left alone.
    pub min_feature: f64,
    pub max_vertices: usize,
    pub is_interior: &'a dyn Fn(Point) -> bool,
}

/// Build a refined triangulation of the convex polygon `boundary`
/// (counter-clockwise) with `interior_points` as additional vertices.
///
/// Returns the triangulation, the vertex index of each interior point, and
/// the set of boundary vertices.
pub(crate) fn refined_triangulation(
    boundary: &[Point],
    interior_points: &[Point],
    params: &RefineParams<'_>,
) -> Result<(Triangulation, Vec<usize>, Vec<bool>)> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in boundary.iter().chain(interior_points) {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let mut tri = Triangulation::new(lo, hi);
    let point_ids: Vec<usize> = interior_points.iter().map(|&p| tri.insert(p)).collect();
    let boundary_ids: Vec<usize> = boundary.iter().map(|&p| tri.insert(p)).collect();

    let mut segments: Vec<Segment> = (0..boundary_ids.len())
        .map(|i| Segment {
            a: boundary_ids[i],
            b: boundary_ids[(i + 1) % boundary_ids.len()],
            alive: true,
            frozen: false,
        })
        .collect();
    let mut seg_queue: VecDeque<usize> = (0..segments.len()).collect();
    let mut tri_queue: VecDeque<usize> = tri.domain_triangles().collect();
    let tiny = 1e-9 * dist(lo, hi);

    let encroaches = |tri: &Triangulation, s: &Segment, p: Point| {
        let a = tri.point(s.a);
        let b = tri.point(s.b);
        (p[0] - a[0]) * (p[0] - b[0]) + (p[1] - a[1]) * (p[1] - b[1]) < 0.0
    };

    loop {
        if tri.num_vertices() > params.max_vertices {
            return Err(Error::RefinementLimit(params.max_vertices));
        }
        if let Some(s) = seg_queue.pop_front() {
            let seg = segments[s];
            if !seg.alive || seg.frozen {
                continue;
            }
            let needs_split = match tri.find_edge(seg.a, seg.b) {
                None => true,
                Some((_, opp)) => encroaches(&tri, &seg, tri.point(opp)),
            };
            if needs_split && split_segment(&mut tri, &mut segments, s, tiny, &mut seg_queue, &mut tri_queue) {
                // neighbouring segments can lose their edge to the cavity
                for (k, other) in segments.iter().enumerate() {
                    if other.alive && (other.a == seg.a || other.b == seg.b || other.b == seg.a || other.a == seg.b) {
                        seg_queue.push_back(k);
                    }
                }
            }
            continue;
        }
        let Some(t) = tri_queue.pop_front() else { break };
        if !tri.is_alive(t) || !tri.is_domain(t) {
            continue;
        }
        let v = tri.vertices(t);
        let [a, b, c] = [tri.point(v[0]), tri.point(v[1]), tri.point(v[2])];
        let lengths = [dist(b, c), dist(c, a), dist(a, b)];
        let longest = lengths.iter().copied().fold(0.0, f64::max);
        let shortest = lengths.iter().copied().fold(f64::INFINITY, f64::min);
        let centroid = super::geometry::centroid(a, b, c);
        let limit = if (params.is_interior)(centroid) {
            params.max_edge_interior
        } else {
            params.max_edge_exterior
        };
        let too_long = longest > limit;
        let skinny = shortest >= params.min_feature && min_angle(a, b, c) < params.min_angle_rad;
        if !too_long && !skinny {
            continue;
        }
        let cc = circumcenter(a, b, c);
        let encroached: Vec<usize> = (0..segments.len())
            .filter(|&k| segments[k].alive && encroaches(&tri, &segments[k], cc))
            .collect();
        if !encroached.is_empty() {
            let mut split_any = false;
            for &k in &encroached {
                split_any |= split_segment(&mut tri, &mut segments, k, tiny, &mut seg_queue, &mut tri_queue);
            }
            if split_any {
                tri_queue.push_back(t);
            }
            continue;
        }
        if tri.locate_domain(cc).is_none() {
            // outside the domain without encroaching: only possible through
            // round-off at the boundary; split the nearest segment instead
            let k = (0..segments.len())
                .filter(|&k| segments[k].alive && !segments[k].frozen)
                .min_by(|&i, &j| {
                    let mi = mid(&tri, &segments[i]);
                    let mj = mid(&tri, &segments[j]);
                    dist(mi, cc).total_cmp(&dist(mj, cc))
                });
            if let Some(k) = k {
                if split_segment(&mut tri, &mut segments, k, tiny, &mut seg_queue, &mut tri_queue) {
                    tri_queue.push_back(t);
                }
            }
            continue;
        }
        tri.insert(cc);
        tri_queue.extend(tri.created().iter().copied());
    }

    let mut on_boundary = vec![false; tri.num_vertices()];
    for s in segments.iter().filter(|s| s.alive) {
        on_boundary[s.a] = true;
        on_boundary[s.b] = true;
    }
    Ok((tri, point_ids, on_boundary))
}

fn mid(tri: &Triangulation, s: &Segment) -> Point {
    let (a, b) = (tri.point(s.a), tri.point(s.b));
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

pub(crate) const FIRST_REAL_VERTEX: usize = SUPER;
