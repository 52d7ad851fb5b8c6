use alloc::vec::Vec;

use crate::math;

pub type Point = [f64; 2];

/// Twice the signed area of `(a, b, c)`; positive when counter-clockwise.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Exact orientation sign.
#[inline]
pub fn orient_exact(a: Point, b: Point, c: Point) -> f64 {
    robust::orient2d(coord(a), coord(b), coord(c))
}

/// Exact in-circle test: positive when `d` is strictly inside the circle
/// through the counter-clockwise triangle `(a, b, c)`.
#[inline]
pub fn incircle_exact(a: Point, b: Point, c: Point, d: Point) -> f64 {
    robust::incircle(coord(a), coord(b), coord(c), coord(d))
}

#[inline]
fn coord(p: Point) -> robust::Coord<f64> {
    robust::Coord { x: p[0], y: p[1] }
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    math::hypot(a[0] - b[0], a[1] - b[1])
}

pub fn circumcenter(a: Point, b: Point, c: Point) -> Point {
    let bx = b[0] - a[0];
    let by = b[1] - a[1];
    let cx = c[0] - a[0];
    let cy = c[1] - a[1];
    let d = 2.0 * (bx * cy - by * cx);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    [a[0] + (cy * b2 - by * c2) / d, a[1] + (bx * c2 - cx * b2) / d]
}

pub fn centroid(a: Point, b: Point, c: Point) -> Point {
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}

/// Smallest interior angle of a triangle, in radians.
pub fn min_angle(a: Point, b: Point, c: Point) -> f64 {
    let angle = |p: Point, q: Point, r: Point| {
        let u = [q[0] - p[0], q[1] - p[1]];
        let v = [r[0] - p[0], r[1] - p[1]];
        math::atan2(math::abs(u[0] * v[1] - u[1] * v[0]), u[0] * v[0] + u[1] * v[1])
    };
    angle(a, b, c).min(angle(b, c, a)).min(angle(c, a, b))
}

/// Convex hull, counter-clockwise, starting at the lowest-then-leftmost point.
///
/// With `keep_collinear`, points lying on hull edges are kept as hull vertices.
pub fn convex_hull(points: &[Point], keep_collinear: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&i, &j| {
        points[i][0]
            .total_cmp(&points[j][0])
            .then(points[i][1].total_cmp(&points[j][1]))
    });
    idx.dedup_by(|a, b| points[*a] == points[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let drop = |o: f64| if keep_collinear { o < 0.0 } else { o <= 0.0 };
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for &i in idx.iter() {
        while hull.len() >= 2
            && drop(orient_exact(points[hull[hull.len() - 2]], points[hull[hull.len() - 1]], points[i]))
        {
            hull.pop();
        }
        hull.push(i);
    }
    let lower_len = hull.len() + 1;
    for &i in idx.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && drop(orient_exact(points[hull[hull.len() - 2]], points[hull[hull.len() - 1]], points[i]))
        {
            hull.pop();
        }
        hull.push(i);
    }
    hull.pop();
    if keep_collinear && hull.len() > 2 * idx.len() - 2 {
        // all points collinear: the chain doubled back on itself
        hull.truncate(idx.len());
    }
    hull
}

/// Point-in-convex-polygon (counter-clockwise vertices), boundary inclusive.
pub fn in_convex_polygon(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    (0..n).all(|i| orient(poly[i], poly[(i + 1) % n], p) >= 0.0)
}

fn segment_distance(a: Point, b: Point, p: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Distance from `p` to the boundary of a polygon.
pub fn distance_to_boundary(poly: &[Point], p: Point) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| segment_distance(poly[i], poly[(i + 1) % n], p))
        .fold(f64::INFINITY, f64::min)
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
}

/// Largest pairwise distance of a point set (its diameter).
pub fn diameter(points: &[Point]) -> f64 {
    let hull = convex_hull(points, false);
    let mut best: f64 = 0.0;
    for (k, &i) in hull.iter().enumerate() {
        for &j in &hull[k + 1..] {
            best = best.max(dist(points[i], points[j]));
        }
    }
    if hull.len() < 3 {
        for (k, a) in points.iter().enumerate() {
            for b in &points[k + 1..] {
                best = best.max(dist(*a, *b));
            }
        }
    }
    best
}
