//! Small planar geometry kernel shared by the interface and bulk meshes.

use nalgebra::Vector2;

pub type Point = Vector2<f64>;

#[inline]
pub fn cross(a: &Point, b: &Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Twice the signed area of the triangle (a, b, c); positive when counterclockwise.
#[inline]
pub fn orient(a: &Point, b: &Point, c: &Point) -> f64 {
    cross(&(b - a), &(c - a))
}

/// Rotation by -90 degrees: the outward normal direction of a counterclockwise edge.
#[inline]
pub fn rotate_cw(v: &Point) -> Point {
    Point::new(v.y, -v.x)
}

/// Barycentric coordinates of `p` with respect to the triangle (a, b, c).
pub fn barycentric(p: &Point, a: &Point, b: &Point, c: &Point) -> [f64; 3] {
    let det = orient(a, b, c);
    let l0 = orient(p, b, c) / det;
    let l1 = orient(a, p, c) / det;
    [l0, l1, 1.0 - l0 - l1]
}

pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&d) / len2).clamp(0.0, 1.0);
    (p - (a + d * t)).norm()
}

/// Closed-segment intersection test, including collinear overlap and touching endpoints.
pub fn segments_intersect(p1: &Point, p2: &Point, q1: &Point, q2: &Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: &Point, b: &Point, c: &Point, d: f64| {
        d == 0.0
            && c.x >= a.x.min(b.x)
            && c.x <= a.x.max(b.x)
            && c.y >= a.y.min(b.y)
            && c.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

pub fn segment_segment_distance(p1: &Point, p2: &Point, q1: &Point, q2: &Point) -> f64 {
    if segments_intersect(p1, p2, q1, q2) {
        return 0.0;
    }
    point_segment_distance(p1, q1, q2)
        .min(point_segment_distance(p2, q1, q2))
        .min(point_segment_distance(q1, p1, p2))
        .min(point_segment_distance(q2, p1, p2))
}

/// Distance between a closed triangle and a closed segment (zero when they meet).
pub fn triangle_segment_distance(tri: &[Point; 3], a: &Point, b: &Point) -> f64 {
    let inside = |p: &Point| {
        let l = barycentric(p, &tri[0], &tri[1], &tri[2]);
        l.iter().all(|&x| x >= 0.0)
    };
    if inside(a) || inside(b) {
        return 0.0;
    }
    (0..3)
        .map(|i| segment_segment_distance(&tri[i], &tri[(i + 1) % 3], a, b))
        .fold(f64::INFINITY, f64::min)
}

/// Winding number of a closed polygon around `p` (nonzero means inside).
pub fn winding_number(p: &Point, polygon: &[Point]) -> i32 {
    let n = polygon.len();
    let mut wn = 0;
    for i in 0..n {
        let a = &polygon[i];
        let b = &polygon[(i + 1) % n];
        if a.y <= p.y {
            if b.y > p.y && orient(a, b, p) > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && orient(a, b, p) < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Signed shoelace area of a closed polygon.
pub fn shoelace_area(polygon: &[Point]) -> f64 {
    let n = polygon.len();
    0.5 * (0..n)
        .map(|i| cross(&polygon[i], &polygon[(i + 1) % n]))
        .sum::<f64>()
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn of(points: &[Point]) -> Self {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Aabb { min, max }
    }

    pub fn inflate(&self, r: f64) -> Self {
        Aabb {
            min: self.min - Point::new(r, r),
            max: self.max + Point::new(r, r),
        }
    }
}

/// Uniform bucket grid over a box, storing item ids per cell.
#[derive(Clone, Debug)]
pub struct BucketGrid {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl BucketGrid {
    pub fn new(bounds: Aabb, cell: f64) -> Self {
        let ext = bounds.max - bounds.min;
        let nx = ((ext.x / cell).ceil() as usize).clamp(1, 4096);
        let ny = ((ext.y / cell).ceil() as usize).clamp(1, 4096);
        let cell = (ext.x / nx as f64)
            .max(ext.y / ny as f64)
            .max(f64::MIN_POSITIVE);
        BucketGrid {
            origin: bounds.min,
            cell,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
        }
    }

    fn range(&self, b: &Aabb) -> (usize, usize, usize, usize) {
        let f = |v: f64, n: usize| -> usize {
            if v.is_nan() || v <= 0.0 {
                0
            } else {
                (v as usize).min(n - 1)
            }
        };
        let i0 = f((b.min.x - self.origin.x) / self.cell, self.nx);
        let i1 = f((b.max.x - self.origin.x) / self.cell, self.nx);
        let j0 = f((b.min.y - self.origin.y) / self.cell, self.ny);
        let j1 = f((b.max.y - self.origin.y) / self.cell, self.ny);
        (i0, i1, j0, j1)
    }

    pub fn insert(&mut self, id: usize, b: &Aabb) {
        let (i0, i1, j0, j1) = self.range(b);
        for j in j0..=j1 {
            for i in i0..=i1 {
                self.cells[j * self.nx + i].push(id as u32);
            }
        }
    }

    /// Ids whose boxes may overlap `b`, sorted and deduplicated.
    pub fn query(&self, b: &Aabb, out: &mut Vec<usize>) {
        out.clear();
        let (i0, i1, j0, j1) = self.range(b);
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.extend(self.cells[j * self.nx + i].iter().map(|&x| x as usize));
            }
        }
        out.sort_unstable();
        out.dedup();
    }
}

/// Clips a closed polygon to a convex polygon (Sutherland-Hodgman).
///
/// The subject may be non-convex; the result can then contain zero-width bridges, which
/// leave signed area integrals unchanged. The orientation of the subject is preserved.
pub fn clip_polygon_to_convex(subject: &[Point], window: &[Point]) -> Vec<Point> {
    let ccw = shoelace_area(window) > 0.0;
    let m = window.len();
    let mut out = subject.to_vec();
    for i in 0..m {
        if out.is_empty() {
            break;
        }
        let (a, b) = if ccw {
            (window[i], window[(i + 1) % m])
        } else {
            (window[(i + 1) % m], window[i])
        };
        let side = |p: &Point| orient(&a, &b, p);
        if out.iter().all(|p| side(p) >= 0.0) {
            continue;
        }
        let input = std::mem::take(&mut out);
        let n = input.len();
        for k in 0..n {
            let p = input[k];
            let q = input[(k + 1) % n];
            let (sp, sq) = (side(&p), side(&q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push(p + (q - p) * t);
            }
        }
    }
    out
}

pub fn clip_polygon_to_triangle(subject: &[Point], tri: &[Point; 3]) -> Vec<Point> {
    clip_polygon_to_convex(subject, tri)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_keeps_the_overlap() {
        let tri = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        let square = [
            Point::new(-1.0, -1.0),
            Point::new(0.5, -1.0),
            Point::new(0.5, 2.0),
            Point::new(-1.0, 2.0),
        ];
        let c = clip_polygon_to_triangle(&square, &tri);
        // triangle minus the corner x > 0.5
        assert!((shoelace_area(&c) - (0.5 - 0.125)).abs() < 1e-15);
        let cw: Vec<Point> = square.iter().rev().copied().collect();
        assert!((shoelace_area(&clip_polygon_to_triangle(&cw, &tri)) + 0.375).abs() < 1e-15);
        let far = [
            Point::new(5.0, 5.0),
            Point::new(6.0, 5.0),
            Point::new(6.0, 6.0),
        ];
        assert!(shoelace_area(&clip_polygon_to_triangle(&far, &tri)).abs() < 1e-15);
    }

    #[test]
    fn barycentric_reconstructs_point() {
        let a = Point::new(0.1, 0.2);
        let b = Point::new(1.3, -0.4);
        let c = Point::new(0.5, 1.1);
        let p = Point::new(0.55, 0.3);
        let l = barycentric(&p, &a, &b, &c);
        let q = a * l[0] + b * l[1] + c * l[2];
        assert!((p - q).norm() < 1e-14);
    }

    #[test]
    fn touching_segments_intersect() {
        let o = Point::new(0.0, 0.0);
        assert!(segments_intersect(
            &o,
            &Point::new(1.0, 0.0),
            &Point::new(1.0, 0.0),
            &Point::new(1.0, 1.0)
        ));
        assert!(!segments_intersect(
            &o,
            &Point::new(1.0, 0.0),
            &Point::new(0.0, 0.5),
            &Point::new(1.0, 0.5)
        ));
    }

    #[test]
    fn winding_of_square() {
        let sq = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        assert_eq!(winding_number(&Point::new(0.5, 0.5), &sq), 1);
        assert_eq!(winding_number(&Point::new(1.5, 0.5), &sq), 0);
        assert_eq!(shoelace_area(&sq), 1.0);
    }
}
