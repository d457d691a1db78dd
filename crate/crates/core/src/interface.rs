//! Oriented closed polygonal interface and the discrete geometry living on it.
//!
//! Vertices are kept counterclockwise around the inner phase, so each segment
//! normal is the segment direction rotated by -90 degrees and points into the
//! outer phase.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{cross, orient, rotate_cw, segments_intersect, Aabb, BucketGrid, Point};

/// Rank threshold for the span condition on vertex normals.
pub const SPAN_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceMesh {
    vertices: Vec<Point>,
    segments: Vec<[usize; 2]>,
    /// The two segments meeting at each vertex: (incoming, outgoing).
    stars: Vec<[usize; 2]>,
}

/// Segment normals, vertex normals and vertex star lengths of an interface.
#[derive(Clone, Debug)]
pub struct VertexNormalField {
    pub segment_normals: Vec<Point>,
    pub omega: Vec<Point>,
    pub star_length: Vec<f64>,
    /// Ratio of the smaller to the larger singular value of the stacked omegas.
    pub span_ratio: f64,
}

impl VertexNormalField {
    /// Weighted normal `|Lambda_k|/2 * omega_k`, the lumped pairing of a hat function with the normal.
    pub fn lumped_normal(&self, k: usize) -> Point {
        self.omega[k] * (0.5 * self.star_length[k])
    }

    pub fn span_holds(&self) -> bool {
        self.span_ratio >= SPAN_TOL
    }
}

impl InterfaceMesh {
    /// Closed polygon through `points` in order; reoriented to counterclockwise if needed.
    pub fn from_polygon(points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        if n < 3 {
            return Err(Error::Geometry(format!(
                "a closed curve needs at least 3 vertices, got {n}"
            )));
        }
        let segments = (0..n).map(|j| [j, (j + 1) % n]).collect();
        Self::new(points, segments)
    }

    /// General constructor from a vertex list and segment index pairs.
    pub fn new(vertices: Vec<Point>, mut segments: Vec<[usize; 2]>) -> Result<Self> {
        let nv = vertices.len();
        if segments.len() != nv {
            return Err(Error::Geometry(format!(
                "closed curve needs as many segments as vertices ({} vs {nv})",
                segments.len()
            )));
        }
        let signed: f64 = segments
            .iter()
            .map(|s| {
                if s[0] >= nv || s[1] >= nv {
                    0.0
                } else {
                    cross(&vertices[s[0]], &vertices[s[1]])
                }
            })
            .sum();
        if signed < 0.0 {
            for s in segments.iter_mut() {
                s.swap(0, 1);
            }
        }
        let mut incoming = vec![usize::MAX; nv];
        let mut outgoing = vec![usize::MAX; nv];
        for (j, s) in segments.iter().enumerate() {
            if s[0] >= nv || s[1] >= nv {
                return Err(Error::Geometry(format!(
                    "segment {j} references a missing vertex"
                )));
            }
            if outgoing[s[0]] != usize::MAX || incoming[s[1]] != usize::MAX {
                return Err(Error::Geometry(format!(
                    "vertex shared by more than two segments at segment {j}"
                )));
            }
            outgoing[s[0]] = j;
            incoming[s[1]] = j;
        }
        let mut stars = Vec::with_capacity(nv);
        for k in 0..nv {
            if incoming[k] == usize::MAX || outgoing[k] == usize::MAX {
                return Err(Error::Geometry(format!(
                    "vertex {k} is not on a closed curve"
                )));
            }
            stars.push([incoming[k], outgoing[k]]);
        }
        let mesh = InterfaceMesh {
            vertices,
            segments,
            stars,
        };
        for j in 0..mesh.segments.len() {
            if !(mesh.segment_length(j) > 0.0) {
                return Err(Error::Geometry(format!("segment {j} is degenerate")));
            }
        }
        mesh.check_simple()?;
        Ok(mesh)
    }

    /// Same topology, new vertex positions; all invariants are rechecked.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Contract("vertex count must not change".into()));
        }
        let mesh = InterfaceMesh {
            vertices,
            segments: self.segments.clone(),
            stars: self.stars.clone(),
        };
        for j in 0..mesh.segments.len() {
            if !(mesh.segment_length(j) > 0.0) {
                return Err(Error::Geometry(format!("segment {j} is degenerate")));
            }
        }
        if mesh.signed_area() <= 0.0 {
            return Err(Error::Geometry("curve orientation flipped".into()));
        }
        mesh.check_simple()?;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn segments(&self) -> &[[usize; 2]] {
        &self.segments
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    /// Segments adjacent to vertex `k`.
    pub fn star(&self, k: usize) -> [usize; 2] {
        self.stars[k]
    }

    pub fn segment_points(&self, j: usize) -> (Point, Point) {
        let s = self.segments[j];
        (self.vertices[s[0]], self.vertices[s[1]])
    }

    pub fn segment_length(&self, j: usize) -> f64 {
        let (a, b) = self.segment_points(j);
        (b - a).norm()
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        (0..self.segments.len())
            .map(|j| self.segment_length(j))
            .collect()
    }

    pub fn length(&self) -> f64 {
        self.segment_lengths().iter().sum()
    }

    /// Largest segment length.
    pub fn mesh_size(&self) -> f64 {
        self.segment_lengths().into_iter().fold(0.0, f64::max)
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::of(&self.vertices)
    }

    /// Vertices in curve order, for polygon algorithms.
    pub fn polygon(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.vertices.len());
        let mut j = 0;
        for _ in 0..self.segments.len() {
            let s = self.segments[j];
            out.push(self.vertices[s[0]]);
            j = self.stars[s[1]][1];
        }
        out
    }

    fn signed_area(&self) -> f64 {
        0.5 * self
            .segments
            .iter()
            .map(|s| cross(&self.vertices[s[0]], &self.vertices[s[1]]))
            .sum::<f64>()
    }

    /// Checks that no two segments meet except adjacent ones at their shared vertex.
    pub fn check_simple(&self) -> Result<()> {
        let n = self.segments.len();
        let bb = self.bounding_box();
        let ext = (bb.max - bb.min).norm().max(f64::MIN_POSITIVE);
        let cell = (ext / (n as f64).sqrt().max(1.0)).max(self.mesh_size());
        let mut grid = BucketGrid::new(bb.inflate(cell * 1e-6), cell);
        let boxes: Vec<Aabb> = (0..n)
            .map(|j| {
                let (a, b) = self.segment_points(j);
                Aabb::of(&[a, b])
            })
            .collect();
        for (j, b) in boxes.iter().enumerate() {
            grid.insert(j, b);
        }
        let mut cand = Vec::new();
        for i in 0..n {
            let (p1, p2) = self.segment_points(i);
            grid.query(&boxes[i], &mut cand);
            for &j in cand.iter().filter(|&&j| j > i) {
                let (q1, q2) = self.segment_points(j);
                let si = self.segments[i];
                let sj = self.segments[j];
                if si[1] == sj[0] || si[0] == sj[1] {
                    // adjacent: only a fold-back overlap counts
                    let (a, b, c) = if si[1] == sj[0] {
                        (p1, p2, q2)
                    } else {
                        (q1, q2, p2)
                    };
                    if orient(&a, &b, &c) == 0.0 && (c - b).dot(&(a - b)) > 0.0 {
                        return Err(Error::Geometry(format!(
                            "segments {i} and {j} fold back on each other"
                        )));
                    }
                    continue;
                }
                if segments_intersect(&p1, &p2, &q1, &q2) {
                    return Err(Error::Geometry(format!("segments {i} and {j} intersect")));
                }
            }
        }
        Ok(())
    }

    /// Piecewise constant unit normals pointing into the outer phase.
    pub fn segment_normals(&self) -> Vec<Point> {
        (0..self.segments.len())
            .map(|j| {
                let (a, b) = self.segment_points(j);
                rotate_cw(&(b - a)) / (b - a).norm()
            })
            .collect()
    }

    pub fn vertex_normals(&self) -> VertexNormalField {
        let nu = self.segment_normals();
        let lengths = self.segment_lengths();
        let mut omega = Vec::with_capacity(self.vertices.len());
        let mut star_length = Vec::with_capacity(self.vertices.len());
        let mut gram = [0.0; 3];
        for k in 0..self.vertices.len() {
            let [a, b] = self.stars[k];
            let lam = lengths[a] + lengths[b];
            let w = (nu[a] * lengths[a] + nu[b] * lengths[b]) / lam;
            gram[0] += w.x * w.x;
            gram[1] += w.x * w.y;
            gram[2] += w.y * w.y;
            omega.push(w);
            star_length.push(lam);
        }
        // eigenvalues of the 2x2 Gram matrix are the squared singular values
        let tr = gram[0] + gram[2];
        let det = gram[0] * gram[2] - gram[1] * gram[1];
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        let big = 0.5 * tr + disc;
        let small = (0.5 * tr - disc).max(0.0);
        let span_ratio = if big > 0.0 { (small / big).sqrt() } else { 0.0 };
        VertexNormalField {
            segment_normals: nu,
            omega,
            star_length,
            span_ratio,
        }
    }

    /// Vertex normals, failing when the span condition is violated.
    pub fn checked_vertex_normals(&self) -> Result<VertexNormalField> {
        let field = self.vertex_normals();
        if !field.span_holds() {
            return Err(Error::AssumptionA(format!(
                "vertex normals span a space of dimension < 2 (singular value ratio {:e})",
                field.span_ratio
            )));
        }
        Ok(field)
    }

    /// Mass-lumped inner product of two per-vertex fields.
    pub fn lumped_inner<V: NodalValue>(&self, v: &[V], w: &[V]) -> Result<f64> {
        let n = self.vertices.len();
        if v.len() != n || w.len() != n {
            return Err(Error::Contract(format!(
                "lumped inner product needs {n} values, got {} and {}",
                v.len(),
                w.len()
            )));
        }
        Ok(self
            .segments
            .iter()
            .enumerate()
            .map(|(j, s)| {
                0.5 * self.segment_length(j) * (v[s[0]].dot(&w[s[0]]) + v[s[1]].dot(&w[s[1]]))
            })
            .sum())
    }

    /// Area enclosed by the curve.
    pub fn enclosed_area(&self) -> Result<f64> {
        self.check_simple()?;
        Ok(self.signed_area())
    }

    pub fn equidistribution_ratio(&self) -> f64 {
        let l = self.segment_lengths();
        let max = l.iter().cloned().fold(0.0, f64::max);
        let min = l.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    /// Action of the curve stiffness `<grad_s X, grad_s eta>` on the identity map, per vertex.
    pub fn stiffness_times_identity(&self) -> Vec<Point> {
        let mut out = vec![Point::zeros(); self.vertices.len()];
        for (j, s) in self.segments.iter().enumerate() {
            let (a, b) = self.segment_points(j);
            let d = (a - b) / (a - b).norm();
            out[s[0]] += d;
            out[s[1]] -= d;
        }
        out
    }

    /// Discrete curvature of the current curve from the lumped curvature equation with the
    /// identity map, projected onto the vertex normal at each vertex.
    pub fn discrete_curvature_standalone(&self) -> Result<Vec<f64>> {
        let field = self.checked_vertex_normals()?;
        let kx = self.stiffness_times_identity();
        let tol = 1e-12 * self.length() / self.vertices.len() as f64;
        (0..self.vertices.len())
            .map(|k| {
                if field.omega[k].norm() * field.star_length[k] < tol {
                    return Err(Error::AssumptionA(format!(
                        "lumped curvature mass is singular at vertex {k}"
                    )));
                }
                let w = field.lumped_normal(k);
                Ok(-w.dot(&kx[k]) / w.norm_squared())
            })
            .collect()
    }

    pub fn translated(&self, c: Point) -> Self {
        let mut out = self.clone();
        for v in out.vertices.iter_mut() {
            *v += c;
        }
        out
    }

    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let mut out = self.clone();
        for v in out.vertices.iter_mut() {
            *v = Point::new(c * v.x - s * v.y, s * v.x + c * v.y);
        }
        out
    }

    /// Plain-text dump: `NV NE`, vertex coordinates, then 0-based segment pairs.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {}", self.vertices.len(), self.segments.len()).unwrap();
        for v in &self.vertices {
            writeln!(s, "{:.16e} {:.16e}", v.x, v.y).unwrap();
        }
        for seg in &self.segments {
            writeln!(s, "{} {}", seg[0], seg[1]).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty interface dump".into()))?;
        let [nv, ne] = parse_fields::<usize, 2>(header)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated vertex list".into()))?;
            let [x, y] = parse_fields::<f64, 2>(line)?;
            vertices.push(Point::new(x, y));
        }
        let mut segments = Vec::with_capacity(ne);
        for _ in 0..ne {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated segment list".into()))?;
            segments.push(parse_fields::<usize, 2>(line)?);
        }
        Self::new(vertices, segments)
    }
}

pub(crate) fn parse_fields<T: FromStr, const N: usize>(line: &str) -> Result<[T; N]> {
    let mut it = line.split_whitespace();
    let mut out: Vec<T> = Vec::with_capacity(N);
    for _ in 0..N {
        let tok = it
            .next()
            .ok_or_else(|| Error::Parse(format!("expected {N} fields in '{line}'")))?;
        out.push(
            tok.parse()
                .map_err(|_| Error::Parse(format!("bad field '{tok}' in '{line}'")))?,
        );
    }
    out.try_into()
        .map_err(|_| Error::Parse(format!("expected {N} fields in '{line}'")))
}

/// Values that can be paired at a vertex: scalars or 2D vectors.
pub trait NodalValue: Copy {
    fn dot(&self, other: &Self) -> f64;
}

impl NodalValue for f64 {
    fn dot(&self, other: &Self) -> f64 {
        self * other
    }
}

impl NodalValue for Point {
    fn dot(&self, other: &Self) -> f64 {
        self.x * other.x + self.y * other.y
    }
}

/// Regular N-gon of radius `radius` centred at the origin, first vertex on the positive x axis.
pub fn regular_polygon(n: usize, radius: f64) -> Result<InterfaceMesh> {
    let pts = (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            Point::new(radius * a.cos(), radius * a.sin())
        })
        .collect();
    InterfaceMesh::from_polygon(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn square() -> InterfaceMesh {
        InterfaceMesh::from_polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn segment_normal_examples() {
        let m = square();
        let nu = m.segment_normals();
        assert!((nu[0] - Point::new(0.0, -1.0)).norm() < 1e-15);
        let d = InterfaceMesh::from_polygon(vec![
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(-1.0, 0.0),
            Point::new(0.0, -1.0),
        ])
        .unwrap();
        let nu = d.segment_normals();
        let s = 1.0 / 2f64.sqrt();
        assert!((nu[0] - Point::new(s, s)).norm() < 1e-15);
    }

    #[test]
    fn polygon_normals_point_outward() {
        let m = regular_polygon(17, 0.7).unwrap();
        for (j, nu) in m.segment_normals().iter().enumerate() {
            let (a, b) = m.segment_points(j);
            let mid = (a + b) * 0.5;
            assert!(nu.dot(&mid) > 0.0);
            assert!((nu.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let mut pts = regular_polygon(8, 1.0).unwrap().vertices().to_vec();
        pts.reverse();
        let m = InterfaceMesh::from_polygon(pts).unwrap();
        assert!(m.enclosed_area().unwrap() > 0.0);
        let (a, _) = m.segment_points(0);
        assert!(m.segment_normals()[0].dot(&a) > 0.0);
    }

    #[test]
    fn diamond_vertex_normal() {
        // hand evaluation: both adjacent segments have length sqrt(2), normals (1,+-1)/sqrt(2)
        let d = InterfaceMesh::from_polygon(vec![
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(-1.0, 0.0),
            Point::new(0.0, -1.0),
        ])
        .unwrap();
        let f = d.vertex_normals();
        assert!((f.omega[0] - Point::new((PI / 4.0).cos(), 0.0)).norm() < 1e-15);
        assert!((f.star_length[0] - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert!(f.span_holds());
    }

    #[test]
    fn collinear_neighbours_share_normal() {
        let m = InterfaceMesh::from_polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(0.5, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
        ])
        .unwrap();
        let f = m.vertex_normals();
        assert!((f.omega[1] - Point::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn degenerate_segment_rejected() {
        let err = InterfaceMesh::from_polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
        ]);
        assert!(matches!(err, Err(Error::Geometry(msg)) if msg.contains("segment 0")));
    }

    #[test]
    fn self_intersection_rejected() {
        let bowtie = InterfaceMesh::from_polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ]);
        assert!(matches!(bowtie, Err(Error::Geometry(_))));
    }

    #[test]
    fn lumped_inner_examples() {
        let m = InterfaceMesh::from_polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        // perimeter 6 including the length-2 segments
        let ones = vec![1.0; 4];
        assert_eq!(m.lumped_inner(&ones, &ones).unwrap(), 6.0);
        assert_eq!(m.lumped_inner(&ones, &[0.0; 4]).unwrap(), 0.0);
        assert!(m.lumped_inner(&ones, &[0.0; 3]).is_err());
        let p = regular_polygon(12, 0.3).unwrap();
        let ones = vec![1.0; 12];
        let per = 12.0 * 2.0 * 0.3 * (PI / 12.0).sin();
        assert!((p.lumped_inner(&ones, &ones).unwrap() - per).abs() < 1e-14);
    }

    #[test]
    fn area_and_ratio() {
        assert_eq!(square().enclosed_area().unwrap(), 1.0);
        let p = regular_polygon(10, 2.0).unwrap();
        let exact = 5.0 * 4.0 * (2.0 * PI / 10.0).sin();
        assert!((p.enclosed_area().unwrap() - exact).abs() < 1e-13);
        assert!((p.equidistribution_ratio() - 1.0).abs() < 1e-13);
        let r = InterfaceMesh::from_polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        assert_eq!(r.equidistribution_ratio(), 2.0);
    }

    #[test]
    fn curvature_translation_invariant() {
        let p = regular_polygon(24, 0.4).unwrap();
        let k0 = p.discrete_curvature_standalone().unwrap();
        let k1 = p
            .translated(Point::new(0.3, -0.2))
            .discrete_curvature_standalone()
            .unwrap();
        for (a, b) in k0.iter().zip(&k1) {
            assert!((a - b).abs() < 1e-12 * a.abs());
        }
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let p = regular_polygon(64, 0.5).unwrap().rotated(0.123);
        let back = InterfaceMesh::from_text(&p.to_text()).unwrap();
        assert_eq!(back, p);
    }
}
