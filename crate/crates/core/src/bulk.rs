//! Conforming bulk triangulation with newest-vertex bisection, element
//! classification against the interface, and point location.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{
    barycentric, orient, triangle_segment_distance, winding_number, Aabb, BucketGrid, Point,
};
use crate::interface::{parse_fields, InterfaceMesh};

/// Default cap on the number of triangles produced by adaptive refinement.
pub const DEFAULT_ELEMENT_BUDGET: usize = 2_000_000;

/// Tolerance on barycentric coordinates used for closure tests.
const BARY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn contains(&self, p: &Point, tol: f64) -> bool {
        p.x >= self.x0 - tol && p.x <= self.x1 + tol && p.y >= self.y0 - tol && p.y <= self.y1 + tol
    }

    fn strictly_contains(&self, p: &Point, tol: f64) -> bool {
        p.x > self.x0 + tol && p.x < self.x1 - tol && p.y > self.y0 + tol && p.y < self.y1 - tol
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }
}

/// Axis-aligned rectangle with an optional rectangular hole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub outer: Rect,
    pub hole: Option<Rect>,
}

impl Domain {
    /// (-1,1)^2.
    pub fn unit_square() -> Self {
        Domain {
            outer: Rect::new(-1.0, -1.0, 1.0, 1.0),
            hole: None,
        }
    }

    /// (-1,1)^2 minus [-1/3,1/3]^2.
    pub fn square_with_hole() -> Self {
        let t = 1.0 / 3.0;
        Domain {
            outer: Rect::new(-1.0, -1.0, 1.0, 1.0),
            hole: Some(Rect::new(-t, -t, t, t)),
        }
    }

    pub fn area(&self) -> f64 {
        self.outer.area() - self.hole.map_or(0.0, |h| h.area())
    }

    /// Closure membership with an absolute tolerance.
    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        self.outer.contains(p, tol) && !self.hole.is_some_and(|h| h.strictly_contains(p, tol))
    }

    fn validate(&self) -> Result<()> {
        let o = &self.outer;
        if !(o.x1 > o.x0 && o.y1 > o.y0) {
            return Err(Error::config("outer rectangle is empty"));
        }
        if let Some(h) = &self.hole {
            if !(h.x1 > h.x0 && h.y1 > h.y0) {
                return Err(Error::config("hole rectangle is empty"));
            }
            if !(h.x0 > o.x0 && h.y0 > o.y0 && h.x1 < o.x1 && h.y1 < o.y1) {
                return Err(Error::config(
                    "hole must lie strictly inside the outer rectangle",
                ));
            }
        }
        Ok(())
    }
}

/// Macro triangulation that every adapted mesh is refined from.
#[derive(Debug)]
struct BaseMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementLabel {
    Interior,
    Exterior,
    Interfacial,
}

impl ElementLabel {
    pub fn code(self) -> u8 {
        match self {
            ElementLabel::Interior => 0,
            ElementLabel::Exterior => 1,
            ElementLabel::Interfacial => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(ElementLabel::Interior),
            1 => Some(ElementLabel::Exterior),
            2 => Some(ElementLabel::Interfacial),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementClassification {
    pub labels: Vec<ElementLabel>,
}

impl ElementClassification {
    pub fn count(&self, label: ElementLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// Edge structure derived from the triangle list.
#[derive(Clone, Debug)]
pub struct Topology {
    /// Vertex pairs, smaller index first.
    pub edges: Vec<[usize; 2]>,
    /// Edge opposite local vertex `i` of each triangle.
    pub tri_edges: Vec<[usize; 3]>,
    /// Triangles adjacent to each edge (the second is `usize::MAX` on the boundary).
    pub edge_tris: Vec<[usize; 2]>,
    pub boundary_edge: Vec<bool>,
    pub boundary_vertex: Vec<bool>,
}

impl Topology {
    fn build(nv: usize, triangles: &[[usize; 3]]) -> Self {
        let mut keys: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                keys.push((a.min(b), a.max(b), t, i));
            }
        }
        keys.sort_unstable();
        let mut edges = Vec::new();
        let mut edge_tris = Vec::new();
        let mut tri_edges = vec![[0usize; 3]; triangles.len()];
        let mut k = 0;
        while k < keys.len() {
            let (a, b, t, i) = keys[k];
            let e = edges.len();
            edges.push([a, b]);
            tri_edges[t][i] = e;
            let mut pair = [t, usize::MAX];
            if k + 1 < keys.len() && keys[k + 1].0 == a && keys[k + 1].1 == b {
                let (_, _, t2, i2) = keys[k + 1];
                tri_edges[t2][i2] = e;
                pair[1] = t2;
                k += 2;
            } else {
                k += 1;
            }
            edge_tris.push(pair);
        }
        let boundary_edge: Vec<bool> = edge_tris.iter().map(|p| p[1] == usize::MAX).collect();
        let mut boundary_vertex = vec![false; nv];
        for (e, &b) in boundary_edge.iter().enumerate() {
            if b {
                boundary_vertex[edges[e][0]] = true;
                boundary_vertex[edges[e][1]] = true;
            }
        }
        Topology {
            edges,
            tri_edges,
            edge_tris,
            boundary_edge,
            boundary_vertex,
        }
    }

    /// Triangle across local edge `i` of triangle `t`.
    pub fn neighbour(&self, t: usize, i: usize) -> Option<usize> {
        let e = self.tri_edges[t][i];
        let [a, b] = self.edge_tris[e];
        let other = if a == t { b } else { a };
        (other != usize::MAX).then_some(other)
    }
}

/// Conforming triangulation; triangle vertex 0 is the newest vertex and the
/// opposite edge is the refinement edge.
#[derive(Clone, Debug)]
pub struct BulkMesh {
    domain: Domain,
    base: Arc<BaseMesh>,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    generation: Vec<u32>,
    root: Vec<usize>,
    topology: Topology,
    locator: BucketGrid,
}

/// Portion of an interface segment inside one bulk triangle, as a parameter interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentPiece {
    pub segment: usize,
    pub triangle: usize,
    pub t0: f64,
    pub t1: f64,
}

/// Partition of every interface segment into pieces lying in single triangles.
#[derive(Clone, Debug)]
pub struct InterfaceCuts {
    pub pieces: Vec<SegmentPiece>,
    /// Triangles whose closure meets the interface.
    pub touched: Vec<bool>,
}

impl BulkMesh {
    fn from_parts(
        domain: Domain,
        base: Arc<BaseMesh>,
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        generation: Vec<u32>,
        root: Vec<usize>,
    ) -> Self {
        let topology = Topology::build(vertices.len(), &triangles);
        let bounds = Aabb {
            min: Point::new(domain.outer.x0, domain.outer.y0),
            max: Point::new(domain.outer.x1, domain.outer.y1),
        };
        let avg = (domain.area() / triangles.len() as f64).sqrt();
        let mut locator = BucketGrid::new(bounds.inflate(1e-9), 1.5 * avg);
        for (t, tri) in triangles.iter().enumerate() {
            let b = Aabb::of(&[vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]]);
            locator.insert(t, &b.inflate(1e-12));
        }
        BulkMesh {
            domain,
            base,
            vertices,
            triangles,
            generation,
            root,
            topology,
            locator,
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Bisection generation of each triangle relative to its macro element.
    pub fn generation(&self) -> &[u32] {
        &self.generation
    }

    /// Macro element each triangle descends from.
    pub fn root(&self) -> &[usize] {
        &self.root
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [
            self.vertices[tri[0]],
            self.vertices[tri[1]],
            self.vertices[tri[2]],
        ]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * orient(&a, &b, &c)
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        (a - b).norm().max((b - c).norm()).max((c - a).norm())
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.diameter(t))
            .fold(0.0, f64::max)
    }

    pub fn barycenter(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        (a + b + c) / 3.0
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut best = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let p = self.triangle_points(t);
            for i in 0..3 {
                let u = p[(i + 1) % 3] - p[i];
                let v = p[(i + 2) % 3] - p[i];
                best = best.min((u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos());
            }
        }
        best
    }

    /// True when no vertex lies in the interior of an edge it does not belong to.
    pub fn is_conforming(&self) -> bool {
        let t = &self.topology;
        // every interior edge has two triangles; boundary edges must lie on the domain boundary
        t.edges.iter().zip(&t.boundary_edge).all(|(e, &b)| {
            if !b {
                return true;
            }
            let m = (self.vertices[e[0]] + self.vertices[e[1]]) * 0.5;
            on_domain_boundary(&self.domain, &m)
        })
    }

    /// Containing triangle and barycentric coordinates; ties go to the lowest triangle index.
    pub fn locate_point(&self, p: &Point) -> Result<(usize, [f64; 3])> {
        if !self.domain.contains(p, 1e-12) {
            return Err(Error::Location(p.x, p.y));
        }
        let mut cand = Vec::new();
        self.locator.query(&Aabb { min: *p, max: *p }, &mut cand);
        for &t in &cand {
            let [a, b, c] = self.triangle_points(t);
            let l = barycentric(p, &a, &b, &c);
            if l.iter().all(|&x| x >= -BARY_TOL) {
                return Ok((t, l));
            }
        }
        Err(Error::Location(p.x, p.y))
    }

    /// Splits every interface segment at bulk edges.
    pub fn cut_interface(&self, iface: &InterfaceMesh) -> Result<InterfaceCuts> {
        for v in iface.vertices() {
            if !self.domain.contains(v, 1e-12) {
                return Err(Error::Geometry(format!(
                    "interface vertex ({}, {}) lies outside the domain",
                    v.x, v.y
                )));
            }
        }
        let mut touched = vec![false; self.triangles.len()];
        let mut pieces = Vec::new();
        let mut cand = Vec::new();
        let mut hits: Vec<(usize, f64, f64)> = Vec::new();
        let mut breaks: Vec<f64> = Vec::new();
        for j in 0..iface.num_segments() {
            let (a, b) = iface.segment_points(j);
            self.locator.query(&Aabb::of(&[a, b]), &mut cand);
            hits.clear();
            breaks.clear();
            breaks.extend([0.0, 1.0]);
            for &t in &cand {
                if let Some((lo, hi)) = clip_segment(&self.triangle_points(t), &a, &b, BARY_TOL) {
                    touched[t] = true;
                    hits.push((t, lo, hi));
                    if lo > 0.0 {
                        breaks.push(lo);
                    }
                    if hi < 1.0 {
                        breaks.push(hi);
                    }
                }
            }
            breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
            breaks.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
            if let Some(last) = breaks.last_mut() {
                *last = 1.0;
            }
            for w in breaks.windows(2) {
                let (t0, t1) = (w[0], w[1]);
                let mid = 0.5 * (t0 + t1);
                let owner = hits
                    .iter()
                    .filter(|h| h.1 <= mid && mid <= h.2)
                    .map(|h| h.0)
                    .min();
                match owner {
                    Some(triangle) => pieces.push(SegmentPiece {
                        segment: j,
                        triangle,
                        t0,
                        t1,
                    }),
                    None => {
                        let p = a + (b - a) * mid;
                        return Err(Error::Location(p.x, p.y));
                    }
                }
            }
        }
        Ok(InterfaceCuts { pieces, touched })
    }

    /// Labels every triangle as interior, exterior or interfacial.
    pub fn classify_with(
        &self,
        iface: &InterfaceMesh,
        cuts: &InterfaceCuts,
    ) -> ElementClassification {
        let nt = self.triangles.len();
        let mut labels: Vec<Option<ElementLabel>> = cuts
            .touched
            .iter()
            .map(|&x| x.then_some(ElementLabel::Interfacial))
            .collect();
        let polygon = iface.polygon();
        let mut stack = Vec::new();
        for seed in 0..nt {
            if labels[seed].is_some() {
                continue;
            }
            let inside = winding_number(&self.barycenter(seed), &polygon) != 0;
            let label = if inside {
                ElementLabel::Interior
            } else {
                ElementLabel::Exterior
            };
            labels[seed] = Some(label);
            stack.push(seed);
            while let Some(t) = stack.pop() {
                for i in 0..3 {
                    if let Some(n) = self.topology.neighbour(t, i) {
                        if labels[n].is_none() {
                            labels[n] = Some(label);
                            stack.push(n);
                        }
                    }
                }
            }
        }
        ElementClassification {
            labels: labels.into_iter().map(|l| l.unwrap()).collect(),
        }
    }

    pub fn classify_elements(&self, iface: &InterfaceMesh) -> Result<ElementClassification> {
        let cuts = self.cut_interface(iface)?;
        Ok(self.classify_with(iface, &cuts))
    }

    /// Refines the macro mesh by newest-vertex bisection until interfacial triangles have
    /// diameter at most `h_fine`, with sizes graded so that a triangle is never closer to the
    /// interface than its own diameter unless it is already fine.
    pub fn adapt_to_interface(
        &self,
        iface: &InterfaceMesh,
        h_fine: f64,
        h_coarse: f64,
        budget: usize,
    ) -> Result<BulkMesh> {
        if !(h_fine > 0.0 && h_fine <= h_coarse) {
            return Err(Error::config(format!(
                "h_f = {h_fine} and h_c = {h_coarse} must satisfy 0 < h_f <= h_c"
            )));
        }
        let base = &self.base;
        let mut vertices = base.vertices.clone();
        let mut leaves: Vec<([usize; 3], u32, usize)> = base
            .triangles
            .iter()
            .enumerate()
            .map(|(r, t)| (*t, 0, r))
            .collect();
        let mut midpoints: HashMap<u64, usize> = HashMap::new();
        let key = |a: usize, b: usize| ((a.min(b) as u64) << 32) | a.max(b) as u64;

        let seg_grid = {
            let bb = iface.bounding_box().inflate(h_coarse);
            let mut g = BucketGrid::new(bb, h_fine.max(iface.mesh_size()));
            for j in 0..iface.num_segments() {
                let (a, b) = iface.segment_points(j);
                g.insert(j, &Aabb::of(&[a, b]));
            }
            g
        };
        let fine = h_fine * (1.0 + 1e-9);
        let coarse = h_coarse * (1.0 + 1e-9);
        let mut cand = Vec::new();
        let mut marked = Vec::new();
        loop {
            marked.clear();
            for (i, (tri, _, _)) in leaves.iter().enumerate() {
                let p = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
                let diam = (p[0] - p[1])
                    .norm()
                    .max((p[1] - p[2]).norm())
                    .max((p[2] - p[0]).norm());
                if diam <= fine {
                    continue;
                }
                if diam > coarse {
                    marked.push(i);
                    continue;
                }
                seg_grid.query(&Aabb::of(&p).inflate(diam), &mut cand);
                let near = cand.iter().any(|&j| {
                    let (a, b) = iface.segment_points(j);
                    triangle_segment_distance(&p, &a, &b) < diam
                });
                if near {
                    marked.push(i);
                }
            }
            if marked.is_empty() {
                break;
            }
            let mut to_split = std::mem::take(&mut marked);
            loop {
                for &i in &to_split {
                    let (tri, gen, root) = leaves[i];
                    let k = key(tri[1], tri[2]);
                    let m = *midpoints.entry(k).or_insert_with(|| {
                        vertices.push((vertices[tri[1]] + vertices[tri[2]]) * 0.5);
                        vertices.len() - 1
                    });
                    leaves[i] = ([m, tri[0], tri[1]], gen + 1, root);
                    leaves.push(([m, tri[2], tri[0]], gen + 1, root));
                }
                if leaves.len() > budget {
                    return Err(Error::Resource(format!(
                        "adaptive refinement exceeded the element budget of {budget}"
                    )));
                }
                // closure: bisect every leaf with a hanging node on one of its edges
                to_split.clear();
                for (i, (tri, _, _)) in leaves.iter().enumerate() {
                    if (0..3)
                        .any(|e| midpoints.contains_key(&key(tri[(e + 1) % 3], tri[(e + 2) % 3])))
                    {
                        to_split.push(i);
                    }
                }
                if to_split.is_empty() {
                    break;
                }
            }
            marked = Vec::new();
        }
        let triangles = leaves.iter().map(|l| l.0).collect();
        let generation = leaves.iter().map(|l| l.1).collect();
        let root = leaves.iter().map(|l| l.2).collect();
        Ok(BulkMesh::from_parts(
            self.domain,
            self.base.clone(),
            vertices,
            triangles,
            generation,
            root,
        ))
    }

    /// Plain-text dump: `NV NT`, vertices, triangles, classification labels.
    pub fn to_text(&self, classification: Option<&ElementClassification>) -> String {
        let mut s = String::new();
        writeln!(s, "{} {}", self.vertices.len(), self.triangles.len()).unwrap();
        for v in &self.vertices {
            writeln!(s, "{:.16e} {:.16e}", v.x, v.y).unwrap();
        }
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        if let Some(c) = classification {
            for l in &c.labels {
                writeln!(s, "{}", l.code()).unwrap();
            }
        }
        s
    }

    /// Reads a dump back into vertex and triangle lists plus optional labels.
    #[allow(clippy::type_complexity)]
    pub fn parse_text(
        text: &str,
    ) -> Result<(Vec<Point>, Vec<[usize; 3]>, Option<Vec<ElementLabel>>)> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty mesh dump".into()))?;
        let [nv, nt] = parse_fields::<usize, 2>(header)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let l = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated vertices".into()))?;
            let [x, y] = parse_fields::<f64, 2>(l)?;
            vertices.push(Point::new(x, y));
        }
        let mut tris = Vec::with_capacity(nt);
        for _ in 0..nt {
            let l = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated triangles".into()))?;
            tris.push(parse_fields::<usize, 3>(l)?);
        }
        let rest: Vec<&str> = lines.collect();
        let labels = if rest.is_empty() {
            None
        } else {
            let mut out = Vec::with_capacity(nt);
            for l in rest {
                let [c] = parse_fields::<u8, 1>(l)?;
                out.push(
                    ElementLabel::from_code(c)
                        .ok_or_else(|| Error::Parse(format!("bad label {c}")))?,
                );
            }
            Some(out)
        };
        Ok((vertices, tris, labels))
    }
}

fn on_domain_boundary(d: &Domain, p: &Point) -> bool {
    let tol = 1e-12;
    let on_rect = |r: &Rect| {
        r.contains(p, tol)
            && ((p.x - r.x0).abs() < tol
                || (p.x - r.x1).abs() < tol
                || (p.y - r.y0).abs() < tol
                || (p.y - r.y1).abs() < tol)
    };
    on_rect(&d.outer) || d.hole.as_ref().is_some_and(on_rect)
}

/// Parameter interval of segment a->b lying in the closed triangle, if any.
pub fn clip_segment(tri: &[Point; 3], a: &Point, b: &Point, tol: f64) -> Option<(f64, f64)> {
    let la = barycentric(a, &tri[0], &tri[1], &tri[2]);
    let lb = barycentric(b, &tri[0], &tri[1], &tri[2]);
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 1.0;
    for i in 0..3 {
        let d = lb[i] - la[i];
        if d == 0.0 {
            if la[i] < -tol {
                return None;
            }
        } else {
            let t = (-tol - la[i]) / d;
            if d > 0.0 {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
        }
    }
    (lo <= hi).then_some((lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pattern {
    /// Each square cut along one diagonal; diameter is the diagonal.
    Diagonal,
    /// Each square cut into four by both diagonals; diameter is the side.
    CrissCross,
}

/// Structured triangulation of the domain with maximum diameter at most `h`.
///
/// Squares are aligned with the outer rectangle and the hole. Of the two square
/// splittings (one diagonal, or both diagonals through a centre vertex) the one
/// with fewer triangles is used.
pub fn build_rectangle_mesh(domain: &Domain, h: f64) -> Result<BulkMesh> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config(format!("mesh size h = {h} must be positive")));
    }
    domain.validate()?;
    let o = domain.outer;
    let (lx, ly) = (o.x1 - o.x0, o.y1 - o.y0);
    let aligned = |v: f64, s: f64| {
        let r = v / s;
        (r - r.round()).abs() < 1e-9
    };
    let mut best: Option<(usize, Pattern, usize)> = None;
    for pattern in [Pattern::Diagonal, Pattern::CrissCross] {
        let smax = match pattern {
            Pattern::Diagonal => h / 2f64.sqrt(),
            Pattern::CrissCross => h,
        } * (1.0 + 1e-12);
        let found = (1..=4096usize).find(|&nx| {
            let s = lx / nx as f64;
            s <= smax
                && aligned(ly, s)
                && domain.hole.is_none_or(|hr| {
                    aligned(hr.x0 - o.x0, s)
                        && aligned(hr.x1 - o.x0, s)
                        && aligned(hr.y0 - o.y0, s)
                        && aligned(hr.y1 - o.y0, s)
                })
        });
        if let Some(nx) = found {
            let s = lx / nx as f64;
            let ny = (ly / s).round() as usize;
            let hole_cells = domain.hole.map_or(0, |hr| {
                (((hr.x1 - hr.x0) / s).round() * ((hr.y1 - hr.y0) / s).round()) as usize
            });
            let per = if pattern == Pattern::Diagonal { 2 } else { 4 };
            let count = (nx * ny - hole_cells) * per;
            if best.is_none_or(|b| count < b.0) {
                best = Some((count, pattern, nx));
            }
        }
    }
    let (_, pattern, nx) = best.ok_or_else(|| {
        Error::config(format!(
            "no aligned structured mesh with diameter <= {h} for this domain"
        ))
    })?;
    let s = lx / nx as f64;
    let ny = (ly / s).round() as usize;
    let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut vid = |i: usize, j: usize, vertices: &mut Vec<Point>| {
        *ids.entry((i, j)).or_insert_with(|| {
            vertices.push(Point::new(o.x0 + i as f64 * s, o.y0 + j as f64 * s));
            vertices.len() - 1
        })
    };
    for j in 0..ny {
        for i in 0..nx {
            let c = Point::new(o.x0 + (i as f64 + 0.5) * s, o.y0 + (j as f64 + 0.5) * s);
            if domain.hole.is_some_and(|hr| hr.strictly_contains(&c, 0.0)) {
                continue;
            }
            let p00 = vid(i, j, &mut vertices);
            let p10 = vid(i + 1, j, &mut vertices);
            let p11 = vid(i + 1, j + 1, &mut vertices);
            let p01 = vid(i, j + 1, &mut vertices);
            match pattern {
                // the two corners off the main diagonal use the other diagonal, so that no
                // triangle has two boundary edges (P1+P0 pressures would lose stability there)
                Pattern::Diagonal if (i + 1 == nx && j == 0) || (i == 0 && j + 1 == ny) => {
                    triangles.push([p00, p10, p01]);
                    triangles.push([p11, p01, p10]);
                }
                Pattern::Diagonal => {
                    triangles.push([p10, p11, p00]);
                    triangles.push([p01, p00, p11]);
                }
                Pattern::CrissCross => {
                    vertices.push(c);
                    let m = vertices.len() - 1;
                    triangles.push([m, p00, p10]);
                    triangles.push([m, p10, p11]);
                    triangles.push([m, p11, p01]);
                    triangles.push([m, p01, p00]);
                }
            }
        }
    }
    let n = triangles.len();
    let base = Arc::new(BaseMesh {
        vertices: vertices.clone(),
        triangles: triangles.clone(),
    });
    Ok(BulkMesh::from_parts(
        *domain,
        base,
        vertices,
        triangles,
        vec![0; n],
        (0..n).collect(),
    ))
}

/// Piecewise constant viscosity: inner, outer, or the mean on interfacial elements.
pub fn discrete_viscosity(
    classification: &ElementClassification,
    mu_minus: f64,
    mu_plus: f64,
) -> Result<Vec<f64>> {
    if !(mu_minus > 0.0 && mu_plus > 0.0) {
        return Err(Error::config(format!(
            "viscosities must be positive (mu_minus = {mu_minus}, mu_plus = {mu_plus})"
        )));
    }
    let mean = 0.5 * (mu_minus + mu_plus);
    Ok(classification
        .labels
        .iter()
        .map(|l| match l {
            ElementLabel::Interior => mu_minus,
            ElementLabel::Exterior => mu_plus,
            ElementLabel::Interfacial => mean,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interface::regular_polygon;

    #[test]
    fn coarse_square_mesh_counts() {
        let m = build_rectangle_mesh(&Domain::unit_square(), 2f64.sqrt() / 2.0).unwrap();
        assert_eq!(m.num_triangles(), 32);
        let m = build_rectangle_mesh(&Domain::unit_square(), 2f64.sqrt() / 4.0).unwrap();
        assert_eq!(m.num_triangles(), 128);
        assert!(m.max_diameter() <= 2f64.sqrt() / 4.0 * (1.0 + 1e-12));
    }

    #[test]
    fn no_triangle_has_two_boundary_edges() {
        for (d, h) in [
            (Domain::unit_square(), 0.4),
            (Domain::unit_square(), 2f64.sqrt() / 8.0),
            (Domain::square_with_hole(), 0.3),
        ] {
            let m = build_rectangle_mesh(&d, h).unwrap();
            let topo = m.topology();
            for e in &topo.tri_edges {
                assert!(e.iter().filter(|&&x| topo.boundary_edge[x]).count() <= 1);
            }
            assert!(m.is_conforming());
        }
    }

    #[test]
    fn nonpositive_h_rejected() {
        assert!(matches!(
            build_rectangle_mesh(&Domain::unit_square(), 0.0),
            Err(Error::Config(_))
        ));
        assert!(build_rectangle_mesh(&Domain::unit_square(), -1.0).is_err());
    }

    #[test]
    fn hole_mesh_excludes_hole() {
        let d = Domain::square_with_hole();
        let m = build_rectangle_mesh(&d, 1.0 / 3.0).unwrap();
        assert_eq!(m.num_triangles(), 128);
        let total: f64 = (0..m.num_triangles()).map(|t| m.area(t)).sum();
        assert!((total - d.area()).abs() < 1e-12 * d.area());
        for t in 0..m.num_triangles() {
            let c = m.barycenter(t);
            assert!(!d.hole.unwrap().strictly_contains(&c, 0.0));
        }
        // both boundary components are flagged
        let topo = m.topology();
        let on_hole = m
            .vertices()
            .iter()
            .zip(&topo.boundary_vertex)
            .filter(|(p, &b)| b && p.x.abs() <= 1.0 / 3.0 + 1e-12 && p.y.abs() <= 1.0 / 3.0 + 1e-12)
            .count();
        assert_eq!(on_hole, 8);
        assert!(m.is_conforming());
    }

    #[test]
    fn classification_simple_cases() {
        let m = build_rectangle_mesh(&Domain::unit_square(), 2f64.sqrt() / 8.0).unwrap();
        let circle = regular_polygon(64, 0.5).unwrap();
        let c = m.classify_elements(&circle).unwrap();
        for t in 0..m.num_triangles() {
            let p = m.triangle_points(t);
            if p.iter().all(|q| q.norm() < 0.3) {
                assert_eq!(c.labels[t], ElementLabel::Interior);
            }
            if p.iter().all(|q| q.norm() > 0.9) {
                assert_eq!(c.labels[t], ElementLabel::Exterior);
            }
        }
        assert_eq!(
            c.count(ElementLabel::Interior)
                + c.count(ElementLabel::Exterior)
                + c.count(ElementLabel::Interfacial),
            m.num_triangles()
        );
    }

    #[test]
    fn interface_outside_domain_is_an_error() {
        let m = build_rectangle_mesh(&Domain::unit_square(), 0.5).unwrap();
        let big = regular_polygon(16, 1.5).unwrap();
        assert!(matches!(m.classify_elements(&big), Err(Error::Geometry(_))));
    }

    #[test]
    fn viscosity_values() {
        let c = ElementClassification {
            labels: vec![
                ElementLabel::Interior,
                ElementLabel::Exterior,
                ElementLabel::Interfacial,
            ],
        };
        assert_eq!(discrete_viscosity(&c, 1.0, 1.0).unwrap(), vec![1.0; 3]);
        let mu = discrete_viscosity(&c, 0.1, 1.0).unwrap();
        assert_eq!(mu[0], 0.1);
        assert_eq!(mu[1], 1.0);
        assert!((mu[2] - 0.55).abs() < 1e-15);
        assert!(discrete_viscosity(&c, 0.0, 1.0).is_err());
    }

    #[test]
    fn locate_vertex_and_barycenter() {
        let m = build_rectangle_mesh(&Domain::unit_square(), 0.5).unwrap();
        let (t, l) = m.locate_point(&m.barycenter(7)).unwrap();
        assert_eq!(t, 7);
        for x in l {
            assert!((x - 1.0 / 3.0).abs() < 1e-14);
        }
        let v = m.vertices()[m.triangles()[3][1]];
        let (t, l) = m.locate_point(&v).unwrap();
        let k = m.triangles()[t]
            .iter()
            .position(|&i| m.vertices()[i] == v)
            .unwrap();
        assert!((l[k] - 1.0).abs() < 1e-14);
        assert!(m.locate_point(&Point::new(1.5, 0.0)).is_err());
    }

    #[test]
    fn uniform_mode_leaves_mesh_unchanged() {
        let h = 2f64.sqrt() / 4.0;
        let m = build_rectangle_mesh(&Domain::unit_square(), h).unwrap();
        let a = m
            .adapt_to_interface(
                &regular_polygon(64, 0.5).unwrap(),
                h,
                h,
                DEFAULT_ELEMENT_BUDGET,
            )
            .unwrap();
        assert_eq!(a.triangles(), m.triangles());
        assert_eq!(a.vertices(), m.vertices());
    }

    #[test]
    fn adaptive_refinement_is_fine_near_interface_and_idempotent() {
        let hc = 2f64.powf(-0.5);
        let hf = hc / 8.0;
        let circle = regular_polygon(64, 0.5).unwrap();
        let m = build_rectangle_mesh(&Domain::unit_square(), hc).unwrap();
        let base_angle = m.min_angle();
        let a = m
            .adapt_to_interface(&circle, hf, hc, DEFAULT_ELEMENT_BUDGET)
            .unwrap();
        let c = a.classify_elements(&circle).unwrap();
        for t in 0..a.num_triangles() {
            if c.labels[t] == ElementLabel::Interfacial {
                assert!(a.diameter(t) <= hf * (1.0 + 1e-9));
            }
            assert!(a.area(t) > 0.0);
        }
        assert!(a.is_conforming());
        assert!(a.min_angle() >= base_angle - 1e-12);
        let total: f64 = (0..a.num_triangles()).map(|t| a.area(t)).sum();
        assert!((total - 4.0).abs() < 4e-12);
        let b = a
            .adapt_to_interface(&circle, hf, hc, DEFAULT_ELEMENT_BUDGET)
            .unwrap();
        assert_eq!(a.triangles(), b.triangles());
        assert_eq!(a.vertices(), b.vertices());
    }

    #[test]
    fn budget_is_enforced() {
        let m = build_rectangle_mesh(&Domain::unit_square(), 0.7).unwrap();
        let circle = regular_polygon(64, 0.5).unwrap();
        assert!(matches!(
            m.adapt_to_interface(&circle, 0.001, 0.7, 1000),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn text_dump_round_trip() {
        let m = build_rectangle_mesh(&Domain::square_with_hole(), 1.0 / 3.0).unwrap();
        let c = m
            .classify_elements(&regular_polygon(32, 0.5).unwrap())
            .unwrap();
        let (v, t, l) = BulkMesh::parse_text(&m.to_text(Some(&c))).unwrap();
        assert_eq!(v, m.vertices());
        assert_eq!(t, m.triangles());
        assert_eq!(l.unwrap(), c.labels);
    }
}
