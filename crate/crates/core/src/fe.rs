//! P2 velocity element, pressure spaces, quadrature rules and degree-of-freedom numbering.

use std::str::FromStr;

use crate::bulk::BulkMesh;
use crate::error::{Error, Result};
use crate::geometry::{orient, Point};

/// Degree-4 rule on the reference triangle: barycentric points and weights summing to 1.
pub const TRI_QUAD4: [([f64; 3], f64); 6] = {
    const A1: f64 = 0.445_948_490_915_965;
    const B1: f64 = 0.108_103_018_168_070;
    const W1: f64 = 0.223_381_589_678_011;
    const A2: f64 = 0.091_576_213_509_771;
    const B2: f64 = 0.816_847_572_980_459;
    const W2: f64 = 0.109_951_743_655_322;
    [
        ([A1, A1, B1], W1),
        ([A1, B1, A1], W1),
        ([B1, A1, A1], W1),
        ([A2, A2, B2], W2),
        ([A2, B2, A2], W2),
        ([B2, A2, A2], W2),
    ]
};

/// Three-point Gauss rule on [0, 1] (exact to degree 5).
pub fn gauss3() -> [(f64, f64); 3] {
    let d = 0.5 * (0.6f64).sqrt();
    [
        (0.5 - d, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + d, 5.0 / 18.0),
    ]
}

/// Gauss-Legendre rule with `n` points on [0, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// P2 shape functions at barycentric coordinates; node 3+i is the midpoint opposite vertex i.
#[inline]
pub fn p2_values(l: &[f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
        4.0 * l[0] * l[1],
    ]
}

/// Gradients of the barycentric coordinates of a triangle.
#[inline]
pub fn bary_gradients(p: &[Point; 3]) -> [Point; 3] {
    let det = orient(&p[0], &p[1], &p[2]);
    let g = |a: &Point, b: &Point| Point::new(a.y - b.y, b.x - a.x) / det;
    [g(&p[1], &p[2]), g(&p[2], &p[0]), g(&p[0], &p[1])]
}

#[inline]
pub fn p2_gradients(l: &[f64; 3], gl: &[Point; 3]) -> [Point; 6] {
    [
        gl[0] * (4.0 * l[0] - 1.0),
        gl[1] * (4.0 * l[1] - 1.0),
        gl[2] * (4.0 * l[2] - 1.0),
        (gl[2] * l[1] + gl[1] * l[2]) * 4.0,
        (gl[0] * l[2] + gl[2] * l[0]) * 4.0,
        (gl[1] * l[0] + gl[0] * l[1]) * 4.0,
    ]
}

/// Local viscous matrix `mu * (grad u : grad v + grad u : grad v^T)`, local dof `2*node + component`.
pub fn element_viscous_matrix(p: &[Point; 3], mu: f64) -> [[f64; 12]; 12] {
    let area = 0.5 * orient(&p[0], &p[1], &p[2]);
    let gl = bary_gradients(p);
    let mut a = [[0.0; 12]; 12];
    for (l, w) in TRI_QUAD4.iter() {
        let g = p2_gradients(l, &gl);
        let s = w * area * mu;
        for i in 0..6 {
            for j in 0..6 {
                let dot = g[i].dot(&g[j]);
                for al in 0..2 {
                    for be in 0..2 {
                        let mut v = g[i][be] * g[j][al];
                        if al == be {
                            v += dot;
                        }
                        a[2 * i + al][2 * j + be] += s * v;
                    }
                }
            }
        }
    }
    a
}

/// `int lambda_c div(phi)` for the three P1 functions and `int div(phi)` for the P0 function.
pub fn element_divergence(p: &[Point; 3]) -> ([[f64; 12]; 3], [f64; 12]) {
    let area = 0.5 * orient(&p[0], &p[1], &p[2]);
    let gl = bary_gradients(p);
    let mut b1 = [[0.0; 12]; 3];
    let mut b0 = [0.0; 12];
    for (l, w) in TRI_QUAD4.iter() {
        let g = p2_gradients(l, &gl);
        for j in 0..6 {
            for al in 0..2 {
                let d = w * area * g[j][al];
                b0[2 * j + al] += d;
                for c in 0..3 {
                    b1[c][2 * j + al] += l[c] * d;
                }
            }
        }
    }
    (b1, b0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementPair {
    P2P1,
    P2P0,
    P2P1P0,
}

impl ElementPair {
    pub fn has_p1(self) -> bool {
        matches!(self, ElementPair::P2P1 | ElementPair::P2P1P0)
    }

    pub fn has_p0(self) -> bool {
        matches!(self, ElementPair::P2P0 | ElementPair::P2P1P0)
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementPair::P2P1 => "p2p1",
            ElementPair::P2P0 => "p2p0",
            ElementPair::P2P1P0 => "p2p1p0",
        }
    }
}

impl FromStr for ElementPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p2p1" => Ok(ElementPair::P2P1),
            "p2p0" => Ok(ElementPair::P2P0),
            "p2p1p0" => Ok(ElementPair::P2P1P0),
            other => Err(Error::config(format!("unknown element pair `{other}`"))),
        }
    }
}

/// Pressure numbering: `[P1 vertex values][P0 element values][enrichment]`, each part optional.
#[derive(Clone, Debug)]
pub struct PressureLayout {
    pub pair: ElementPair,
    pub xfem: bool,
    pub p1_offset: Option<usize>,
    pub p0_offset: Option<usize>,
    pub xfem_index: Option<usize>,
    pub len: usize,
    /// Dofs removed from the system to fix the constant (and the P1+P0 redundancy).
    pub pinned: Vec<usize>,
}

impl PressureLayout {
    pub fn new(pair: ElementPair, xfem: bool, nv: usize, nt: usize) -> Self {
        let mut len = 0;
        let p1_offset = pair.has_p1().then(|| {
            len += nv;
            0
        });
        let p0_offset = pair.has_p0().then(|| {
            let o = len;
            len += nt;
            o
        });
        let xfem_index = xfem.then(|| {
            len += 1;
            len - 1
        });
        let pinned = match pair {
            ElementPair::P2P1 => vec![0],
            ElementPair::P2P0 => vec![p0_offset.unwrap()],
            ElementPair::P2P1P0 => vec![0, p0_offset.unwrap()],
        };
        PressureLayout {
            pair,
            xfem,
            p1_offset,
            p0_offset,
            xfem_index,
            len,
            pinned,
        }
    }
}

/// Continuous P2 node numbering (vertices first, then edge midpoints) plus the pressure layout.
#[derive(Clone, Debug)]
pub struct DofLayout {
    pub num_vertices: usize,
    pub num_edges: usize,
    pub tri_nodes: Vec<[usize; 6]>,
    pub node_coords: Vec<Point>,
    pub boundary_node: Vec<bool>,
    pub pressure: PressureLayout,
}

impl DofLayout {
    pub fn new(bulk: &BulkMesh, pair: ElementPair, xfem: bool) -> Self {
        let topo = bulk.topology();
        let nv = bulk.vertices().len();
        let ne = topo.edges.len();
        let tri_nodes = bulk
            .triangles()
            .iter()
            .zip(&topo.tri_edges)
            .map(|(t, e)| [t[0], t[1], t[2], nv + e[0], nv + e[1], nv + e[2]])
            .collect();
        let mut node_coords = bulk.vertices().to_vec();
        node_coords.extend(
            topo.edges
                .iter()
                .map(|e| (bulk.vertices()[e[0]] + bulk.vertices()[e[1]]) * 0.5),
        );
        let mut boundary_node = topo.boundary_vertex.clone();
        boundary_node.extend_from_slice(&topo.boundary_edge);
        DofLayout {
            num_vertices: nv,
            num_edges: ne,
            tri_nodes,
            node_coords,
            boundary_node,
            pressure: PressureLayout::new(pair, xfem, nv, bulk.num_triangles()),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_vertices + self.num_edges
    }

    pub fn num_velocity(&self) -> usize {
        2 * self.num_nodes()
    }

    #[inline]
    pub fn velocity_dof(node: usize, component: usize) -> usize {
        2 * node + component
    }

    /// Velocity at a point given by triangle and barycentric coordinates.
    pub fn eval_velocity(&self, u: &[f64], t: usize, l: &[f64; 3]) -> Point {
        let phi = p2_values(l);
        let nodes = &self.tri_nodes[t];
        let mut v = Point::zeros();
        for i in 0..6 {
            v.x += phi[i] * u[2 * nodes[i]];
            v.y += phi[i] * u[2 * nodes[i] + 1];
        }
        v
    }

    /// Pressure without the enrichment part at a point in triangle `t`.
    pub fn eval_pressure_standard(
        &self,
        bulk: &BulkMesh,
        p: &[f64],
        t: usize,
        l: &[f64; 3],
    ) -> f64 {
        let mut v = 0.0;
        if let Some(o) = self.pressure.p1_offset {
            let tri = bulk.triangles()[t];
            v += l[0] * p[o + tri[0]] + l[1] * p[o + tri[1]] + l[2] * p[o + tri[2]];
        }
        if let Some(o) = self.pressure.p0_offset {
            v += p[o + t];
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad4_integrates_quartics() {
        // int over reference triangle of l0^a l1^b l2^c = 2 a! b! c! / (a+b+c+2)!  times area 1/2
        let fact = |n: u32| (1..=n).product::<u32>().max(1) as f64;
        for a in 0..=4u32 {
            for b in 0..=(4 - a) {
                for c in 0..=(4 - a - b) {
                    let q: f64 = TRI_QUAD4
                        .iter()
                        .map(|(l, w)| {
                            w * l[0].powi(a as i32) * l[1].powi(b as i32) * l[2].powi(c as i32)
                        })
                        .sum();
                    let exact = 2.0 * fact(a) * fact(b) * fact(c) / fact(a + b + c + 2);
                    assert!((q - exact).abs() < 1e-14, "{a} {b} {c}");
                }
            }
        }
    }

    #[test]
    fn gauss_rules_exact() {
        for n in 1..=10 {
            let g = gauss_legendre(n);
            for k in 0..(2 * n) {
                let q: f64 = g.iter().map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "n={n} k={k}");
            }
        }
        let g3 = gauss3();
        let gl = gauss_legendre(3);
        for i in 0..3 {
            assert!((g3[i].0 - gl[i].0).abs() < 1e-15 && (g3[i].1 - gl[i].1).abs() < 1e-15);
        }
    }

    #[test]
    fn p2_partition_of_unity_and_nodality() {
        let nodes = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
            [0.5, 0.5, 0.0],
        ];
        for (i, n) in nodes.iter().enumerate() {
            let v = p2_values(n);
            for (j, x) in v.iter().enumerate() {
                assert!((x - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
        let v = p2_values(&[0.2, 0.3, 0.5]);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rigid_motions_in_kernel() {
        let p = [
            Point::new(0.1, 0.0),
            Point::new(1.0, 0.2),
            Point::new(0.3, 0.9),
        ];
        let a = element_viscous_matrix(&p, 1.7);
        let nodes = [
            p[0],
            p[1],
            p[2],
            (p[1] + p[2]) * 0.5,
            (p[2] + p[0]) * 0.5,
            (p[0] + p[1]) * 0.5,
        ];
        let fields: [Box<dyn Fn(&Point) -> Point>; 3] = [
            Box::new(|_| Point::new(1.0, 0.0)),
            Box::new(|_| Point::new(0.0, 1.0)),
            Box::new(|z| Point::new(-z.y, z.x)),
        ];
        for f in fields.iter() {
            let mut u = [0.0; 12];
            for i in 0..6 {
                let v = f(&nodes[i]);
                u[2 * i] = v.x;
                u[2 * i + 1] = v.y;
            }
            for row in a.iter() {
                let r: f64 = row.iter().zip(&u).map(|(x, y)| x * y).sum();
                assert!(r.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn pressure_layouts() {
        let l = PressureLayout::new(ElementPair::P2P1P0, true, 10, 7);
        assert_eq!(l.len, 18);
        assert_eq!(l.p0_offset, Some(10));
        assert_eq!(l.xfem_index, Some(17));
        assert_eq!(l.pinned, vec![0, 10]);
        let l = PressureLayout::new(ElementPair::P2P0, false, 10, 7);
        assert_eq!((l.len, l.pinned.clone()), (7, vec![0]));
        assert!("p3p1".parse::<ElementPair>().is_err());
    }
}
