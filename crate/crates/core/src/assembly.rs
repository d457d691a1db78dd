//! Sparse assembly of the coupled Stokes / interface system.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::bulk::{BulkMesh, InterfaceCuts};
use crate::error::{Error, Result};
use crate::fe::{
    element_divergence, element_viscous_matrix, gauss3, gauss_legendre, p2_values, DofLayout,
    PressureLayout, TRI_QUAD4,
};
use crate::geometry::{barycentric, rotate_cw, shoelace_area, winding_number, Point};
use crate::interface::InterfaceMesh;

pub type Triplet = (usize, usize, f64);

/// Sparse matrix block in triplet form; duplicates are summed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseBlock {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<Triplet>,
}

impl SparseBlock {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparseBlock {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.nrows && c < self.ncols);
        self.entries.push((r, c, v));
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn mul_t_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for &(r, c, v) in &self.entries {
            y[c] += v * x[r];
        }
        y
    }

    /// Sorted row-major with duplicates summed.
    pub fn compressed(&self) -> SparseBlock {
        let mut e = self.entries.clone();
        e.sort_by_key(|t| (t.0, t.1));
        let mut out: Vec<Triplet> = Vec::with_capacity(e.len());
        for (r, c, v) in e {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        SparseBlock {
            nrows: self.nrows,
            ncols: self.ncols,
            entries: out,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for &(r, c, v) in &self.entries {
            d[r][c] += v;
        }
        d
    }

    /// Coordinate text dump (`nrows ncols nnz` header, then `row col value`), sorted row-major.
    pub fn to_coordinate_text(&self) -> String {
        let c = self.compressed();
        let mut s = String::new();
        writeln!(s, "{} {} {}", c.nrows, c.ncols, c.entries.len()).unwrap();
        for (r, col, v) in c.entries {
            writeln!(s, "{r} {col} {v:.16e}").unwrap();
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Scalar curvature with lumped normal projection.
    Main,
    /// Vector curvature with full mass pairings.
    Dziuk,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main" => Ok(Scheme::Main),
            "dziuk" => Ok(Scheme::Dziuk),
            other => Err(Error::config(format!("unknown scheme `{other}`"))),
        }
    }
}

/// One quadrature point on the interface, located in the bulk mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub segment: usize,
    /// Parameter along the segment, 0 at its first vertex.
    pub s: f64,
    pub position: Point,
    pub weight: f64,
    pub triangle: usize,
    pub bary: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct SurfaceQuadrature {
    pub points: Vec<SurfacePoint>,
}

impl SurfaceQuadrature {
    pub fn weight_per_segment(&self, nseg: usize) -> Vec<f64> {
        let mut w = vec![0.0; nseg];
        for p in &self.points {
            w[p.segment] += p.weight;
        }
        w
    }
}

/// Gauss rule with `order` points on every piece of every segment inside a single triangle.
pub fn build_surface_quadrature(
    bulk: &BulkMesh,
    iface: &InterfaceMesh,
    order: usize,
) -> Result<SurfaceQuadrature> {
    let cuts = bulk.cut_interface(iface)?;
    build_surface_quadrature_with(bulk, iface, &cuts, order)
}

pub fn build_surface_quadrature_with(
    bulk: &BulkMesh,
    iface: &InterfaceMesh,
    cuts: &InterfaceCuts,
    order: usize,
) -> Result<SurfaceQuadrature> {
    if order == 0 {
        return Err(Error::Contract(
            "quadrature order must be at least 1".into(),
        ));
    }
    let rule: Vec<(f64, f64)> = if order == 3 {
        gauss3().to_vec()
    } else {
        gauss_legendre(order)
    };
    let mut points = Vec::with_capacity(cuts.pieces.len() * rule.len());
    for piece in &cuts.pieces {
        let (a, b) = iface.segment_points(piece.segment);
        let len = (b - a).norm() * (piece.t1 - piece.t0);
        let [p0, p1, p2] = bulk.triangle_points(piece.triangle);
        for &(x, w) in &rule {
            let s = piece.t0 + x * (piece.t1 - piece.t0);
            let position = a + (b - a) * s;
            points.push(SurfacePoint {
                segment: piece.segment,
                s,
                position,
                weight: w * len,
                triangle: piece.triangle,
                bary: barycentric(&position, &p0, &p1, &p2),
            });
        }
    }
    Ok(SurfaceQuadrature { points })
}

/// Viscous block, divergence block over the standard pressure space, and load vector.
#[derive(Clone, Debug)]
pub struct StokesBlocks {
    pub a: SparseBlock,
    /// `int psi_c div(phi_a)`, rows over the full pressure numbering.
    pub d: SparseBlock,
    pub f: Vec<f64>,
}

/// Assembles the viscous and divergence blocks and the load of the nodally interpolated force.
pub fn assemble_stokes(
    bulk: &BulkMesh,
    dofs: &DofLayout,
    mu: &[f64],
    force: Option<&(dyn Fn(&Point) -> Point + Sync)>,
) -> Result<StokesBlocks> {
    let nt = bulk.num_triangles();
    if mu.len() != nt {
        return Err(Error::Contract(format!(
            "viscosity has {} entries for {} triangles",
            mu.len(),
            nt
        )));
    }
    let nvel = dofs.num_velocity();
    let pl = &dofs.pressure;
    let chunk = 256;
    let parts: Vec<(Vec<Triplet>, Vec<Triplet>, Vec<(usize, f64)>)> = (0..nt)
        .collect::<Vec<_>>()
        .par_chunks(chunk)
        .map(|ts| {
            let mut at = Vec::with_capacity(ts.len() * 144);
            let mut dt = Vec::with_capacity(ts.len() * 48);
            let mut ft = Vec::new();
            for &t in ts {
                let p = bulk.triangle_points(t);
                let nodes = dofs.tri_nodes[t];
                let ke = element_viscous_matrix(&p, mu[t]);
                for i in 0..12 {
                    let gi = 2 * nodes[i / 2] + i % 2;
                    for j in 0..12 {
                        let v = ke[i][j];
                        if v != 0.0 {
                            at.push((gi, 2 * nodes[j / 2] + j % 2, v));
                        }
                    }
                }
                let (b1, b0) = element_divergence(&p);
                let tri = bulk.triangles()[t];
                for j in 0..12 {
                    let gj = 2 * nodes[j / 2] + j % 2;
                    if let Some(o) = pl.p1_offset {
                        for c in 0..3 {
                            dt.push((o + tri[c], gj, b1[c][j]));
                        }
                    }
                    if let Some(o) = pl.p0_offset {
                        dt.push((o + t, gj, b0[j]));
                    }
                }
                if let Some(f) = force {
                    let area = bulk.area(t);
                    let fv: Vec<Point> = nodes.iter().map(|&n| f(&dofs.node_coords[n])).collect();
                    for (l, w) in TRI_QUAD4.iter() {
                        let phi = p2_values(l);
                        let mut fq = Point::zeros();
                        for k in 0..6 {
                            fq += fv[k] * phi[k];
                        }
                        for k in 0..6 {
                            ft.push((2 * nodes[k], w * area * phi[k] * fq.x));
                            ft.push((2 * nodes[k] + 1, w * area * phi[k] * fq.y));
                        }
                    }
                }
            }
            (at, dt, ft)
        })
        .collect();
    let mut a = SparseBlock::new(nvel, nvel);
    let mut d = SparseBlock::new(pl.len, nvel);
    let mut f = vec![0.0; nvel];
    for (at, dt, ft) in parts {
        a.entries.extend(at);
        d.entries.extend(dt);
        for (i, v) in ft {
            f[i] += v;
        }
    }
    Ok(StokesBlocks { a, d, f })
}

/// `int_Gamma chi_k (nu . phi_a)`: rows over interface vertices, columns over velocity dofs.
pub fn assemble_surface_tension(
    quad: &SurfaceQuadrature,
    dofs: &DofLayout,
    iface: &InterfaceMesh,
    segment_normals: &[Point],
) -> SparseBlock {
    let mut n = SparseBlock::new(iface.num_vertices(), dofs.num_velocity());
    for q in &quad.points {
        let [k0, k1] = iface.segments()[q.segment];
        let nu = segment_normals[q.segment];
        let phi = p2_values(&q.bary);
        let nodes = dofs.tri_nodes[q.triangle];
        for (k, chi) in [(k0, 1.0 - q.s), (k1, q.s)] {
            for i in 0..6 {
                let v = q.weight * chi * phi[i];
                n.push(k, 2 * nodes[i], v * nu.x);
                n.push(k, 2 * nodes[i] + 1, v * nu.y);
            }
        }
    }
    n
}

/// `int_Gamma chi_k phi_a` per component: rows `2k + i`, columns over velocity dofs.
pub fn assemble_vector_coupling(
    quad: &SurfaceQuadrature,
    dofs: &DofLayout,
    iface: &InterfaceMesh,
) -> SparseBlock {
    let mut n = SparseBlock::new(2 * iface.num_vertices(), dofs.num_velocity());
    for q in &quad.points {
        let [k0, k1] = iface.segments()[q.segment];
        let phi = p2_values(&q.bary);
        let nodes = dofs.tri_nodes[q.triangle];
        for (k, chi) in [(k0, 1.0 - q.s), (k1, q.s)] {
            for i in 0..6 {
                let v = q.weight * chi * phi[i];
                n.push(2 * k, 2 * nodes[i], v);
                n.push(2 * k + 1, 2 * nodes[i] + 1, v);
            }
        }
    }
    n
}

/// Interface blocks of the discrete curvature and position equations.
#[derive(Clone, Debug)]
pub struct InterfaceBlocks {
    /// Lumped normal pairing: row k holds the vertex vector `W_k` in columns `2k, 2k+1`.
    pub lumped_normal: SparseBlock,
    /// Curve stiffness acting on each coordinate.
    pub stiffness: SparseBlock,
    /// Full P1 mass matrix on each coordinate (used by the vector-curvature variant).
    pub mass: SparseBlock,
}

pub fn assemble_interface_blocks(
    iface: &InterfaceMesh,
    lumped_normals: &[Point],
) -> InterfaceBlocks {
    let k = iface.num_vertices();
    let mut w = SparseBlock::new(k, 2 * k);
    for (i, n) in lumped_normals.iter().enumerate() {
        w.push(i, 2 * i, n.x);
        w.push(i, 2 * i + 1, n.y);
    }
    let mut stiffness = SparseBlock::new(2 * k, 2 * k);
    let mut mass = SparseBlock::new(2 * k, 2 * k);
    for (j, &[a, b]) in iface.segments().iter().enumerate() {
        let len = iface.segment_length(j);
        for c in 0..2 {
            let (ia, ib) = (2 * a + c, 2 * b + c);
            stiffness.push(ia, ia, 1.0 / len);
            stiffness.push(ib, ib, 1.0 / len);
            stiffness.push(ia, ib, -1.0 / len);
            stiffness.push(ib, ia, -1.0 / len);
            mass.push(ia, ia, len / 3.0);
            mass.push(ib, ib, len / 3.0);
            mass.push(ia, ib, len / 6.0);
            mass.push(ib, ia, len / 6.0);
        }
    }
    InterfaceBlocks {
        lumped_normal: w,
        stiffness,
        mass,
    }
}

/// Row of the enrichment: `int_{Omega_-} div(phi_a)` written as surface integrals over the
/// interface plus any part of the domain boundary enclosed by it.
pub fn assemble_xfem_row(
    bulk: &BulkMesh,
    dofs: &DofLayout,
    iface: &InterfaceMesh,
    quad: &SurfaceQuadrature,
    segment_normals: &[Point],
) -> Vec<f64> {
    let mut row = vec![0.0; dofs.num_velocity()];
    for q in &quad.points {
        let nu = segment_normals[q.segment];
        let phi = p2_values(&q.bary);
        let nodes = dofs.tri_nodes[q.triangle];
        for i in 0..6 {
            row[2 * nodes[i]] += q.weight * phi[i] * nu.x;
            row[2 * nodes[i] + 1] += q.weight * phi[i] * nu.y;
        }
    }
    for_each_enclosed_boundary_point(bulk, iface, |t, l, w, n| {
        let phi = p2_values(l);
        let nodes = dofs.tri_nodes[t];
        for i in 0..6 {
            row[2 * nodes[i]] += w * phi[i] * n.x;
            row[2 * nodes[i] + 1] += w * phi[i] * n.y;
        }
    });
    row
}

/// Visits Gauss points (triangle, barycentrics, weight, outward normal) on the parts of
/// boundary edges that lie inside the interface polygon.
fn for_each_enclosed_boundary_point(
    bulk: &BulkMesh,
    iface: &InterfaceMesh,
    mut visit: impl FnMut(usize, &[f64; 3], f64, &Point),
) {
    let topo = bulk.topology();
    let bb = iface.bounding_box().inflate(1e-12);
    let polygon = iface.polygon();
    let rule = gauss3();
    for (e, &is_bd) in topo.boundary_edge.iter().enumerate() {
        if !is_bd {
            continue;
        }
        let t = topo.edge_tris[e][0];
        let i = topo.tri_edges[t].iter().position(|&x| x == e).unwrap();
        let p = bulk.triangle_points(t);
        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        if a.x.max(b.x) < bb.min.x
            || a.x.min(b.x) > bb.max.x
            || a.y.max(b.y) < bb.min.y
            || a.y.min(b.y) > bb.max.y
        {
            continue;
        }
        let mut breaks = vec![0.0, 1.0];
        for j in 0..iface.num_segments() {
            let (c, d) = iface.segment_points(j);
            if let Some(s) = segment_crossing(&a, &b, &c, &d) {
                breaks.push(s);
            }
        }
        breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let len = (b - a).norm();
        let n = rotate_cw(&(b - a)) / len;
        for w in breaks.windows(2) {
            if w[1] - w[0] < 1e-14 {
                continue;
            }
            let mid = a + (b - a) * (0.5 * (w[0] + w[1]));
            if winding_number(&mid, &polygon) == 0 {
                continue;
            }
            for &(x, wt) in &rule {
                let s = w[0] + x * (w[1] - w[0]);
                let z = a + (b - a) * s;
                let l = barycentric(&z, &p[0], &p[1], &p[2]);
                visit(t, &l, wt * len * (w[1] - w[0]), &n);
            }
        }
    }
}

/// Parameter on a->b where it crosses c->d, if the segments cross.
fn segment_crossing(a: &Point, b: &Point, c: &Point, d: &Point) -> Option<f64> {
    let r = b - a;
    let s = d - c;
    let den = r.x * s.y - r.y * s.x;
    if den == 0.0 {
        return None;
    }
    let q = c - a;
    let t = (q.x * s.y - q.y * s.x) / den;
    let u = (q.x * r.y - q.y * r.x) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(t)
}

/// Area of the inner phase inside the domain (the polygon minus an enclosed hole).
pub fn inner_phase_area(bulk: &BulkMesh, iface: &InterfaceMesh) -> f64 {
    let polygon = iface.polygon();
    let mut area = shoelace_area(&polygon);
    if let Some(h) = bulk.domain().hole {
        if winding_number(&h.center(), &polygon) != 0 {
            area -= h.area();
        }
    }
    area
}

/// Interpolated boundary velocity and its total outward flux.
#[derive(Clone, Debug)]
pub struct DirichletData {
    /// Per velocity dof; zero away from the boundary.
    pub values: Vec<f64>,
    pub constrained: Vec<bool>,
    /// `int_{dOmega} (I_2 g) . n`, exact for the quadratic interpolant.
    pub flux: f64,
}

pub fn interpolate_dirichlet(
    bulk: &BulkMesh,
    dofs: &DofLayout,
    g: Option<&(dyn Fn(&Point) -> Point + Sync)>,
) -> DirichletData {
    let nvel = dofs.num_velocity();
    let mut values = vec![0.0; nvel];
    let mut constrained = vec![false; nvel];
    for (node, &b) in dofs.boundary_node.iter().enumerate() {
        if b {
            constrained[2 * node] = true;
            constrained[2 * node + 1] = true;
            if let Some(g) = g {
                let v = g(&dofs.node_coords[node]);
                values[2 * node] = v.x;
                values[2 * node + 1] = v.y;
            }
        }
    }
    let mut flux = 0.0;
    if g.is_some() {
        let topo = bulk.topology();
        let nv = dofs.num_vertices;
        for (e, &is_bd) in topo.boundary_edge.iter().enumerate() {
            if !is_bd {
                continue;
            }
            let t = topo.edge_tris[e][0];
            let i = topo.tri_edges[t].iter().position(|&x| x == e).unwrap();
            let tri = bulk.triangles()[t];
            let (va, vb) = (tri[(i + 1) % 3], tri[(i + 2) % 3]);
            let (a, b) = (bulk.vertices()[va], bulk.vertices()[vb]);
            let nl = rotate_cw(&(b - a));
            let val = |node: usize| Point::new(values[2 * node], values[2 * node + 1]).dot(&nl);
            flux += (val(va) + 4.0 * val(nv + e) + val(vb)) / 6.0;
        }
    }
    DirichletData {
        values,
        constrained,
        flux,
    }
}

/// `(psi_c, 1)` for every pressure basis function.
pub fn pressure_integrals(bulk: &BulkMesh, dofs: &DofLayout, iface: &InterfaceMesh) -> Vec<f64> {
    let pl = &dofs.pressure;
    let mut m = vec![0.0; pl.len];
    for (t, tri) in bulk.triangles().iter().enumerate() {
        let area = bulk.area(t);
        if let Some(o) = pl.p1_offset {
            for &v in tri {
                m[o + v] += area / 3.0;
            }
        }
        if let Some(o) = pl.p0_offset {
            m[o + t] += area;
        }
    }
    if let Some(x) = pl.xfem_index {
        m[x] = inner_phase_area(bulk, iface);
    }
    m
}

/// Parameters of one linear solve.
#[derive(Clone, Copy, Debug)]
pub struct StepParams {
    pub scheme: Scheme,
    pub gamma: f64,
    pub tau: f64,
}

/// All blocks and data of one time step before boundary elimination.
#[derive(Clone, Debug)]
pub struct CoupledSystem {
    pub params: StepParams,
    pub stokes: StokesBlocks,
    /// Interface coupling: scalar (`K x nvel`) for the main scheme, vector (`2K x nvel`) otherwise.
    pub coupling: SparseBlock,
    pub interface: InterfaceBlocks,
    pub pressure: PressureLayout,
    pub dirichlet: DirichletData,
    /// Right-hand side of the divergence rows before boundary elimination.
    pub div_rhs: Vec<f64>,
    pub pressure_integrals: Vec<f64>,
    pub domain_area: f64,
    /// Current interface positions, interleaved.
    pub x_old: Vec<f64>,
    pub lumped_normals: Vec<Point>,
}

impl CoupledSystem {
    pub fn num_interface_vertices(&self) -> usize {
        self.x_old.len() / 2
    }

    pub fn num_curvature(&self) -> usize {
        match self.params.scheme {
            Scheme::Main => self.num_interface_vertices(),
            Scheme::Dziuk => 2 * self.num_interface_vertices(),
        }
    }
}

/// Inputs describing one step's problem data.
pub struct ProblemData<'a> {
    pub mu: &'a [f64],
    pub force: Option<&'a (dyn Fn(&Point) -> Point + Sync)>,
    pub boundary: Option<&'a (dyn Fn(&Point) -> Point + Sync)>,
}

/// Assembles every block of the coupled system on the current meshes.
pub fn assemble_system(
    bulk: &BulkMesh,
    dofs: &DofLayout,
    iface: &InterfaceMesh,
    quad: &SurfaceQuadrature,
    data: &ProblemData,
    params: StepParams,
) -> Result<CoupledSystem> {
    if !(params.tau > 0.0) {
        return Err(Error::Contract(format!(
            "time step {} must be positive",
            params.tau
        )));
    }
    let normals = match params.scheme {
        Scheme::Main => iface.checked_vertex_normals()?,
        Scheme::Dziuk => iface.vertex_normals(),
    };
    let lumped: Vec<Point> = (0..iface.num_vertices())
        .map(|k| normals.lumped_normal(k))
        .collect();
    let mut stokes = assemble_stokes(bulk, dofs, data.mu, data.force)?;
    if let Some(x) = dofs.pressure.xfem_index {
        let row = assemble_xfem_row(bulk, dofs, iface, quad, &normals.segment_normals);
        for (a, v) in row.into_iter().enumerate() {
            if v != 0.0 {
                stokes.d.push(x, a, v);
            }
        }
    }
    let coupling = match params.scheme {
        Scheme::Main => assemble_surface_tension(quad, dofs, iface, &normals.segment_normals),
        Scheme::Dziuk => assemble_vector_coupling(quad, dofs, iface),
    };
    let interface = assemble_interface_blocks(iface, &lumped);
    let dirichlet = interpolate_dirichlet(bulk, dofs, data.boundary);
    let pressure_integrals = pressure_integrals(bulk, dofs, iface);
    let domain_area = bulk.domain().area();
    let div_rhs = pressure_integrals
        .iter()
        .map(|m| m / domain_area * dirichlet.flux)
        .collect();
    let x_old = iface.vertices().iter().flat_map(|p| [p.x, p.y]).collect();
    Ok(CoupledSystem {
        params,
        stokes,
        coupling,
        interface,
        pressure: dofs.pressure.clone(),
        dirichlet,
        div_rhs,
        pressure_integrals,
        domain_area,
        x_old,
        lumped_normals: lumped,
    })
}

/// Square system after boundary elimination and pressure pinning.
///
/// Unknown order: free velocity dofs, unpinned pressure dofs, curvature, interface velocity
/// `(X^{m+1} - X^m) / tau`.
#[derive(Clone, Debug)]
pub struct GlobalSystem {
    pub n: usize,
    pub matrix: SparseBlock,
    pub rhs: Vec<f64>,
    pub velocity_map: Vec<Option<usize>>,
    pub pressure_map: Vec<Option<usize>>,
    pub curvature_offset: usize,
    pub position_offset: usize,
}

/// Eliminates the boundary velocity dofs and pinned pressure dofs.
pub fn apply_dirichlet(sys: &CoupledSystem) -> GlobalSystem {
    let nvel = sys.stokes.f.len();
    let mut velocity_map = vec![None; nvel];
    let mut next = 0;
    for a in 0..nvel {
        if !sys.dirichlet.constrained[a] {
            velocity_map[a] = Some(next);
            next += 1;
        }
    }
    let mut pressure_map = vec![None; sys.pressure.len];
    for (c, slot) in pressure_map.iter_mut().enumerate() {
        if !sys.pressure.pinned.contains(&c) {
            *slot = Some(next);
            next += 1;
        }
    }
    let nk = sys.num_curvature();
    let kk = sys.num_interface_vertices();
    let curvature_offset = next;
    let position_offset = next + nk;
    let n = position_offset + 2 * kk;
    let g = &sys.dirichlet.values;
    let gamma = sys.params.gamma;
    let tau = sys.params.tau;
    let mut m = SparseBlock::new(n, n);
    m.entries.reserve(
        sys.stokes.a.entries.len()
            + 2 * sys.stokes.d.entries.len()
            + 2 * sys.coupling.entries.len()
            + 16 * kk,
    );
    let mut rhs = vec![0.0; n];
    for (a, r) in velocity_map.iter().enumerate() {
        if let Some(r) = r {
            rhs[*r] = sys.stokes.f[a];
        }
    }
    for &(a, b, v) in &sys.stokes.a.entries {
        if let Some(r) = velocity_map[a] {
            match velocity_map[b] {
                Some(c) => m.push(r, c, v),
                None => rhs[r] -= v * g[b],
            }
        }
    }
    for (c, r) in pressure_map.iter().enumerate() {
        if let Some(r) = r {
            rhs[*r] = sys.div_rhs[c];
        }
    }
    for &(c, a, v) in &sys.stokes.d.entries {
        let pc = pressure_map[c];
        match velocity_map[a] {
            Some(ua) => {
                if let Some(pc) = pc {
                    m.push(pc, ua, v);
                    m.push(ua, pc, -v);
                }
            }
            None => {
                if let Some(pc) = pc {
                    rhs[pc] -= v * g[a];
                }
            }
        }
    }
    // coupling: -gamma N^T kappa in the momentum rows, -N U in the position rows
    for &(k, a, v) in &sys.coupling.entries {
        let row_c = curvature_offset + k;
        match velocity_map[a] {
            Some(ua) => {
                if gamma != 0.0 {
                    m.push(ua, curvature_offset + k, -gamma * v);
                }
                m.push(row_c, ua, -v);
            }
            None => rhs[row_c] += v * g[a],
        }
    }
    let xs = sys.interface.stiffness.mul_vec(&sys.x_old);
    match sys.params.scheme {
        Scheme::Main => {
            // rows curvature_offset + k: W_k . V_k - (N U)_k = 0
            for &(k, c, v) in &sys.interface.lumped_normal.entries {
                m.push(curvature_offset + k, position_offset + c, v);
                // rows position_offset + c: W kappa + tau K V = -K X
                m.push(position_offset + c, curvature_offset + k, v);
            }
        }
        Scheme::Dziuk => {
            for &(i, j, v) in &sys.interface.mass.entries {
                m.push(curvature_offset + i, position_offset + j, v);
                m.push(position_offset + i, curvature_offset + j, v);
            }
        }
    }
    for &(i, j, v) in &sys.interface.stiffness.entries {
        m.push(position_offset + i, position_offset + j, tau * v);
    }
    for (i, x) in xs.iter().enumerate() {
        rhs[position_offset + i] = -x;
    }
    GlobalSystem {
        n,
        matrix: m,
        rhs,
        velocity_map,
        pressure_map,
        curvature_offset,
        position_offset,
    }
}
