//! Radially symmetric exact solutions, discrete error norms and convergence tables.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bulk::{BulkMesh, Domain, ElementLabel};
use crate::error::{Error, Result};
use crate::fe::{DofLayout, TRI_QUAD4};
use crate::geometry::{
    barycentric, clip_polygon_to_convex, clip_polygon_to_triangle, orient, point_segment_distance,
    shoelace_area, Point,
};
use crate::interface::InterfaceMesh;
use crate::stepper::{run, Field, Setup, StepRecord};

/// Vertices of the polygon standing in for the exact circle in the pressure error.
pub const DEFAULT_CIRCLE_VERTICES: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExactKind {
    /// Circle at rest, `u = 0`.
    Stationary,
    /// Circle expanding under the source flow `u = alpha z / |z|^2`.
    Expanding,
}

#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub kind: ExactKind,
    pub r0: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub mu_minus: f64,
    pub mu_plus: f64,
    pub domain: Domain,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactValues {
    pub u: Point,
    pub p: f64,
    pub r: f64,
    pub lambda: f64,
}

impl ExactSolution {
    pub fn stationary(r0: f64, gamma: f64, domain: Domain) -> Self {
        ExactSolution {
            kind: ExactKind::Stationary,
            r0,
            gamma,
            alpha: 0.0,
            mu_minus: 1.0,
            mu_plus: 1.0,
            domain,
        }
    }

    /// The origin is a singularity of the flow, so the domain must have a hole around it.
    pub fn expanding(
        r0: f64,
        alpha: f64,
        gamma: f64,
        mu_minus: f64,
        mu_plus: f64,
        domain: Domain,
    ) -> Result<Self> {
        match domain.hole {
            Some(h) if h.x0 < 0.0 && h.x1 > 0.0 && h.y0 < 0.0 && h.y1 > 0.0 => {}
            _ => {
                return Err(Error::config(
                    "expanding_bubble requires the hole domain (origin excluded)",
                ))
            }
        }
        Ok(ExactSolution {
            kind: ExactKind::Expanding,
            r0,
            gamma,
            alpha,
            mu_minus,
            mu_plus,
            domain,
        })
    }

    pub fn radius(&self, t: f64) -> f64 {
        match self.kind {
            ExactKind::Stationary => self.r0,
            ExactKind::Expanding => (self.r0 * self.r0 + 2.0 * self.alpha * t).sqrt(),
        }
    }

    /// Pressure jump across the circle.
    pub fn lambda(&self, t: f64) -> f64 {
        let r = self.radius(t);
        match self.kind {
            ExactKind::Stationary => self.gamma / r,
            ExactKind::Expanding => {
                self.gamma / r + 2.0 * self.alpha * (self.mu_plus - self.mu_minus) / (r * r)
            }
        }
    }

    /// Area of the inner phase inside the domain.
    pub fn inner_area(&self, t: f64) -> f64 {
        let r = self.radius(t);
        PI * r * r - self.domain.hole.map_or(0.0, |h| h.area())
    }

    pub fn velocity(&self, z: &Point, _t: f64) -> Result<Point> {
        match self.kind {
            ExactKind::Stationary => Ok(Point::zeros()),
            ExactKind::Expanding => {
                let n2 = z.norm_squared();
                if n2 == 0.0 {
                    return Err(Error::Domain(
                        "expanding velocity is singular at the origin".into(),
                    ));
                }
                Ok(z * (self.alpha / n2))
            }
        }
    }

    /// Constant pressure outside the inner phase; the inner value is this plus `lambda`.
    pub fn outer_pressure(&self, t: f64) -> f64 {
        -self.lambda(t) * self.inner_area(t) / self.domain.area()
    }

    /// The continuous part `p - lambda chi`, constant in space.
    pub fn continuous_pressure(&self, t: f64) -> f64 {
        self.outer_pressure(t)
    }

    pub fn pressure(&self, z: &Point, t: f64) -> Result<f64> {
        if self.kind == ExactKind::Expanding && z.norm_squared() == 0.0 {
            return Err(Error::Domain(
                "expanding pressure is undefined at the origin".into(),
            ));
        }
        let inside = z.norm() < self.radius(t);
        Ok(self.outer_pressure(t) + if inside { self.lambda(t) } else { 0.0 })
    }

    pub fn eval(&self, z: &Point, t: f64) -> Result<ExactValues> {
        if t < 0.0 {
            return Err(Error::Contract(format!("negative time {t}")));
        }
        Ok(ExactValues {
            u: self.velocity(z, t)?,
            p: self.pressure(z, t)?,
            r: self.radius(t),
            lambda: self.lambda(t),
        })
    }

    /// Boundary datum `g = u` on the domain boundary, if the solution moves.
    pub fn boundary_field(&self) -> Option<Field> {
        match self.kind {
            ExactKind::Stationary => None,
            ExactKind::Expanding => {
                let me = self.clone();
                Some(Arc::new(move |z: &Point, t: f64| {
                    me.velocity(z, t).unwrap_or_else(|_| Point::zeros())
                }))
            }
        }
    }
}

/// `max_k | |q_k| - r |`: distance of each vertex to the exact circle.
pub fn interface_error(iface: &InterfaceMesh, r: f64) -> f64 {
    iface
        .vertices()
        .iter()
        .map(|q| (q.norm() - r).abs())
        .fold(0.0, f64::max)
}

/// Nodal `max |U - I_2 u|` over all P2 nodes.
pub fn velocity_error(dofs: &DofLayout, u: &[f64], sol: &ExactSolution, t: f64) -> Result<f64> {
    let mut err: f64 = 0.0;
    for (node, z) in dofs.node_coords.iter().enumerate() {
        let e = sol.velocity(z, t)?;
        let d = Point::new(u[2 * node] - e.x, u[2 * node + 1] - e.y);
        err = err.max(d.norm());
    }
    Ok(err)
}

/// Squared L2 pressure errors of one time level.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PressureErrorSq {
    /// `|P - p|^2`.
    pub full: f64,
    /// `|P_c - p_c|^2`, enrichment part removed on both sides.
    pub continuous: f64,
}

/// Smallest and largest distance from the origin over a triangle.
fn radial_range(tri: &[Point; 3]) -> (f64, f64) {
    let rmax = tri.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let l = barycentric(&Point::zeros(), &tri[0], &tri[1], &tri[2]);
    let rmin = if l.iter().all(|&x| x >= 0.0) {
        0.0
    } else {
        (0..3)
            .map(|i| point_segment_distance(&Point::zeros(), &tri[i], &tri[(i + 1) % 3]))
            .fold(f64::INFINITY, f64::min)
    };
    (rmin, rmax)
}

/// Signed edge-midpoint rule, exact for quadratics.
fn midpoint_rule(p: &[Point; 3], f: &impl Fn(&Point) -> f64) -> f64 {
    let area = 0.5 * orient(&p[0], &p[1], &p[2]);
    (0..3)
        .map(|q| f(&((p[q] + p[(q + 1) % 3]) * 0.5)))
        .sum::<f64>()
        * area
        / 3.0
}

/// Signed integral over a clipped polygon by fan triangulation.
fn polygon_integral(poly: &[Point], f: &impl Fn(&Point) -> f64) -> f64 {
    (1..poly.len().saturating_sub(1))
        .map(|i| midpoint_rule(&[poly[0], poly[i], poly[i + 1]], f))
        .sum()
}

/// Counterclockwise regular polygon with the same area as the circle of radius `r`.
pub fn equal_area_circle(r: f64, n: usize) -> Vec<Point> {
    let step = 2.0 * PI / n as f64;
    let rho = r * (2.0 * PI / (n as f64 * step.sin())).sqrt();
    (0..n)
        .map(|i| {
            let a = step * i as f64;
            Point::new(rho * a.cos(), rho * a.sin())
        })
        .collect()
}

/// Integrates the pressure errors over the mesh of one step.
///
/// Both phases are resolved by clipping: the discrete inner phase is the interface polygon,
/// the exact one an equal-area regular polygon with `circle_vertices` vertices. With `g` the
/// standard part minus the outer exact value,
///
/// ```text
/// |g + lambda_h chi_h - lambda chi|^2 = g^2 + chi_h (lambda_h^2 + 2 g lambda_h)
///     + chi (lambda^2 - 2 g lambda) - 2 lambda_h lambda chi_h chi
/// ```
///
/// and every term is a polynomial over a polygon.
#[allow(clippy::too_many_arguments)]
pub fn pressure_error_sq(
    bulk: &BulkMesh,
    dofs: &DofLayout,
    pressure: &[f64],
    labels: &[ElementLabel],
    iface: &InterfaceMesh,
    sol: &ExactSolution,
    t: f64,
    circle_vertices: usize,
) -> PressureErrorSq {
    let lambda_h = dofs.pressure.xfem_index.map_or(0.0, |i| pressure[i]);
    let r = sol.radius(t);
    let lam = sol.lambda(t);
    let p_out = sol.outer_pressure(t);
    let pc = sol.continuous_pressure(t);
    let polygon = iface.polygon();
    let orientation = shoelace_area(&polygon).signum();
    let circle = equal_area_circle(r, circle_vertices);
    let rho = circle[0].norm();
    let rho_in = rho * (PI / circle_vertices as f64).cos();
    (0..bulk.num_triangles())
        .into_par_iter()
        .map(|k| {
            let mut tri = bulk.triangle_points(k);
            if orient(&tri[0], &tri[1], &tri[2]) < 0.0 {
                tri.swap(1, 2);
            }
            let area = bulk.area(k);
            let continuous: f64 = TRI_QUAD4
                .iter()
                .map(|(l, w)| {
                    w * area * (dofs.eval_pressure_standard(bulk, pressure, k, l) - pc).powi(2)
                })
                .sum();
            let shift = if labels[k] == ElementLabel::Interior {
                lambda_h
            } else {
                0.0
            };
            let g = |z: &Point| {
                let l = barycentric(z, &tri[0], &tri[1], &tri[2]);
                dofs.eval_pressure_standard(bulk, pressure, k, &l) + shift - p_out
            };
            let mut full = midpoint_rule(&tri, &|z| g(z).powi(2));
            let (rmin, rmax) = radial_range(&tri);
            let in_circle = if rmax <= rho_in {
                Some(tri.to_vec())
            } else if rmin >= rho {
                None
            } else {
                Some(clip_polygon_to_convex(&tri, &circle))
            };
            if let Some(c) = &in_circle {
                full += polygon_integral(c, &|z| lam * (lam - 2.0 * g(z)));
            }
            if labels[k] == ElementLabel::Interfacial {
                let inner = clip_polygon_to_triangle(&polygon, &tri);
                full +=
                    orientation * polygon_integral(&inner, &|z| lambda_h * (lambda_h + 2.0 * g(z)));
                if in_circle.is_some() {
                    let both = clip_polygon_to_convex(&inner, &circle);
                    full -= orientation * 2.0 * lambda_h * lam * shoelace_area(&both);
                }
            }
            PressureErrorSq { full, continuous }
        })
        .reduce(PressureErrorSq::default, |a, b| PressureErrorSq {
            full: a.full + b.full,
            continuous: a.continuous + b.continuous,
        })
}

/// Which pressure errors to accumulate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PressureMode {
    None,
    Full,
    /// Full error plus the continuous part and the jump; needs the enrichment.
    Split,
}

/// Errors of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LevelErrors {
    pub err_x: f64,
    pub err_u: f64,
    pub err_p: Option<f64>,
    pub err_pc: Option<f64>,
    pub err_lambda: Option<f64>,
    pub final_radius_error: f64,
    pub steps: usize,
}

/// Run observer that accumulates the error norms step by step.
pub struct ErrorAccumulator {
    sol: ExactSolution,
    tau: f64,
    mode: PressureMode,
    circle_vertices: usize,
    errors: LevelErrors,
    p_sq: f64,
    pc_sq: f64,
    lambda: f64,
}

impl ErrorAccumulator {
    pub fn new(sol: ExactSolution, tau: f64, mode: PressureMode, xfem: bool) -> Result<Self> {
        if mode == PressureMode::Split && !xfem {
            return Err(Error::Contract(
                "split pressure errors need the enrichment".into(),
            ));
        }
        Ok(ErrorAccumulator {
            sol,
            tau,
            mode,
            circle_vertices: DEFAULT_CIRCLE_VERTICES,
            errors: LevelErrors::default(),
            p_sq: 0.0,
            pc_sq: 0.0,
            lambda: 0.0,
        })
    }

    pub fn with_circle_vertices(mut self, n: usize) -> Self {
        self.circle_vertices = n;
        self
    }

    pub fn observe(&mut self, rec: &StepRecord) -> Result<()> {
        let t = rec.diagnostics.t;
        let r = self.sol.radius(t);
        let ex = interface_error(&rec.new_interface, r);
        self.errors.err_x = self.errors.err_x.max(ex);
        self.errors.final_radius_error = ex;
        let eu = velocity_error(&rec.dofs, &rec.solution.velocity, &self.sol, t)?;
        self.errors.err_u = self.errors.err_u.max(eu);
        if self.mode != PressureMode::None {
            let e = pressure_error_sq(
                &rec.bulk,
                &rec.dofs,
                &rec.solution.pressure,
                &rec.classification.labels,
                &rec.old_interface,
                &self.sol,
                t,
                self.circle_vertices,
            );
            self.p_sq += self.tau * e.full;
            self.pc_sq += self.tau * e.continuous;
            if let Some(l) = rec.lambda {
                self.lambda = self.lambda.max((l - self.sol.lambda(t)).abs());
            }
        }
        self.errors.steps += 1;
        Ok(())
    }

    pub fn finish(&self) -> LevelErrors {
        let mut e = self.errors;
        if self.mode != PressureMode::None {
            e.err_p = Some(self.p_sq.sqrt());
        }
        if self.mode == PressureMode::Split {
            e.err_pc = Some(self.pc_sq.sqrt());
            e.err_lambda = Some(self.lambda);
        }
        e
    }
}

/// One level of a convergence study.
#[derive(Clone)]
pub struct LevelSpec {
    pub h_label: String,
    /// Mesh size used for the rate fit.
    pub h: f64,
    pub setup: Setup,
    pub interface: InterfaceMesh,
}

#[derive(Clone, Debug)]
pub struct ErrorRow {
    pub level: usize,
    pub h_label: String,
    pub h: f64,
    pub tau: f64,
    pub errors: LevelErrors,
    /// Successive rates for X, U and P; `None` on the first row.
    pub rates: [Option<f64>; 3],
}

#[derive(Clone, Debug)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
    pub split: bool,
    /// Least-squares slopes of log error against log h for X, U and P.
    pub fitted: [Option<f64>; 3],
}

/// Slope of the least-squares line through `(log h, log e)`; `None` with fewer than two usable points.
pub fn fitted_rate(h: &[f64], e: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(e)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

fn successive_rate(h0: f64, h1: f64, e0: f64, e1: f64) -> Option<f64> {
    (e0 > 0.0 && e1 > 0.0 && h0 != h1).then(|| (e0 / e1).ln() / (h0 / h1).ln())
}

impl ErrorReport {
    pub fn from_rows(mut rows: Vec<ErrorRow>, split: bool) -> Self {
        let pick = |e: &LevelErrors, c: usize| match c {
            0 => e.err_x,
            1 => e.err_u,
            _ => e.err_p.unwrap_or(0.0),
        };
        for i in 0..rows.len() {
            rows[i].rates = if i == 0 {
                [None; 3]
            } else {
                let (a, b) = (&rows[i - 1], &rows[i]);
                std::array::from_fn(|c| {
                    successive_rate(a.h, b.h, pick(&a.errors, c), pick(&b.errors, c))
                })
            };
        }
        let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let fitted = std::array::from_fn(|c| {
            let e: Vec<f64> = rows.iter().map(|r| pick(&r.errors, c)).collect();
            fitted_rate(&h, &e)
        });
        ErrorReport {
            rows,
            split,
            fitted,
        }
    }

    pub fn header(&self) -> String {
        let mut h = String::from("level,h_label,tau,err_X,err_U,err_P");
        if self.split {
            h.push_str(",err_Pc,err_lambda");
        }
        h.push_str(",rate_X,rate_U,rate_P");
        h
    }

    /// Table CSV with one row per level and a final `fit` row holding the least-squares rates.
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.5e}")).unwrap_or_default();
        let mut out = self.header();
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{:.5e},{:.5e},{:.5e},{}",
                r.level,
                r.h_label,
                r.tau,
                r.errors.err_x,
                r.errors.err_u,
                f(r.errors.err_p)
            );
            if self.split {
                let _ = write!(out, ",{},{}", f(r.errors.err_pc), f(r.errors.err_lambda));
            }
            let _ = writeln!(
                out,
                ",{},{},{}",
                f(r.rates[0]),
                f(r.rates[1]),
                f(r.rates[2])
            );
        }
        let blanks = if self.split { 7 } else { 5 };
        let _ = writeln!(
            out,
            "fit{},{},{},{}",
            ",".repeat(blanks),
            f(self.fitted[0]),
            f(self.fitted[1]),
            f(self.fitted[2])
        );
        out
    }
}

/// Runs one level and returns its errors.
pub fn run_level(spec: &LevelSpec, sol: &ExactSolution, mode: PressureMode) -> Result<LevelErrors> {
    let mut acc = ErrorAccumulator::new(sol.clone(), spec.setup.tau, mode, spec.setup.xfem)?;
    run(&spec.setup, spec.interface.clone(), |rec| acc.observe(rec))?;
    Ok(acc.finish())
}

/// Runs every level (in parallel when `parallel`) and fits rates.
pub fn convergence_study(
    levels: &[LevelSpec],
    sol: &ExactSolution,
    mode: PressureMode,
    parallel: bool,
) -> Result<ErrorReport> {
    let work = |(i, spec): (usize, &LevelSpec)| -> Result<ErrorRow> {
        log::info!("level {} (h_label {}) started", i, spec.h_label);
        let errors = run_level(spec, sol, mode)?;
        Ok(ErrorRow {
            level: i,
            h_label: spec.h_label.clone(),
            h: spec.h,
            tau: spec.setup.tau,
            errors,
            rates: [None; 3],
        })
    };
    let rows: Result<Vec<ErrorRow>> = if parallel {
        levels.par_iter().enumerate().map(work).collect()
    } else {
        levels.iter().enumerate().map(work).collect()
    };
    Ok(ErrorReport::from_rows(rows?, mode == PressureMode::Split))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bulk::build_rectangle_mesh;
    use crate::fe::ElementPair;
    use crate::interface::regular_polygon;

    fn hole() -> Domain {
        Domain::square_with_hole()
    }

    #[test]
    fn stationary_values() {
        let s = ExactSolution::stationary(0.5, 1.0, Domain::unit_square());
        let v = s.eval(&Point::new(0.1, 0.0), 0.3).unwrap();
        assert_eq!(v.lambda, 2.0);
        let expected = 2.0 * (1.0 - 0.25 * PI * 0.25);
        assert!((v.p - expected).abs() < 1e-15);
        let out = s.pressure(&Point::new(0.9, 0.0), 0.0).unwrap();
        assert!((out + 2.0 * 0.25 * PI * 0.25).abs() < 1e-15);
    }

    #[test]
    fn expanding_values() {
        let s = ExactSolution::expanding(0.5, 0.15, 1.0, 1.0, 1.0, hole()).unwrap();
        assert!((s.radius(1.0) - 0.55f64.sqrt()).abs() < 1e-15);
        assert!((s.lambda(1.0) - 1.0 / 0.55f64.sqrt()).abs() < 1e-15);
        let m = ExactSolution::expanding(0.5, 0.15, 1.0, 0.1, 1.0, hole()).unwrap();
        assert!((m.lambda(1.0) - 0.55f64.powf(-0.5) - 0.27 / 0.55).abs() < 1e-14);
        assert!(matches!(
            s.eval(&Point::zeros(), 0.0),
            Err(Error::Domain(_))
        ));
        assert!(ExactSolution::expanding(0.5, 0.15, 1.0, 1.0, 1.0, Domain::unit_square()).is_err());
    }

    #[test]
    fn expanding_velocity_is_divergence_free() {
        let s = ExactSolution::expanding(0.5, 0.15, 1.0, 1.0, 1.0, hole()).unwrap();
        let z = Point::new(0.6, -0.3);
        let e = 1e-5;
        let dx = (s.velocity(&(z + Point::new(e, 0.0)), 0.0).unwrap()
            - s.velocity(&(z - Point::new(e, 0.0)), 0.0).unwrap())
            / (2.0 * e);
        let dy = (s.velocity(&(z + Point::new(0.0, e)), 0.0).unwrap()
            - s.velocity(&(z - Point::new(0.0, e)), 0.0).unwrap())
            / (2.0 * e);
        assert!((dx.x + dy.y).abs() < 1e-8);
    }

    #[test]
    fn interface_error_cases() {
        let c = regular_polygon(32, 0.5).unwrap();
        assert!(interface_error(&c, 0.5) < 1e-15);
        let mut v = c.vertices().to_vec();
        v[3] *= 1.0 + 0.01 / 0.5;
        let d = c.with_vertices(v).unwrap();
        assert!((interface_error(&d, 0.5) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn injected_exact_velocity_has_zero_error() {
        let s = ExactSolution::expanding(0.5, 0.15, 1.0, 1.0, 1.0, hole()).unwrap();
        let bulk = build_rectangle_mesh(&hole(), 0.3).unwrap();
        let dofs = DofLayout::new(&bulk, ElementPair::P2P1, false);
        let mut u = vec![0.0; dofs.num_velocity()];
        for (n, z) in dofs.node_coords.iter().enumerate() {
            let v = s.velocity(z, 0.2).unwrap();
            u[2 * n] = v.x;
            u[2 * n + 1] = v.y;
        }
        assert_eq!(velocity_error(&dofs, &u, &s, 0.2).unwrap(), 0.0);
    }

    fn exact_discrete_pressure(s: &ExactSolution, dofs: &DofLayout) -> Vec<f64> {
        // P1 outer constant plus the jump carried by the enrichment coefficient
        let mut p = vec![0.0; dofs.pressure.len];
        for v in 0..dofs.num_vertices {
            p[v] = s.outer_pressure(0.0);
        }
        p[dofs.pressure.xfem_index.unwrap()] = s.lambda(0.0);
        p
    }

    #[test]
    fn exact_pressure_has_small_error() {
        let s = ExactSolution::stationary(0.5, 1.0, Domain::unit_square());
        let bulk = build_rectangle_mesh(&Domain::unit_square(), 0.2).unwrap();
        let c = regular_polygon(512, 0.5).unwrap();
        let labels = bulk.classify_elements(&c).unwrap();
        let dofs = DofLayout::new(&bulk, ElementPair::P2P1, true);
        let p = exact_discrete_pressure(&s, &dofs);
        let e = pressure_error_sq(&bulk, &dofs, &p, &labels.labels, &c, &s, 0.0, 1 << 14);
        // only the sliver between polygon and circle contributes, with jump 2
        let sliver = PI * 0.25 - c.enclosed_area().unwrap();
        assert!(
            (e.full - 4.0 * sliver).abs() < 1e-3 * 4.0 * sliver,
            "{} {}",
            e.full,
            4.0 * sliver
        );
        assert!(e.continuous < 1e-24);
    }

    #[test]
    fn chi_squared_recovers_polygon_area() {
        // integrating chi^2 of the discrete inner phase recovers the enclosed area
        let s = ExactSolution::stationary(1e-9, 0.0, Domain::unit_square());
        let bulk = build_rectangle_mesh(&Domain::unit_square(), 0.25).unwrap();
        let c = regular_polygon(128, 0.5).unwrap();
        let labels = bulk.classify_elements(&c).unwrap();
        let dofs = DofLayout::new(&bulk, ElementPair::P2P1, true);
        let mut p = vec![0.0; dofs.pressure.len];
        p[dofs.pressure.xfem_index.unwrap()] = 1.0;
        let e = pressure_error_sq(
            &bulk,
            &dofs,
            &p,
            &labels.labels,
            &c,
            &s,
            0.0,
            DEFAULT_CIRCLE_VERTICES,
        );
        assert!(
            (e.full - c.enclosed_area().unwrap()).abs() < 1e-12,
            "{}",
            e.full
        );
    }

    #[test]
    fn equal_area_circle_area() {
        for n in [64, 1000, 4096] {
            let c = equal_area_circle(0.7, n);
            assert!((shoelace_area(&c) - PI * 0.49).abs() < 1e-13);
        }
    }

    #[test]
    fn rates_and_csv() {
        let mk = |i: usize, h: f64, ex: f64| ErrorRow {
            level: i,
            h_label: format!("{}", 1.0 / h),
            h,
            tau: 1e-2,
            errors: LevelErrors {
                err_x: ex,
                err_u: 2.0 * ex,
                err_p: Some(ex.sqrt()),
                ..Default::default()
            },
            rates: [None; 3],
        };
        let rep = ErrorReport::from_rows(
            vec![mk(0, 0.5, 0.1), mk(1, 0.25, 0.05), mk(2, 0.125, 0.025)],
            false,
        );
        assert!((rep.rows[1].rates[0].unwrap() - 1.0).abs() < 1e-12);
        assert!((rep.rows[2].rates[2].unwrap() - 0.5).abs() < 1e-12);
        assert!((rep.fitted[1].unwrap() - 1.0).abs() < 1e-12);
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "level,h_label,tau,err_X,err_U,err_P,rate_X,rate_U,rate_P"
        );
        assert!(lines[1].starts_with("0,2,1.00000e-2,1.00000e-1,2.00000e-1,"));
        assert!(lines[1].ends_with(",,,"));
        assert_eq!(lines[4].split(',').count(), 9);
        let single = ErrorReport::from_rows(vec![mk(0, 0.5, 0.1)], false);
        assert_eq!(single.rows.len(), 1);
        assert!(single.fitted.iter().all(|r| r.is_none()));
    }

    #[test]
    fn fitted_rate_of_power_law() {
        let h = [0.4, 0.2, 0.1, 0.05];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powf(1.7)).collect();
        assert!((fitted_rate(&h, &e).unwrap() - 1.7).abs() < 1e-12);
        assert!(fitted_rate(&h[..1], &e[..1]).is_none());
    }

    #[test]
    fn split_mode_requires_enrichment() {
        let s = ExactSolution::stationary(0.5, 1.0, Domain::unit_square());
        assert!(matches!(
            ErrorAccumulator::new(s, 0.1, PressureMode::Split, false),
            Err(Error::Contract(_))
        ));
    }
}
