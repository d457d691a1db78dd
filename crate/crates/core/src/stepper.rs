//! Time stepping of the coupled interface / Stokes evolution.

use std::sync::Arc;

use crate::assembly::{
    assemble_system, build_surface_quadrature_with, inner_phase_area, ProblemData, Scheme,
    StepParams,
};
use crate::bulk::{
    build_rectangle_mesh, discrete_viscosity, BulkMesh, Domain, ElementClassification,
    DEFAULT_ELEMENT_BUDGET,
};
use crate::error::{Error, Result};
use crate::fe::{DofLayout, ElementPair};
use crate::geometry::Point;
use crate::interface::{regular_polygon, InterfaceMesh};
use crate::solver::{solve_coupled, solve_eliminated, Solution, SolveReport, DEFAULT_TOL};

/// Space-time vector field `(z, t) -> v`.
pub type Field = Arc<dyn Fn(&Point, f64) -> Point + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialInterface {
    UniformCircle {
        n: usize,
        radius: f64,
    },
    /// Lower half circle resolved by `n - 1` vertices, upper half by the single vertex `(0, R)`.
    Fig4Nonuniform {
        n: usize,
        radius: f64,
    },
}

pub fn make_initial_interface(kind: InitialInterface) -> Result<InterfaceMesh> {
    let (n, radius) = match kind {
        InitialInterface::UniformCircle { n, radius }
        | InitialInterface::Fig4Nonuniform { n, radius } => (n, radius),
    };
    if n < 8 {
        return Err(Error::config(format!("n_gamma = {n} must be at least 8")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::config(format!("radius = {radius} must be positive")));
    }
    match kind {
        InitialInterface::UniformCircle { .. } => regular_polygon(n, radius),
        InitialInterface::Fig4Nonuniform { .. } => {
            let mut pts: Vec<Point> = (0..n - 1)
                .map(|i| {
                    let a = std::f64::consts::PI * (1.0 + i as f64 / (n - 2) as f64);
                    Point::new(radius * a.cos(), radius * a.sin())
                })
                .collect();
            pts.push(Point::new(0.0, radius));
            InterfaceMesh::from_polygon(pts)
        }
    }
}

/// Everything that defines a simulation apart from the initial interface.
#[derive(Clone)]
pub struct Setup {
    pub domain: Domain,
    pub pair: ElementPair,
    pub xfem: bool,
    pub scheme: Scheme,
    pub mu_minus: f64,
    pub mu_plus: f64,
    pub gamma: f64,
    pub tau: f64,
    pub t_end: f64,
    pub h_f: f64,
    pub h_c: f64,
    pub element_budget: usize,
    pub solver_tol: f64,
    /// Solve with the curvature eliminated locally instead of monolithically.
    pub eliminate_curvature: bool,
    pub force: Option<Field>,
    pub boundary: Option<Field>,
}

impl Setup {
    pub fn new(domain: Domain, tau: f64, t_end: f64, h: f64) -> Self {
        Setup {
            domain,
            pair: ElementPair::P2P1,
            xfem: false,
            scheme: Scheme::Main,
            mu_minus: 1.0,
            mu_plus: 1.0,
            gamma: 1.0,
            tau,
            t_end,
            h_f: h,
            h_c: h,
            element_budget: DEFAULT_ELEMENT_BUDGET,
            solver_tol: DEFAULT_TOL,
            eliminate_curvature: false,
            force: None,
            boundary: None,
        }
    }

    pub fn num_steps(&self) -> usize {
        (self.t_end / self.tau - 1e-9).ceil().max(0.0) as usize
    }

    pub fn adaptive(&self) -> bool {
        self.h_f < self.h_c
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    pub m: usize,
    pub t: f64,
    pub length: f64,
    pub dissipation: f64,
    pub work: f64,
    pub area: f64,
    pub umax: f64,
    pub kmin: f64,
    pub kmax: f64,
    pub equi_ratio: f64,
    pub vol_proj_res: f64,
}

/// Interface and bulk mesh at one time level.
#[derive(Clone, Debug)]
pub struct RunState {
    pub interface: InterfaceMesh,
    /// Bulk mesh adapted to `interface`.
    pub bulk: Arc<BulkMesh>,
    pub m: usize,
    pub t: f64,
}

/// Everything computed during one step, handed to run observers.
pub struct StepRecord {
    pub diagnostics: StepDiagnostics,
    /// Mesh the step was solved on (adapted to the old interface).
    pub bulk: Arc<BulkMesh>,
    pub dofs: DofLayout,
    pub classification: ElementClassification,
    pub solution: Solution,
    pub report: SolveReport,
    pub old_interface: InterfaceMesh,
    pub new_interface: InterfaceMesh,
    /// Coefficient of the enrichment function in the pressure.
    pub lambda: Option<f64>,
    pub inner_area: f64,
}

pub fn initial_state(setup: &Setup, interface: InterfaceMesh) -> Result<RunState> {
    validate_setup(setup)?;
    let base = build_rectangle_mesh(&setup.domain, setup.h_c)?;
    let bulk = if setup.adaptive() {
        base.adapt_to_interface(&interface, setup.h_f, setup.h_c, setup.element_budget)?
    } else {
        base
    };
    bulk.cut_interface(&interface)?;
    Ok(RunState {
        interface,
        bulk: Arc::new(bulk),
        m: 0,
        t: 0.0,
    })
}

fn validate_setup(s: &Setup) -> Result<()> {
    let mut errs = Vec::new();
    if !(s.mu_minus > 0.0 && s.mu_plus > 0.0) {
        errs.push("viscosities must be positive".to_string());
    }
    if !(s.gamma >= 0.0) {
        errs.push("gamma must be nonnegative".to_string());
    }
    if !(s.tau > 0.0) {
        errs.push("tau must be positive".to_string());
    }
    if !(s.t_end >= 0.0) {
        errs.push("t_end must be nonnegative".to_string());
    }
    if !(s.h_f > 0.0 && s.h_f <= s.h_c) {
        errs.push(format!(
            "h_f = {} and h_c = {} must satisfy 0 < h_f <= h_c",
            s.h_f, s.h_c
        ));
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs))
    }
}

pub fn initial_diagnostics(state: &RunState) -> Result<StepDiagnostics> {
    let curv = state
        .interface
        .discrete_curvature_standalone()
        .unwrap_or_default();
    Ok(StepDiagnostics {
        m: 0,
        t: state.t,
        length: state.interface.length(),
        area: state.interface.enclosed_area()?,
        kmin: curv.iter().copied().fold(f64::INFINITY, f64::min),
        kmax: curv.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        equi_ratio: state.interface.equidistribution_ratio(),
        ..Default::default()
    })
}

/// Advances one time step. The input state is left untouched on failure.
pub fn step(state: &RunState, setup: &Setup) -> Result<(RunState, StepRecord)> {
    let bulk = state.bulk.clone();
    let iface = &state.interface;
    let t_next = state.t + setup.tau;
    let cuts = bulk.cut_interface(iface)?;
    let classification = bulk.classify_with(iface, &cuts);
    let mu = discrete_viscosity(&classification, setup.mu_minus, setup.mu_plus)?;
    let dofs = DofLayout::new(&bulk, setup.pair, setup.xfem);
    let quad = build_surface_quadrature_with(&bulk, iface, &cuts, 3)?;
    let force_t = setup.force.clone().map(|f| move |z: &Point| f(z, t_next));
    let bound_t = setup
        .boundary
        .clone()
        .map(|g| move |z: &Point| g(z, t_next));
    let data = ProblemData {
        mu: &mu,
        force: force_t
            .as_ref()
            .map(|f| f as &(dyn Fn(&Point) -> Point + Sync)),
        boundary: bound_t
            .as_ref()
            .map(|g| g as &(dyn Fn(&Point) -> Point + Sync)),
    };
    let params = StepParams {
        scheme: setup.scheme,
        gamma: setup.gamma,
        tau: setup.tau,
    };
    let sys = assemble_system(&bulk, &dofs, iface, &quad, &data, params)?;
    let (solution, report) = if setup.eliminate_curvature {
        solve_eliminated(&sys, setup.solver_tol)?
    } else {
        solve_coupled(&sys, setup.solver_tol)?
    };

    let new_vertices: Vec<Point> = iface
        .vertices()
        .iter()
        .zip(&solution.displacement)
        .map(|(x, d)| x + d)
        .collect();
    for v in &new_vertices {
        if !setup.domain.contains(v, 1e-12) {
            return Err(Error::Geometry(format!(
                "interface vertex ({}, {}) left the domain at step {}",
                v.x,
                v.y,
                state.m + 1
            )));
        }
    }
    let new_iface = iface.with_vertices(new_vertices)?;
    if setup.scheme == Scheme::Main {
        new_iface.checked_vertex_normals()?;
    }

    let u = &solution.velocity;
    let au = sys.stokes.a.mul_vec(u);
    let dissipation = setup.tau * u.iter().zip(&au).map(|(a, b)| a * b).sum::<f64>();
    let work = setup.tau * u.iter().zip(&sys.stokes.f).map(|(a, b)| a * b).sum::<f64>();
    let umax = u
        .chunks(2)
        .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
        .fold(0.0, f64::max);
    let kappa: Vec<f64> = match setup.scheme {
        Scheme::Main => solution.curvature.clone(),
        Scheme::Dziuk => {
            let nf = iface.vertex_normals();
            solution
                .curvature
                .chunks(2)
                .zip(&nf.omega)
                .map(|(c, w)| {
                    let n = w.norm();
                    if n > 0.0 {
                        (c[0] * w.x + c[1] * w.y) / n
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    let normals = iface.segment_normals();
    let vol_proj_res: f64 = iface
        .segments()
        .iter()
        .enumerate()
        .map(|(j, &[a, b])| {
            0.5 * iface.segment_length(j)
                * (solution.displacement[a] + solution.displacement[b]).dot(&normals[j])
        })
        .sum();
    let length_old = iface.length();
    let length = new_iface.length();
    let diagnostics = StepDiagnostics {
        m: state.m + 1,
        t: t_next,
        length,
        dissipation,
        work,
        area: new_iface.enclosed_area()?,
        umax,
        kmin: kappa.iter().copied().fold(f64::INFINITY, f64::min),
        kmax: kappa.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        equi_ratio: new_iface.equidistribution_ratio(),
        vol_proj_res,
    };
    if setup.force.is_none() && setup.boundary.is_none() {
        let lhs = setup.gamma * length + dissipation;
        let rhs = setup.gamma * length_old + work;
        let scale = (setup.gamma * length_old)
            .max(dissipation)
            .max(f64::MIN_POSITIVE);
        if lhs > rhs + 1e-10 * scale {
            return Err(Error::Stability {
                step: state.m + 1,
                lhs,
                rhs,
            });
        }
    }

    let next_bulk = if setup.adaptive() {
        Arc::new(bulk.adapt_to_interface(&new_iface, setup.h_f, setup.h_c, setup.element_budget)?)
    } else {
        bulk.clone()
    };
    let lambda = dofs.pressure.xfem_index.map(|x| solution.pressure[x]);
    let inner_area = inner_phase_area(&bulk, iface);
    let next = RunState {
        interface: new_iface.clone(),
        bulk: next_bulk,
        m: state.m + 1,
        t: t_next,
    };
    Ok((
        next,
        StepRecord {
            diagnostics,
            bulk,
            dofs,
            classification,
            solution,
            report,
            old_interface: iface.clone(),
            new_interface: new_iface,
            lambda,
            inner_area,
        },
    ))
}

pub struct RunSummary {
    /// Initial row followed by one row per step.
    pub diagnostics: Vec<StepDiagnostics>,
    pub final_state: RunState,
}

/// Runs all steps, calling `observer` after each one; the observer may abort the run.
pub fn run(
    setup: &Setup,
    interface: InterfaceMesh,
    mut observer: impl FnMut(&StepRecord) -> Result<()>,
) -> Result<RunSummary> {
    let mut state = initial_state(setup, interface)?;
    let mut diagnostics = vec![initial_diagnostics(&state)?];
    for _ in 0..setup.num_steps() {
        let (next, record) = step(&state, setup)?;
        observer(&record)?;
        diagnostics.push(record.diagnostics);
        state = next;
    }
    Ok(RunSummary {
        diagnostics,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig4_curve_construction() {
        let c = make_initial_interface(InitialInterface::Fig4Nonuniform { n: 64, radius: 0.5 })
            .unwrap();
        assert_eq!(c.num_vertices(), 64);
        let lens = c.segment_lengths();
        let max = lens.iter().copied().fold(0.0, f64::max);
        let min = lens.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(max / min > 10.0);
        // the two long edges touch the polar vertex
        let polar = c
            .vertices()
            .iter()
            .position(|p| (p - Point::new(0.0, 0.5)).norm() < 1e-15)
            .unwrap();
        for s in c.star(polar) {
            assert!((c.segment_length(s) - max).abs() < 1e-15);
        }
        assert!(
            make_initial_interface(InitialInterface::UniformCircle { n: 7, radius: 0.5 }).is_err()
        );
    }

    #[test]
    fn uniform_circle_area() {
        let c =
            make_initial_interface(InitialInterface::UniformCircle { n: 64, radius: 0.5 }).unwrap();
        let exact = 32.0 * 0.25 * (2.0 * std::f64::consts::PI / 64.0).sin();
        assert!((c.enclosed_area().unwrap() - exact).abs() < 1e-15);
        assert!((c.equidistribution_ratio() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_steps_give_initial_row_only() {
        let s = Setup::new(Domain::unit_square(), 0.1, 0.0, 0.5);
        let c =
            make_initial_interface(InitialInterface::UniformCircle { n: 16, radius: 0.5 }).unwrap();
        let r = run(&s, c, |_| Ok(())).unwrap();
        assert_eq!(r.diagnostics.len(), 1);
        assert_eq!(r.final_state.m, 0);
    }

    #[test]
    fn stationary_xfem_circle_is_fixed_point() {
        let mut s = Setup::new(Domain::unit_square(), 1e-2, 3e-2, 2f64.sqrt() / 4.0);
        s.xfem = true;
        let c =
            make_initial_interface(InitialInterface::UniformCircle { n: 64, radius: 0.5 }).unwrap();
        let x0 = c.vertices().to_vec();
        let r = run(&s, c, |rec| {
            assert!(
                rec.diagnostics.umax < 1e-10,
                "umax {}",
                rec.diagnostics.umax
            );
            Ok(())
        })
        .unwrap();
        for (a, b) in r.final_state.interface.vertices().iter().zip(&x0) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}
