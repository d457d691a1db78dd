use std::f64::consts::PI;

use proptest::prelude::*;
use stokes2p::config::parse_config;
use stokes2p::geometry::{clip_polygon_to_triangle, shoelace_area};
use stokes2p::interface::{regular_polygon, InterfaceMesh};
use stokes2p::io::{diagnostics_to_csv, parse_diagnostics_csv};
use stokes2p::stepper::StepDiagnostics;
use stokes2p::verification::{fitted_rate, interface_error};
use stokes2p::Point;

/// Star-shaped polygon from radial perturbations, always simple.
fn star(radii: &[f64]) -> InterfaceMesh {
    let n = radii.len();
    let pts = radii
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let a = 2.0 * PI * k as f64 / n as f64;
            Point::new(r * a.cos(), r * a.sin())
        })
        .collect();
    InterfaceMesh::from_polygon(pts).unwrap()
}

fn radii() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.3f64..0.6, 8..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interface_error_ignores_vertex_labels(r in radii(), shift in 0usize..40) {
        let c = star(&r);
        let mut v = c.vertices().to_vec();
        let k = shift % v.len();
        v.rotate_left(k);
        let d = InterfaceMesh::from_polygon(v).unwrap();
        prop_assert_eq!(interface_error(&c, 0.45), interface_error(&d, 0.45));
    }

    #[test]
    fn area_and_curvature_are_rigid_invariants(
        r in radii(),
        angle in 0.0f64..6.3,
        dx in -0.3f64..0.3,
        dy in -0.3f64..0.3,
    ) {
        let c = star(&r);
        let m = c.rotated(angle).translated(Point::new(dx, dy));
        let a0 = c.enclosed_area().unwrap();
        prop_assert!((m.enclosed_area().unwrap() - a0).abs() <= 1e-13);
        let k0 = c.discrete_curvature_standalone().unwrap();
        let k1 = m.discrete_curvature_standalone().unwrap();
        for (a, b) in k0.iter().zip(&k1) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
        prop_assert!((m.length() - c.length()).abs() <= 1e-13);
    }

    #[test]
    fn regular_polygon_curvature_scales_inversely(n in 8usize..300, r in 0.05f64..5.0) {
        let k = regular_polygon(n, r).unwrap().discrete_curvature_standalone().unwrap();
        let expected = -1.0 / (r * (PI / n as f64).cos());
        for v in k {
            prop_assert!((v - expected).abs() <= 1e-10 * expected.abs());
        }
    }

    #[test]
    fn clipping_never_grows_area(
        r in radii(),
        a in (-0.8f64..0.8, -0.8f64..0.8),
        b in (-0.8f64..0.8, -0.8f64..0.8),
        c in (-0.8f64..0.8, -0.8f64..0.8),
    ) {
        let tri = [Point::new(a.0, a.1), Point::new(b.0, b.1), Point::new(c.0, c.1)];
        let ta = shoelace_area(&tri).abs();
        prop_assume!(ta > 1e-3);
        let poly = star(&r).polygon();
        let part = shoelace_area(&clip_polygon_to_triangle(&poly, &tri)).abs();
        prop_assert!(part <= ta + 1e-12);
        prop_assert!(part <= shoelace_area(&poly).abs() + 1e-12);
    }

    #[test]
    fn clipping_partitions_over_a_grid(r in radii()) {
        // two triangles per cell of a 4x4 grid on (-1,1)^2
        let poly = star(&r).polygon();
        let mut total = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let (x0, y0, s) = (-1.0 + 0.5 * i as f64, -1.0 + 0.5 * j as f64, 0.5);
                let p00 = Point::new(x0, y0);
                let p10 = Point::new(x0 + s, y0);
                let p01 = Point::new(x0, y0 + s);
                let p11 = Point::new(x0 + s, y0 + s);
                for tri in [[p00, p10, p11], [p00, p11, p01]] {
                    total += shoelace_area(&clip_polygon_to_triangle(&poly, &tri)).abs();
                }
            }
        }
        prop_assert!((total - shoelace_area(&poly).abs()).abs() <= 1e-12);
    }

    #[test]
    fn diagnostics_round_trip_bitwise(
        rows in prop::collection::vec(prop::array::uniform10(-1e6f64..1e6), 1..20),
    ) {
        let diags: Vec<StepDiagnostics> = rows
            .iter()
            .enumerate()
            .map(|(m, v)| StepDiagnostics {
                m,
                t: v[0],
                length: v[1],
                dissipation: v[2],
                work: v[3],
                area: v[4],
                umax: v[5].abs(),
                kmin: v[6],
                kmax: v[7],
                equi_ratio: v[8].abs(),
                vol_proj_res: v[9] * 1e-20,
            })
            .collect();
        let back = parse_diagnostics_csv(&diagnostics_to_csv(&diags)).unwrap();
        prop_assert_eq!(back, diags);
    }

    #[test]
    fn fitted_rate_recovers_power_laws(p in 0.1f64..3.0, c in 1e-4f64..10.0) {
        let h = [0.4f64, 0.2, 0.1, 0.05];
        let e: Vec<f64> = h.iter().map(|h| c * h.powf(p)).collect();
        prop_assert!((fitted_rate(&h, &e).unwrap() - p).abs() <= 1e-10);
    }

    #[test]
    fn config_values_are_read_back(
        tau in 1e-5f64..1e-1,
        h_f in 0.01f64..0.2,
        ratio in 1.0f64..8.0,
        mu in 0.01f64..10.0,
        n in 8usize..512,
    ) {
        let text = format!(
            "# generated\nproblem = stationary_bubble\nn_gamma = {n}\nh_f = {h_f}\nh_c = {}\ntau = {tau}\nt_end = 1\nmu_minus = {mu}\n",
            h_f * ratio
        );
        let cfg = parse_config(&text).unwrap();
        prop_assert_eq!(cfg.n_gamma, n);
        prop_assert_eq!(cfg.tau, tau);
        prop_assert_eq!(cfg.h_f, h_f);
        prop_assert_eq!(cfg.h_c, h_f * ratio);
        prop_assert_eq!(cfg.mu_minus, mu);
    }
}
