use std::f64::consts::PI;

use ferronema_core::corrector::{rotated_problem, solve_cell, CellProblem, CellResolution};
use ferronema_core::effective::{closed_form_a, closed_form_m, coupling_density};
use ferronema_core::energy::{minimize, MinimizeOptions};
use ferronema_core::ensemble::{generate_periodic, generate_random, scaling_violations, spheroids_overlap};
use ferronema_core::geometry::{anchoring_tensor, make_surface_quadrature};
use ferronema_core::io::format_float;
use ferronema_core::magnetics::{exact_exterior_potential, pair_interaction_energy_with, MagnetizedSpheroid};
use ferronema_core::{Domain, Functional, Grid, ParticleEnsemble, Rotation, ScalingParams, Spheroid, Vec3, VectorField};
use proptest::prelude::*;

fn unit_vec() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, 0.0..2.0 * PI).prop_map(|(z, phi)| {
        let s = (1.0 - z * z).sqrt();
        Vec3::new(s * phi.cos(), s * phi.sin(), z)
    })
}

fn rotation() -> impl Strategy<Value = Rotation> {
    (unit_vec(), -PI..PI).prop_map(|(axis, angle)| Rotation::from_axis_angle(&axis, angle))
}

/// Prolate (or spherical) semi-axes with `a ≥ b`.
fn axes() -> impl Strategy<Value = (f64, f64)> {
    (0.1..2.0f64, 1.0..6.0f64).prop_map(|(b, ratio)| (b * ratio, b))
}

fn spheroid() -> impl Strategy<Value = Spheroid> {
    (axes(), rotation(), prop::array::uniform3(-1.0..1.0f64))
        .prop_map(|((a, b), q, c)| Spheroid::new(Vec3::from(c), a, b, q).unwrap())
}

fn params(alpha: f64) -> ScalingParams {
    ScalingParams::consistent(alpha, 1.0, 1.0, 1.0, [0.0, 0.0, 1.0], 0.8, 1.6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn anchoring_trace_is_total_weight(s in spheroid()) {
        let q = make_surface_quadrature(&s, 24, 48).unwrap();
        let t = anchoring_tensor(&s, &q).unwrap();
        let w = q.total_weight();
        prop_assert!((t.trace() - w).abs() <= 1e-10 * w);
    }

    #[test]
    fn anchoring_tensor_is_rotation_equivariant(s in spheroid(), q in rotation()) {
        let quad = make_surface_quadrature(&s, 24, 48).unwrap();
        let t = anchoring_tensor(&s, &quad).unwrap();
        let r = s.rotated(&q);
        let tr = anchoring_tensor(&r, &make_surface_quadrature(&r, 24, 48).unwrap()).unwrap();
        let expected = q.conjugate(&t);
        prop_assert!((tr - expected).amax() <= 1e-8 * t.amax());
    }

    #[test]
    fn anchoring_tensor_is_symmetric_positive(s in spheroid()) {
        let t = anchoring_tensor(&s, &make_surface_quadrature(&s, 16, 32).unwrap()).unwrap();
        prop_assert_eq!(t, t.transpose());
        let eig = t.symmetric_eigenvalues();
        prop_assert!(eig.min() > 0.0);
    }

    #[test]
    fn pair_energy_is_symmetric(
        (a, b) in axes(),
        qi in rotation(),
        qj in rotation(),
        dir in unit_vec(),
        gap in 2.5..6.0f64,
        mi in -2.0..2.0f64,
        mj in -2.0..2.0f64,
    ) {
        let pi = MagnetizedSpheroid::new(Spheroid::new(Vec3::zeros(), a, b, qi).unwrap(), mi);
        let pj = MagnetizedSpheroid::new(Spheroid::new(dir * gap * a, a, b, qj).unwrap(), mj);
        let eij = pair_interaction_energy_with(&pi, &pj, 3).unwrap();
        let eji = pair_interaction_energy_with(&pj, &pi, 3).unwrap();
        prop_assert!((eij - eji).abs() <= 1e-12 * eij.abs().max(1e-300));
    }

    #[test]
    fn exterior_potential_is_odd_and_axisymmetric(
        (a, b) in axes(),
        dir in unit_vec(),
        r in 1.05..8.0f64,
        spin in -PI..PI,
    ) {
        let ms = MagnetizedSpheroid::new(Spheroid::reference(a, b).unwrap(), 1.3);
        // a point outside the particle along `dir`
        let x = dir * (r * a);
        let phi = exact_exterior_potential(&ms, &x).unwrap();
        let odd = exact_exterior_potential(&ms, &(-x)).unwrap();
        let spun = exact_exterior_potential(&ms, &Rotation::from_axis_angle(&Vec3::z(), spin).apply(&x)).unwrap();
        let mirrored = exact_exterior_potential(&ms, &Vec3::new(x.x, x.y, -x.z)).unwrap();
        let tol = 1e-12 * phi.abs().max(1e-12);
        prop_assert!((phi + odd).abs() <= tol);
        prop_assert!((phi - spun).abs() <= tol);
        prop_assert!((phi + mirrored).abs() <= tol);
    }

    #[test]
    fn coupling_prefers_the_sign_of_lambda(
        mag in unit_vec(),
        g in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64],
        (l1, l2) in (0.5..4.0f64, 0.5..4.0f64).prop_filter("distinct eigenvalues", |(x, y)| (x - y).abs() > 0.05),
    ) {
        let h = Vec3::zeros();
        let perp = mag.cross(&if mag.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() }).normalize();
        let along = coupling_density(&mag, &mag, &h, g, 1.0, l1, l2).unwrap();
        let across = coupling_density(&perp, &mag, &h, g, 1.0, l1, l2).unwrap();
        let big_lambda = g * (l1 - l2);
        if big_lambda > 0.0 {
            prop_assert!(across < along);
        } else {
            prop_assert!(along < across);
        }
    }

    #[test]
    fn consistent_scalings_validate(alpha in 1.01..1.99f64, beta1 in -1.0..3.0f64) {
        let mut p = params(alpha);
        p.beta1 = beta1;
        p.beta2 = 3.0 - 6.0 * alpha - beta1;
        let sum_ok = 6.0 * alpha + 2.0 * beta1 > 9.0;
        let violations = scaling_violations(&p);
        prop_assert_eq!(violations.is_empty(), sum_ok);
        if !sum_ok {
            prop_assert_eq!(violations[0].relation, "6α+2β₁>9");
        }
    }

    #[test]
    fn broken_scalings_are_named(alpha in prop_oneof![0.2..0.99f64, 2.01..3.0f64], shift in 0.01..1.0f64) {
        let p = params(alpha);
        prop_assert!(scaling_violations(&p).iter().any(|c| c.relation == "1<α<2"));
        let mut q = params(1.5);
        q.gamma += shift;
        let v = scaling_violations(&q);
        prop_assert_eq!(v.len(), 1);
        prop_assert_eq!(v[0].relation, "γ=3−2α");
    }

    #[test]
    fn float_text_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_ensembles_respect_the_invariants(seed in any::<u64>(), k in 0usize..3) {
        let eps = [0.25, 0.2, 1.0 / 6.0][k];
        let reference = Spheroid::reference(0.5, 0.25).unwrap();
        let e = generate_random(eps, &Domain::unit_cube(), &params(1.5), &reference, seed).unwrap();
        prop_assert!(e.validate().is_ok());
        prop_assert!(e.len() as f64 <= e.count_bound());
        let s = e.realized_all();
        for i in 0..s.len() {
            let layer = s[i].scaled(e.security_factor()).unwrap();
            for (j, sj) in s.iter().enumerate() {
                if i != j {
                    prop_assert!(!spheroids_overlap(&s[i], sj));
                    prop_assert!(!spheroids_overlap(&layer, sj));
                }
            }
        }
    }

    #[test]
    fn ensemble_json_round_trips(seed in any::<u64>(), random in any::<bool>()) {
        let reference = Spheroid::reference(0.5, 0.25).unwrap();
        let e = if random {
            generate_random(0.25, &Domain::unit_cube(), &params(1.5), &reference, seed).unwrap()
        } else {
            let q = Rotation::from_axis_angle(&Vec3::x(), (seed % 1000) as f64 * 1e-3);
            generate_periodic(0.25, &Domain::unit_cube(), &params(1.5), &reference, |_| q).unwrap()
        };
        let back = ParticleEnsemble::from_json(&e.to_json()).unwrap();
        prop_assert_eq!(back, e);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn cell_energies_are_rotation_invariant(q in rotation(), w in unit_vec(), ratio in 1.0..3.0f64) {
        let particle = Spheroid::reference(0.5, 0.5 / ratio).unwrap();
        let cp = CellProblem::new(particle, w, 1.0, 0.05, 1.5, 1.2).unwrap();
        let res = CellResolution { n_angular: 4, n_radial: 16, grading: 8.0 };
        let base = solve_cell(&cp, &res).unwrap().energies;
        let turned = solve_cell(&rotated_problem(&cp, &q), &res).unwrap().energies;
        for (x, y) in [(base.grad, turned.grad), (base.l2, turned.l2), (base.surf, turned.surf)] {
            prop_assert!((x - y).abs() <= 1e-8 * x.abs().max(1e-300), "{x} vs {y}");
        }
    }

    #[test]
    fn homogenized_minimizers_are_frame_covariant(axis in unit_vec(), turns in 1usize..4, twist in 0.0..PI) {
        // quarter turns about the vertical line through the cube center map the grid onto itself
        let grid = Grid::cube(Domain::unit_cube(), 9).unwrap();
        let c = Vec3::repeat(0.5);
        let q = Rotation::from_axis_angle(&Vec3::z(), turns as f64 * PI / 2.0);
        let r = move |x: &Vec3| Rotation::from_axis_angle(&axis, twist * x.y);
        let r_turned = move |x: &Vec3| q.compose(&r(&(q.inverse().apply(&(x - c)) + c)));
        let boundary = move |x: &Vec3| Vec3::new((2.0 * x.z).cos(), (2.0 * x.z).sin(), x.x).normalize();
        let boundary_turned = move |x: &Vec3| q.apply(&boundary(&(q.inverse().apply(&(x - c)) + c)));
        let h = Vec3::new(0.3, -0.2, 0.9);

        let solve = |rot: &dyn Fn(&Vec3) -> Rotation, u: &dyn Fn(&Vec3) -> Vec3, h: Vec3| {
            let a = closed_form_a(rot, 4.0, 1.3, 0.8, &grid);
            let m = closed_form_m(rot, 1.0, &grid);
            let mut f = VectorField::new(grid, u);
            f.initialize_harmonic().unwrap();
            let func = Functional::homogenized(&f, &a, &m, &h).unwrap();
            let opts = MinimizeOptions { tol: 1e-9, ..Default::default() };
            minimize(&func, f, &opts).unwrap()
        };
        let base = solve(&r, &boundary, h);
        let turned = solve(&r_turned, &boundary_turned, q.apply(&h));
        let e0 = base.energy.total;
        prop_assert!((e0 - turned.energy.total).abs() <= 1e-8 * e0.abs().max(1.0));
        let mut worst: f64 = 0.0;
        for idx in 0..grid.len() {
            let x = grid.position(idx);
            let y = q.apply(&(x - c)) + c;
            let ijk = [0, 1, 2].map(|d| (y[d] * 8.0).round() as usize);
            let jdx = grid.index(ijk[0], ijk[1], ijk[2]);
            worst = worst.max((turned.field.values[jdx] - q.apply(&base.field.values[idx])).norm());
        }
        prop_assert!(worst <= 1e-5, "max mismatch {worst}");
    }

    #[test]
    fn descent_never_increases_the_energy(q in rotation(), pitch in 0.5..3.0f64) {
        let grid = Grid::cube(Domain::unit_cube(), 9).unwrap();
        let boundary = move |x: &Vec3| q.apply(&Vec3::new((pitch * x.z).cos(), (pitch * x.z).sin(), 0.0));
        let f = VectorField::new(grid, boundary);
        let func = Functional::ginzburg_landau(&f);
        let opts = MinimizeOptions { tol: 1e-8, record_trajectory: true, ..Default::default() };
        let out = minimize(&func, f, &opts).unwrap();
        prop_assert!(out.trajectory.len() > 1);
        for w in out.trajectory.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }
}
