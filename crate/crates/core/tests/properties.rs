mod common;

use std::f64::consts::PI;

use common::{flat_grid, jittered_grid};
use proptest::prelude::*;
use weitzenbock::cone_mesh::{DiscretePath, IntrinsicMesh};
use weitzenbock::constitutive::*;
use weitzenbock::dislocation_builder::{
    develop_boundary, dislocated_triangle, single_dislocation_plane,
};
use weitzenbock::elastic_energy::{energy, propagate_frame};
use weitzenbock::geom::{rotate, rotation, wrap_angle, Mat2, Vec2};
use weitzenbock::weitzenbock_field::FrameField;

fn matrix(scale: f64) -> impl Strategy<Value = Mat2> {
    prop::array::uniform4(-scale..scale).prop_map(|[a, b, c, d]| Mat2::new(a, b, c, d))
}

fn archetypes() -> impl Strategy<Value = Archetype> {
    prop_oneof![
        (2.0..4.0f64).prop_map(|p| Archetype::WIso { p }),
        (2.0..4.0f64).prop_map(|p| Archetype::QwIso { p }),
        (0.5..2.0f64, 0.5..2.0f64).prop_map(|(b1, b2)| Archetype::WCubic { b1, b2 }),
        (0.5..2.0f64, 0.5..2.0f64).prop_map(|(b1, b2)| Archetype::QwCubic { b1, b2 }),
        (0.5..2.0f64, 0.5..2.0f64).prop_map(|(b1, b2)| Archetype::CompositeCubic {
            b1,
            b2,
            p: 2.0
        }),
        Just(Archetype::SmoothTest),
    ]
}

/// Distance from the nonsmooth loci of every implemented archetype.
fn clear_of_kinks(a: &Mat2) -> bool {
    let (m1, m2) = signed_singular_values(a);
    let cols = (0..2).all(|i| (a.column(i).norm() - 1.0).abs() > 1e-3 && a.column(i).norm() > 1e-3);
    (m1 + m2 - 1.0).abs() > 1e-3
        && m1 - m2.abs() > 1e-3
        && m1 + m2 > 1e-3
        && dist2_so2(a) > 1e-6
        && cols
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn envelopes_lie_below(a in matrix(5.0), b1 in 0.1..3.0f64, b2 in 0.1..3.0f64, p in 2.0..4.0f64) {
        prop_assert!(qw_iso(&a, p) <= w_iso(&a, p) * (1.0 + 1e-12) + 1e-15);
        prop_assert!(qw_cubic(&a, [b1, b2]) <= w_cubic(&a, [b1, b2]) + 1e-15);
        let (m1, m2) = signed_singular_values(&a);
        if m1 + m2 >= 1.0 {
            prop_assert_eq!(qw_iso(&a, p), w_iso(&a, p));
        }
    }

    #[test]
    fn signed_singular_values_identities(a in matrix(5.0)) {
        let (m1, m2) = signed_singular_values(&a);
        prop_assert!(m1 >= m2.abs() - 1e-12);
        prop_assert!((m1 * m2 - a.determinant()).abs() < 1e-10);
        prop_assert!((m1 * m1 + m2 * m2 - a.norm_squared()).abs() < 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences(w in archetypes(), a in matrix(2.5)) {
        prop_assume!(clear_of_kinks(&a));
        let g = w.gradient(&a);
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..2 {
                let mut e = Mat2::zeros();
                e[(i, j)] = h;
                let fd = (w.value(&(a + e)) - w.value(&(a - e))) / (2.0 * h);
                let scale = g.norm().max(1e-2);
                prop_assert!((fd - g[(i, j)]).abs() < 1e-6 * scale, "{} {}: {} vs {}", w, i * 2 + j, fd, g[(i, j)]);
            }
        }
    }

    #[test]
    fn left_rotations_are_invisible(w in archetypes(), a in matrix(3.0), t in -PI..PI) {
        let v = w.value(&a);
        prop_assert!((w.value(&(rotation(t) * a)) - v).abs() < 1e-12 * v.max(1.0));
    }

    #[test]
    fn declared_symmetries_hold(w in archetypes(), a in matrix(3.0), k in 1..4u32, t in -PI..PI) {
        let angle = match w.declared_symmetry() {
            Symmetry::Continuous => t,
            Symmetry::Discrete(g) => g[0] * k as f64,
        };
        let v = w.value(&a);
        prop_assert!((w.value(&(a * rotation(angle))) - v).abs() < 1e-12 * v.max(1.0));
    }

    #[test]
    fn envelopes_are_rank_one_convex(a in matrix(2.0), u in prop::array::uniform2(-1.0..1.0f64), v in prop::array::uniform2(-1.0..1.0f64)) {
        let dir = Vec2::new(u[0], u[1]) * Vec2::new(v[0], v[1]).transpose();
        let h = 1e-2;
        for w in [Archetype::QwIso { p: 2.0 }, Archetype::QwCubic { b1: 1.0, b2: 1.0 }] {
            for k in -5..5 {
                let t = k as f64 * 0.2;
                let f = |s: f64| w.value(&(a + dir * s));
                let second = f(t + h) - 2.0 * f(t) + f(t - h);
                prop_assert!(second >= -1e-8, "{} at t={}: {}", w, t, second);
            }
        }
    }

    #[test]
    fn wrap_angle_range(x in -100.0..100.0f64) {
        let w = wrap_angle(x);
        prop_assert!(w > -PI && w <= PI);
        prop_assert!(((x - w) / (2.0 * PI) - ((x - w) / (2.0 * PI)).round()).abs() < 1e-9);
    }
}

fn jitter_mesh(seed: u64) -> IntrinsicMesh {
    jittered_grid(3, move |k| {
        0.04 * (((k as u64 * 7919 + seed * 104729) % 1000) as f64 / 1000.0 - 0.5)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn corner_angles_sum_to_pi(seed in 0..1000u64) {
        let mesh = jitter_mesh(seed);
        for t in 0..mesh.num_triangles() {
            let s: f64 = (0..3).map(|k| mesh.corner_angle(t, k)).sum();
            prop_assert!((s - PI).abs() < 1e-12);
        }
    }

    #[test]
    fn holonomy_is_additive(seed in 0..1000u64) {
        let mesh = jitter_mesh(seed);
        // interior vertices 5 and 10 share the edge 5-10
        let base = mesh.edge_triangles(5, 10)[0];
        let loop_at = |v: usize| {
            let c = mesh.vertex_circuit(v).unwrap();
            let k = c.triangles.iter().position(|&t| t == base).unwrap();
            c.rebased(k)
        };
        let (g1, g2) = (loop_at(5), loop_at(10));
        let h = |p: &DiscretePath| mesh.transport_along(p).unwrap();
        let sum = wrap_angle(h(&g1) + h(&g2));
        prop_assert!(wrap_angle(h(&g2.then(&g1)) - sum).abs() < 1e-10);
        prop_assert!((h(&g1) - mesh.cone_deficit(5).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn flat_paths_are_independent(seed in 0..1000u64) {
        let mesh = flat_grid(3);
        let v = 5 + (seed as usize % 2) * 5;
        prop_assert!(mesh.transport_along(&mesh.vertex_circuit(v).unwrap()).unwrap().abs() < 1e-10);
    }

    #[test]
    fn json_round_trip_is_exact(seed in 0..1000u64) {
        let mesh = jitter_mesh(seed);
        let back = IntrinsicMesh::from_json(&mesh.to_json()).unwrap();
        prop_assert_eq!(back.edge_lengths(), mesh.edge_lengths());
        prop_assert_eq!(back.triangles(), mesh.triangles());
    }

    #[test]
    fn isotropic_energy_ignores_seed(seed in 0..1000u64, turn in -PI..PI) {
        let flat = flat_grid(3);
        let f0 = propagate_frame(&flat, 0, 0.0).unwrap();
        let f1 = propagate_frame(&flat, 0, turn).unwrap();
        let map: Vec<Vec2> = f0.development(&flat).iter().enumerate()
            .map(|(i, p)| p * 1.1 + Vec2::new(0.01 * (i as f64).sin(), 0.02 * ((i + seed as usize) as f64).cos()))
            .collect();
        let w = Archetype::QwIso { p: 2.0 };
        prop_assert!((energy(&map, &flat, &f0, &w) - energy(&map, &flat, &f1, &w)).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn burgers_basepoint_covariance(theta in 0.05..0.5f64, d in 0.2..0.6f64, k in 1..20usize) {
        let mesh = single_dislocation_plane(2.0, theta, d).unwrap();
        let circuit = mesh.boundary_circuit(0).unwrap();
        let k = k % (circuit.triangles.len() - 1);
        let b0 = mesh.burgers_vector(&circuit, 0).unwrap();
        let bk = mesh.burgers_vector(&circuit, k).unwrap();
        let turn = mesh.transport_along(&DiscretePath::new(circuit.triangles[..=k].to_vec())).unwrap();
        prop_assert!((bk.norm() - b0.norm()).abs() < 1e-10);
        prop_assert!((rotate(&b0, turn) - bk).norm() < 1e-10);
    }

    #[test]
    fn burgers_scales_with_size(theta in 0.05..0.5f64, d in 0.2..0.6f64, s in 0.3..3.0f64) {
        let b = |h: f64, d: f64| {
            let m = single_dislocation_plane(h, theta, d).unwrap();
            m.burgers_vector(&m.boundary_circuit(0).unwrap(), 0).unwrap().norm()
        };
        prop_assert!((b(2.0 * s, d * s) - s * b(2.0, d)).abs() < 1e-10 * s.max(1.0));
    }

    #[test]
    fn dislocated_triangle_carries_its_gap(beta in 0.8..1.3f64, gamma in 0.8..1.3f64, stretch in -0.03..0.03f64) {
        let alpha = PI - beta - gamma;
        let (a, b, c) = (alpha.sin(), beta.sin(), gamma.sin() * (1.0 + stretch));
        let dev = develop_boundary(a, b, c, beta, gamma);
        let gap = dev[3] - dev[0];
        let t = dislocated_triangle(a, b, c, alpha, beta, gamma, gap).unwrap();
        let circuit = t.mesh.boundary_circuit(0).unwrap();
        let bv = t.mesh.burgers_vector(&circuit, 0).unwrap();
        prop_assert!((bv.norm() - gap.norm()).abs() < 1e-8);
    }

    #[test]
    fn frames_are_metric_orthonormal(x in 0.0..1.0f64, y in 0.0..1.0f64, tau in -1.0..1.0f64) {
        let p = Vec2::new(x, y);
        for field in [FrameField::constant_torsion(tau), FrameField::bracket_demo(), FrameField::constant(Mat2::new(1.2, 0.3, -0.1, 0.8))] {
            let e = field.frame(&p).unwrap();
            let g = field.metric_at(&p).unwrap();
            prop_assert!((e.transpose() * g * e - Mat2::identity()).norm() < 1e-13);
        }
    }

    #[test]
    fn shooting_and_connecting_invert(x in 0.2..0.8f64, y in 0.2..0.8f64, vx in -0.2..0.2f64, vy in -0.2..0.2f64) {
        let field = FrameField::constant_torsion(0.5);
        let p = Vec2::new(x, y);
        let v = Vec2::new(vx, vy);
        prop_assume!(v.norm() > 1e-3);
        let q = field.exp(&p, &v).unwrap();
        let g = field.geodesic_connect(&p, &q).unwrap();
        prop_assert!((g.c * g.length - v).norm() < 1e-9);
        prop_assert!((field.exp(&p, &(g.c * g.length)).unwrap() - q).norm() < 1e-9);
    }

    #[test]
    fn torsion_free_frames_have_no_defects(t in -PI..PI, s in 0.95..1.0f64) {
        let field = FrameField::constant(rotation(t) * s);
        let tri = field.triangulate(4, 0.2).unwrap();
        for t in 0..tri.triangles.len() {
            prop_assert!(tri.triangle_burgers(t).norm() < 1e-9);
        }
    }
}
