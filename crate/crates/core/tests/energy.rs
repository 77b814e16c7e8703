mod common;

use std::f64::consts::PI;

use common::{flat_grid, lone_cone, rel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weitzenbock::constitutive::{fit_growth, Archetype, EnergyDensity};
use weitzenbock::dislocation_builder::assemble;
use weitzenbock::elastic_energy::*;
use weitzenbock::geom::{rotation, Mat2, Vec2};
use weitzenbock::weitzenbock_field::{FrameField, DEFAULT_DELTA};

fn assembled(n: usize) -> weitzenbock::cone_mesh::IntrinsicMesh {
    let f = FrameField::constant_torsion(0.5);
    assemble(
        &f.triangulate(n, DEFAULT_DELTA)
            .unwrap()
            .to_triangulation_data(),
    )
    .unwrap()
    .mesh
}

fn random_map(dev: &[Vec2], amp: f64, seed: u64) -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dev.iter()
        .map(|p| {
            Mat2::new(1.1, 0.2, -0.1, 0.9) * p
                + Vec2::new(rng.random_range(-amp..amp), rng.random_range(-amp..amp))
        })
        .collect()
}

const ALL: [Archetype; 6] = [
    Archetype::WIso { p: 2.0 },
    Archetype::QwIso { p: 2.0 },
    Archetype::WCubic { b1: 1.0, b2: 0.5 },
    Archetype::QwCubic { b1: 1.0, b2: 0.5 },
    Archetype::CompositeCubic {
        b1: 1.0,
        b2: 1.0,
        p: 2.0,
    },
    Archetype::SmoothTest,
];

#[test]
fn flat_mesh_isometry_and_doubling() {
    let mesh = flat_grid(3);
    let frame = propagate_frame(&mesh, 0, 0.0).unwrap();
    assert!(frame.max_residual < 1e-14);
    let dev = frame.development(&mesh);
    let w = Archetype::QwIso { p: 2.0 };
    assert!(energy(&dev, &mesh, &frame, &w) < 1e-14);
    let doubled: Vec<Vec2> = dev.iter().map(|p| p * 2.0).collect();
    let e = energy(&doubled, &mesh, &frame, &w);
    assert!((e - 2.0 * mesh.total_area()).abs() < 1e-12, "{e}");
}

#[test]
fn lone_cone_is_an_obstruction() {
    let err = propagate_frame(&lone_cone(), 0, 0.0).unwrap_err();
    match err {
        EnergyError::HolonomyObstruction { residual, .. } => assert!(residual > 0.1),
        other => panic!("{other}"),
    }
}

#[test]
fn assembled_frame_is_consistent() {
    let mesh = assembled(4);
    let frame = propagate_frame(&mesh, 0, 0.0).unwrap();
    assert!(frame.max_residual < CONSISTENCY_TOLERANCE);
}

#[test]
fn seed_rotation_isotropic_versus_cubic() {
    let mesh = assembled(4);
    let f0 = propagate_frame(&mesh, 0, 0.0).unwrap();
    let map = random_map(&f0.development(&mesh), 0.01, 3);
    let iso = Archetype::QwIso { p: 2.0 };
    let cubic = Archetype::CompositeCubic {
        b1: 1.0,
        b2: 1.0,
        p: 2.0,
    };
    let (e_iso, e_cub) = (
        energy(&map, &mesh, &f0, &iso),
        energy(&map, &mesh, &f0, &cubic),
    );
    for seed in [0.3, 1.0, -2.2] {
        let f = propagate_frame(&mesh, 0, seed).unwrap();
        assert!((energy(&map, &mesh, &f, &iso) - e_iso).abs() < 1e-12);
        assert!((energy(&map, &mesh, &f, &cubic) - e_cub).abs() > 1e-6);
    }
    for k in 1..4 {
        let f = propagate_frame(&mesh, 0, k as f64 * PI / 2.0).unwrap();
        assert!((energy(&map, &mesh, &f, &cubic) - e_cub).abs() < 1e-12);
    }
}

#[test]
fn left_rotation_of_target_is_invisible() {
    let mesh = assembled(4);
    let frame = propagate_frame(&mesh, 0, 0.4).unwrap();
    let map = random_map(&frame.development(&mesh), 0.02, 5);
    let turned: Vec<Vec2> = map.iter().map(|p| rotation(0.77) * p).collect();
    for w in ALL {
        let (a, b) = (
            energy(&map, &mesh, &frame, &w),
            energy(&turned, &mesh, &frame, &w),
        );
        assert!((a - b).abs() < 1e-12 * a.max(1.0), "{w}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mesh = flat_grid(2);
    let frame = propagate_frame(&mesh, 0, 0.2).unwrap();
    let map = random_map(&frame.development(&mesh), 0.1, 11);
    for w in [
        Archetype::QwIso { p: 2.0 },
        Archetype::CompositeCubic {
            b1: 1.0,
            b2: 0.5,
            p: 2.0,
        },
        Archetype::SmoothTest,
    ] {
        let g = energy_gradient(&map, &mesh, &frame, &w);
        let h = 1e-6;
        for v in 0..map.len() {
            for d in 0..2 {
                let mut plus = map.clone();
                let mut minus = map.clone();
                plus[v][d] += h;
                minus[v][d] -= h;
                let fd = (energy(&plus, &mesh, &frame, &w) - energy(&minus, &mesh, &frame, &w))
                    / (2.0 * h);
                assert!(
                    (fd - g[v][d]).abs() < 1e-5 * g[v][d].abs().max(1e-3),
                    "{w} v{v} d{d}: {fd} vs {}",
                    g[v][d]
                );
            }
        }
        let sum: Vec2 = g.iter().sum();
        assert!(sum.norm() < 1e-10);
    }
}

#[test]
fn gradient_vanishes_at_isometry() {
    let mesh = assembled(4);
    let frame = propagate_frame(&mesh, 0, 0.0).unwrap();
    let flat = flat_grid(4);
    let ff = propagate_frame(&flat, 0, 0.0).unwrap();
    let g = energy_gradient(
        &ff.development(&flat),
        &flat,
        &ff,
        &Archetype::QwIso { p: 2.0 },
    );
    assert!(g.iter().all(|v| v.norm() < 1e-10));
    assert!(frame.max_residual < 1e-10);
}

#[test]
fn coercivity_with_fitted_growth() {
    let mesh = assembled(4);
    let frame = propagate_frame(&mesh, 0, 0.0).unwrap();
    let elements = Elements::on_mesh(&mesh, &frame);
    for w in ALL {
        let fit = fit_growth(&w, 128, 1).unwrap();
        for seed in 0..3 {
            let map = random_map(&frame.development(&mesh), 0.05, seed);
            let x = flatten(&map);
            let norm_p: f64 = (0..mesh.num_triangles())
                .map(|t| {
                    let (wt, m) = elements.quadrature[t][0];
                    wt * (elements.differential(t, &x) * m)
                        .norm()
                        .powf(w.growth_exponent())
                })
                .sum();
            let e = elements.energy(&x, &w);
            assert!(
                e >= fit.alpha * norm_p - fit.offset * mesh.total_area() - 1e-12,
                "{w}"
            );
        }
    }
}

#[test]
fn flat_mesh_minimum_is_zero() {
    let mesh = flat_grid(4);
    let frame = propagate_frame(&mesh, 0, 0.0).unwrap();
    let r = minimize(
        &mesh,
        &frame,
        &Archetype::QwIso { p: 2.0 },
        &MinimizeOptions::default(),
    )
    .unwrap();
    assert!(r.energy < 1e-12, "{}", r.energy);
}

#[test]
fn dislocated_minimum_is_positive_and_reproducible() {
    let mesh = assembled(4);
    let frame = propagate_frame(&mesh, 0, 0.0).unwrap();
    let w = Archetype::QwIso { p: 2.0 };
    let opts = MinimizeOptions::default();
    let a = minimize(&mesh, &frame, &w, &opts).unwrap();
    assert!(a.energy > 1e-6);
    assert!(a.restart_spread < 1e-6, "{:?}", a.restart_energies);
    let b = minimize(&mesh, &frame, &w, &opts).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    let c = minimize(&mesh, &frame, &w, &MinimizeOptions { seed: 99, ..opts }).unwrap();
    assert!(rel(a.energy, c.energy) < 1e-6);
    let turned = propagate_frame(&mesh, 0, 1.3).unwrap();
    let d = minimize(&mesh, &turned, &w, &opts).unwrap();
    assert!(rel(a.energy, d.energy) < 1e-6);
    assert_eq!(
        a.density_histogram.iter().sum::<usize>(),
        mesh.num_triangles()
    );
}

#[test]
fn refining_the_same_body_does_not_raise_the_minimum() {
    let mesh = assembled(4);
    let fine = mesh.subdivide();
    let w = Archetype::QwIso { p: 2.0 };
    let opts = MinimizeOptions {
        restarts: 2,
        ..MinimizeOptions::default()
    };
    let coarse_e = minimize(&mesh, &propagate_frame(&mesh, 0, 0.0).unwrap(), &w, &opts)
        .unwrap()
        .energy;
    let fine_e = best_effort(minimize(
        &fine,
        &propagate_frame(&fine, 0, 0.0).unwrap(),
        &w,
        &opts,
    ))
    .unwrap()
    .energy;
    assert!(fine_e <= coarse_e + 1e-6, "{fine_e} > {coarse_e}");
}

#[test]
fn smooth_energy_closed_forms() {
    let field = FrameField::identity();
    let chart = ChartMesh::grid(&field, 4);
    let w = Archetype::QwIso { p: 2.0 };
    assert!(
        smooth_energy(&field, &chart, &chart.points, &w, 0)
            .unwrap()
            .abs()
            < 1e-15
    );
    let doubled: Vec<Vec2> = chart.points.iter().map(|p| p * 2.0).collect();
    assert!((smooth_energy(&field, &chart, &doubled, &w, 1).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn quadrature_refinement_is_second_order() {
    let field = FrameField::bracket_demo();
    let chart = ChartMesh::grid(&field, 2);
    let w = Archetype::QwIso { p: 2.0 };
    let map: Vec<Vec2> = chart
        .points
        .iter()
        .map(|p| Vec2::new(p.x + 0.3 * p.y * p.y, 0.8 * p.y))
        .collect();
    let exact = smooth_energy(&field, &chart, &map, &w, 7).unwrap();
    let errs: Vec<f64> = (0..4)
        .map(|l| (smooth_energy(&field, &chart, &map, &w, l).unwrap() - exact).abs())
        .collect();
    for k in 0..3 {
        assert!(errs[k] / errs[k + 1] > 3.5, "{errs:?}");
    }
}

#[test]
fn residual_vanishes_for_constant_solutions() {
    let pts: Vec<Vec2> = (0..5)
        .map(|k| Vec2::new(0.1 + 0.2 * k as f64, 0.5))
        .collect();
    let id = FrameField::identity();
    let r = el_residual(
        &id,
        |_| Mat2::identity(),
        &Archetype::SmoothTest,
        &pts,
        1e-4,
    )
    .unwrap();
    assert!(r.iter().all(|v| v.norm() < 1e-12));
    let turned = FrameField::constant(rotation(0.3));
    let r = el_residual(
        &turned,
        |_| rotation(-0.3) * 1.1,
        &Archetype::SmoothTest,
        &pts,
        1e-4,
    )
    .unwrap();
    assert!(r.iter().all(|v| v.norm() < 1e-9));
    assert!(turned.torsion_at(&pts[0]).unwrap().trace().norm() < 1e-15);
}

#[test]
fn residual_rejects_nonsmooth_archetypes() {
    let err = el_residual(
        &FrameField::identity(),
        |_| Mat2::identity(),
        &Archetype::QwIso { p: 2.0 },
        &[Vec2::new(0.5, 0.5)],
        1e-4,
    );
    assert!(matches!(err, Err(EnergyError::NonSmoothPoint(_))));
}

#[test]
fn torsion_trace_equals_minus_divergence() {
    for field in [
        FrameField::constant_torsion(0.5),
        FrameField::bracket_demo(),
    ] {
        assert!(torsion_trace_mismatch(&field, 16, 1e-4).unwrap() < 1e-6);
    }
}
