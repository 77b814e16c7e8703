use weitzenbock::dislocation_builder::burgers_magnitude;
use weitzenbock::homogenize::{
    build_stage, fixture, frame_deviation, gamma_study, StudyConfig, StudyError,
};
use weitzenbock::weitzenbock_field::DEFAULT_DELTA;

fn quick_config(fixture: &str, ns: Vec<usize>) -> StudyConfig {
    let mut cfg = StudyConfig::default();
    cfg.fixture.name = fixture.into();
    cfg.triangulation.n = ns;
    cfg.optimizer.restarts = 1;
    cfg
}

#[test]
fn identity_fixture_is_exactly_flat() {
    let field = fixture("identity", 0.0).unwrap();
    let stage = build_stage(&field, 4, DEFAULT_DELTA).unwrap();
    assert_eq!(stage.num_dislocations(), 0);
    for f in &stage.correspondence {
        let gram = f.lin.transpose() * f.lin;
        assert!(
            (gram - weitzenbock::geom::Mat2::identity()).norm() < 1e-10,
            "{gram}"
        );
        assert!(f.lin.determinant() > 0.0);
    }
    let dev = frame_deviation(&field, &stage, 0.0, 2.0).unwrap();
    assert!(dev.integrated < 1e-10);
    assert!(dev.sup_off_core.unwrap() < 1e-10);

    let study = gamma_study(&quick_config("identity", vec![4])).unwrap();
    let r = &study.report.records[0];
    assert!(r.energy_ref.unwrap() < 1e-10);
    assert!(r.energy_n.unwrap() < 1e-10);
}

#[test]
fn every_parent_triangle_carries_one_dislocation() {
    let field = fixture("constant_torsion", 0.5).unwrap();
    for n in [4, 8] {
        let stage = build_stage(&field, n, DEFAULT_DELTA).unwrap();
        assert_eq!(stage.triangulation.triangles.len(), 2 * n * n);
        assert_eq!(stage.num_dislocations(), 2 * n * n);
    }
}

#[test]
fn cores_carry_their_triangle_burgers_vectors() {
    let field = fixture("bracket_demo", 0.0).unwrap();
    let stage = build_stage(&field, 8, DEFAULT_DELTA).unwrap();
    let slits = stage.assembled.mesh.core_slits();
    for (t, core) in stage.assembled.parent_core.iter().enumerate() {
        let b = stage.triangulation.triangle_burgers(t).norm();
        let carried = core.map_or(0.0, |k| burgers_magnitude(slits[k].d, slits[k].theta));
        assert!((b - carried).abs() < 1e-9, "triangle {t}: {b} vs {carried}");
    }
}

#[test]
fn deficits_cancel_over_the_body() {
    let field = fixture("constant_torsion", 0.5).unwrap();
    let stage = build_stage(&field, 8, DEFAULT_DELTA).unwrap();
    let mesh = &stage.assembled.mesh;
    let singular = mesh.singular_vertices(1e-8);
    assert_eq!(singular.len(), 2 * stage.num_dislocations());
    let total: f64 = singular
        .iter()
        .map(|&v| mesh.cone_deficit(v).unwrap())
        .sum();
    assert!(total.abs() < 1e-9, "{total}");
    for core in mesh.core_slits() {
        let plus = mesh.cone_deficit(core.plus).unwrap();
        let minus = mesh.cone_deficit(core.minus).unwrap();
        assert!((plus + minus).abs() < 1e-9);
        assert!((plus.abs() - core.theta).abs() < 1e-8);
    }
}

#[test]
fn cores_shrink_faster_than_the_mesh() {
    let field = fixture("constant_torsion", 0.5).unwrap();
    let mut last = (f64::INFINITY, f64::INFINITY);
    for n in [4, 8, 16, 32] {
        let stage = build_stage(&field, n, DEFAULT_DELTA).unwrap();
        let slits = stage.assembled.mesh.core_slits();
        let theta = slits.iter().map(|c| c.theta).fold(0.0, f64::max);
        let nd = n as f64 * stage.max_core_length();
        assert!(
            theta < last.0 && nd < last.1,
            "n = {n}: theta {theta}, n d {nd}"
        );
        last = (theta, nd);
    }
    assert!(last.0 < 0.2 && last.1 < 0.2);
}

#[test]
fn reports_are_deterministic() {
    let mut cfg = quick_config("constant_torsion", vec![4]);
    cfg.optimizer.restarts = 2;
    let a = gamma_study(&cfg).unwrap();
    let b = gamma_study(&cfg).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(cfg.hash(), cfg.clone().hash());
    assert_eq!(cfg.hash().len(), 64);

    let mut other = cfg.clone();
    other.optimizer.seed = 1;
    assert_ne!(cfg.hash(), other.hash());
    let mut relocated = cfg.clone();
    relocated.output.dir = Some("elsewhere".into());
    assert_eq!(cfg.hash(), relocated.hash());
}

#[test]
fn csv_header_is_stable() {
    let mut cfg = quick_config("constant_torsion", vec![2, 4]);
    cfg.optimizer.skip_energies = true;
    let study = gamma_study(&cfg).unwrap();
    let csv = study.report.to_csv(&study.seconds);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("n,dislocations,max_edge,dev_sup_offcore,dev_lp,energy_n,energy_ref,abs_gap,seconds")
    );
    assert_eq!(lines.count(), 2);
    assert!(study
        .report
        .records
        .iter()
        .all(|r| r.energy_n.is_none() && r.abs_gap.is_none()));
}

#[test]
fn bad_ladders_are_rejected() {
    for ns in [vec![], vec![0, 4], vec![8, 4], vec![4, 4]] {
        let cfg = quick_config("constant_torsion", ns);
        assert!(matches!(gamma_study(&cfg), Err(StudyError::BadLadder)));
    }
    assert!(matches!(
        gamma_study(&quick_config("moebius", vec![4])),
        Err(StudyError::UnknownFixture(_))
    ));
}

#[test]
fn config_round_trips_through_toml() {
    let text = "[fixture]\nname = \"bracket_demo\"\n\n[archetype]\nname = \"composite_cubic\"\nb1 = 1.0\nb2 = 2.0\n\n[triangulation]\nn = [4, 8]\n";
    let cfg: StudyConfig = toml::from_str(text).unwrap();
    assert_eq!(cfg.fixture.name, "bracket_demo");
    assert_eq!(cfg.triangulation.n, vec![4, 8]);
    assert_eq!(
        cfg.archetype.archetype().unwrap().to_string(),
        "composite_cubic(1,2,2)"
    );
    assert!(toml::from_str::<StudyConfig>("[fixture]\nshape = 1\n").is_err());
}
