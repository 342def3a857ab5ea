use forcematch::beam::{coarse_beam, fine_beam, BeamSpec};
use forcematch::fem::{FemSpace, NodalField};
use forcematch::matcher::{pullback_forces, read_log_csv, write_log_csv, LogRow, MatchConfig, Matcher, Termination};
use forcematch::mesh::{SurfaceMesh, TetMesh, Vec3};
use forcematch::Error;
use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_beam() -> (SurfaceMesh, TetMesh) {
    let spec = BeamSpec { width: 1.0, height: 2.0, coarse_xy: 2, coarse_z: 4, fine_xy: 6, fine_z: 12 };
    (fine_beam(&spec).unwrap(), coarse_beam(&spec).unwrap())
}

fn config() -> MatchConfig {
    MatchConfig { descriptor_iterations: 0, ..MatchConfig::default() }
}

#[test]
fn identical_target_stops_immediately() {
    let (fine, coarse) = small_beam();
    let res = Matcher::new(&config(), &fine, &coarse).unwrap().run(&fine).unwrap();
    assert_eq!(res.termination, Termination::Converged);
    assert!(res.log.len() <= 2);
    assert!(res.forces.iter().all(|f| f.norm() < 1e-8));
    let gap = res.fine_deformation.iter().zip(fine.vertices()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(gap < 1e-6, "{gap}");
}

#[test]
fn translation_is_recovered_without_force() {
    let (fine, coarse) = small_beam();
    let d = Vec3::new(0.1, -0.05, 0.2);
    let target = fine.with_vertices(fine.vertices().iter().map(|p| p + d).collect()).unwrap();
    let m = Matcher::new(&config(), &fine, &coarse).unwrap();
    let mut rows = Vec::new();
    let res = m
        .run_from(&target, m.initial_state(), |v| {
            rows.push(v.row.clone());
            Ok(())
        })
        .unwrap();
    assert_eq!(res.termination, Termination::Converged);
    assert_eq!(rows, res.log);
    let last = res.log.last().unwrap();
    assert!(last.spring_residual < m.config().spring_tol);
    for (a, b) in res.fine_deformation.iter().zip(target.vertices()) {
        assert!((a - b).norm() < 1e-3);
    }
    let k = res.log.iter().map(|r| r.k).collect::<Vec<_>>();
    assert!(k.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn observer_error_aborts_with_state() {
    let (fine, coarse) = small_beam();
    let target = fine.with_vertices(fine.vertices().iter().map(|p| p * 1.05).collect()).unwrap();
    let m = Matcher::new(&config(), &fine, &coarse).unwrap();
    let err = m.run_from(&target, m.initial_state(), |_| Err(Error::InvalidParameter("stop".into()))).unwrap_err();
    match err {
        Error::MatchAborted(ab) => {
            assert_eq!(ab.iteration, 1);
            assert!(ab.state.is_some());
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn pullback_inverts_average_gradient() {
    let (_, coarse) = small_beam();
    let space = FemSpace::new(&coarse);
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let a = Matrix3::new(1.1, 0.2, 0.0, -0.1, 0.9, 0.3, 0.05, 0.0, 1.2);
    let phi = NodalField::from_positions(
        &coarse.nodes().iter().map(|p| a * p + Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02))).collect::<Vec<_>>(),
    );
    let forces: Vec<Vec3> = coarse.boundary_nodes().iter().map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let back = pullback_forces(&forces, &phi, &coarse).unwrap();
    let node_tets = coarse.node_tets();
    for ((&n, f), p) in coarse.boundary_nodes().iter().zip(&forces).zip(&back) {
        let (mut acc, mut vol) = (Matrix3::zeros(), 0.0);
        for &e in &node_tets[n] {
            acc += space.volume(e) * space.deformation_gradient(&phi, e);
            vol += space.volume(e);
        }
        let fa = acc / vol;
        assert!((fa * p - f).norm() < 1e-12 * (1.0 + f.norm()));
    }
}

fn row() -> impl Strategy<Value = LogRow> {
    (0usize..1000, 0.0..1e3f64, 0.0..1.0f64, 0usize..50, -1e-6..1e-6f64, 0.1..1e4f64, 0.1..1.0f64, 0usize..90, 0usize..1000, 0.0..1e3f64).prop_map(
        |(iteration, force_l1, spring_residual, newton_iters, socp_gap, k, lambda_ratio, socp_iters, active, predicted_l1)| LogRow {
            iteration,
            force_l1,
            spring_residual,
            newton_iters,
            socp_gap,
            k,
            lambda_ratio,
            socp_iters,
            active,
            predicted_l1,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn log_csv_round_trip(rows in proptest::collection::vec(row(), 0..10)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_log_csv(&path, &rows).unwrap();
        prop_assert_eq!(read_log_csv(&path).unwrap(), rows);
    }
}
