mod common;

use forcematch::descriptors::{default_times, find_correspondences, hks, knn_brute_force, spectral_basis, KdTree, TargetIndex};
use forcematch::mesh::bvh::closest_brute_force;
use forcematch::mesh::{SurfaceMesh, Vec3};
use proptest::prelude::*;

#[test]
fn sphere_spectrum() {
    let sphere = common::icosphere(4);
    assert_eq!(sphere.num_vertices(), 2562);
    let basis = spectral_basis(&sphere, 4).unwrap();
    let ev = basis.eigenvalues();
    assert!(ev[0].abs() < 1e-8, "{ev:?}");
    for l in &ev[1..] {
        assert!((l - 2.0).abs() < 0.2, "{ev:?}");
    }
    assert!(basis.orthonormality_error() < 1e-8);
}

#[test]
fn hks_is_scale_invariant() {
    let sphere = common::icosphere(2);
    let s = 3.0;
    let big = sphere.scaled(s);
    let b1 = spectral_basis(&sphere, 30).unwrap();
    let b2 = spectral_basis(&big, 30).unwrap();
    let times = default_times(&b1, 5).unwrap();
    let h1 = hks(&b1, &times).unwrap();
    let h2 = hks(&b2, &times.iter().map(|t| t * s * s).collect::<Vec<_>>()).unwrap();
    let diff = (h1.values() - h2.values()).abs().max();
    assert!(diff < 1e-6 * h1.values().abs().max(), "{diff}");
}

/// A strip rolled onto a cylinder is isometric to the flat strip, so the
/// heat kernel signatures agree up to discretization.
#[test]
fn hks_is_stable_under_bending() {
    let flat = common::grid(40, 8, 4.0, 0.8);
    let radius = 1.5;
    let bent = flat
        .with_vertices(flat.vertices().iter().map(|p| Vec3::new(radius * (p.x / radius).sin(), p.y, radius * (1.0 - (p.x / radius).cos()))).collect())
        .unwrap();
    let bf = spectral_basis(&flat, 40).unwrap();
    let bb = spectral_basis(&bent, 40).unwrap();
    let times = default_times(&bf, 6).unwrap();
    let hf = hks(&bf, &times).unwrap();
    let hb = hks(&bb, &times).unwrap();
    let n = flat.num_vertices();
    let mut ratios: Vec<f64> = Vec::new();
    let spread: Vec<f64> = (0..n).map(|i| hf.distance(i, &hf, (i + n / 2) % n)).collect();
    let mut sorted = spread.clone();
    sorted.sort_by(f64::total_cmp);
    let typical = sorted[n / 2];
    for i in 0..n {
        ratios.push(hf.distance(i, &hb, i) / typical);
    }
    ratios.sort_by(f64::total_cmp);
    assert!(ratios[n / 2] < 0.5, "median ratio {}", ratios[n / 2]);
}

fn cloud() -> impl Strategy<Value = Vec<Vec3>> {
    proptest::collection::vec(proptest::array::uniform3(-5.0..5.0f64), 10..200)
        .prop_map(|v| v.into_iter().map(Vec3::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn knn_matches_brute_force(points in cloud(), q in proptest::array::uniform3(-6.0..6.0f64), k in 1usize..8) {
        let q = Vec3::from(q);
        let tree = KdTree::new(&points);
        let got = tree.knn(&q, k);
        let want = knn_brute_force(&points, &q, k);
        prop_assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a.dist2 - b.dist2).abs() <= 1e-12 * (1.0 + b.dist2));
        }
    }
}

#[test]
fn closest_points_match_brute_force() {
    let target = common::icosphere(2);
    let index = TargetIndex::new(&target).unwrap();
    let queries: Vec<Vec3> = (0..200)
        .map(|i| {
            let t = i as f64 * 0.37;
            Vec3::new(t.sin() * 1.7, (1.3 * t).cos(), (0.7 * t).sin() * 0.5) * (0.5 + (i % 5) as f64 * 0.3)
        })
        .collect();
    let set = index.closest_points(&queries);
    for (q, c) in queries.iter().zip(set.entries()) {
        let want = closest_brute_force(target.vertices(), target.triangles(), q).unwrap();
        assert!(((q - c.target).norm_squared() - want.dist2).abs() < 1e-12);
        assert!((c.normal.norm() - 1.0).abs() < 1e-12);
        assert_eq!(c.confidence, 1.0);
    }
}

#[test]
fn confidences_respect_threshold() {
    let source = common::icosphere(2);
    let target: SurfaceMesh = source.with_vertices(source.vertices().iter().map(|p| Vec3::new(1.2 * p.x, p.y, 0.9 * p.z)).collect()).unwrap();
    let bs = spectral_basis(&source, 20).unwrap();
    let bt = spectral_basis(&target, 20).unwrap();
    let times = default_times(&bs, 5).unwrap();
    let (hs, ht) = (hks(&bs, &times).unwrap(), hks(&bt, &times).unwrap());
    let mut last = usize::MAX;
    for threshold in [0.0, 0.2, 0.4, 0.6, 0.8] {
        let set = find_correspondences(&source, &target, &hs, &ht, 8, threshold).unwrap();
        for c in set.entries() {
            assert!(c.confidence == 0.0 || (threshold..=1.0).contains(&c.confidence));
        }
        assert!(set.active() <= last);
        last = set.active();
    }
}
