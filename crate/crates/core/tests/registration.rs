mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spotid_core::registration::*;

use common::*;

fn cloud(xy: &[(f64, f64)]) -> SpotCloud {
    SpotCloud::from_xy(xy).unwrap()
}

fn points(xy: &[(f64, f64)]) -> Vec<Point> {
    xy.iter().map(|&(x, y)| Point::new(x, y)).collect()
}

#[test]
fn icp_recovers_basin_motions() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let params = IcpParams::default();
    let cases = 100;
    let mut hits = 0;
    for _ in 0..cases {
        let (src, tgt, _, _) = rigid_case(&mut rng, 100.0, 30.0);
        let r = icp(&cloud(&src), &cloud(&tgt), &params).unwrap();
        if r.objective < 1e-9 {
            hits += 1;
        }
    }
    assert!(hits as f64 >= 0.99 * cases as f64, "{hits}/{cases}");
}

#[test]
fn estimate_rigid_recovers_known_motion() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..100 {
        let (src, tgt, angle, (tx, ty)) = rigid_case(&mut rng, 100.0, 180.0);
        let (s, t) = (points(&src), points(&tgt));
        let fit = estimate_rigid(&s, &t).unwrap();
        let residual = s.iter().zip(&t).map(|(a, b)| (fit.apply(a) - b).norm()).fold(0.0, f64::max);
        assert!(residual < 1e-6, "{residual}");
        let d = (fit.angle() - angle).rem_euclid(std::f64::consts::TAU);
        assert!(d.min(std::f64::consts::TAU - d) < 1e-9);
        // Rotation was about the source centroid, so the centroid moves by exactly (tx, ty).
        let c = SpotCloud::new(s.clone()).unwrap().centroid().unwrap();
        let moved = fit.apply(&c) - c;
        assert!((moved.x - tx).abs() < 1e-6 && (moved.y - ty).abs() < 1e-6);
    }
}

#[test]
fn procrustes_matches_numerical_minimizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let n = rng.random_range(4..15);
        let x: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(0.0..50.0), rng.random_range(0.0..50.0))).collect();
        let y: Vec<(f64, f64)> = x
            .iter()
            .map(|&(a, b)| (a + rng.random_range(-4.0..4.0), b + rng.random_range(-4.0..4.0)))
            .collect();
        let got = procrustes(&points(&x), &points(&y)).unwrap().dissimilarity;
        let oracle = procrustes_oracle(&x, &y);
        assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
    }
}

#[test]
fn procrustes_fit_maps_y_onto_x() {
    let x = points(&[(0.0, 0.0), (4.0, 0.0), (4.0, 2.0), (1.0, 3.0)]);
    let motion = RigidTransform::from_angle(0.7, nalgebra::Vector2::new(3.0, -2.0));
    let y: Vec<Point> = x.iter().map(|p| Point::from(motion.apply(p).coords * 1.5)).collect();
    let fit = procrustes(&x, &y).unwrap();
    assert!(fit.dissimilarity < 1e-12);
    assert!((fit.scale - 1.0 / 1.5).abs() < 1e-12);
    for (a, b) in x.iter().zip(&y) {
        assert!((fit.apply(b) - a).norm() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn icp_trace_is_non_increasing(seed in any::<u64>(), outliers in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (src, mut tgt, _, _) = rigid_case(&mut rng, 80.0, 30.0);
        for _ in 0..outliers {
            tgt.push((rng.random_range(0.0..80.0), rng.random_range(0.0..80.0)));
        }
        tgt.truncate(tgt.len() - rng.random_range(0..10usize));
        let r = icp(&cloud(&src), &cloud(&tgt), &IcpParams::default()).unwrap();
        prop_assert!(r.trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", r.trace);
        prop_assert_eq!(*r.trace.last().unwrap(), r.objective);
        prop_assert!(r.iterations <= IcpParams::default().max_iter);
        prop_assert_eq!(r.correspondences.len(), src.len());
        let det = r.transform.rotation.determinant();
        prop_assert!((det - 1.0).abs() < 1e-9);
    }

    #[test]
    fn icp_objective_matches_correspondences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (src, tgt, _, _) = rigid_case(&mut rng, 60.0, 10.0);
        let jittered: Vec<(f64, f64)> = tgt.iter().map(|&(x, y)| (x + rng.random_range(-0.5..0.5), y)).collect();
        let (s, t) = (cloud(&src), cloud(&jittered));
        let r = icp(&s, &t, &IcpParams::default()).unwrap();
        // Re-derive the objective from scratch: nearest neighbours of the moved source.
        let moved = s.transformed(&r.transform);
        let direct: f64 = moved
            .points
            .iter()
            .map(|p| t.points.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
            .sum();
        prop_assert!((direct - r.objective).abs() <= 1e-9 * (1.0 + direct));
    }

    #[test]
    fn procrustes_invariant_under_similarity(seed in any::<u64>(), n in 3usize..40, scale in 0.5f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Point> = (0..n).map(|_| Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))).collect();
        let motion = RigidTransform::from_angle(
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            nalgebra::Vector2::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)),
        );
        let y: Vec<Point> = x.iter().map(|p| Point::from(motion.apply(p).coords * scale)).collect();
        prop_assert!(procrustes(&x, &y).unwrap().dissimilarity < 1e-9);
    }

    #[test]
    fn procrustes_is_bounded_and_symmetric(seed in any::<u64>(), n in 3usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = || -> Vec<Point> { (0..n).map(|_| Point::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0))).collect() };
        let (x, y) = (pts(), pts());
        let a = procrustes(&x, &y).unwrap().dissimilarity;
        let b = procrustes(&y, &x).unwrap().dissimilarity;
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() < 1e-9);
    }
}
