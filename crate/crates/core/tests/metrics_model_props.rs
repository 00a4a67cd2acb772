use nalgebra::Vector3;
use proxyvote_core::geometry::{Intrinsics, Point3, Pose};
use proxyvote_core::metrics::{add_s_score, add_score, evaluate, judge, proj2d_error};
use proxyvote_core::model::{farthest_point_sampling, load_model, model_diameter, ModelCloud, DIAMETER_EXACT_LIMIT};
use proxyvote_core::synth::random_rotation;
use proxyvote_oracles::{
    oracle_add, oracle_add_s, oracle_diameter, oracle_fps_min_distances, oracle_fps_verify, oracle_proj2d, P3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.04..0.04),
                rng.random_range(-0.03..0.03),
            )
        })
        .collect()
}

fn pose(rng: &mut ChaCha8Rng) -> Pose {
    Pose {
        rotation: random_rotation(rng).to_rotation_matrix().into_inner(),
        translation: Vector3::new(
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
            rng.random_range(0.6..1.0),
        ),
    }
}

fn t3(p: &Pose) -> [f64; 3] {
    [p.translation.x, p.translation.y, p.translation.z]
}

fn tuples(pts: &[Point3]) -> Vec<P3> {
    pts.iter().map(|p| (p.x, p.y, p.z)).collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let intr = Intrinsics::new(572.4, 573.6, 325.3, 242.0).unwrap();
    for _ in 0..50 {
        let pts = cloud(&mut rng, 100);
        let (gt, est) = (pose(&mut rng), pose(&mut rng));
        let t = tuples(&pts);
        let (rg, re) = (gt.rotation_row_major(), est.rotation_row_major());
        assert!(close(
            add_score(&gt, &est, &pts).unwrap(),
            oracle_add(&rg, &t3(&gt), &re, &t3(&est), &t)
        ));
        assert!(close(
            add_s_score(&gt, &est, &pts).unwrap(),
            oracle_add_s(&rg, &t3(&gt), &re, &t3(&est), &t)
        ));
        let proj = oracle_proj2d(&rg, &t3(&gt), &re, &t3(&est), (572.4, 573.6, 325.3, 242.0), &t).unwrap();
        assert!(close(proj2d_error(&gt, &est, &pts, &intr).unwrap(), proj));
    }
}

#[test]
fn add_s_dominated_and_add_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let pts = cloud(&mut rng, 60);
        let (gt, est) = (pose(&mut rng), pose(&mut rng));
        let add = add_score(&gt, &est, &pts).unwrap();
        assert!(add_s_score(&gt, &est, &pts).unwrap() <= add);
        assert!(close(add, add_score(&est, &gt, &pts).unwrap()));
    }
}

#[test]
fn add_s_is_not_symmetric() {
    // points on a line at 0, 1 and 10; estimate shifted by −9 along it
    let pts = [
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(1.0, 0.0, 0.0),
        Point3::new(10.0, 0.0, 0.0),
    ];
    let gt = Pose::identity();
    let est = Pose::from_translation(Vector3::new(-9.0, 0.0, 0.0));
    let fwd = add_s_score(&gt, &est, &pts).unwrap();
    let back = add_s_score(&est, &gt, &pts).unwrap();
    assert!(
        (fwd - 10.0 / 3.0).abs() < 1e-12 && (back - 17.0 / 3.0).abs() < 1e-12,
        "{fwd} {back}"
    );
}

#[test]
fn metrics_invariant_to_point_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let intr = Intrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
    let mut pts = cloud(&mut rng, 80);
    let (gt, est) = (pose(&mut rng), pose(&mut rng));
    let a = evaluate(&gt, &est, &pts, &intr, 0.1, false).unwrap();
    pts.reverse();
    pts.swap(3, 50);
    let b = evaluate(&gt, &est, &pts, &intr, 0.1, false).unwrap();
    assert!(close(a.add, b.add) && close(a.add_s, b.add_s) && close(a.proj2d, b.proj2d));
}

#[test]
fn thresholds_are_strict() {
    // 0.1 · 2.0 = 0.2 exactly in binary floating point
    assert_eq!(judge(0.2, 2.0, 5.0), (false, false));
    assert_eq!(judge(0.2 - 1e-12, 2.0, 5.0 - 1e-12), (true, true));
    assert_eq!(judge(0.0, 2.0, 0.0), (true, true));
}

#[test]
fn fps_selections_verified_exhaustively() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let pts = cloud(&mut rng, 100);
        let c = ModelCloud::new("r", pts.clone(), false).unwrap();
        let ks = farthest_point_sampling(&c, 8, None).unwrap();
        assert_eq!(ks.indices.len(), 8);
        for (k, &i) in ks.points3.iter().zip(&ks.indices) {
            assert_eq!(*k, pts[i]);
        }
        let t = tuples(&pts);
        oracle_fps_verify(&t, &ks.indices, 1e-12).assert_ok("fps");
        let d = oracle_fps_min_distances(&t, &ks.indices);
        assert!(d.windows(2).all(|w| w[1] <= w[0]), "{d:?}");
        assert_eq!(farthest_point_sampling(&c, 8, None).unwrap(), ks);
        let other = farthest_point_sampling(&c, 8, Some(17)).unwrap();
        assert_eq!(other.indices[0], 17);
        oracle_fps_verify(&t, &other.indices, 1e-12).assert_ok("fps from 17");
    }
}

fn sphere(n: usize, seed: u64) -> Vec<Point3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let m = v.norm();
            if m > 1e-3 && m <= 1.0 {
                break Point3::from_vector(&(v * (0.07 / m)));
            }
        })
        .collect()
}

#[test]
fn diameter_exact_small_and_close_large() {
    let small = sphere(DIAMETER_EXACT_LIMIT, 5);
    let c = ModelCloud::new("s", small.clone(), false).unwrap();
    assert_eq!(model_diameter(&c).unwrap(), oracle_diameter(&tuples(&small)));

    let big = sphere(10_000, 6);
    let exhaustive = oracle_diameter(&tuples(&big));
    let est = model_diameter(&ModelCloud::new("b", big.clone(), false).unwrap()).unwrap();
    assert!(
        est <= exhaustive && (exhaustive - est) / exhaustive < 0.02,
        "{est} vs {exhaustive}"
    );
}

#[test]
fn ply_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let c = ModelCloud::new("obj", cloud(&mut rng, 30), true).unwrap();
    let dir = std::env::temp_dir().join(format!("proxyvote-ply-{}", std::process::id()));
    let path = dir.join("m.ply");
    c.write_ply(&path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.points, c.points);
    std::fs::remove_dir_all(&dir).ok();
}
