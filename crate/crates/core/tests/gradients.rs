// per-pixel loops index the field, the mask and the oracle result together
#![allow(clippy::needless_range_loop)]

use proxyvote_core::geometry::{point_line_distance, Direction2, Point2};
use proxyvote_core::losses::{dpvl, schedule_weights, smooth_l1, total_loss, vf_loss, WeightSchedule};
use proxyvote_core::{Mask, VectorField};
use proxyvote_oracles::{oracle_fd_gradient, oracle_fd_scalar, P2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-4;

fn to_tuples(f: &VectorField) -> Vec<P2> {
    f.as_slice().iter().map(|d| (d.x, d.y)).collect()
}

fn from_tuples(w: usize, h: usize, t: &[P2]) -> VectorField {
    VectorField::from_vec(w, h, t.iter().map(|&(x, y)| Direction2::new(x, y)).collect()).unwrap()
}

fn random_field(rng: &mut ChaCha8Rng, w: usize, h: usize, scale: f64) -> VectorField {
    let data = (0..w * h)
        .map(|_| Direction2::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
        .collect();
    VectorField::from_vec(w, h, data).unwrap()
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Mask {
    Mask::from_vec(w, h, (0..w * h).map(|_| rng.random_bool(0.7)).collect()).unwrap()
}

fn rel_err(a: P2, f: P2) -> f64 {
    let num = ((a.0 - f.0).powi(2) + (a.1 - f.1).powi(2)).sqrt();
    num / (f.0 * f.0 + f.1 * f.1).sqrt()
}

#[test]
fn smooth_l1_derivative_matches_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut n = 0;
    while n < 1000 {
        let a: f64 = rng.random_range(-5.0..5.0);
        if (a.abs() - 1.0).abs() < 1e-3 || a.abs() < 1e-3 {
            continue;
        }
        let fd = oracle_fd_scalar(|x| smooth_l1(x).0, a, STEP);
        let an = smooth_l1(a).1;
        assert!((an - fd).abs() / fd.abs() < REL_TOL, "a={a}: {an} vs {fd}");
        n += 1;
    }
    assert!((oracle_fd_scalar(|x| smooth_l1(x).0, 0.5, STEP) - 0.5).abs() < 1e-6);
}

#[test]
fn vf_loss_gradient_matches_fd() {
    let (w, h) = (8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for _ in 0..20 {
        let est = random_field(&mut rng, w, h, 1.5);
        let gt = random_field(&mut rng, w, h, 1.0);
        let mask = random_mask(&mut rng, w, h);
        let rep = vf_loss(&est, &gt, &mask).unwrap();
        let loss = |t: &[P2]| vf_loss(&from_tuples(w, h, t), &gt, &mask).unwrap().value;
        let fd = oracle_fd_gradient(loss, &to_tuples(&est), mask.as_slice(), STEP);
        for i in 0..w * h {
            let g = rep.grad.as_slice()[i];
            if !mask.as_slice()[i] {
                assert_eq!(g, Direction2::ZERO);
                assert_eq!(fd[i], (0.0, 0.0));
                continue;
            }
            let (rx, ry) = (
                est.as_slice()[i].x - gt.as_slice()[i].x,
                est.as_slice()[i].y - gt.as_slice()[i].y,
            );
            let a = rx.abs() + ry.abs();
            // kinks: a residual component at zero, or the smooth-ℓ1 branch point
            if rx.abs() < 1e-3 || ry.abs() < 1e-3 || (a - 1.0).abs() < 1e-3 {
                continue;
            }
            assert!(rel_err((g.x, g.y), fd[i]) < REL_TOL, "pixel {i}: {g:?} vs {:?}", fd[i]);
            checked += 1;
        }
    }
    assert!(checked > 500);
}

#[test]
fn dpvl_gradient_matches_fd() {
    let (w, h) = (8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for _ in 0..20 {
        let est = random_field(&mut rng, w, h, 1.0);
        let mask = random_mask(&mut rng, w, h);
        let k = Point2::new(rng.random_range(-4.0..12.0), rng.random_range(-4.0..12.0));
        let rep = dpvl(&est, &mask, k).unwrap();
        let loss = |t: &[P2]| dpvl(&from_tuples(w, h, t), &mask, k).unwrap().value;
        let fd = oracle_fd_gradient(loss, &to_tuples(&est), mask.as_slice(), STEP);
        for i in 0..w * h {
            let g = rep.grad.as_slice()[i];
            if !mask.as_slice()[i] {
                assert_eq!(g, Direction2::ZERO);
                continue;
            }
            let v = est.as_slice()[i];
            if v.norm() < 1e-2 {
                continue;
            }
            let d = point_line_distance(mask.center_of(i), v, k).unwrap();
            if d < 1e-3 || (d - 1.0).abs() < 1e-3 {
                continue;
            }
            assert!(
                rel_err((g.x, g.y), fd[i]) < REL_TOL,
                "pixel {i} d={d}: {g:?} vs {:?}",
                fd[i]
            );
            checked += 1;
        }
    }
    assert!(checked > 500);
}

#[test]
fn dpvl_sign_and_scale_invariant() {
    let (w, h) = (8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let est = random_field(&mut rng, w, h, 1.0);
    let mask = random_mask(&mut rng, w, h);
    let k = Point2::new(3.3, 9.1);
    let base = dpvl(&est, &mask, k).unwrap().value;
    let mut flipped = est.clone();
    let mut scaled = est.clone();
    for (i, (f, s)) in flipped.as_mut_slice().iter_mut().zip(scaled.as_mut_slice()).enumerate() {
        if i % 2 == 0 {
            *f = -*f;
        }
        *s = s.scale(0.1 + i as f64);
    }
    assert_eq!(dpvl(&flipped, &mask, k).unwrap().value, base);
    assert!((dpvl(&scaled, &mask, k).unwrap().value - base).abs() < 1e-9 * base.max(1.0));
}

#[test]
fn unmasked_pixels_contribute_nothing() {
    let (w, h) = (8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let est = random_field(&mut rng, w, h, 1.0);
    let gt = random_field(&mut rng, w, h, 1.0);
    let mask = random_mask(&mut rng, w, h);
    let mut junk = est.clone();
    for (i, v) in junk.as_mut_slice().iter_mut().enumerate() {
        if !mask.as_slice()[i] {
            *v = Direction2::new(1e6, -1e6);
        }
    }
    let k = Point2::new(4.0, 4.0);
    assert_eq!(vf_loss(&est, &gt, &mask).unwrap(), vf_loss(&junk, &gt, &mask).unwrap());
    assert_eq!(dpvl(&est, &mask, k).unwrap(), dpvl(&junk, &mask, k).unwrap());
}

#[test]
fn total_loss_is_linear_in_each_term() {
    let (a, b) = (2.5, 0.01);
    let base = total_loss(1.0, 2.0, 3.0, a, b);
    assert!((total_loss(3.0, 2.0, 3.0, a, b) - base - 2.0 * a).abs() < 1e-12);
    assert!((total_loss(1.0, 5.0, 3.0, a, b) - base - 3.0).abs() < 1e-12);
    assert!((total_loss(1.0, 2.0, 7.0, a, b) - base - 4.0 * b).abs() < 1e-12);
}

#[test]
fn schedule_monotone_and_capped() {
    let s = WeightSchedule::default();
    let mut prev = schedule_weights(0, &s);
    for e in 1..200 {
        let cur = schedule_weights(e, &s);
        assert!(cur.0 >= prev.0 && cur.1 >= prev.1);
        assert!(cur.0 <= s.alpha_cap && cur.1 <= s.beta_cap);
        prev = cur;
    }
    assert_eq!(prev, (s.alpha_cap, s.beta_cap));
}
