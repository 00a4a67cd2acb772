//! Pose accuracy metrics: ADD, ADD-S (closest-point), mean 2D projection
//! error, and the usual correctness thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project, Intrinsics, Point3, Pose};

/// ADD is correct below this fraction of the model diameter.
pub const ADD_DIAMETER_FRACTION: f64 = 0.1;
/// Projection error is correct below this many pixels.
pub const PROJ_THRESHOLD_PX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub add: f64,
    pub add_s: f64,
    pub proj2d: f64,
    pub add_correct: bool,
    pub proj_correct: bool,
}

fn non_empty(points: &[Point3]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    Ok(())
}

/// Mean distance between model points under `gt` and under `est`.
pub fn add_score(gt: &Pose, est: &Pose, points: &[Point3]) -> Result<f64> {
    non_empty(points)?;
    let sum: f64 = points
        .iter()
        .map(|&p| (gt.transform(p) - est.transform(p)).norm())
        .sum();
    Ok(sum / points.len() as f64)
}

/// Mean over `X` of the distance from `gt(X)` to the closest `est(Y)`.
pub fn add_s_score(gt: &Pose, est: &Pose, points: &[Point3]) -> Result<f64> {
    non_empty(points)?;
    let moved: Vec<_> = points.iter().map(|&p| est.transform(p)).collect();
    let sum: f64 = points
        .iter()
        .map(|&p| {
            let g = gt.transform(p);
            moved
                .iter()
                .map(|e| (g - e).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    Ok(sum / points.len() as f64)
}

/// Mean pixel distance between projections under the two poses.
pub fn proj2d_error(gt: &Pose, est: &Pose, points: &[Point3], intr: &Intrinsics) -> Result<f64> {
    non_empty(points)?;
    let mut sum = 0.0;
    for &p in points {
        sum += project(gt, intr, p)?.distance(project(est, intr, p)?);
    }
    Ok(sum / points.len() as f64)
}

/// `(add < 0.1·diameter, proj < 5 px)`, both strict.
pub fn judge(add: f64, diameter: f64, proj: f64) -> (bool, bool) {
    (add < ADD_DIAMETER_FRACTION * diameter, proj < PROJ_THRESHOLD_PX)
}

/// All metrics for one estimate. `add_correct` judges ADD-S instead of ADD
/// when `symmetric` is set.
pub fn evaluate(
    gt: &Pose,
    est: &Pose,
    points: &[Point3],
    intr: &Intrinsics,
    diameter: f64,
    symmetric: bool,
) -> Result<EvalRecord> {
    let add = add_score(gt, est, points)?;
    let add_s = add_s_score(gt, est, points)?;
    let proj2d = proj2d_error(gt, est, points, intr)?;
    let (add_correct, proj_correct) = judge(if symmetric { add_s } else { add }, diameter, proj2d);
    Ok(EvalRecord {
        add,
        add_s,
        proj2d,
        add_correct,
        proj_correct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn square() -> Vec<Point3> {
        vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(0.0, -1.0, 0.0),
        ]
    }

    #[test]
    fn identical_poses_score_zero() {
        let p = Pose::from_axis_angle(Vector3::new(0.1, 0.2, 0.3), Vector3::new(0.0, 0.0, 5.0));
        let intr = Intrinsics::new(100.0, 100.0, 50.0, 50.0).unwrap();
        assert_eq!(add_score(&p, &p, &square()).unwrap(), 0.0);
        assert_eq!(add_s_score(&p, &p, &square()).unwrap(), 0.0);
        assert_eq!(proj2d_error(&p, &p, &square(), &intr).unwrap(), 0.0);
    }

    #[test]
    fn translation_offset() {
        let gt = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let est = Pose::from_translation(Vector3::new(0.01, 0.0, 1.0));
        assert!((add_score(&gt, &est, &square()).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn symmetric_square() {
        let gt = Pose::from_translation(Vector3::new(0.0, 0.0, 4.0));
        let est = Pose::from_axis_angle(Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2), gt.translation);
        let add = add_score(&gt, &est, &square()).unwrap();
        let add_s = add_s_score(&gt, &est, &square()).unwrap();
        assert!((add - 2f64.sqrt()).abs() < 1e-12);
        assert!(add_s < 1e-12);
    }

    #[test]
    fn empty_points_rejected() {
        let p = Pose::identity();
        assert_eq!(add_score(&p, &p, &[]), Err(Error::EmptyPointSet));
        assert_eq!(add_s_score(&p, &p, &[]), Err(Error::EmptyPointSet));
    }

    #[test]
    fn judge_is_strict() {
        assert!(judge(0.099, 1.0, 0.0).0);
        assert!(!judge(0.1, 1.0, 0.0).0);
        assert!(judge(0.0, 1.0, 0.0).0);
        assert!(!judge(0.0, 1.0, 5.0).1);
        assert!(judge(0.0, 1.0, 4.999).1);
    }
}
