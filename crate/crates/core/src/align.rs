//! Rigid (rotation + translation, no scale) least-squares alignment.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Finds `(R, t)` minimizing `Σ ‖R·src_i + t − dst_i‖²` (Umeyama without scale).
///
/// The rotation comes from the SVD of the cross-covariance with the sign of
/// the last singular direction flipped when needed, so `det(R) = +1`.
pub fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Pose> {
    if src.len() != dst.len() {
        return Err(Error::DegenerateInput("point sets differ in length"));
    }
    if src.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            have: src.len(),
        });
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;

    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (d - mu_d) * (s - mu_s).transpose();
    }

    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut fix = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let rotation = u * fix * v_t;
    let translation = mu_d - rotation * mu_s;
    Ok(Pose { rotation, translation })
}
