//! Vector-field regression loss, the proxy voting loss, segmentation loss and
//! the weight schedules that combine them.
//!
//! Every loss is a plain sum over masked pixels. Gradients are taken with
//! respect to the estimated direction at each pixel and are exactly zero at
//! unmasked pixels. Accumulation is serial in row-major order so values are
//! reproducible bit-for-bit.
//!
//! The regression loss applies the smooth-ℓ1 penalty once per pixel to the
//! ℓ1 norm of the residual `|u.x − v.x| + |u.y − v.y|`, rather than once per
//! component. The two readings only differ when a residual straddles the
//! quadratic/linear branch boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Mask, SegScores, VectorField};
use crate::geometry::{line_residual, Direction2, Point2, EPS_NORM};

/// Loss value plus its gradient with respect to every pixel of the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub value: f64,
    pub grad: VectorField,
    /// Masked pixels skipped because their direction norm was below [`EPS_NORM`].
    pub skipped: usize,
}

/// Smooth-ℓ1 penalty and its derivative.
///
/// `0.5·a²` for `|a| < 1`, `|a| − 0.5` otherwise.
#[inline]
pub fn smooth_l1(a: f64) -> (f64, f64) {
    if a.abs() < 1.0 {
        (0.5 * a * a, a)
    } else {
        (a.abs() - 0.5, a.signum())
    }
}

#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Regression loss `Σ_{p∈M} ℓ1(‖u(p) − v(p)‖₁)` between an estimate `est`
/// and the ground-truth field `gt`.
pub fn vf_loss(est: &VectorField, gt: &VectorField, mask: &Mask) -> Result<LossReport> {
    est.check_matches(gt.dims())?;
    mask.check_matches(est.dims())?;
    let (w, h) = est.dims();
    let mut grad = VectorField::zeros(w, h);
    let mut value = 0.0;
    let (v, u) = (est.as_slice(), gt.as_slice());
    let g = grad.as_mut_slice();
    for i in mask.indices() {
        let (rx, ry) = (v[i].x - u[i].x, v[i].y - u[i].y);
        let (l, dl) = smooth_l1(rx.abs() + ry.abs());
        value += l;
        g[i] = Direction2::new(dl * sign0(rx), dl * sign0(ry));
    }
    Ok(LossReport {
        value,
        grad,
        skipped: 0,
    })
}

/// Proxy distance and its gradient with respect to `v` for a single pixel.
///
/// Returns `None` when `‖v‖ < EPS_NORM`.
#[inline]
pub fn proxy_distance_grad(p: Point2, v: Direction2, k: Point2) -> Option<(f64, Direction2)> {
    let n2 = v.x * v.x + v.y * v.y;
    let n = n2.sqrt();
    if !(n >= EPS_NORM) {
        return None;
    }
    // r = v.x·(p.y − k.y) + v.y·(k.x − p.x)
    let r = line_residual(p, v, k);
    let (a, b) = (p.y - k.y, k.x - p.x);
    // |r| within rounding of its own terms is an exact hit: take the zero
    // subgradient rather than a sign decided by roundoff
    let tol = 4.0 * f64::EPSILON * (v.x.abs() * (p.y.abs() + k.y.abs()) + v.y.abs() * (p.x.abs() + k.x.abs()));
    let s = if r.abs() <= tol { 0.0 } else { sign0(r) };
    let ar = r.abs();
    let n3 = n2 * n;
    let d = ar / n;
    let grad = Direction2::new(s * a / n - ar * v.x / n3, s * b / n - ar * v.y / n3);
    Some((d, grad))
}

/// Proxy voting loss `Σ_{p∈M} ℓ1(d(p, v(p), k))`, with `d` the perpendicular
/// distance from keypoint `k` to the line through `p` along `v(p)`.
///
/// Degenerate pixels contribute nothing and are counted in `skipped`.
pub fn dpvl(est: &VectorField, mask: &Mask, k: Point2) -> Result<LossReport> {
    mask.check_matches(est.dims())?;
    let (w, h) = est.dims();
    let mut grad = VectorField::zeros(w, h);
    let mut value = 0.0;
    let mut skipped = 0;
    let v = est.as_slice();
    let g = grad.as_mut_slice();
    for i in mask.indices() {
        let p = mask.center_of(i);
        match proxy_distance_grad(p, v[i], k) {
            Some((d, dd)) => {
                let (l, dl) = smooth_l1(d);
                value += l;
                g[i] = dd.scale(dl);
            }
            None => skipped += 1,
        }
    }
    Ok(LossReport { value, grad, skipped })
}

/// Segmentation loss `−Σ_{p∈M} log s(p)` over foreground pixels only.
pub fn seg_loss(scores: &SegScores, mask: &Mask) -> Result<f64> {
    mask.check_matches(scores.dims())?;
    let s = scores.as_slice();
    Ok(-mask.indices().map(|i| s[i].ln()).sum::<f64>())
}

/// Two-class cross-entropy: foreground term of [`seg_loss`] plus
/// `−Σ_{p∉M} log(1 − s(p))`.
pub fn seg_loss_two_class(scores: &SegScores, mask: &Mask) -> Result<f64> {
    mask.check_matches(scores.dims())?;
    let total = scores
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .map(|(&s, &fg)| if fg { s.ln() } else { (1.0 - s).ln() })
        .sum::<f64>();
    Ok(-total)
}

/// `α·L_seg + L_vf + β·L_pv`.
#[inline]
pub fn total_loss(seg: f64, vf: f64, pv: f64, alpha: f64, beta: f64) -> f64 {
    alpha * seg + vf + beta * pv
}

/// Per-epoch geometric growth of the segmentation and proxy-loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    pub alpha0: f64,
    pub alpha_factor: f64,
    pub alpha_cap: f64,
    pub beta0: f64,
    pub beta_factor: f64,
    pub beta_cap: f64,
}

impl Default for WeightSchedule {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            alpha_factor: 1.1,
            alpha_cap: 10.0,
            beta0: 1e-3,
            beta_factor: 1.5,
            beta_cap: 1e-2,
        }
    }
}

impl WeightSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_factor >= 1.0
            && self.beta_factor >= 1.0
            && self.alpha_cap >= self.alpha0
            && self.beta_cap >= self.beta0
            && self.alpha0 >= 0.0
            && self.beta0 >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid weight schedule {self:?}")));
        }
        Ok(())
    }
}

/// `(α, β)` at `epoch`: each grows geometrically from its initial value and
/// saturates at its cap.
pub fn schedule_weights(epoch: u32, sched: &WeightSchedule) -> (f64, f64) {
    let e = epoch.min(i32::MAX as u32) as i32;
    let alpha = (sched.alpha0 * sched.alpha_factor.powi(e)).min(sched.alpha_cap);
    let beta = (sched.beta0 * sched.beta_factor.powi(e)).min(sched.beta_cap);
    (alpha, beta)
}
