//! Synthetic scenes with exact ground truth: random poses, splatted object
//! masks, ideal keypoint direction fields, and controlled corruption of those
//! fields (angular noise, sign flips, blob occlusion).

use std::collections::VecDeque;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Mask, VectorField};
use crate::geometry::{pixel_center, project, unit_direction, Direction2, Intrinsics, Point2, Point3, Pose};
use crate::model::{KeypointSet, ModelCloud};

/// Radius in pixels of the disc splatted around each projected model point.
pub const SPLAT_RADIUS: f64 = 1.5;
const MAX_POSE_TRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub pose: Pose,
    pub intr: Intrinsics,
    pub width: usize,
    pub height: usize,
    pub mask: Mask,
    /// Projected keypoints; may fall outside the mask or the image.
    pub keypoints2: Vec<Point2>,
    /// Keypoints in the model frame, same order as `keypoints2`.
    pub keypoints3: Vec<Point3>,
    /// One ideal direction field per keypoint.
    pub gt_fields: Vec<VectorField>,
    /// Per keypoint: masked pixels whose center coincides with the keypoint
    /// (their field entry is zero).
    pub degenerate: Vec<Vec<usize>>,
}

/// Box from which poses are drawn, plus the image-border margin the projected
/// model must respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseRanges {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
    pub margin_px: f64,
}

impl Default for PoseRanges {
    fn default() -> Self {
        Self {
            x: (-0.02, 0.02),
            y: (-0.02, 0.02),
            z: (0.5, 0.7),
            margin_px: 2.0,
        }
    }
}

/// Rotation uniformly distributed on SO(3) (normalized 4D Gaussian quaternion).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-6 {
            return UnitQuaternion::new_normalize(Quaternion::new(q[0], q[1], q[2], q[3]));
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draws a pose whose every model point projects inside the image with
/// `ranges.margin_px` to spare.
pub fn sample_pose(
    rng_seed: u64,
    ranges: &PoseRanges,
    cloud: &ModelCloud,
    intr: &Intrinsics,
    width: usize,
    height: usize,
) -> Result<Pose> {
    if !(ranges.z.0 > 0.0 && ranges.z.1 >= ranges.z.0) {
        return Err(Error::Config(format!("z-range {:?} must be positive", ranges.z)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (w, h, m) = (width as f64, height as f64, ranges.margin_px);
    for _ in 0..MAX_POSE_TRIES {
        let q = random_rotation(&mut rng);
        let t = Vector3::new(
            uniform(&mut rng, ranges.x),
            uniform(&mut rng, ranges.y),
            uniform(&mut rng, ranges.z),
        );
        let pose = Pose {
            rotation: q.to_rotation_matrix().into_inner(),
            translation: t,
        };
        let inside = cloud.points.iter().all(|&p| match project(&pose, intr, p) {
            Ok(q) => q.x >= m && q.y >= m && q.x <= w - m && q.y <= h - m,
            Err(_) => false,
        });
        if inside {
            return Ok(pose);
        }
    }
    Err(Error::Config(format!(
        "no pose within {MAX_POSE_TRIES} tries keeps the model inside the {width}x{height} image"
    )))
}

/// Ideal field toward `k` over the masked pixels; pixels whose center is `k`
/// get a zero vector and are listed in the second return value.
pub fn field_toward(mask: &Mask, k: Point2) -> (VectorField, Vec<usize>) {
    let mut field = VectorField::zeros(mask.width(), mask.height());
    let mut degenerate = Vec::new();
    for i in mask.indices() {
        match unit_direction(mask.center_of(i), k) {
            Ok(u) => field.as_mut_slice()[i] = u,
            Err(_) => degenerate.push(i),
        }
    }
    (field, degenerate)
}

/// Union of radius-[`SPLAT_RADIUS`] discs around the projected model points.
pub fn splat_mask(cloud: &ModelCloud, pose: &Pose, intr: &Intrinsics, width: usize, height: usize) -> Result<Mask> {
    let mut mask = Mask::empty(width, height);
    let r = SPLAT_RADIUS;
    for &p in &cloud.points {
        let q = project(pose, intr, p)?;
        let row_lo = (q.y - r - 0.5).floor().max(0.0) as usize;
        let col_lo = (q.x - r - 0.5).floor().max(0.0) as usize;
        let row_hi = ((q.y + r - 0.5).ceil().max(-1.0) as i64).min(height as i64 - 1);
        let col_hi = ((q.x + r - 0.5).ceil().max(-1.0) as i64).min(width as i64 - 1);
        if row_hi < 0 || col_hi < 0 {
            continue;
        }
        for row in row_lo..=row_hi as usize {
            for col in col_lo..=col_hi as usize {
                if pixel_center(row, col).distance(q) <= r {
                    mask.set(row, col, true);
                }
            }
        }
    }
    Ok(mask)
}

/// Renders the mask, keypoint projections and ideal fields for one pose.
pub fn make_scene(
    cloud: &ModelCloud,
    keys: &KeypointSet,
    pose: &Pose,
    intr: &Intrinsics,
    width: usize,
    height: usize,
) -> Result<SceneSample> {
    let mask = splat_mask(cloud, pose, intr, width, height)?;
    let keypoints2 = keys
        .points3
        .iter()
        .map(|&k| project(pose, intr, k))
        .collect::<Result<Vec<_>>>()?;
    let (gt_fields, degenerate) = keypoints2.iter().map(|&k| field_toward(&mask, k)).unzip();
    Ok(SceneSample {
        pose: *pose,
        intr: *intr,
        width,
        height,
        mask,
        keypoints2,
        keypoints3: keys.points3.clone(),
        gt_fields,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Standard deviation of the per-pixel rotation, in degrees.
    pub angular_sigma: f64,
    pub flip_prob: f64,
    /// Fraction of the masked pixels removed as one grown blob.
    pub occlusion_frac: f64,
    pub rng_seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            angular_sigma: 0.0,
            flip_prob: 0.0,
            occlusion_frac: 0.0,
            rng_seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.angular_sigma >= 0.0 && self.angular_sigma.is_finite())
            || !unit(self.flip_prob)
            || !unit(self.occlusion_frac)
        {
            return Err(Error::Config(format!("invalid noise spec {self:?}")));
        }
        Ok(())
    }
}

/// Removes `count` masked pixels as 4-connected blobs grown breadth-first from
/// random seed pixels.
fn occlude<R: Rng + ?Sized>(mask: &mut Mask, count: usize, rng: &mut R) {
    let (w, h) = mask.dims();
    let mut removed = 0;
    while removed < count {
        let remaining: Vec<usize> = mask.indices().collect();
        if remaining.is_empty() {
            break;
        }
        let seed = remaining[rng.random_range(0..remaining.len())];
        let mut queue = VecDeque::from([seed]);
        let mut queued = vec![false; w * h];
        queued[seed] = true;
        while let Some(i) = queue.pop_front() {
            if removed == count {
                break;
            }
            mask.set(i / w, i % w, false);
            removed += 1;
            let (r, c) = ((i / w) as i64, (i % w) as i64);
            for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if mask.get(nr as usize, nc as usize) && !queued[j] {
                    queued[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
}

/// Applies `spec` to a mask and its fields. Occluded pixels leave the mask and
/// their field entries are zeroed; pixels outside the input mask are untouched.
pub fn corrupt_fields(mask: &Mask, fields: &[VectorField], spec: &NoiseSpec) -> Result<(Mask, Vec<VectorField>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut out_mask = mask.clone();
    let target = (spec.occlusion_frac * mask.count() as f64).round() as usize;
    if target > 0 {
        occlude(&mut out_mask, target, &mut rng);
    }
    let sigma = spec.angular_sigma.to_radians();
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut out_fields = Vec::with_capacity(fields.len());
    for f in fields {
        let mut g = f.clone();
        let data = g.as_mut_slice();
        for i in mask.indices() {
            if !out_mask.as_slice()[i] {
                data[i] = Direction2::ZERO;
                continue;
            }
            let mut v = data[i];
            if sigma > 0.0 {
                v = v.rotated(normal.sample(&mut rng));
            }
            if spec.flip_prob > 0.0 && rng.random::<f64>() < spec.flip_prob {
                v = -v;
            }
            data[i] = v;
        }
        out_fields.push(g);
    }
    Ok((out_mask, out_fields))
}

/// [`corrupt_fields`] applied to a whole scene.
pub fn corrupt(sample: &SceneSample, spec: &NoiseSpec) -> Result<SceneSample> {
    let (mask, gt_fields) = corrupt_fields(&sample.mask, &sample.gt_fields, spec)?;
    let degenerate = sample
        .degenerate
        .iter()
        .map(|d| d.iter().copied().filter(|&i| mask.as_slice()[i]).collect())
        .collect();
    Ok(SceneSample {
        mask,
        gt_fields,
        degenerate,
        ..sample.clone()
    })
}
