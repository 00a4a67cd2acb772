//! RANSAC-style keypoint voting from a direction field.
//!
//! Hypotheses are intersections of the direction lines of randomly drawn
//! pixel pairs. Each hypothesis is scored by the number of masked pixels whose
//! direction points at it (cosine above a threshold); the winner is optionally
//! refined to the least-squares intersection of its inlier lines.

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Mask, VectorField};
use crate::geometry::{ray_intersection, Direction2, Point2, EPS_NORM};

/// Pixels closer than this to a hypothesis cannot vote for it.
pub const MIN_VOTE_DISTANCE: f64 = 0.5;

const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub location: Point2,
    pub votes: usize,
    /// Flat indices of the two pixels whose lines produced this hypothesis.
    pub pixels: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VotingConfig {
    pub num_samples: usize,
    pub inlier_cos_threshold: f64,
    pub refine: bool,
    pub rng_seed: u64,
}

impl Default for VotingConfig {
    fn default() -> Self {
        Self {
            num_samples: 512,
            inlier_cos_threshold: 0.99,
            refine: true,
            rng_seed: 0,
        }
    }
}

impl VotingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Config("num_samples must be at least 1".into()));
        }
        if !(self.inlier_cos_threshold > 0.0 && self.inlier_cos_threshold < 1.0) {
            return Err(Error::Config(format!(
                "inlier_cos_threshold {} must lie in (0, 1)",
                self.inlier_cos_threshold
            )));
        }
        Ok(())
    }
}

/// Outcome of [`vote_keypoint`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteResult {
    /// Final keypoint estimate (refined when enabled and well conditioned).
    pub location: Point2,
    /// Inlier count at `location`.
    pub votes: usize,
    /// Best unrefined hypothesis.
    pub best: Hypothesis,
    pub refined: bool,
}

fn inlier(p: Point2, v: Direction2, h: Point2, threshold: f64) -> bool {
    let to_h = p.to(h);
    let dist = to_h.norm();
    let n = v.norm();
    if dist < MIN_VOTE_DISTANCE || n < EPS_NORM {
        return false;
    }
    v.dot(to_h) / (n * dist) >= threshold
}

/// Number of masked pixels whose direction points at `h` with cosine ≥ `threshold`.
pub fn count_inliers(h: Point2, field: &VectorField, mask: &Mask, threshold: f64) -> usize {
    let v = field.as_slice();
    mask.indices()
        .filter(|&i| inlier(mask.center_of(i), v[i], h, threshold))
        .count()
}

fn inlier_indices(h: Point2, field: &VectorField, mask: &Mask, threshold: f64) -> Vec<usize> {
    let v = field.as_slice();
    mask.indices()
        .filter(|&i| inlier(mask.center_of(i), v[i], h, threshold))
        .collect()
}

fn masked_support(field: &VectorField, mask: &Mask) -> Result<Vec<usize>> {
    mask.check_matches(field.dims())?;
    let idx: Vec<usize> = mask.indices().collect();
    if idx.len() < 2 {
        return Err(Error::InsufficientSupport {
            needed: 2,
            have: idx.len(),
        });
    }
    Ok(idx)
}

/// Draws `cfg.num_samples` distinct pixel pairs and intersects their lines.
///
/// Parallel pairs are skipped, so fewer than `num_samples` hypotheses may be
/// returned. Votes are counted for each returned hypothesis.
pub fn generate_hypotheses(field: &VectorField, mask: &Mask, cfg: &VotingConfig) -> Result<Vec<Hypothesis>> {
    cfg.validate()?;
    let support = masked_support(field, mask)?;
    let v = field.as_slice();
    let n = support.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut out = Vec::with_capacity(cfg.num_samples);
    for _ in 0..cfg.num_samples {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let (i, j) = (support[a], support[b]);
        if let Some(h) = ray_intersection(mask.center_of(i), v[i], mask.center_of(j), v[j]) {
            out.push(Hypothesis {
                location: h,
                votes: count_inliers(h, field, mask, cfg.inlier_cos_threshold),
                pixels: [i, j],
            });
        }
    }
    Ok(out)
}

fn better(a: &Hypothesis, b: &Hypothesis) -> bool {
    use std::cmp::Ordering;
    match a.votes.cmp(&b.votes) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => {
            let (pa, pb) = (a.location, b.location);
            pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y)) == Ordering::Less
        }
    }
}

/// Least-squares intersection of the lines through `pixels`: minimizes the sum
/// of squared perpendicular distances. `None` if the normal equations are
/// ill-conditioned.
pub fn least_squares_intersection(field: &VectorField, mask: &Mask, pixels: &[usize]) -> Option<Point2> {
    let v = field.as_slice();
    let mut a = Matrix2::zeros();
    let mut b = Vector2::zeros();
    for &i in pixels {
        let Some(nv) = v[i].normalized() else { continue };
        let n = Vector2::new(nv.x, nv.y);
        let proj = Matrix2::identity() - n * n.transpose();
        let p = mask.center_of(i);
        a += proj;
        b += proj * Vector2::new(p.x, p.y);
    }
    // symmetric PSD: eigenvalues give the 2-norm condition number
    let eig = a.symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return None;
    }
    let x = a.cholesky()?.solve(&b);
    let p = Point2::new(x.x, x.y);
    p.is_finite().then_some(p)
}

/// Sum of squared perpendicular distances from `h` to the lines of `pixels`.
pub fn squared_line_residual(h: Point2, field: &VectorField, mask: &Mask, pixels: &[usize]) -> f64 {
    let v = field.as_slice();
    pixels
        .iter()
        .filter_map(|&i| {
            let nv = v[i].normalized()?;
            let d = nv.cross(mask.center_of(i).to(h));
            Some(d * d)
        })
        .sum()
}

/// Localizes one keypoint: best-voted hypothesis, optionally refined.
pub fn vote_keypoint(field: &VectorField, mask: &Mask, cfg: &VotingConfig) -> Result<VoteResult> {
    let hyps = generate_hypotheses(field, mask, cfg)?;
    let mut best: Option<&Hypothesis> = None;
    for h in &hyps {
        if best.is_none_or(|b| better(h, b)) {
            best = Some(h);
        }
    }
    let best = *best.ok_or(Error::NoValidHypothesis)?;

    if cfg.refine {
        let inliers = inlier_indices(best.location, field, mask, cfg.inlier_cos_threshold);
        if inliers.len() >= 2 {
            if let Some(p) = least_squares_intersection(field, mask, &inliers) {
                return Ok(VoteResult {
                    location: p,
                    votes: count_inliers(p, field, mask, cfg.inlier_cos_threshold),
                    best,
                    refined: true,
                });
            }
        }
    }
    Ok(VoteResult {
        location: best.location,
        votes: best.votes,
        best,
        refined: false,
    })
}
