//! Brute-force reference implementations for the test suites.
//!
//! Nothing here shares code with `proxyvote-core`: points are plain tuples,
//! fields are `&[(f64, f64)]` in row-major order with a parallel `&[bool]`
//! mask, and every formula is written out again from scratch. Speed is not a
//! goal.

pub type P2 = (f64, f64);
pub type P3 = (f64, f64, f64);

/// Outcome of comparing a value against an oracle reference.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub reference: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
    /// Largest absolute (or relative, for [`OracleResult::relative`]) gap.
    pub discrepancy: f64,
}

impl OracleResult {
    pub fn absolute(reference: f64, value: f64, tolerance: f64) -> Self {
        Self::absolute_all(&[reference], &[value], tolerance)
    }

    pub fn absolute_all(reference: &[f64], values: &[f64], tolerance: f64) -> Self {
        let discrepancy = if reference.len() != values.len() {
            f64::INFINITY
        } else {
            reference
                .iter()
                .zip(values)
                .map(|(r, v)| if r == v { 0.0 } else { (r - v).abs() })
                .fold(0.0, |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) })
        };
        OracleResult {
            reference: reference.to_vec(),
            tolerance,
            passed: discrepancy <= tolerance,
            discrepancy,
        }
    }

    /// Relative error `|r − v| / max(|r|, floor)`.
    pub fn relative(reference: f64, value: f64, tolerance: f64, floor: f64) -> Self {
        let gap = (reference - value).abs() / reference.abs().max(floor);
        let discrepancy = if gap.is_nan() { f64::INFINITY } else { gap };
        OracleResult {
            reference: vec![reference],
            tolerance,
            passed: discrepancy <= tolerance,
            discrepancy,
        }
    }

    pub fn assert_ok(&self, what: &str) {
        assert!(
            self.passed,
            "{what}: discrepancy {:e} exceeds tolerance {:e} (reference {:?})",
            self.discrepancy, self.tolerance, self.reference
        );
    }
}

fn hypot(x: f64, y: f64) -> f64 {
    (x * x + y * y).sqrt()
}

/// Centre of pixel `index` in a row-major image of the given width.
pub fn pixel_xy(index: usize, width: usize) -> P2 {
    let row = index / width;
    let col = index % width;
    (col as f64 + 0.5, row as f64 + 0.5)
}

// ---------------------------------------------------------------------------
// line distance

/// Minimum of ‖k − (p + t·v)‖ over a uniform grid of `grid_n` values of `t`,
/// followed by a second equally fine scan around the best cell.
///
/// The first scan covers |t| ≤ ‖k − p‖ / ‖v‖, which always contains the
/// minimizer.
pub fn oracle_line_distance(p: P2, v: P2, k: P2, grid_n: usize) -> f64 {
    assert!(grid_n >= 100_000, "grid too coarse");
    let vn = hypot(v.0, v.1);
    let reach = hypot(k.0 - p.0, k.1 - p.1) / vn;
    if reach == 0.0 {
        return 0.0;
    }
    let dist = |t: f64| hypot(k.0 - (p.0 + t * v.0), k.1 - (p.1 + t * v.1));
    let scan = |lo: f64, hi: f64| {
        let mut best = (f64::INFINITY, lo);
        for i in 0..=grid_n {
            let t = lo + (hi - lo) * i as f64 / grid_n as f64;
            let d = dist(t);
            if d < best.0 {
                best = (d, t);
            }
        }
        best
    };
    let step = 2.0 * reach / grid_n as f64;
    let (_, t0) = scan(-reach, reach);
    scan(t0 - step, t0 + step).0
}

// ---------------------------------------------------------------------------
// finite differences

/// Central-difference gradient of `loss` with respect to every component of
/// the masked pixels; unmasked pixels get zero.
pub fn oracle_fd_gradient(loss: impl Fn(&[P2]) -> f64, field: &[P2], mask: &[bool], step: f64) -> Vec<P2> {
    assert!((1e-8..=1e-4).contains(&step), "step out of range");
    assert_eq!(field.len(), mask.len());
    let mut work = field.to_vec();
    let mut out = vec![(0.0, 0.0); field.len()];
    for i in 0..field.len() {
        if !mask[i] {
            continue;
        }
        let orig = work[i];
        work[i].0 = orig.0 + step;
        let up = loss(&work);
        work[i].0 = orig.0 - step;
        let down = loss(&work);
        work[i].0 = orig.0;
        out[i].0 = (up - down) / (2.0 * step);

        work[i].1 = orig.1 + step;
        let up = loss(&work);
        work[i].1 = orig.1 - step;
        let down = loss(&work);
        work[i].1 = orig.1;
        out[i].1 = (up - down) / (2.0 * step);
    }
    out
}

/// Central-difference derivative of a scalar function.
pub fn oracle_fd_scalar(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

// ---------------------------------------------------------------------------
// voting

/// Intersection of the lines `a + s·u` and `b + t·w` by Cramer's rule;
/// `None` if the directions are parallel within `1e-6` of their sine.
pub fn oracle_intersection(a: P2, u: P2, b: P2, w: P2) -> Option<P2> {
    // s·u − t·w = b − a
    let det = u.0 * (-w.1) - (-w.0) * u.1;
    let nu = hypot(u.0, u.1);
    let nw = hypot(w.0, w.1);
    if nu == 0.0 || nw == 0.0 || (det / (nu * nw)).abs() < 1e-6 {
        return None;
    }
    let (rx, ry) = (b.0 - a.0, b.1 - a.1);
    let s = (rx * (-w.1) - (-w.0) * ry) / det;
    Some((a.0 + s * u.0, a.1 + s * u.1))
}

/// Number of masked pixels whose direction points at `h` with cosine at
/// least `threshold`. Pixels within half a pixel of `h` and near-zero
/// directions do not vote.
pub fn oracle_inlier_count(h: P2, field: &[P2], mask: &[bool], width: usize, threshold: f64) -> usize {
    let mut n = 0;
    for i in 0..field.len() {
        if !mask[i] {
            continue;
        }
        let p = pixel_xy(i, width);
        let (dx, dy) = (h.0 - p.0, h.1 - p.1);
        let dn = hypot(dx, dy);
        let vn = hypot(field[i].0, field[i].1);
        if dn < 0.5 || vn < 1e-8 {
            continue;
        }
        let cos = (field[i].0 * dx + field[i].1 * dy) / (vn * dn);
        if cos >= threshold {
            n += 1;
        }
    }
    n
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllPairsStats {
    /// One entry per non-parallel unordered pixel pair.
    pub hypotheses: Vec<P2>,
    /// Median distance from the hypotheses to the true keypoint.
    pub median_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetExceeded {
    pub pixels: usize,
    pub budget: usize,
}

pub const ALL_PAIRS_BUDGET: usize = 2000;

/// Every pairwise ray intersection over the masked pixels.
pub fn oracle_all_pairs_vote(
    field: &[P2],
    mask: &[bool],
    width: usize,
    k_true: P2,
) -> Result<AllPairsStats, BudgetExceeded> {
    let pix: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if pix.len() > ALL_PAIRS_BUDGET {
        return Err(BudgetExceeded {
            pixels: pix.len(),
            budget: ALL_PAIRS_BUDGET,
        });
    }
    let mut hypotheses = Vec::new();
    for a in 0..pix.len() {
        for b in a + 1..pix.len() {
            let (i, j) = (pix[a], pix[b]);
            if let Some(h) = oracle_intersection(pixel_xy(i, width), field[i], pixel_xy(j, width), field[j]) {
                hypotheses.push(h);
            }
        }
    }
    let mut d: Vec<f64> = hypotheses
        .iter()
        .map(|h| hypot(h.0 - k_true.0, h.1 - k_true.1))
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_distance = if d.is_empty() {
        None
    } else if d.len() % 2 == 1 {
        Some(d[d.len() / 2])
    } else {
        Some(0.5 * (d[d.len() / 2 - 1] + d[d.len() / 2]))
    };
    Ok(AllPairsStats {
        hypotheses,
        median_distance,
    })
}

/// Inlier count of every hypothesis, in the order given. O(H·M).
pub fn oracle_score_all(hypotheses: &[P2], field: &[P2], mask: &[bool], width: usize, threshold: f64) -> Vec<usize> {
    hypotheses
        .iter()
        .map(|&h| oracle_inlier_count(h, field, mask, width, threshold))
        .collect()
}

/// Inlier count at the given quantile (0 = worst, 1 = best) of `scores`.
pub fn score_quantile(scores: &[usize], q: f64) -> usize {
    let mut s = scores.to_vec();
    s.sort_unstable();
    let idx = ((s.len() as f64 - 1.0) * q).round() as usize;
    s[idx.min(s.len() - 1)]
}

// ---------------------------------------------------------------------------
// projection

/// Pinhole projection of model point `x` under `rot` (row-major) and `t`.
/// Returns `None` for points at or behind the camera.
pub fn oracle_project(rot: &[f64; 9], t: &[f64; 3], intr: (f64, f64, f64, f64), x: P3) -> Option<P2> {
    let (fx, fy, cx, cy) = intr;
    let mut cam = [t[0], t[1], t[2]];
    let xs = [x.0, x.1, x.2];
    for (r, c) in cam.iter_mut().enumerate() {
        for (col, xv) in xs.iter().enumerate() {
            *c += rot[3 * r + col] * xv;
        }
    }
    if cam[2] <= 0.0 {
        return None;
    }
    Some((cx + fx * (cam[0] / cam[2]), cy + fy * (cam[1] / cam[2])))
}

fn transform(rot: &[f64; 9], t: &[f64; 3], x: P3) -> P3 {
    (
        rot[0] * x.0 + rot[1] * x.1 + rot[2] * x.2 + t[0],
        rot[3] * x.0 + rot[4] * x.1 + rot[5] * x.2 + t[1],
        rot[6] * x.0 + rot[7] * x.1 + rot[8] * x.2 + t[2],
    )
}

fn dist3(a: P3, b: P3) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2) + (a.2 - b.2).powi(2)).sqrt()
}

// ---------------------------------------------------------------------------
// metrics

/// Mean distance between corresponding transformed points.
pub fn oracle_add(r1: &[f64; 9], t1: &[f64; 3], r2: &[f64; 9], t2: &[f64; 3], points: &[P3]) -> f64 {
    let total: f64 = points
        .iter()
        .map(|&x| dist3(transform(r1, t1, x), transform(r2, t2, x)))
        .sum();
    total / points.len() as f64
}

/// Mean over ground-truth points of the distance to the closest estimated
/// point.
pub fn oracle_add_s(r_gt: &[f64; 9], t_gt: &[f64; 3], r_est: &[f64; 9], t_est: &[f64; 3], points: &[P3]) -> f64 {
    let est: Vec<P3> = points.iter().map(|&x| transform(r_est, t_est, x)).collect();
    let mut total = 0.0;
    for &x in points {
        let g = transform(r_gt, t_gt, x);
        let mut best = f64::INFINITY;
        for &e in &est {
            best = best.min(dist3(g, e));
        }
        total += best;
    }
    total / points.len() as f64
}

/// Mean pixel distance between the two projections of every point.
pub fn oracle_proj2d(
    r1: &[f64; 9],
    t1: &[f64; 3],
    r2: &[f64; 9],
    t2: &[f64; 3],
    intr: (f64, f64, f64, f64),
    points: &[P3],
) -> Option<f64> {
    let mut total = 0.0;
    for &x in points {
        let a = oracle_project(r1, t1, intr, x)?;
        let b = oracle_project(r2, t2, intr, x)?;
        total += hypot(a.0 - b.0, a.1 - b.1);
    }
    Some(total / points.len() as f64)
}

/// Largest pairwise distance, all pairs.
pub fn oracle_diameter(points: &[P3]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.max(dist3(points[i], points[j]));
        }
    }
    best
}

// ---------------------------------------------------------------------------
// farthest point sampling

/// For each selection after the first, its distance to the nearest earlier
/// selection.
pub fn oracle_fps_min_distances(points: &[P3], selected: &[usize]) -> Vec<f64> {
    (1..selected.len())
        .map(|s| {
            selected[..s]
                .iter()
                .map(|&j| dist3(points[selected[s]], points[j]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Checks that every selection is a greedy farthest point: no other point
/// is farther (beyond `tolerance`) from the earlier selections. The
/// discrepancy is the worst amount by which some point beat the choice.
pub fn oracle_fps_verify(points: &[P3], selected: &[usize], tolerance: f64) -> OracleResult {
    let mut worst = 0.0f64;
    let chosen = oracle_fps_min_distances(points, selected);
    for s in 1..selected.len() {
        let mut best = 0.0f64;
        for x in points {
            let d = selected[..s]
                .iter()
                .map(|&j| dist3(*x, points[j]))
                .fold(f64::INFINITY, f64::min);
            best = best.max(d);
        }
        worst = worst.max(best - chosen[s - 1]);
    }
    let mut distinct = selected.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != selected.len() {
        worst = f64::INFINITY;
    }
    OracleResult {
        reference: chosen,
        tolerance,
        passed: worst <= tolerance,
        discrepancy: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_distance_axis_and_on_line() {
        assert!((oracle_line_distance((0.0, 0.0), (1.0, 0.0), (0.0, 5.0), 100_000) - 5.0).abs() < 1e-6);
        assert!(oracle_line_distance((1.0, 1.0), (1.0, 2.0), (3.0, 5.0), 100_000) < 1e-6);
        assert_eq!(oracle_line_distance((1.0, 1.0), (1.0, 2.0), (1.0, 1.0), 100_000), 0.0);
    }

    #[test]
    fn fd_basics() {
        let mask = [true, false];
        let g = oracle_fd_gradient(|f| f[0].0 * f[0].0 + f[1].1, &[(1.0, 2.0), (3.0, 4.0)], &mask, 1e-6);
        assert!((g[0].0 - 2.0).abs() < 1e-6 && g[0].1.abs() < 1e-9);
        assert_eq!(g[1], (0.0, 0.0));
        let huber = |a: f64| if a.abs() < 1.0 { 0.5 * a * a } else { a.abs() - 0.5 };
        assert!((oracle_fd_scalar(huber, 0.5, 1e-6) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn all_pairs_exact_and_parallel() {
        // 4x4 image, all pixels masked, exact field toward (10, 7)
        let w = 4;
        let k = (10.0, 7.0);
        let field: Vec<P2> = (0..16)
            .map(|i| {
                let p = pixel_xy(i, w);
                (k.0 - p.0, k.1 - p.1)
            })
            .collect();
        let mask = vec![true; 16];
        let st = oracle_all_pairs_vote(&field, &mask, w, k).unwrap();
        assert!(!st.hypotheses.is_empty());
        for h in &st.hypotheses {
            assert!((h.0 - k.0).abs() < 1e-9 && (h.1 - k.1).abs() < 1e-9);
        }
        let par = vec![(1.0, 0.0); 16];
        let st = oracle_all_pairs_vote(&par, &mask, w, k).unwrap();
        assert!(st.hypotheses.is_empty() && st.median_distance.is_none());
        let big = vec![true; 2001];
        assert!(oracle_all_pairs_vote(&vec![(1.0, 0.0); 2001], &big, 2001, k).is_err());
    }

    #[test]
    fn projection_and_metrics() {
        let id = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let p = oracle_project(&id, &[0.0, 0.0, 2.0], (100.0, 100.0, 32.0, 32.0), (0.2, -0.4, 0.0)).unwrap();
        assert!((p.0 - 42.0).abs() < 1e-12 && (p.1 - 12.0).abs() < 1e-12);
        assert!(oracle_project(&id, &[0.0, 0.0, -1.0], (1.0, 1.0, 0.0, 0.0), (0.0, 0.0, 0.0)).is_none());
        let pts = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)];
        assert!((oracle_add(&id, &[0.0; 3], &id, &[0.0, 3.0, 4.0], &pts) - 5.0).abs() < 1e-12);
        assert_eq!(oracle_diameter(&pts), 1.0);
    }

    #[test]
    fn fps_verifier_catches_bad_choice() {
        let pts = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (5.0, 0.0, 0.0)];
        assert!(oracle_fps_verify(&pts, &[0, 2, 1], 0.0).passed);
        let bad = oracle_fps_verify(&pts, &[0, 1, 2], 0.0);
        assert!(!bad.passed && (bad.discrepancy - 4.0).abs() < 1e-12);
        assert!(!oracle_fps_verify(&pts, &[0, 0], 0.0).passed);
    }
}
