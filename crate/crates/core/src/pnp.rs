//! Pose from 2D–3D correspondences: EPnP plus optional Levenberg–Marquardt
//! refinement of the reprojection error.
//!
//! EPnP writes every object point as a barycentric combination of a few
//! control points (the centroid plus the scaled principal axes), so the
//! unknown becomes the camera-frame control points. Those lie in the null
//! space of a `2n × 3m` linear system. The null-space coefficients are fixed
//! by requiring inter-control-point distances to match the object frame;
//! three linearized initializations are each polished by Gauss–Newton and the
//! one with the lowest reprojection error wins. The rotation and translation
//! are then recovered by rigid alignment.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector2, Vector3, Vector6};

use crate::align::umeyama;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Point2, Point3, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub object_point: Point3,
    pub image_point: Point2,
}

impl Correspondence {
    pub fn new(object_point: Point3, image_point: Point2) -> Self {
        Self {
            object_point,
            image_point,
        }
    }
}

/// Below this ratio of smallest to largest principal variance the object
/// points are handled as planar.
const PLANAR_RATIO: f64 = 1e-8;
const GAUSS_NEWTON_ITERS: usize = 10;
const GN_BACKTRACKS: usize = 20;

/// Root-mean-square reprojection error in pixels.
pub fn reprojection_rmse(pose: &Pose, corrs: &[Correspondence], intr: &Intrinsics) -> Result<f64> {
    if corrs.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let mut sum = 0.0;
    for c in corrs {
        let q = intr.project_camera(&pose.transform(c.object_point))?;
        let e = q.distance(c.image_point);
        sum += e * e;
    }
    Ok((sum / corrs.len() as f64).sqrt())
}

struct ControlFrame {
    points: Vec<Vector3<f64>>,
    /// Per object point, one weight per control point; rows sum to 1.
    alphas: Vec<Vec<f64>>,
}

fn control_frame(pw: &[Vector3<f64>]) -> Result<ControlFrame> {
    let n = pw.len() as f64;
    let c0 = pw.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in pw {
        let d = p - c0;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    if !(lambda[0] > 0.0) {
        return Err(Error::DegenerateConfiguration("object points coincide"));
    }
    if lambda[1] < PLANAR_RATIO * lambda[0] {
        return Err(Error::DegenerateConfiguration("object points are collinear"));
    }
    let planar = lambda[2] < PLANAR_RATIO * lambda[0];
    let axes = if planar { 2 } else { 3 };

    let mut points = vec![c0];
    let mut basis = Vec::with_capacity(axes);
    for (k, &i) in order.iter().take(axes).enumerate() {
        let e: Vector3<f64> = eig.eigenvectors.column(i).into();
        let axis = e * lambda[k].sqrt();
        points.push(c0 + axis);
        basis.push(axis);
    }

    // barycentric weights: axes are orthogonal so each coordinate is a projection
    let alphas = pw
        .iter()
        .map(|p| {
            let d = p - c0;
            let mut a = Vec::with_capacity(axes + 1);
            a.push(0.0);
            for b in &basis {
                a.push(d.dot(b) / b.norm_squared());
            }
            a[0] = 1.0 - a[1..].iter().sum::<f64>();
            a
        })
        .collect();
    Ok(ControlFrame { points, alphas })
}

fn null_space(frame: &ControlFrame, corrs: &[Correspondence], intr: &Intrinsics) -> Vec<DVector<f64>> {
    let m = frame.points.len();
    let cols = 3 * m;
    let rows = (2 * corrs.len()).max(cols);
    // zero-padding keeps a full set of right singular vectors when 2n < 3m
    let mut mat = DMatrix::<f64>::zeros(rows, cols);
    for (i, (c, a)) in corrs.iter().zip(&frame.alphas).enumerate() {
        let (u, v) = (c.image_point.x, c.image_point.y);
        for j in 0..m {
            mat[(2 * i, 3 * j)] = a[j] * intr.fx;
            mat[(2 * i, 3 * j + 2)] = a[j] * (intr.cx - u);
            mat[(2 * i + 1, 3 * j + 1)] = a[j] * intr.fy;
            mat[(2 * i + 1, 3 * j + 2)] = a[j] * (intr.cy - v);
        }
    }
    let svd = mat.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let dims = if m == 4 { 4 } else { 3 };
    idx.iter().take(dims).map(|&i| v_t.row(i).transpose()).collect()
}

/// Distance constraints between camera-frame control points, expressed in the
/// null-space coefficients.
struct DistanceSystem {
    /// `diffs[pair][k]`: difference of null vector `k` between the pair's two control points.
    diffs: Vec<Vec<Vector3<f64>>>,
    /// Squared object-frame distance of each pair.
    rho: Vec<f64>,
}

impl DistanceSystem {
    fn new(frame: &ControlFrame, null: &[DVector<f64>]) -> Self {
        let m = frame.points.len();
        let mut diffs = Vec::new();
        let mut rho = Vec::new();
        for a in 0..m {
            for b in a + 1..m {
                rho.push((frame.points[a] - frame.points[b]).norm_squared());
                diffs.push(
                    null.iter()
                        .map(|v| {
                            Vector3::new(
                                v[3 * a] - v[3 * b],
                                v[3 * a + 1] - v[3 * b + 1],
                                v[3 * a + 2] - v[3 * b + 2],
                            )
                        })
                        .collect(),
                );
            }
        }
        Self { diffs, rho }
    }

    fn dims(&self) -> usize {
        self.diffs[0].len()
    }

    /// Coefficient of the product `β_i β_j` in pair `pair`'s squared distance.
    fn product_coeff(&self, pair: usize, i: usize, j: usize) -> f64 {
        let d = &self.diffs[pair];
        if i == j {
            d[i].norm_squared()
        } else {
            2.0 * d[i].dot(&d[j])
        }
    }

    /// Least-squares solve for the listed products treated as free unknowns.
    fn linearized(&self, products: &[(usize, usize)]) -> Option<DVector<f64>> {
        let l = DMatrix::from_fn(self.rho.len(), products.len(), |r, c| {
            self.product_coeff(r, products[c].0, products[c].1)
        });
        let rho = DVector::from_column_slice(&self.rho);
        l.svd(true, true).solve(&rho, 1e-14).ok()
    }

    fn residual(&self, beta: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.rho.len(),
            self.diffs.iter().zip(&self.rho).map(|(d, &rho)| {
                let mut s = Vector3::zeros();
                for (k, b) in beta.iter().enumerate() {
                    s += d[k] * *b;
                }
                s.norm_squared() - rho
            }),
        )
    }

    fn gauss_newton(&self, beta: &mut [f64]) {
        let n = beta.len();
        let mut cost = self.residual(beta).norm_squared();
        for _ in 0..GAUSS_NEWTON_ITERS {
            let r = self.residual(beta);
            let jac = DMatrix::from_fn(self.rho.len(), n, |p, k| {
                let d = &self.diffs[p];
                let mut s = Vector3::zeros();
                for (q, b) in beta.iter().enumerate() {
                    s += d[q] * *b;
                }
                2.0 * s.dot(&d[k])
            });
            let Ok(step) = jac.svd(true, true).solve(&(-&r), 1e-14) else {
                break;
            };
            // the distance cost can be nearly flat along some null directions,
            // so full steps overshoot; halve until the cost drops
            let mut accepted = None;
            let mut scale = 1.0;
            for _ in 0..GN_BACKTRACKS {
                let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
                let trial_cost = self.residual(&trial).norm_squared();
                if trial_cost < cost {
                    accepted = Some((trial, trial_cost));
                    break;
                }
                scale *= 0.5;
            }
            let Some((trial, trial_cost)) = accepted else {
                break;
            };
            beta.copy_from_slice(&trial);
            cost = trial_cost;
        }
    }
}

/// The three linearized initializations for `N = 1, 2, 3` null vectors.
fn initial_betas(sys: &DistanceSystem) -> Vec<Vec<f64>> {
    let dims = sys.dims();
    let mut out = Vec::new();

    // N = 1: β₀² only
    if let Some(b) = sys.linearized(&[(0, 0)]) {
        let mut beta = vec![0.0; dims];
        beta[0] = b[0].abs().sqrt();
        out.push(beta);
    }

    // N = 2: β₀², β₀β₁, β₁²
    if let Some(b) = sys.linearized(&[(0, 0), (0, 1), (1, 1)]) {
        let mut beta = vec![0.0; dims];
        beta[0] = b[0].abs().sqrt();
        beta[1] = if b[0] * b[2] > 0.0 { b[2].abs().sqrt() } else { 0.0 };
        if b[1] * b[0].signum() < 0.0 {
            beta[1] = -beta[1];
        }
        out.push(beta);
    }

    // N = 3: needs six independent distance equations (non-planar frame)
    if dims >= 3 && sys.rho.len() >= 6 {
        let products = [(0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2)];
        if let Some(b) = sys.linearized(&products) {
            let mut beta = vec![0.0; dims];
            beta[0] = b[0].abs().sqrt();
            if beta[0] > 0.0 {
                let sgn = b[0].signum();
                beta[1] = sgn * b[1] / beta[0];
                beta[2] = sgn * b[3] / beta[0];
            }
            out.push(beta);
        }
    }
    out
}

fn pose_from_betas(beta: &[f64], null: &[DVector<f64>], frame: &ControlFrame, pw: &[Vector3<f64>]) -> Result<Pose> {
    let m = frame.points.len();
    let mut ctrl = vec![Vector3::zeros(); m];
    for (b, v) in beta.iter().zip(null) {
        for (j, c) in ctrl.iter_mut().enumerate() {
            *c += Vector3::new(v[3 * j], v[3 * j + 1], v[3 * j + 2]) * *b;
        }
    }
    let mut pc: Vec<Vector3<f64>> = frame
        .alphas
        .iter()
        .map(|a| a.iter().zip(&ctrl).map(|(w, c)| c * *w).sum())
        .collect();
    // the null space fixes the solution only up to sign; pick the one in front of the camera
    let mean_z: f64 = pc.iter().map(|p| p.z).sum();
    if mean_z < 0.0 {
        pc.iter_mut().for_each(|p| *p = -*p);
    }
    umeyama(pw, &pc)
}

fn reprojection_cost(pose: &Pose, corrs: &[Correspondence], intr: &Intrinsics) -> f64 {
    reprojection_rmse(pose, corrs, intr).unwrap_or(f64::INFINITY)
}

/// EPnP pose from at least four correspondences.
pub fn solve_epnp(corrs: &[Correspondence], intr: &Intrinsics) -> Result<Pose> {
    if corrs.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            have: corrs.len(),
        });
    }
    if corrs
        .iter()
        .any(|c| !c.object_point.is_finite() || !c.image_point.is_finite())
    {
        return Err(Error::DegenerateInput("non-finite correspondence"));
    }
    let pw: Vec<Vector3<f64>> = corrs.iter().map(|c| c.object_point.to_vector()).collect();
    let frame = control_frame(&pw)?;
    let null = null_space(&frame, corrs, intr);
    let sys = DistanceSystem::new(&frame, &null);

    let mut best: Option<(f64, Pose)> = None;
    for mut beta in initial_betas(&sys) {
        sys.gauss_newton(&mut beta);
        if beta.iter().all(|b| *b == 0.0) || beta.iter().any(|b| !b.is_finite()) {
            continue;
        }
        let Ok(pose) = pose_from_betas(&beta, &null, &frame, &pw) else {
            continue;
        };
        let cost = reprojection_cost(&pose, corrs, intr);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, pose));
        }
    }
    match best {
        Some((cost, pose)) if cost.is_finite() => Ok(pose),
        _ => Err(Error::DegenerateConfiguration("rank-deficient EPnP system")),
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Per-correspondence reprojection residuals and their 2×6 Jacobians.
type Linearization = (Vec<Vector2<f64>>, Vec<nalgebra::Matrix2x6<f64>>);

/// Residuals and Jacobian with respect to the update `R ← exp(ω)·R`, `t ← t + τ`.
fn residuals_and_jacobian(pose: &Pose, corrs: &[Correspondence], intr: &Intrinsics) -> Option<Linearization> {
    let mut res = Vec::with_capacity(corrs.len());
    let mut jac = Vec::with_capacity(corrs.len());
    for c in corrs {
        let rx = pose.rotation * c.object_point.to_vector();
        let pc = rx + pose.translation;
        if !(pc.z > 0.0) {
            return None;
        }
        let (x, y, z) = (pc.x, pc.y, pc.z);
        let proj = Vector2::new(intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy);
        res.push(proj - Vector2::new(c.image_point.x, c.image_point.y));
        let dproj = nalgebra::Matrix2x3::new(
            intr.fx / z,
            0.0,
            -intr.fx * x / (z * z),
            0.0,
            intr.fy / z,
            -intr.fy * y / (z * z),
        );
        let mut dp = nalgebra::Matrix3x6::zeros();
        dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&rx)));
        dp.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        jac.push(dproj * dp);
    }
    Some((res, jac))
}

fn apply_update(pose: &Pose, delta: &Vector6<f64>) -> Pose {
    let omega = Vector3::new(delta[0], delta[1], delta[2]);
    Pose {
        rotation: nalgebra::Rotation3::new(omega).into_inner() * pose.rotation,
        translation: pose.translation + Vector3::new(delta[3], delta[4], delta[5]),
    }
}

/// Levenberg–Marquardt refinement of the reprojection error.
///
/// Returns the refined pose and the RMSE after each iteration (the first
/// entry is the RMSE of `init`). The RMSE sequence is non-increasing: a step
/// is only accepted if it lowers the cost, otherwise damping grows.
pub fn refine_pose_logged(init: &Pose, corrs: &[Correspondence], intr: &Intrinsics, iters: usize) -> (Pose, Vec<f64>) {
    let mut pose = *init;
    let cost_of = |p: &Pose| -> f64 { reprojection_cost(p, corrs, intr) };
    let mut cost = cost_of(&pose);
    let mut log = vec![cost];
    if corrs.is_empty() || !cost.is_finite() {
        return (pose, log);
    }
    let mut lambda = 1e-3;
    for _ in 0..iters {
        let Some((res, jac)) = residuals_and_jacobian(&pose, corrs, intr) else {
            break;
        };
        let mut jtj = Matrix6::zeros();
        let mut jtr = Vector6::zeros();
        for (r, j) in res.iter().zip(&jac) {
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let mut improved = false;
        for _ in 0..10 {
            let mut damped = jtj;
            for d in 0..6 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-jtr));
            let trial = apply_update(&pose, &delta);
            let trial_cost = cost_of(&trial);
            if trial_cost < cost {
                pose = trial;
                cost = trial_cost;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        log.push(cost);
        if !improved {
            break;
        }
    }
    (pose, log)
}

/// [`refine_pose_logged`] without the log.
pub fn refine_pose(init: &Pose, corrs: &[Correspondence], intr: &Intrinsics, iters: usize) -> Pose {
    refine_pose_logged(init, corrs, intr, iters).0
}
