//! Per-pixel direction-field optimizer.
//!
//! Instead of a network, every masked pixel's direction estimate for every
//! keypoint is a free parameter updated by Adam. The objective is the field
//! part of the full training loss: regression plus β-weighted proxy voting
//! loss, with β following the per-epoch schedule. Both terms are divided by the
//! masked-pixel count here so step sizes do not depend on object size.
//!
//! Since each pixel's loss depends only on its own parameters, this isolates
//! the loss geometry. It says nothing about how a shared network would
//! generalize across pixels.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::geometry::{Direction2, Point2};
use crate::losses::{dpvl, proxy_distance_grad, schedule_weights, vf_loss, WeightSchedule};
use crate::synth::SceneSample;
use crate::voting::{vote_keypoint, VotingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Regression loss only.
    VfOnly,
    /// Regression plus β-weighted proxy voting loss.
    VfPlusDpvl,
    /// β-weighted proxy voting loss only.
    DpvlOnly,
}

impl TrainMode {
    pub const ALL: [TrainMode; 3] = [TrainMode::VfOnly, TrainMode::VfPlusDpvl, TrainMode::DpvlOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::VfOnly => "vf_only",
            TrainMode::VfPlusDpvl => "vf_plus_dpvl",
            TrainMode::DpvlOnly => "dpvl_only",
        }
    }

    fn uses_vf(self) -> bool {
        self != TrainMode::DpvlOnly
    }

    fn uses_pv(self) -> bool {
        self != TrainMode::VfOnly
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TrainMode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown mode '{s}' (expected vf_only, vf_plus_dpvl or dpvl_only)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub schedule: WeightSchedule,
    pub iters_per_epoch: usize,
    pub mode: TrainMode,
    pub rng_seed: u64,
    /// Multiply the learning rate by `lr_decay_factor` every
    /// `lr_decay_epochs` epochs, never going below `lr_min`.
    pub lr_decay: bool,
    pub lr_decay_factor: f64,
    pub lr_decay_epochs: usize,
    pub lr_min: f64,
    /// Voting used to score the fitted fields.
    pub voting: VotingConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            schedule: WeightSchedule::default(),
            iters_per_epoch: 100,
            mode: TrainMode::VfPlusDpvl,
            rng_seed: 0,
            lr_decay: true,
            lr_decay_factor: 0.85,
            lr_decay_epochs: 5,
            lr_min: 1e-5,
            voting: VotingConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.iters_per_epoch == 0 || self.lr_decay_epochs == 0 {
            return Err(Error::Config("epoch lengths must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("invalid Adam parameters".into()));
        }
        self.schedule.validate()?;
        self.voting.validate()
    }

    pub fn epoch_of(&self, iter: usize) -> u32 {
        (iter / self.iters_per_epoch).min(u32::MAX as usize) as u32
    }

    pub fn learning_rate_at(&self, iter: usize) -> f64 {
        if !self.lr_decay {
            return self.learning_rate;
        }
        let steps = (self.epoch_of(iter) as usize / self.lr_decay_epochs).min(i32::MAX as usize) as i32;
        (self.learning_rate * self.lr_decay_factor.powi(steps)).max(self.lr_min.min(self.learning_rate))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// Regression loss per masked pixel, summed over keypoints.
    pub l_vf: f64,
    /// Proxy voting loss per masked pixel, summed over keypoints.
    pub l_pv: f64,
    /// Mean keypoint-to-line distance over masked pixels and keypoints.
    pub mean_proxy_dist: f64,
    pub alpha: f64,
    /// β applied to the proxy term at this iteration (0 in `vf_only`).
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    /// Voted keypoint per field after fitting; `None` when voting failed.
    pub voted: Vec<Option<Point2>>,
    /// Distance of each voted keypoint to the true projection, in pixels.
    pub keypoint_errors: Vec<Option<f64>>,
}

impl TrainTrace {
    pub const CSV_HEADER: &'static str = "iter,l_vf,l_pv,mean_proxy_dist,alpha,beta";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iter, r.l_vf, r.l_pv, r.mean_proxy_dist, r.alpha, r.beta
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> std::result::Result<Vec<TraceRecord>, String> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(Self::CSV_HEADER) {
            return Err(format!("expected header '{}'", Self::CSV_HEADER));
        }
        lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let v: Vec<f64> = l
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| format!("line {}: {e}", i + 2))?;
                if v.len() != 6 || v.iter().any(|x| !x.is_finite()) {
                    return Err(format!("line {}: expected 6 finite values", i + 2));
                }
                Ok(TraceRecord {
                    iter: v[0] as usize,
                    l_vf: v[1],
                    l_pv: v[2],
                    mean_proxy_dist: v[3],
                    alpha: v[4],
                    beta: v[5],
                })
            })
            .collect()
    }

    /// First iteration at which `metric` is at or below `threshold`.
    pub fn iterations_to(&self, threshold: f64, metric: impl Fn(&TraceRecord) -> f64) -> Option<usize> {
        iterations_to(&self.records, threshold, metric)
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// First iteration at which `metric` is at or below `threshold`.
pub fn iterations_to(records: &[TraceRecord], threshold: f64, metric: impl Fn(&TraceRecord) -> f64) -> Option<usize> {
    records.iter().find(|r| metric(r) <= threshold).map(|r| r.iter)
}

/// Fit failed part-way; the trace covers the iterations that completed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainError {
    pub error: Error,
    pub trace: Box<TrainTrace>,
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} iterations)", self.error, self.trace.records.len())
    }
}

impl std::error::Error for TrainError {}

/// Random initial fields: each masked component uniform in `[-1, 1)`.
pub fn random_init(sample: &SceneSample, rng_seed: u64) -> Vec<VectorField> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample
        .gt_fields
        .iter()
        .map(|_| {
            let mut f = VectorField::zeros(sample.width, sample.height);
            for i in sample.mask.indices() {
                f.as_mut_slice()[i] = Direction2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
            f
        })
        .collect()
}

/// Loss values and the normalized gradient of the objective for one keypoint.
#[derive(Debug, Clone)]
pub struct FieldObjective {
    pub l_vf: f64,
    pub l_pv: f64,
    pub proxy_dist_sum: f64,
    pub proxy_count: usize,
    pub grad: VectorField,
}

/// Evaluates both field losses for `est` against `gt` and combines their
/// gradients per `mode` with weight `beta`, divided by the mask size.
pub fn field_objective(
    est: &VectorField,
    gt: &VectorField,
    sample: &SceneSample,
    k: Point2,
    mode: TrainMode,
    beta: f64,
) -> Result<FieldObjective> {
    let mask = &sample.mask;
    let norm = 1.0 / mask.count().max(1) as f64;
    let vf = vf_loss(est, gt, mask)?;
    let pv = dpvl(est, mask, k)?;
    let mut grad = VectorField::zeros(est.width(), est.height());
    let (gv, gp) = (vf.grad.as_slice(), pv.grad.as_slice());
    let mut dist_sum = 0.0;
    let mut dist_count = 0;
    let g = grad.as_mut_slice();
    for i in mask.indices() {
        let mut d = Direction2::ZERO;
        if mode.uses_vf() {
            d = gv[i];
        }
        if mode.uses_pv() {
            d = Direction2::new(d.x + beta * gp[i].x, d.y + beta * gp[i].y);
        }
        g[i] = d.scale(norm);
        if let Some((dist, _)) = proxy_distance_grad(mask.center_of(i), est.as_slice()[i], k) {
            dist_sum += dist;
            dist_count += 1;
        }
    }
    Ok(FieldObjective {
        l_vf: vf.value * norm,
        l_pv: pv.value * norm,
        proxy_dist_sum: dist_sum,
        proxy_count: dist_count,
        grad,
    })
}

struct Adam {
    m: Vec<Direction2>,
    v: Vec<Direction2>,
    t: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Self {
            m: vec![Direction2::ZERO; len],
            v: vec![Direction2::ZERO; len],
            t: 0,
        }
    }
}

/// Votes every field of a scene; keypoint `i` uses seed `cfg.rng_seed + i`.
pub fn vote_fields(fields: &[VectorField], sample: &SceneSample, cfg: &VotingConfig) -> Vec<Option<Point2>> {
    fields
        .iter()
        .enumerate()
        .map(|(kp, f)| {
            let vcfg = VotingConfig {
                rng_seed: cfg.rng_seed.wrapping_add(kp as u64),
                ..*cfg
            };
            vote_keypoint(f, &sample.mask, &vcfg).ok().map(|r| r.location)
        })
        .collect()
}

/// Runs Adam on all keypoint fields of `sample`, starting from `init`.
///
/// Returns the fitted fields and a trace with one record per iteration
/// (losses are those of the parameters *before* that iteration's update).
pub fn fit_field(
    sample: &SceneSample,
    init: &[VectorField],
    cfg: &TrainConfig,
) -> std::result::Result<(Vec<VectorField>, TrainTrace), TrainError> {
    let fail = |error: Error, trace: TrainTrace| TrainError {
        error,
        trace: Box::new(trace),
    };
    let mut trace = TrainTrace::default();
    if let Err(e) = cfg.validate() {
        return Err(fail(e, trace));
    }
    if init.len() != sample.gt_fields.len() {
        return Err(fail(
            Error::Config(format!(
                "{} initial fields for {} keypoints",
                init.len(),
                sample.gt_fields.len()
            )),
            trace,
        ));
    }
    for f in init {
        if let Err(e) = sample.mask.check_matches(f.dims()) {
            return Err(fail(e, trace));
        }
        if f.as_slice().iter().any(|d| !d.is_finite()) {
            return Err(fail(Error::DegenerateInput("non-finite initial field"), trace));
        }
    }

    let mut fields: Vec<VectorField> = init.to_vec();
    let mut adam: Vec<Adam> = fields.iter().map(|f| Adam::new(f.as_slice().len())).collect();
    let (b1, b2, eps) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

    for iter in 0..cfg.iterations {
        let (alpha, sched_beta) = schedule_weights(cfg.epoch_of(iter), &cfg.schedule);
        let beta = if cfg.mode.uses_pv() { sched_beta } else { 0.0 };
        let lr = cfg.learning_rate_at(iter);

        let mut rec = TraceRecord {
            iter,
            l_vf: 0.0,
            l_pv: 0.0,
            mean_proxy_dist: 0.0,
            alpha,
            beta,
        };
        let mut dist_sum = 0.0;
        let mut dist_count = 0usize;
        for (kp, (field, state)) in fields.iter_mut().zip(adam.iter_mut()).enumerate() {
            let obj = match field_objective(
                field,
                &sample.gt_fields[kp],
                sample,
                sample.keypoints2[kp],
                cfg.mode,
                beta,
            ) {
                Ok(o) => o,
                Err(e) => return Err(fail(e, trace)),
            };
            rec.l_vf += obj.l_vf;
            rec.l_pv += obj.l_pv;
            dist_sum += obj.proxy_dist_sum;
            dist_count += obj.proxy_count;

            state.t += 1;
            let c1 = 1.0 - b1.powi(state.t);
            let c2 = 1.0 - b2.powi(state.t);
            let g = obj.grad.as_slice();
            let p = field.as_mut_slice();
            for i in sample.mask.indices() {
                let (m, v) = (&mut state.m[i], &mut state.v[i]);
                m.x = b1 * m.x + (1.0 - b1) * g[i].x;
                m.y = b1 * m.y + (1.0 - b1) * g[i].y;
                v.x = b2 * v.x + (1.0 - b2) * g[i].x * g[i].x;
                v.y = b2 * v.y + (1.0 - b2) * g[i].y * g[i].y;
                p[i].x -= lr * (m.x / c1) / ((v.x / c2).sqrt() + eps);
                p[i].y -= lr * (m.y / c1) / ((v.y / c2).sqrt() + eps);
            }
        }
        rec.mean_proxy_dist = if dist_count > 0 {
            dist_sum / dist_count as f64
        } else {
            0.0
        };
        if ![rec.l_vf, rec.l_pv, rec.mean_proxy_dist].iter().all(|v| v.is_finite())
            || fields.iter().any(|f| f.as_slice().iter().any(|d| !d.is_finite()))
        {
            return Err(fail(Error::Divergence { iteration: iter }, trace));
        }
        trace.records.push(rec);
    }

    trace.voted = vote_fields(&fields, sample, &cfg.voting);
    trace.keypoint_errors = trace
        .voted
        .iter()
        .zip(&sample.keypoints2)
        .map(|(v, &k)| v.map(|p| p.distance(k)))
        .collect();
    Ok((fields, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Mask;
    use crate::synth::field_toward;
    use nalgebra::Vector3;

    pub(crate) fn disc_sample(keys: &[Point2]) -> SceneSample {
        let mask = Mask::disc(32, 32, Point2::new(16.0, 16.0), 10.0);
        let (gt_fields, degenerate) = keys.iter().map(|&k| field_toward(&mask, k)).unzip();
        SceneSample {
            pose: crate::geometry::Pose::from_translation(Vector3::new(0.0, 0.0, 1.0)),
            intr: crate::geometry::Intrinsics::new(100.0, 100.0, 16.0, 16.0).unwrap(),
            width: 32,
            height: 32,
            mask,
            keypoints2: keys.to_vec(),
            keypoints3: vec![Default::default(); keys.len()],
            gt_fields,
            degenerate,
        }
    }

    #[test]
    fn mode_parsing() {
        for m in TrainMode::ALL {
            assert_eq!(m.as_str().parse::<TrainMode>().unwrap(), m);
        }
        assert!("sgd".parse::<TrainMode>().is_err());
    }

    #[test]
    fn learning_rate_decay() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate_at(0), 1e-3);
        assert_eq!(cfg.learning_rate_at(499), 1e-3);
        assert!((cfg.learning_rate_at(500) - 0.85e-3).abs() < 1e-18);
        assert_eq!(cfg.learning_rate_at(10_000_000), 1e-5);
    }

    #[test]
    fn ground_truth_is_fixed_point() {
        let s = disc_sample(&[Point2::new(13.2, 17.9), Point2::new(40.0, -3.0)]);
        for mode in TrainMode::ALL {
            let cfg = TrainConfig {
                iterations: 300,
                mode,
                ..Default::default()
            };
            let (out, trace) = fit_field(&s, &s.gt_fields, &cfg).unwrap();
            for (a, b) in out.iter().zip(&s.gt_fields) {
                for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                    assert!(
                        (x.x - y.x).abs() < 1e-6 && (x.y - y.y).abs() < 1e-6,
                        "{mode} {x:?} {y:?}"
                    );
                }
            }
            assert_eq!(trace.records.len(), 300);
            assert!(trace.records[0].l_vf == 0.0 && trace.records[0].l_pv < 1e-20);
        }
    }

    #[test]
    fn vf_only_gradient_equals_regression_gradient() {
        let s = disc_sample(&[Point2::new(10.0, 12.0)]);
        let init = random_init(&s, 9);
        let obj = field_objective(&init[0], &s.gt_fields[0], &s, s.keypoints2[0], TrainMode::VfOnly, 0.0).unwrap();
        let obj_b0 = field_objective(
            &init[0],
            &s.gt_fields[0],
            &s,
            s.keypoints2[0],
            TrainMode::VfPlusDpvl,
            0.0,
        )
        .unwrap();
        let vf = vf_loss(&init[0], &s.gt_fields[0], &s.mask).unwrap();
        let n = s.mask.count() as f64;
        for i in s.mask.indices() {
            let want = vf.grad.as_slice()[i].scale(1.0 / n);
            assert_eq!(obj.grad.as_slice()[i], want);
            assert_eq!(obj_b0.grad.as_slice()[i], want);
        }
    }

    #[test]
    fn deterministic_and_converging() {
        let s = disc_sample(&[Point2::new(14.0, 18.0)]);
        let cfg = TrainConfig {
            iterations: 400,
            ..Default::default()
        };
        let init = random_init(&s, 1);
        let a = fit_field(&s, &init, &cfg).unwrap();
        let b = fit_field(&s, &init, &cfg).unwrap();
        assert_eq!(a.1, b.1);
        let r = &a.1.records;
        assert!(r[399].l_vf < r[0].l_vf);
    }

    #[test]
    fn bad_inputs() {
        let s = disc_sample(&[Point2::new(14.0, 18.0)]);
        let cfg = TrainConfig::default();
        assert!(fit_field(&s, &[], &cfg).is_err());
        let mut init = random_init(&s, 1);
        let i = s.mask.indices().next().unwrap();
        init[0].as_mut_slice()[i].x = f64::NAN;
        assert!(fit_field(&s, &init, &cfg).is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..cfg
        };
        assert!(fit_field(&s, &random_init(&s, 1), &bad).is_err());
    }

    #[test]
    fn divergence_aborts_with_partial_trace() {
        let s = disc_sample(&[Point2::new(14.0, 18.0)]);
        let cfg = TrainConfig {
            iterations: 50,
            learning_rate: 1e308,
            lr_decay: false,
            ..Default::default()
        };
        let err = fit_field(&s, &random_init(&s, 2), &cfg).unwrap_err();
        assert!(matches!(err.error, Error::Divergence { .. }));
        assert!(err.trace.records.len() < 50);
    }
}
