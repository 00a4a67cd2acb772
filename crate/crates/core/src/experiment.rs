//! Paired training runs across modes and seeds, with downstream voting, EPnP
//! and pose metrics for each run.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::field::VectorField;
use crate::geometry::{Point2, Pose};
use crate::metrics::{evaluate, EvalRecord};
use crate::model::ModelCloud;
use crate::pnp::{solve_epnp, Correspondence};
use crate::rng::substream;
use crate::synth::SceneSample;
use crate::trainer::{fit_field, random_init, TrainConfig, TrainError, TrainMode, TrainTrace};

/// Maps `f` over `items` on up to `threads` worker threads. Output order
/// matches input order regardless of scheduling.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

/// EPnP over the successfully voted keypoints (needs at least four).
pub fn pose_from_votes(sample: &SceneSample, voted: &[Option<Point2>]) -> Option<Pose> {
    let corrs: Vec<Correspondence> = voted
        .iter()
        .zip(&sample.keypoints3)
        .filter_map(|(v, &k3)| v.map(|p| Correspondence::new(k3, p)))
        .collect();
    solve_epnp(&corrs, &sample.intr).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scene: usize,
    pub mode: TrainMode,
    pub seed: u64,
    pub trace: TrainTrace,
    /// Pose recovered from the voted keypoints, as `[r00..r22, tx, ty, tz]`.
    pub pose: Option<[f64; 12]>,
    pub eval: Option<EvalRecord>,
}

impl RunResult {
    pub fn voting_failures(&self, tolerance_px: f64) -> usize {
        self.trace
            .keypoint_errors
            .iter()
            .filter(|e| e.is_none_or(|e| !(e <= tolerance_px)))
            .count()
    }

    /// Largest voted-keypoint error; infinite if any keypoint failed to vote.
    pub fn max_keypoint_error(&self) -> f64 {
        self.trace
            .keypoint_errors
            .iter()
            .map(|e| e.unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation<'a> {
    pub cloud: &'a ModelCloud,
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub runs: Vec<RunResult>,
}

/// One fit: scene index, mode, seed.
type Job = (usize, TrainMode, u64);

/// Fits every `(scene, mode, seed)` combination. Runs sharing a scene and seed
/// start from the same random field, so modes are compared pairwise.
pub fn run_experiment(
    scenes: &[SceneSample],
    modes: &[TrainMode],
    seeds: &[u64],
    base: &TrainConfig,
    eval: Option<Evaluation<'_>>,
    threads: usize,
) -> std::result::Result<ExperimentReport, TrainError> {
    let mut jobs: Vec<Job> = Vec::new();
    for s in 0..scenes.len() {
        for &seed in seeds {
            for &mode in modes {
                jobs.push((s, mode, seed));
            }
        }
    }
    let results = par_map(&jobs, threads, |&(s, mode, seed)| {
        run_one(&scenes[s], s, mode, seed, base, eval)
    });
    let runs = results.into_iter().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(ExperimentReport { runs })
}

/// Initial field shared by every mode for a given scene and seed.
pub fn paired_init(sample: &SceneSample, seed: u64) -> Vec<VectorField> {
    random_init(sample, substream(seed, "init"))
}

pub fn run_one(
    sample: &SceneSample,
    scene: usize,
    mode: TrainMode,
    seed: u64,
    base: &TrainConfig,
    eval: Option<Evaluation<'_>>,
) -> std::result::Result<RunResult, TrainError> {
    run_one_with_fields(sample, scene, mode, seed, base, eval).map(|(r, _)| r)
}

/// [`run_one`], also returning the fitted fields.
pub fn run_one_with_fields(
    sample: &SceneSample,
    scene: usize,
    mode: TrainMode,
    seed: u64,
    base: &TrainConfig,
    eval: Option<Evaluation<'_>>,
) -> std::result::Result<(RunResult, Vec<VectorField>), TrainError> {
    let cfg = TrainConfig {
        mode,
        rng_seed: seed,
        voting: crate::voting::VotingConfig {
            rng_seed: substream(seed, "voting"),
            ..base.voting
        },
        ..*base
    };
    let init = paired_init(sample, seed);
    let (fields, trace) = fit_field(sample, &init, &cfg)?;
    let pose = pose_from_votes(sample, &trace.voted);
    let eval = match (eval, &pose) {
        (Some(ev), Some(p)) => evaluate(
            &sample.pose,
            p,
            &ev.cloud.points,
            &sample.intr,
            ev.diameter,
            ev.cloud.symmetric,
        )
        .ok(),
        _ => None,
    };
    let run = RunResult {
        scene,
        mode,
        seed,
        pose: pose.map(|p| {
            let r = p.rotation_row_major();
            let t = p.translation;
            [r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8], t.x, t.y, t.z]
        }),
        trace,
        eval,
    };
    Ok((run, fields))
}

pub const SUMMARY_HEADER: &str = "scene,mode,seed,final_l_vf,final_l_pv,final_mean_proxy_dist,voting_failures,max_kp_error,add,add_s,proj2d,add_correct,proj_correct";

/// Voting failures in the summary use this tolerance in pixels.
pub const KEYPOINT_TOLERANCE_PX: f64 = 2.0;

impl ExperimentReport {
    pub fn summary_csv(&self) -> String {
        let mut s = String::from(SUMMARY_HEADER);
        s.push('\n');
        for r in &self.runs {
            let last = r.trace.last();
            let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let b = |v: Option<bool>| v.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.scene,
                r.mode,
                r.seed,
                f(last.map(|l| l.l_vf)),
                f(last.map(|l| l.l_pv)),
                f(last.map(|l| l.mean_proxy_dist)),
                r.voting_failures(KEYPOINT_TOLERANCE_PX),
                r.max_keypoint_error(),
                f(r.eval.map(|e| e.add)),
                f(r.eval.map(|e| e.add_s)),
                f(r.eval.map(|e| e.proj2d)),
                b(r.eval.map(|e| e.add_correct)),
                b(r.eval.map(|e| e.proj_correct)),
            );
        }
        s
    }

    pub fn runs_for(&self, mode: TrainMode) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.mode == mode)
    }

    /// The run of `mode` paired with `other` (same scene and seed).
    pub fn partner(&self, other: &RunResult, mode: TrainMode) -> Option<&RunResult> {
        self.runs
            .iter()
            .find(|r| r.mode == mode && r.scene == other.scene && r.seed == other.seed)
    }

    /// Fraction of runs of `mode` whose pose passes the ADD threshold; runs
    /// without a pose count as incorrect.
    pub fn add_accuracy(&self, mode: TrainMode) -> f64 {
        let (mut ok, mut n) = (0usize, 0usize);
        for r in self.runs_for(mode) {
            n += 1;
            ok += r.eval.is_some_and(|e| e.add_correct) as usize;
        }
        if n == 0 {
            0.0
        } else {
            ok as f64 / n as f64
        }
    }

    /// For each pair, the iterations `baseline` and `candidate` need to reach
    /// the baseline's final mean proxy distance.
    pub fn convergence_pairs(&self, baseline: TrainMode, candidate: TrainMode) -> Vec<ConvergencePair> {
        self.runs_for(baseline)
            .filter_map(|b| {
                let c = self.partner(b, candidate)?;
                let target = b.trace.last()?.mean_proxy_dist;
                Some(ConvergencePair {
                    scene: b.scene,
                    seed: b.seed,
                    target,
                    baseline_iters: b.trace.iterations_to(target, |r| r.mean_proxy_dist),
                    candidate_iters: c.trace.iterations_to(target, |r| r.mean_proxy_dist),
                    baseline_final: target,
                    candidate_final: c.trace.last()?.mean_proxy_dist,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePair {
    pub scene: usize,
    pub seed: u64,
    pub target: f64,
    pub baseline_iters: Option<usize>,
    pub candidate_iters: Option<usize>,
    pub baseline_final: f64,
    pub candidate_final: f64,
}

/// Median of `values`; `None` sorts last. Returns `None` for an empty slice
/// or when the median itself is missing.
pub fn median_iters(values: &[Option<usize>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<Option<usize>> = values.to_vec();
    v.sort_by_key(|x| x.map_or(usize::MAX, |i| i));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2].map(|x| x as f64)
    } else {
        Some((v[n / 2 - 1]? as f64 + v[n / 2]? as f64) / 2.0)
    }
}

/// Median of finite values (NaN-free input expected).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
