//! `gen`, `train`, `vote` and `eval`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use proxyvote_core::experiment::{
    par_map, pose_from_votes, run_one_with_fields, Evaluation, ExperimentReport, RunResult,
};
use proxyvote_core::io::{field_file_name, field_to_csv, write_scene};
use proxyvote_core::metrics::{evaluate, judge, EvalRecord};
use proxyvote_core::model::{farthest_point_sampling, load_model, model_diameter, ModelCloud};
use proxyvote_core::rng::substream;
use proxyvote_core::synth::{corrupt, make_scene, sample_pose, NoiseSpec, PoseRanges, SceneSample};
use proxyvote_core::trainer::{vote_fields, TraceRecord, TrainConfig, TrainMode};
use proxyvote_core::voting::VotingConfig;
use proxyvote_core::{Intrinsics, Point2, VectorField};
use serde::{Deserialize, Serialize};

use crate::config::{runtime, CliError, CliResult};
use crate::manifest::Recorder;
use crate::scenes::{read_fields, read_scenes, scene_dir_name, scene_model, ModelInfo, MODEL_FILE, MODEL_INFO_FILE};

fn required(p: &Path, flag: &str) -> CliResult<()> {
    if p.as_os_str().is_empty() {
        return Err(CliError::Usage(format!("{flag} is required")));
    }
    Ok(())
}

fn json(v: &impl Serialize) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(runtime)?;
    s.push('\n');
    Ok(s.into_bytes())
}

// ---- gen -------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub model: PathBuf,
    pub out: PathBuf,
    pub n: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub keypoints: usize,
    /// `[fx, fy, cx, cy]`; defaults to f = 200 px at the image center.
    pub intrinsics: Option<[f64; 4]>,
    pub pose_ranges: PoseRanges,
    pub angular_sigma: f64,
    pub flip_prob: f64,
    pub occlusion_frac: f64,
    pub symmetric: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            model: PathBuf::new(),
            out: PathBuf::new(),
            n: 10,
            seed: 0,
            width: 64,
            height: 64,
            keypoints: 8,
            intrinsics: None,
            pose_ranges: PoseRanges::default(),
            angular_sigma: 0.0,
            flip_prob: 0.0,
            occlusion_frac: 0.0,
            symmetric: false,
        }
    }
}

impl GenConfig {
    fn intrinsics(&self) -> CliResult<Intrinsics> {
        let [fx, fy, cx, cy] =
            self.intrinsics
                .unwrap_or([200.0, 200.0, self.width as f64 / 2.0, self.height as f64 / 2.0]);
        Ok(Intrinsics::new(fx, fy, cx, cy)?)
    }

    fn noise(&self, scene: usize) -> NoiseSpec {
        NoiseSpec {
            angular_sigma: self.angular_sigma,
            flip_prob: self.flip_prob,
            occlusion_frac: self.occlusion_frac,
            rng_seed: substream(self.seed, &format!("noise/{scene}")),
        }
    }

    fn validate(&self) -> CliResult<()> {
        required(&self.model, "--model")?;
        required(&self.out, "--out")?;
        if self.n == 0 || self.width == 0 || self.height == 0 || self.keypoints == 0 {
            return Err(CliError::Usage(
                "--n, --width, --height and --keypoints must be at least 1".into(),
            ));
        }
        self.noise(0).validate()?;
        Ok(())
    }
}

pub fn cmd_gen(cfg: &GenConfig, threads: usize) -> CliResult<Recorder> {
    cfg.validate()?;
    let intr = cfg.intrinsics()?;
    let mut cloud = load_model(&cfg.model)?;
    cloud.symmetric = cfg.symmetric;
    let keys = farthest_point_sampling(&cloud, cfg.keypoints, None)?;
    let mut rec = Recorder::start();

    let info = ModelInfo {
        name: cloud.name.clone(),
        points: cloud.points.len(),
        symmetric: cloud.symmetric,
        diameter: model_diameter(&cloud)?,
    };
    cloud.write_ply(&cfg.out.join(MODEL_FILE))?;
    rec.record(MODEL_FILE.into());
    rec.write(&cfg.out, MODEL_INFO_FILE, &json(&info)?)?;

    let idx: Vec<usize> = (0..cfg.n).collect();
    let results = par_map(&idx, threads, |&i| -> CliResult<usize> {
        let pose = sample_pose(
            substream(cfg.seed, &format!("scene/{i}")),
            &cfg.pose_ranges,
            &cloud,
            &intr,
            cfg.width,
            cfg.height,
        )?;
        let mut scene = make_scene(&cloud, &keys, &pose, &intr, cfg.width, cfg.height)?;
        let noise = cfg.noise(i);
        let clean = NoiseSpec {
            rng_seed: noise.rng_seed,
            ..Default::default()
        };
        if noise != clean {
            scene = corrupt(&scene, &noise)?;
        }
        write_scene(&cfg.out.join(scene_dir_name(i)), &scene)?;
        Ok(scene.keypoints2.len())
    });
    for (i, r) in results.into_iter().enumerate() {
        let k = r?;
        let dir = scene_dir_name(i);
        for f in ["mask.pgm", "keypoints.csv", "pose.json"] {
            rec.record(format!("{dir}/{f}"));
        }
        for j in 0..k {
            rec.record(format!("{dir}/{}", field_file_name(j)));
        }
    }
    Ok(rec)
}

// ---- train -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub scenes: PathBuf,
    pub out: PathBuf,
    pub modes: Vec<TrainMode>,
    pub seeds: Vec<u64>,
    /// Also write the fitted fields, for `vote` and `eval`.
    pub save_fields: bool,
    pub trainer: TrainConfig,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        Self {
            scenes: PathBuf::new(),
            out: PathBuf::new(),
            modes: vec![TrainMode::VfOnly, TrainMode::VfPlusDpvl],
            seeds: vec![0],
            save_fields: true,
            trainer: TrainConfig::default(),
        }
    }
}

/// Per-run JSON summary (the curve itself lives in the trace CSV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scene: usize,
    pub mode: TrainMode,
    pub seed: u64,
    pub iterations: usize,
    #[serde(rename = "final")]
    pub last: Option<TraceRecord>,
    pub voted: Vec<Option<Point2>>,
    pub keypoint_errors: Vec<Option<f64>>,
    pub voting_failures: usize,
    pub pose: Option<[f64; 12]>,
    pub eval: Option<EvalRecord>,
}

pub const KEYPOINT_TOLERANCE_PX: f64 = proxyvote_core::experiment::KEYPOINT_TOLERANCE_PX;

impl RunSummary {
    fn new(r: &RunResult) -> Self {
        Self {
            scene: r.scene,
            mode: r.mode,
            seed: r.seed,
            iterations: r.trace.records.len(),
            last: r.trace.last().copied(),
            voted: r.trace.voted.clone(),
            keypoint_errors: r.trace.keypoint_errors.clone(),
            voting_failures: r.voting_failures(KEYPOINT_TOLERANCE_PX),
            pose: r.pose,
            eval: r.eval,
        }
    }
}

pub fn trace_path(scene: usize, mode: TrainMode, seed: u64) -> String {
    format!("traces/{}/{mode}/seed_{seed}.csv", scene_dir_name(scene))
}

pub fn cmd_train(cfg: &TrainCmdConfig, threads: usize) -> CliResult<Recorder> {
    required(&cfg.scenes, "--scenes")?;
    required(&cfg.out, "--out")?;
    if cfg.modes.is_empty() || cfg.seeds.is_empty() {
        return Err(CliError::Usage("need at least one --mode and one --seed".into()));
    }
    cfg.trainer.validate()?;
    let scenes = read_scenes(&cfg.scenes)?;
    let model = scene_model(&cfg.scenes)?;
    let eval = model.as_ref().map(|(cloud, diameter)| Evaluation {
        cloud,
        diameter: *diameter,
    });

    let mut jobs = Vec::new();
    for s in 0..scenes.len() {
        for &seed in &cfg.seeds {
            for &mode in &cfg.modes {
                jobs.push((s, mode, seed));
            }
        }
    }
    let results = par_map(&jobs, threads, |&(s, mode, seed)| {
        run_one_with_fields(&scenes[s], s, mode, seed, &cfg.trainer, eval)
    });

    let mut rec = Recorder::start();
    let mut report = ExperimentReport::default();
    for r in results {
        let (run, fields) = r.map_err(runtime)?;
        let (s, mode, seed) = (run.scene, run.mode, run.seed);
        rec.write(&cfg.out, &trace_path(s, mode, seed), run.trace.to_csv().as_bytes())?;
        let summary = format!("runs/{}/{mode}/seed_{seed}.json", scene_dir_name(s));
        rec.write(&cfg.out, &summary, &json(&RunSummary::new(&run))?)?;
        if cfg.save_fields {
            let dir = format!("fields/{mode}/seed_{seed}/{}", scene_dir_name(s));
            for (k, f) in fields.iter().enumerate() {
                let text = field_to_csv(f, &scenes[s].mask);
                rec.write(&cfg.out, &format!("{dir}/{}", field_file_name(k)), text.as_bytes())?;
            }
        }
        report.runs.push(run);
    }
    rec.write(&cfg.out, "summary.csv", report.summary_csv().as_bytes())?;

    for &mode in &cfg.modes {
        let runs: Vec<&RunResult> = report.runs_for(mode).collect();
        let kps: usize = runs.iter().map(|r| r.trace.keypoint_errors.len()).sum();
        let failed: usize = runs.iter().map(|r| r.voting_failures(KEYPOINT_TOLERANCE_PX)).sum();
        let bad_runs = runs
            .iter()
            .filter(|r| r.voting_failures(KEYPOINT_TOLERANCE_PX) > 0)
            .count();
        println!(
            "{mode}: {} runs, {failed}/{kps} keypoints off by more than {KEYPOINT_TOLERANCE_PX} px ({bad_runs} runs with a voting failure)",
            runs.len()
        );
    }
    Ok(rec)
}

// ---- vote / eval -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoteConfig {
    pub scenes: PathBuf,
    /// Directory of `scene_NNN/field_NN.csv` overriding the scenes' own fields.
    pub fields: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub voting: VotingConfig,
}

fn load_inputs(scenes: &Path, fields: Option<&Path>) -> CliResult<(Vec<SceneSample>, Vec<Vec<VectorField>>)> {
    let samples = read_scenes(scenes)?;
    let fields = match fields {
        Some(dir) => read_fields(dir, &samples)?,
        None => samples.iter().map(|s| s.gt_fields.clone()).collect(),
    };
    Ok((samples, fields))
}

fn vote_all(
    samples: &[SceneSample],
    fields: &[Vec<VectorField>],
    voting: &VotingConfig,
    seed: u64,
    threads: usize,
) -> Vec<Vec<Option<Point2>>> {
    let cfg = VotingConfig {
        rng_seed: substream(seed, "voting"),
        ..*voting
    };
    let idx: Vec<usize> = (0..samples.len()).collect();
    par_map(&idx, threads, |&i| vote_fields(&fields[i], &samples[i], &cfg))
}

pub fn cmd_vote(cfg: &VoteConfig, threads: usize) -> CliResult<Recorder> {
    required(&cfg.scenes, "--scenes")?;
    required(&cfg.out, "--out")?;
    cfg.voting.validate()?;
    let (samples, fields) = load_inputs(&cfg.scenes, cfg.fields.as_deref())?;
    let votes = vote_all(&samples, &fields, &cfg.voting, cfg.seed, threads);
    let mut csv = String::from("scene,keypoint,x,y,error_px\n");
    for (i, (s, v)) in samples.iter().zip(&votes).enumerate() {
        for (k, (p, truth)) in v.iter().zip(&s.keypoints2).enumerate() {
            match p {
                Some(p) => writeln!(csv, "{i},{k},{},{},{}", p.x, p.y, p.distance(*truth)),
                None => writeln!(csv, "{i},{k},,,"),
            }
            .unwrap();
        }
    }
    let mut rec = Recorder::start();
    rec.write(&cfg.out, "votes.csv", csv.as_bytes())?;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub scenes: PathBuf,
    pub fields: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    /// Model file; defaults to the one `gen` stored with the scenes.
    pub model: Option<PathBuf>,
    /// Overrides the stored symmetric flag.
    pub symmetric: Option<bool>,
    pub voting: VotingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub scenes: usize,
    pub poses_recovered: usize,
    pub diameter: f64,
    pub symmetric: bool,
    /// ADD below 0.1 × diameter.
    pub add_accuracy: f64,
    /// ADD-S below 0.1 × diameter; only for symmetric models.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub add_s_accuracy: Option<f64>,
    /// 2D projection error below 5 px.
    pub proj_accuracy: f64,
}

fn eval_model(cfg: &EvalConfig) -> CliResult<(ModelCloud, f64)> {
    let (mut cloud, diameter) = match &cfg.model {
        Some(p) => {
            let c = load_model(p)?;
            let d = model_diameter(&c)?;
            (c, d)
        }
        None => scene_model(&cfg.scenes)?
            .ok_or_else(|| CliError::Usage(format!("no {MODEL_FILE} in {}; pass --model", cfg.scenes.display())))?,
    };
    if let Some(s) = cfg.symmetric {
        cloud.symmetric = s;
    }
    Ok((cloud, diameter))
}

pub fn cmd_eval(cfg: &EvalConfig, threads: usize) -> CliResult<Recorder> {
    required(&cfg.scenes, "--scenes")?;
    required(&cfg.out, "--out")?;
    cfg.voting.validate()?;
    let (cloud, diameter) = eval_model(cfg)?;
    let (samples, fields) = load_inputs(&cfg.scenes, cfg.fields.as_deref())?;
    let votes = vote_all(&samples, &fields, &cfg.voting, cfg.seed, threads);
    let sym = cloud.symmetric;

    let mut csv = String::from(if sym {
        "scene,add,add_s,proj2d,add_correct,add_s_correct,proj_correct\n"
    } else {
        "scene,add,proj2d,add_correct,proj_correct\n"
    });
    let (mut recovered, mut add_ok, mut add_s_ok, mut proj_ok) = (0, 0, 0, 0);
    for (i, (s, v)) in samples.iter().zip(&votes).enumerate() {
        let rec = pose_from_votes(s, v)
            .map(|p| evaluate(&s.pose, &p, &cloud.points, &s.intr, diameter, false))
            .transpose()?;
        let Some(r) = rec else {
            writeln!(csv, "{i}{}", if sym { ",,,,,," } else { ",,,," }).unwrap();
            continue;
        };
        recovered += 1;
        let (add_c, proj_c) = (r.add_correct, r.proj_correct);
        let add_s_c = judge(r.add_s, diameter, r.proj2d).0;
        add_ok += add_c as usize;
        add_s_ok += add_s_c as usize;
        proj_ok += proj_c as usize;
        if sym {
            writeln!(csv, "{i},{},{},{},{add_c},{add_s_c},{proj_c}", r.add, r.add_s, r.proj2d).unwrap();
        } else {
            writeln!(csv, "{i},{},{},{add_c},{proj_c}", r.add, r.proj2d).unwrap();
        }
    }
    let n = samples.len() as f64;
    let summary = EvalSummary {
        scenes: samples.len(),
        poses_recovered: recovered,
        diameter,
        symmetric: sym,
        add_accuracy: add_ok as f64 / n,
        add_s_accuracy: sym.then(|| add_s_ok as f64 / n),
        proj_accuracy: proj_ok as f64 / n,
    };
    let mut rec = Recorder::start();
    rec.write(&cfg.out, "eval.csv", csv.as_bytes())?;
    rec.write(&cfg.out, "eval_summary.json", &json(&summary)?)?;
    match summary.add_s_accuracy {
        Some(a) => println!(
            "ADD {:.4}  ADD-S {a:.4}  2D proj {:.4}",
            summary.add_accuracy, summary.proj_accuracy
        ),
        None => println!("ADD {:.4}  2D proj {:.4}", summary.add_accuracy, summary.proj_accuracy),
    }
    Ok(rec)
}
