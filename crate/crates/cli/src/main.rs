//! `proxyvote`: generate synthetic scenes, fit direction fields, vote
//! keypoints, evaluate poses and compare training modes.
//!
//! Every command writes `manifest.json` into its output directory; running the
//! same command with `--config <that manifest>` reproduces the outputs byte
//! for byte. Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.

mod commands;
mod config;
mod manifest;
mod report;
mod scenes;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use proxyvote_core::trainer::TrainMode;

use commands::{cmd_eval, cmd_gen, cmd_train, cmd_vote, EvalConfig, GenConfig, TrainCmdConfig, VoteConfig};
use config::{load, set, threads, CliResult};
use report::{cmd_report, ReportConfig};

#[derive(Parser)]
#[command(
    name = "proxyvote",
    version,
    about = "Proxy voting loss experiments on synthetic scenes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render scenes (mask, keypoints, ideal or corrupted fields) from a model.
    Gen(GenArgs),
    /// Fit per-pixel fields under one or more training modes.
    Train(TrainArgs),
    /// Vote keypoints from scene or trained fields.
    Vote(VoteArgs),
    /// Vote, solve EPnP and score poses with ADD / ADD-S / 2D projection.
    Eval(EvalArgs),
    /// Merge trace sets into paired curves and a per-mode table.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config or a previous run's manifest.json; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// ASCII PLY or OBJ model.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    keypoints: Option<usize>,
    /// fx,fy,cx,cy
    #[arg(long, value_delimiter = ',', num_args = 4)]
    intrinsics: Option<Vec<f64>>,
    /// Angular noise in degrees.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    flip: Option<f64>,
    #[arg(long)]
    occlusion: Option<f64>,
    #[arg(long)]
    symmetric: Option<bool>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// vf_only, vf_plus_dpvl, dpvl_only (comma-separated or repeated).
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<TrainMode>>,
    /// One or more seeds (comma-separated or repeated).
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iters_per_epoch: Option<usize>,
    #[arg(long)]
    save_fields: Option<bool>,
}

#[derive(Args)]
struct VoteOpts {
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Directory of scene_NNN/field_NN.csv, e.g. a train run's fields/<mode>/seed_<s>.
    #[arg(long)]
    fields: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// RANSAC hypotheses per keypoint.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct VoteArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    vote: VoteOpts,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    vote: VoteOpts,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    symmetric: Option<bool>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// train output directories
    #[arg(long, num_args = 1..)]
    runs: Option<Vec<PathBuf>>,
    #[arg(long)]
    lpv_threshold: Option<f64>,
    #[arg(long)]
    baseline: Option<TrainMode>,
}

fn run(cli: Cli) -> CliResult<()> {
    let threads = threads()?;
    match cli.command {
        Command::Gen(a) => {
            let mut c: GenConfig = load(a.common.config.as_deref(), "gen")?;
            set(&mut c.out, a.common.out);
            set(&mut c.model, a.model);
            set(&mut c.n, a.n);
            set(&mut c.seed, a.seed);
            set(&mut c.width, a.width);
            set(&mut c.height, a.height);
            set(&mut c.keypoints, a.keypoints);
            if let Some(v) = a.intrinsics {
                c.intrinsics = Some([v[0], v[1], v[2], v[3]]);
            }
            set(&mut c.angular_sigma, a.sigma);
            set(&mut c.flip_prob, a.flip);
            set(&mut c.occlusion_frac, a.occlusion);
            set(&mut c.symmetric, a.symmetric);
            let rec = cmd_gen(&c, threads)?;
            let m = rec.finish(&c.out, "gen", &c, vec![c.seed])?;
            println!("wrote {} files to {}", m.outputs.len(), c.out.display());
        }
        Command::Train(a) => {
            let mut c: TrainCmdConfig = load(a.common.config.as_deref(), "train")?;
            set(&mut c.out, a.common.out);
            set(&mut c.scenes, a.scenes);
            set(&mut c.modes, a.mode);
            set(&mut c.seeds, a.seed);
            set(&mut c.trainer.iterations, a.iters);
            set(&mut c.trainer.learning_rate, a.lr);
            set(&mut c.trainer.iters_per_epoch, a.iters_per_epoch);
            set(&mut c.save_fields, a.save_fields);
            let rec = cmd_train(&c, threads)?;
            rec.finish(&c.out, "train", &c, c.seeds.clone())?;
        }
        Command::Vote(a) => {
            let mut c: VoteConfig = load(a.common.config.as_deref(), "vote")?;
            set(&mut c.out, a.common.out);
            set(&mut c.scenes, a.vote.scenes);
            if a.vote.fields.is_some() {
                c.fields = a.vote.fields;
            }
            set(&mut c.seed, a.vote.seed);
            set(&mut c.voting.num_samples, a.vote.samples);
            let rec = cmd_vote(&c, threads)?;
            rec.finish(&c.out, "vote", &c, vec![c.seed])?;
        }
        Command::Eval(a) => {
            let mut c: EvalConfig = load(a.common.config.as_deref(), "eval")?;
            set(&mut c.out, a.common.out);
            set(&mut c.scenes, a.vote.scenes);
            if a.vote.fields.is_some() {
                c.fields = a.vote.fields;
            }
            set(&mut c.seed, a.vote.seed);
            set(&mut c.voting.num_samples, a.vote.samples);
            if a.model.is_some() {
                c.model = a.model;
            }
            if a.symmetric.is_some() {
                c.symmetric = a.symmetric;
            }
            let rec = cmd_eval(&c, threads)?;
            rec.finish(&c.out, "eval", &c, vec![c.seed])?;
        }
        Command::Report(a) => {
            let mut c: ReportConfig = load(a.common.config.as_deref(), "report")?;
            set(&mut c.out, a.common.out);
            set(&mut c.runs, a.runs);
            if a.lpv_threshold.is_some() {
                c.lpv_threshold = a.lpv_threshold;
            }
            if a.baseline.is_some() {
                c.baseline = a.baseline;
            }
            let (rec, seeds) = cmd_report(&c)?;
            rec.finish(&c.out, "report", &c, seeds)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with 2 on bad flags and 0 for --help / --version
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
