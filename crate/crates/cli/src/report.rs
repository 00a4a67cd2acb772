//! `report`: merges trace sets from one or more `train` runs into paired
//! curves and a table of final errors and iterations-to-threshold per mode.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use proxyvote_core::experiment::{median, median_iters};
use proxyvote_core::trainer::{iterations_to, TraceRecord, TrainMode, TrainTrace};
use serde::{Deserialize, Serialize};

use crate::config::{runtime, CliError, CliResult};
use crate::manifest::Recorder;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// `train` output directories.
    pub runs: Vec<PathBuf>,
    pub out: PathBuf,
    /// Fixed L_pv threshold; without it each pair uses the baseline's final L_pv.
    pub lpv_threshold: Option<f64>,
    /// Baseline mode; defaults to vf_only when present, else the first mode.
    pub baseline: Option<TrainMode>,
}

/// (scene directory name, seed) → mode → trace.
type Groups = BTreeMap<(String, u64), BTreeMap<TrainMode, Vec<TraceRecord>>>;

fn dir_entries(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| runtime(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    v.sort();
    Ok(v)
}

fn name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads `traces/<scene>/<mode>/seed_<s>.csv` under each run directory.
pub fn collect_traces(runs: &[PathBuf]) -> CliResult<Groups> {
    let mut groups = Groups::new();
    for run in runs {
        let traces = run.join("traces");
        for scene in dir_entries(&traces)?.into_iter().filter(|p| p.is_dir()) {
            for mode_dir in dir_entries(&scene)?.into_iter().filter(|p| p.is_dir()) {
                let mode: TrainMode = name(&mode_dir)
                    .parse()
                    .map_err(|e| runtime(format!("{}: {e}", mode_dir.display())))?;
                for file in dir_entries(&mode_dir)? {
                    let Some(seed) = name(&file)
                        .strip_prefix("seed_")
                        .and_then(|s| s.strip_suffix(".csv"))
                        .and_then(|s| s.parse::<u64>().ok())
                    else {
                        continue;
                    };
                    let text = fs::read_to_string(&file).map_err(|e| runtime(format!("{}: {e}", file.display())))?;
                    let records =
                        TrainTrace::from_csv(&text).map_err(|e| runtime(format!("{}: {e}", file.display())))?;
                    let slot = groups.entry((name(&scene), seed)).or_default();
                    if slot.insert(mode, records).is_some() {
                        return Err(runtime(format!(
                            "{}: duplicate trace for {} {mode} seed {seed}",
                            file.display(),
                            name(&scene)
                        )));
                    }
                }
            }
        }
    }
    if groups.is_empty() {
        return Err(runtime("no traces found"));
    }
    Ok(groups)
}

/// Paired traces must cover the same iterations.
fn check_alignment(groups: &Groups) -> CliResult<()> {
    for ((scene, seed), modes) in groups {
        let mut it = modes.iter();
        let (m0, t0) = it.next().expect("groups are never empty");
        for (m, t) in it {
            let same = t.len() == t0.len() && t.iter().zip(t0).all(|(a, b)| a.iter == b.iter);
            if !same {
                return Err(runtime(format!(
                    "alignment error: {scene} seed {seed}: {m0} has {} records, {m} has {}",
                    t0.len(),
                    t.len()
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeRow {
    pub mode: TrainMode,
    pub runs: usize,
    pub median_final_l_pv: f64,
    pub median_final_proxy_dist: f64,
    /// `None` when fewer than half the runs reached the threshold.
    pub median_iters: Option<f64>,
    pub reached: usize,
}

pub fn summarize(groups: &Groups, threshold: Option<f64>, baseline: TrainMode) -> Vec<ModeRow> {
    let modes: BTreeSet<TrainMode> = groups.values().flat_map(|g| g.keys().copied()).collect();
    modes
        .into_iter()
        .map(|mode| {
            let (mut lpv, mut dist, mut iters) = (Vec::new(), Vec::new(), Vec::new());
            for g in groups.values() {
                let Some(t) = g.get(&mode) else { continue };
                let Some(last) = t.last() else { continue };
                lpv.push(last.l_pv);
                dist.push(last.mean_proxy_dist);
                let target = threshold.or_else(|| g.get(&baseline).and_then(|b| b.last()).map(|r| r.l_pv));
                if let Some(target) = target {
                    iters.push(iterations_to(t, target, |r| r.l_pv));
                }
            }
            ModeRow {
                mode,
                runs: lpv.len(),
                median_final_l_pv: median(&lpv).unwrap_or(f64::NAN),
                median_final_proxy_dist: median(&dist).unwrap_or(f64::NAN),
                median_iters: median_iters(&iters),
                reached: iters.iter().filter(|i| i.is_some()).count(),
            }
        })
        .collect()
}

fn curves_csv(groups: &Groups) -> String {
    let modes: BTreeSet<TrainMode> = groups.values().flat_map(|g| g.keys().copied()).collect();
    let mut s = String::from("scene,seed,iter");
    for m in &modes {
        write!(s, ",{m}_l_pv,{m}_mean_proxy_dist").unwrap();
    }
    s.push('\n');
    for ((scene, seed), g) in groups {
        let len = g.values().map(Vec::len).max().unwrap_or(0);
        for i in 0..len {
            let iter = g.values().find_map(|t| t.get(i)).map(|r| r.iter).unwrap_or(i);
            write!(s, "{scene},{seed},{iter}").unwrap();
            for m in &modes {
                match g.get(m).and_then(|t| t.get(i)) {
                    Some(r) => write!(s, ",{},{}", r.l_pv, r.mean_proxy_dist),
                    None => write!(s, ",,"),
                }
                .unwrap();
            }
            s.push('\n');
        }
    }
    s
}

fn table(rows: &[ModeRow], threshold: Option<f64>, baseline: TrainMode) -> String {
    let mut s = match threshold {
        Some(t) => format!("iterations to L_pv <= {t}\n"),
        None => format!("iterations to the paired {baseline} run's final L_pv\n"),
    };
    writeln!(
        s,
        "{:<14} {:>5} {:>18} {:>18} {:>14} {:>8}",
        "mode", "runs", "final_l_pv", "final_proxy_dist", "iters_to_thr", "reached"
    )
    .unwrap();
    for r in rows {
        let iters = r.median_iters.map_or("-".to_string(), |v| v.to_string());
        writeln!(
            s,
            "{:<14} {:>5} {:>18.6e} {:>18.6e} {:>14} {:>8}",
            r.mode.as_str(),
            r.runs,
            r.median_final_l_pv,
            r.median_final_proxy_dist,
            iters,
            format!("{}/{}", r.reached, r.runs)
        )
        .unwrap();
    }
    s.push_str("(values are medians over paired scene/seed runs)\n");
    s
}

pub fn cmd_report(cfg: &ReportConfig) -> CliResult<(Recorder, Vec<u64>)> {
    if cfg.runs.is_empty() {
        return Err(CliError::Usage(
            "--runs needs at least one train output directory".into(),
        ));
    }
    if cfg.out.as_os_str().is_empty() {
        return Err(CliError::Usage("--out is required".into()));
    }
    if let Some(t) = cfg.lpv_threshold {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(CliError::Usage(format!(
                "--lpv-threshold {t} must be a finite non-negative number"
            )));
        }
    }
    let groups = collect_traces(&cfg.runs)?;
    check_alignment(&groups)?;
    let present: BTreeSet<TrainMode> = groups.values().flat_map(|g| g.keys().copied()).collect();
    let baseline = cfg.baseline.unwrap_or(if present.contains(&TrainMode::VfOnly) {
        TrainMode::VfOnly
    } else {
        *present.first().expect("at least one trace")
    });
    let rows = summarize(&groups, cfg.lpv_threshold, baseline);
    let text = table(&rows, cfg.lpv_threshold, baseline);
    print!("{text}");

    let mut rec = Recorder::start();
    rec.write(&cfg.out, "curves.csv", curves_csv(&groups).as_bytes())?;
    rec.write(&cfg.out, "report.txt", text.as_bytes())?;
    let seeds: BTreeSet<u64> = groups.keys().map(|(_, s)| *s).collect();
    Ok((rec, seeds.into_iter().collect()))
}
