//! Scene and field directories as laid out by `gen` and `train`.

use std::fs;
use std::path::{Path, PathBuf};

use proxyvote_core::io::{field_file_name, field_from_csv, read_scene};
use proxyvote_core::model::{load_model, model_diameter, ModelCloud};
use proxyvote_core::synth::SceneSample;
use proxyvote_core::VectorField;
use serde::{Deserialize, Serialize};

use crate::config::{runtime, CliResult};

pub const MODEL_FILE: &str = "model.ply";
pub const MODEL_INFO_FILE: &str = "model.json";

pub fn scene_dir_name(i: usize) -> String {
    format!("scene_{i:03}")
}

/// Model facts `gen` leaves next to the scenes for `train` and `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub points: usize,
    pub symmetric: bool,
    pub diameter: f64,
}

/// Sorted `scene_*` subdirectories of `dir`.
pub fn list_scenes(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("scene_")))
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(runtime(format!("{}: no scene_* directories", dir.display())));
    }
    Ok(out)
}

pub fn read_scenes(dir: &Path) -> CliResult<Vec<SceneSample>> {
    list_scenes(dir)?
        .iter()
        .map(|p| read_scene(p).map_err(Into::into))
        .collect()
}

/// Replaces each scene's fields with those under `fields/scene_NNN/`.
pub fn read_fields(fields: &Path, scenes: &[SceneSample]) -> CliResult<Vec<Vec<VectorField>>> {
    scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let dir = fields.join(scene_dir_name(i));
            (0..s.keypoints2.len())
                .map(|k| {
                    let p = dir.join(field_file_name(k));
                    let text = fs::read_to_string(&p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
                    field_from_csv(&p, &text, s.width, s.height).map_err(Into::into)
                })
                .collect()
        })
        .collect()
}

/// The model (and its symmetric flag and diameter) stored with the scenes, if any.
pub fn scene_model(dir: &Path) -> CliResult<Option<(ModelCloud, f64)>> {
    let path = dir.join(MODEL_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let mut cloud = load_model(&path)?;
    let info_path = dir.join(MODEL_INFO_FILE);
    let diameter = match fs::read_to_string(&info_path) {
        Ok(text) => {
            let info: ModelInfo =
                serde_json::from_str(&text).map_err(|e| runtime(format!("{}: {e}", info_path.display())))?;
            cloud.symmetric = info.symmetric;
            info.diameter
        }
        Err(_) => model_diameter(&cloud)?,
    };
    Ok(Some((cloud, diameter)))
}
