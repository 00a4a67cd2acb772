//! On-disk scene format and atomic file writes.
//!
//! A scene directory holds:
//!
//! - `mask.pgm`: plain (P2) graymap, 255 = object pixel, 0 = background
//! - `field_NN.csv`: `row,col,vx,vy` for every masked pixel of keypoint `NN`
//! - `keypoints.csv`: `index,x,y,X,Y,Z` (image projection and model-frame point)
//! - `pose.json`: `{rotation: [9, row-major], translation: [3], fx, fy, cx, cy}`
//!
//! Floats are written in Rust's shortest round-trip form, so reading a scene
//! back yields bit-identical values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Mask, VectorField};
use crate::geometry::{Direction2, Intrinsics, Point2, Point3, Pose};
use crate::synth::SceneSample;

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn mask_to_pgm(mask: &Mask) -> String {
    let mut s = format!("P2\n{} {}\n255\n", mask.width(), mask.height());
    for row in 0..mask.height() {
        let line: Vec<&str> = (0..mask.width())
            .map(|col| if mask.get(row, col) { "255" } else { "0" })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Parses a P2 graymap; any nonzero value is an object pixel.
pub fn mask_from_pgm(path: &Path, text: &str) -> Result<Mask> {
    // token stream with line numbers, comments stripped
    let mut tokens = text.lines().enumerate().flat_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        l.split_whitespace().map(move |t| (i + 1, t))
    });
    let mut next = |what: &str| {
        tokens
            .next()
            .ok_or_else(|| Error::parse(path, text.lines().count(), format!("missing {what}")))
    };
    let (ln, magic) = next("magic")?;
    if magic != "P2" {
        return Err(Error::parse(path, ln, format!("expected P2 graymap, found '{magic}'")));
    }
    let mut num = |what: &str| -> Result<usize> {
        let (ln, t) = next(what)?;
        t.parse()
            .map_err(|_| Error::parse(path, ln, format!("bad {what} '{t}'")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    let mut data = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let v = num("pixel")?;
        if v > maxval {
            return Err(Error::parse(
                path,
                0,
                format!("pixel value {v} exceeds maxval {maxval}"),
            ));
        }
        data.push(v > 0);
    }
    Mask::from_vec(width, height, data)
}

pub fn field_to_csv(field: &VectorField, mask: &Mask) -> String {
    let mut s = String::from("row,col,vx,vy\n");
    for i in mask.indices() {
        let v = field.as_slice()[i];
        let _ = writeln!(s, "{},{},{},{}", i / mask.width(), i % mask.width(), v.x, v.y);
    }
    s
}

/// Reads a field CSV; pixels not listed are zero. Every value must be finite.
pub fn field_from_csv(path: &Path, text: &str, width: usize, height: usize) -> Result<VectorField> {
    let mut field = VectorField::zeros(width, height);
    for (i, line) in text.lines().enumerate().skip(1) {
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                path,
                ln,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let idx = |s: &str, lim: usize| -> Result<usize> {
            s.parse::<usize>()
                .ok()
                .filter(|&v| v < lim)
                .ok_or_else(|| Error::parse(path, ln, format!("bad pixel index '{s}'")))
        };
        let val = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, ln, format!("non-finite or malformed value '{s}'")))
        };
        let (row, col) = (idx(cols[0], height)?, idx(cols[1], width)?);
        field.set(row, col, Direction2::new(val(cols[2])?, val(cols[3])?));
    }
    Ok(field)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseDoc {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl PoseDoc {
    pub fn new(pose: &Pose, intr: &Intrinsics) -> Self {
        let t = pose.translation;
        Self {
            rotation: pose.rotation_row_major(),
            translation: [t.x, t.y, t.z],
            fx: intr.fx,
            fy: intr.fy,
            cx: intr.cx,
            cy: intr.cy,
        }
    }

    pub fn pose(&self) -> Result<Pose> {
        let r = Matrix3::from_row_slice(&self.rotation);
        let t = Vector3::from_column_slice(&self.translation);
        Pose::new(r, t)
    }

    pub fn intrinsics(&self) -> Result<Intrinsics> {
        Intrinsics::new(self.fx, self.fy, self.cx, self.cy)
    }
}

pub fn field_file_name(index: usize) -> String {
    format!("field_{index:02}.csv")
}

/// Writes a scene directory (created if missing).
pub fn write_scene(dir: &Path, scene: &SceneSample) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("mask.pgm"), mask_to_pgm(&scene.mask).as_bytes())?;
    for (i, f) in scene.gt_fields.iter().enumerate() {
        write_atomic(&dir.join(field_file_name(i)), field_to_csv(f, &scene.mask).as_bytes())?;
    }
    let mut kp = String::from("index,x,y,X,Y,Z\n");
    for (i, (k2, k3)) in scene.keypoints2.iter().zip(&scene.keypoints3).enumerate() {
        let _ = writeln!(kp, "{i},{},{},{},{},{}", k2.x, k2.y, k3.x, k3.y, k3.z);
    }
    write_atomic(&dir.join("keypoints.csv"), kp.as_bytes())?;
    let doc = serde_json::to_string_pretty(&PoseDoc::new(&scene.pose, &scene.intr)).expect("serializable");
    write_atomic(&dir.join("pose.json"), format!("{doc}\n").as_bytes())
}

fn read_keypoints(path: &Path) -> Result<(Vec<Point2>, Vec<Point3>)> {
    let text = read_text(path)?;
    let mut k2 = Vec::new();
    let mut k3 = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .ok()
            .filter(|v: &Vec<f64>| v.len() == 5 && v.iter().all(|x| x.is_finite()))
            .ok_or_else(|| Error::parse(path, i + 1, "expected index,x,y,X,Y,Z with finite values"))?;
        k2.push(Point2::new(vals[0], vals[1]));
        k3.push(Point3::new(vals[2], vals[3], vals[4]));
    }
    Ok((k2, k3))
}

/// Reads a scene directory written by [`write_scene`].
pub fn read_scene(dir: &Path) -> Result<SceneSample> {
    let mask_path = dir.join("mask.pgm");
    let mask = mask_from_pgm(&mask_path, &read_text(&mask_path)?)?;
    let (keypoints2, keypoints3) = read_keypoints(&dir.join("keypoints.csv"))?;
    let pose_path = dir.join("pose.json");
    let doc: PoseDoc =
        serde_json::from_str(&read_text(&pose_path)?).map_err(|e| Error::parse(&pose_path, e.line(), e.to_string()))?;
    let pose = doc.pose().map_err(|e| Error::io(&pose_path, e))?;
    let intr = doc.intrinsics().map_err(|e| Error::io(&pose_path, e))?;
    let (w, h) = mask.dims();
    let mut gt_fields = Vec::with_capacity(keypoints2.len());
    for i in 0..keypoints2.len() {
        let p = dir.join(field_file_name(i));
        gt_fields.push(field_from_csv(&p, &read_text(&p)?, w, h)?);
    }
    let degenerate = gt_fields
        .iter()
        .map(|f| {
            mask.indices()
                .filter(|&i| f.as_slice()[i] == Direction2::ZERO)
                .collect()
        })
        .collect();
    Ok(SceneSample {
        pose,
        intr,
        width: w,
        height: h,
        mask,
        keypoints2,
        keypoints3,
        gt_fields,
        degenerate,
    })
}
