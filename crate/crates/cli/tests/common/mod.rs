#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proxyvote_core::model::ModelCloud;

pub fn proxyvote(dir: &Path, args: &[&str]) -> Output {
    proxyvote_env(dir, args, &[])
}

pub fn proxyvote_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_proxyvote"));
    cmd.current_dir(dir).args(args).env_remove("PROXY_VOTE_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a 10×8×6 cm box surface to `dir/box.ply`.
pub fn box_model(dir: &Path) -> PathBuf {
    let path = dir.join("box.ply");
    ModelCloud::box_surface("box", [0.1, 0.08, 0.06], 0.004)
        .unwrap()
        .write_ply(&path)
        .unwrap();
    path
}

pub fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Every output listed in `dir/manifest.json`, read as bytes.
pub fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let m = manifest(dir);
    m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            let rel = p.as_str().unwrap().to_string();
            let bytes = std::fs::read(dir.join(&rel)).unwrap_or_else(|e| panic!("{rel}: {e}"));
            (rel, bytes)
        })
        .collect()
}
