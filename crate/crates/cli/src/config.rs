//! Config resolution (flags > `--config` file > built-ins), exit codes and
//! the thread cap.

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::Value;

pub const THREADS_ENV: &str = "PROXY_VOTE_THREADS";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config values: exit code 2.
    Usage(String),
    /// I/O, parse or numerical failure: exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<proxyvote_core::Error> for CliError {
    fn from(e: proxyvote_core::Error) -> Self {
        match e {
            proxyvote_core::Error::Config(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn runtime(msg: impl fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

/// Loads the config for `command` from `path`, or the built-in defaults.
///
/// The file may be a bare config object or a run manifest, in which case its
/// `config` member is used (and its command must match).
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if let Some(obj) = doc.as_object_mut() {
        if let (Some(cmd), Some(cfg)) = (obj.get("command").cloned(), obj.remove("config")) {
            if cmd.as_str() != Some(command) {
                return Err(CliError::Usage(format!(
                    "{}: manifest is for '{}', not '{command}'",
                    path.display(),
                    cmd.as_str().unwrap_or("?")
                )));
            }
            doc = cfg;
        }
    }
    serde_json::from_value(doc).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Worker count: `PROXY_VOTE_THREADS` if set, else the machine's parallelism.
pub fn threads() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV}='{v}' is not a positive integer"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// `Some(v)` overrides the target.
pub fn set<T>(target: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *target = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, Deserialize, PartialEq)]
    #[serde(default)]
    struct Cfg {
        n: usize,
        name: String,
    }

    fn tmp(name: &str, body: &str) -> std::path::PathBuf {
        let p = std::env::temp_dir().join(format!("proxyvote-cfg-{}-{name}", std::process::id()));
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn bare_and_manifest_configs() {
        let bare = tmp("bare.json", r#"{"n": 3}"#);
        assert_eq!(
            load::<Cfg>(Some(&bare), "gen").unwrap(),
            Cfg {
                n: 3,
                name: String::new()
            }
        );
        let man = tmp(
            "man.json",
            r#"{"command": "gen", "config": {"name": "x"}, "seeds": []}"#,
        );
        assert_eq!(load::<Cfg>(Some(&man), "gen").unwrap().name, "x");
        assert!(matches!(load::<Cfg>(Some(&man), "train"), Err(CliError::Usage(_))));
        let bad = tmp("bad.json", r#"{"n": "three"}"#);
        assert!(matches!(load::<Cfg>(Some(&bad), "gen"), Err(CliError::Usage(_))));
        assert_eq!(load::<Cfg>(None, "gen").unwrap(), Cfg::default());
        for p in [bare, man, bad] {
            std::fs::remove_file(p).ok();
        }
    }
}
