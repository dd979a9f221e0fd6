//! JSON configuration files.
//!
//! A config file is one flat JSON object. Besides the keys of the command's
//! own config struct it may carry `output_dir` and `threads`. Unknown keys are
//! rejected so that typos do not silently fall back to defaults.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

pub const GLOBAL_KEYS: [&str; 2] = ["output_dir", "threads"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GlobalSettings {
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Directory that relative paths in the file are resolved against.
    pub base_dir: PathBuf,
}

/// Reads `path` (or returns defaults when absent).
pub fn load<T>(path: Option<&Path>) -> Result<(T, GlobalSettings)>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Some(path) = path else {
        return Ok((T::default(), GlobalSettings { base_dir: PathBuf::from("."), ..Default::default() }));
    };
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse(&text, path, base_dir)
}

pub fn parse<T>(text: &str, path: &Path, base_dir: PathBuf) -> Result<(T, GlobalSettings)>
where
    T: Serialize + DeserializeOwned + Default,
{
    let err = |msg: String| CliError::Config { path: path.to_path_buf(), msg };
    let value: Value = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(err("expected a JSON object at the top level".into()));
    };

    let mut global = GlobalSettings { base_dir, ..Default::default() };
    if let Some(v) = map.remove("output_dir") {
        let s = v.as_str().ok_or_else(|| err("output_dir must be a string".into()))?;
        global.output_dir = Some(PathBuf::from(s));
    }
    if let Some(v) = map.remove("threads") {
        let n = v.as_u64().filter(|&n| n > 0).ok_or_else(|| err("threads must be a positive integer".into()))?;
        global.threads = Some(n as usize);
    }

    let known = known_keys::<T>();
    if let Some(key) = map.keys().find(|k| !known.contains(k.as_str())) {
        let mut all: Vec<&str> = known.iter().map(String::as_str).chain(GLOBAL_KEYS).collect();
        all.sort_unstable();
        return Err(err(format!("unknown key `{key}` (expected one of: {})", all.join(", "))));
    }
    let cfg = serde_json::from_value(Value::Object(map)).map_err(|e| err(e.to_string()))?;
    Ok((cfg, global))
}

fn known_keys<T: Serialize + Default>() -> BTreeSet<String> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

/// Pretty JSON of the effective config, written next to the outputs.
pub fn effective<T: Serialize>(cfg: &T, global: &GlobalSettings) -> String {
    let mut map = match serde_json::to_value(cfg) {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    };
    if let Some(t) = global.threads {
        map.insert("threads".into(), Value::from(t));
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(map)).unwrap_or_default();
    text.push('\n');
    text
}
