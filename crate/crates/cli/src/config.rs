//! Effective configuration: defaults, then the `--config` file, then
//! dotted `key=value` overrides.

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use egcn_core::training::TrainConfig;

use crate::CliError;

pub fn effective_config(file: Option<&Path>, overrides: &[String]) -> Result<TrainConfig, CliError> {
    let mut value = serde_json::to_value(TrainConfig::default()).expect("config serializes");
    if let Some(path) = file {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let from_file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        if !from_file.is_object() {
            return Err(CliError::Usage(format!("config {}: expected a JSON object", path.display())));
        }
        merge(&mut value, from_file);
    }
    for raw in overrides {
        let (key, v) = parse_override(raw)?;
        set_path(&mut value, key, v).map_err(CliError::Usage)?;
    }
    let cfg: TrainConfig = serde_json::from_value(value).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Splits `key=value`; the value is JSON if it parses, a string otherwise.
pub fn parse_override(raw: &str) -> Result<(&str, Value), CliError> {
    let (key, v) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{raw}` is not of the form key=value")))?;
    if key.is_empty() {
        return Err(CliError::Usage(format!("override `{raw}` has an empty key")));
    }
    let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((key, v))
}

fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets `a.b.2.c` inside `root`; numeric segments index lists.
pub fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if cur.is_null() {
            *cur = Value::Object(Map::new());
        }
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert(Value::Null)
            }
            Value::Array(items) => {
                let len = items.len();
                let idx: usize = part
                    .parse()
                    .map_err(|_| format!("`{key}`: `{part}` is not a list index"))?;
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| format!("`{key}`: index {idx} out of range for a list of {len}"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("`{key}`: `{part}` is not inside an object or list")),
        };
    }
    unreachable!("split yields at least one segment")
}
