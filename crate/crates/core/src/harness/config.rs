//! Dotted-key configuration files.
//!
//! One `key=value` per line, nested fields joined with dots, `#` starts a
//! comment:
//!
//! ```text
//! target.epochs=200
//! calibration.mode=forgetting
//! kinds=loss,grad_norm
//! ```
//!
//! Values are parsed according to the type of the field they replace; list
//! fields take comma-separated items.
//!
//! Precedence, lowest first: built-in defaults, the `MIA_BASE_SEED`
//! environment variable, the config file, explicit overrides (CLI flags).
//!
//! Reference models train with the target's settings unless a
//! `calibration.reference_train.*` key says otherwise; in forgetting mode the
//! inherited epoch count is cut to a quarter.

use std::path::Path;

use serde_json::{Map, Number, Value};

use super::ExperimentConfig;
use crate::calibration::{CalibrationConfig, CalibrationMode};
use crate::error::{Error, Result};

pub const BASE_SEED_ENV: &str = "MIA_BASE_SEED";

/// Parses `key=value` lines into pairs, skipping blanks and comments.
pub fn parse_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_scalar(raw: &str, like: &Value, key: &str) -> Result<Value> {
    let bad = || Error::Config(format!("`{key}`: cannot parse `{raw}`"));
    Ok(match like {
        Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| bad())?),
        Value::Number(n) if n.is_u64() || n.is_i64() => match raw.parse::<u64>() {
            Ok(u) => Value::Number(u.into()),
            Err(_) => Value::Number(Number::from_f64(raw.parse().map_err(|_| bad())?).ok_or_else(bad)?),
        },
        Value::Number(_) => Value::Number(Number::from_f64(raw.parse().map_err(|_| bad())?).ok_or_else(bad)?),
        Value::String(_) => Value::String(raw.to_string()),
        _ => {
            if let Ok(u) = raw.parse::<u64>() {
                Value::Number(u.into())
            } else if let Some(n) = raw.parse::<f64>().ok().and_then(Number::from_f64) {
                Value::Number(n)
            } else if let Ok(b) = raw.parse::<bool>() {
                Value::Bool(b)
            } else {
                Value::String(raw.to_string())
            }
        }
    })
}

fn set_path(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj: &mut Map<String, Value> =
            node.as_object_mut().ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is not a section")))?;
        let slot = obj.get_mut(*part).ok_or_else(|| Error::Config(format!("unknown configuration key `{key}`")))?;
        if i + 1 < parts.len() {
            node = slot;
            continue;
        }
        let replacement = match &*slot {
            Value::Array(items) => {
                let like = items.first().cloned().unwrap_or(Value::Null);
                let parsed = raw
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse_scalar(s, &like, key))
                    .collect::<Result<Vec<_>>>()?;
                Value::Array(parsed)
            }
            Value::Object(_) => return Err(Error::Config(format!("`{key}` is a section, not a value"))),
            other => parse_scalar(raw, other, key)?,
        };
        *slot = replacement;
        return Ok(());
    }
    Err(Error::Config(format!("empty configuration key `{key}`")))
}

/// Applies dotted-key overrides to `base`.
pub fn apply_overrides(base: &ExperimentConfig, pairs: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut value = serde_json::to_value(base).map_err(|e| Error::Config(e.to_string()))?;
    for (k, v) in pairs {
        set_path(&mut value, k, v)?;
    }
    serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
}

/// Builds the effective configuration from defaults, the environment, an
/// optional config file and explicit overrides, then validates it.
pub fn load_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let env_seed = std::env::var(BASE_SEED_ENV).ok();
    load_config_with_env(file, overrides, env_seed.as_deref())
}

pub fn load_config_with_env(
    file: Option<&Path>,
    overrides: &[(String, String)],
    env_seed: Option<&str>,
) -> Result<ExperimentConfig> {
    load_layered(ExperimentConfig::default(), file, overrides, env_seed)
}

/// Like [`load_config_with_env`], starting from `base` instead of the defaults.
pub fn load_layered(
    base: ExperimentConfig,
    file: Option<&Path>,
    overrides: &[(String, String)],
    env_seed: Option<&str>,
) -> Result<ExperimentConfig> {
    let mut cfg = base;
    if let Some(seed) = env_seed {
        cfg.base_seed = seed
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{BASE_SEED_ENV} must be an unsigned integer, got `{seed}`")))?;
    }
    let mut pairs = Vec::new();
    if let Some(path) = file {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        pairs = parse_lines(&std::fs::read_to_string(path)?)?;
    }
    pairs.extend_from_slice(overrides);
    cfg = apply_overrides(&cfg, &pairs)?;

    cfg.calibration.reference_train = match cfg.calibration.mode {
        CalibrationMode::FromScratch => cfg.target.clone(),
        CalibrationMode::Forgetting => CalibrationConfig::forgetting_defaults(&cfg.target),
    };
    let explicit: Vec<_> =
        pairs.iter().filter(|(k, _)| k.starts_with("calibration.reference_train.")).cloned().collect();
    cfg = apply_overrides(&cfg, &explicit)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Renders a configuration back into dotted-key lines.
pub fn to_lines(cfg: &ExperimentConfig) -> Result<String> {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(scalar_text).collect();
                out.push_str(&format!("{prefix}={}\n", joined.join(",")));
            }
            other => out.push_str(&format!("{prefix}={}\n", scalar_text(other))),
        }
    }
    fn scalar_text(v: &Value) -> String {
        match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
    let value = serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = String::new();
    walk("", &value, &mut out);
    Ok(out)
}
