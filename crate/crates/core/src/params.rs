//! Loosely typed parameter maps used by config files and registries.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::error::{Error, Result};

pub type Params = BTreeMap<String, Value>;

pub fn get_f64(params: &Params, key: &str, default: Option<f64>) -> Result<f64> {
    match params.get(key) {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::config(key, format!("expected a number, got {v}"))),
        None => default.ok_or_else(|| Error::config(key, "missing required parameter")),
    }
}

pub fn get_usize(params: &Params, key: &str, default: Option<usize>) -> Result<usize> {
    match params.get(key) {
        Some(v) => {
            if let Some(u) = v.as_u64() {
                return Ok(u as usize);
            }
            // Accept integral floats such as `128.0` coming from sweeps.
            match v.as_f64() {
                Some(f) if f >= 0.0 && f.fract() == 0.0 => Ok(f as usize),
                _ => Err(Error::config(
                    key,
                    format!("expected a non-negative integer, got {v}"),
                )),
            }
        }
        None => default.ok_or_else(|| Error::config(key, "missing required parameter")),
    }
}

pub fn get_u64(params: &Params, key: &str, default: Option<u64>) -> Result<u64> {
    get_usize(params, key, default.map(|d| d as usize)).map(|v| v as u64)
}

/// Rejects keys not in `allowed`, so typos fail validation instead of being
/// silently replaced by defaults.
pub fn check_keys(params: &Params, allowed: &[&str], context: &str) -> Result<()> {
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::config(
                format!("{context}.{key}"),
                format!("unknown parameter (allowed: {})", allowed.join(", ")),
            ));
        }
    }
    Ok(())
}
