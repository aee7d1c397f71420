//! Run configuration: scenario loading, `--set` overrides and the config hash.

use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::scenario::{Resolved, Scenario};

pub struct RunConfig {
    pub out_dir: PathBuf,
    pub jobs: Option<usize>,
    /// Effective scenario document after overrides, as parsed JSON.
    pub document: Value,
    pub resolved: Resolved,
    pub hash: String,
}

impl RunConfig {
    pub fn load(config_path: &Path, out_dir: &Path, jobs: Option<usize>, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(config_path)
            .map_err(|e| CliError::config("--config", format!("cannot read {}: {e}", config_path.display())))?;
        let mut document: Value =
            serde_json::from_str(&text).map_err(|e| CliError::config("--config", format!("invalid JSON: {e}")))?;
        if !document.is_object() {
            return Err(CliError::config("--config", "scenario must be a JSON object"));
        }
        for o in overrides {
            apply_override(&mut document, o)?;
        }
        let scenario = parse_scenario(&document)?;
        if jobs == Some(0) {
            return Err(CliError::config("--jobs", "must be at least 1"));
        }
        let base_dir = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let hash = config_hash(&document);
        let resolved = Resolved::new(scenario, &base_dir)?;
        Ok(RunConfig { out_dir: out_dir.to_path_buf(), jobs, document, resolved, hash })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.resolved.scenario
    }
}

pub fn parse_scenario(document: &Value) -> Result<Scenario, CliError> {
    serde_path_to_error::deserialize(document.clone()).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        // a missing field is reported against its parent; name the field too
        let path = match message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            Some(field) if path == "." => field.to_string(),
            Some(field) => format!("{path}.{field}"),
            None => path,
        };
        CliError::config(&path, message)
    })
}

/// `key.sub=value`, where `value` is parsed as JSON when possible and taken
/// as a string otherwise.
pub fn apply_override(document: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| CliError::config("--set", format!("expected key=value, got `{spec}`")))?;
    if key.is_empty() {
        return Err(CliError::config("--set", "empty key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = document;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::config(key, format!("`{}` is not an object", parts[..depth].join("."))))?;
        if last {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

/// SHA-256 of the canonical (sorted-key, compact) effective document.
pub fn config_hash(document: &Value) -> String {
    let canonical = serde_json::to_string(document).expect("JSON values serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}
