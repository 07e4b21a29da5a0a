use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SynthConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    pub file: String,
    pub n_trials: usize,
    pub channels: usize,
    pub samples: usize,
    pub labeled: bool,
}

/// Describes a directory of subject files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub toolkit_version: String,
    pub subjects: Vec<SubjectEntry>,
    /// Free-form description of how the trials were produced.
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub decisions: BTreeMap<String, String>,
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Format { offset: 0, message: e.to_string() })?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format { offset: e.column() as u64, message: format!("line {}: {e}", e.line()) })
}
