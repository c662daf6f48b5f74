//! Run manifests: everything needed to reproduce a command invocation.

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use synthmatch::optim::MethodConfig;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub method_configs: Vec<MethodConfig>,
    pub wall_clock_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluations: Option<u64>,
    /// Extra command-specific settings, free-form but machine-readable.
    pub settings: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
            method_configs: Vec::new(),
            wall_clock_seconds: 0.0,
            evaluations: None,
            settings: serde_json::Value::Null,
        }
    }

    pub fn input(mut self, path: impl AsRef<Path>) -> Self {
        self.inputs.push(path.as_ref().display().to_string());
        self
    }

    pub fn output(mut self, path: impl AsRef<Path>) -> Self {
        self.outputs.push(path.as_ref().display().to_string());
        self
    }

    pub fn write_next_to(&self, primary_output: &Path) -> Result<PathBuf> {
        let mut name = primary_output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = primary_output.with_file_name(name);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}
