//! Run manifests: everything needed to regenerate a run's outputs.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;

/// `<crate version>+<git hash>`, or the bare version outside a checkout.
pub const VERSION: &str = env!("PAIRLOC_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    /// Position seed of each disorder realization.
    pub realization_seeds: Vec<u64>,
    pub workers: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputFile>,
    /// Per-point failures and other diagnostics.
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            tool: "pairloc".into(),
            version: VERSION.into(),
            command: command.into(),
            config: config.clone(),
            realization_seeds: Vec::new(),
            workers: rayon::current_num_threads(),
            wall_time_s: 0.0,
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn add_output(&mut self, path: &Path, description: impl Into<String>) {
        self.outputs.push(OutputFile {
            path: path.display().to_string(),
            description: description.into(),
        });
    }

    pub fn finish(&mut self, elapsed: Duration) {
        self.wall_time_s = elapsed.as_secs_f64();
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}
