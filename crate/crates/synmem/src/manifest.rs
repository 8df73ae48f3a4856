//! JSON run manifest. Contains no timestamps so that reruns are byte-identical.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::commands::{ModelInfo, RunOutput};
use crate::config::ExperimentConfig;

#[derive(Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub csv_format: u32,
    pub experiment: &'static str,
    /// SHA-256 of the config file as given on the command line.
    pub config_sha256: String,
    pub seed: u64,
    pub full_scale: bool,
    pub cells: usize,
    pub diverged_cells: usize,
    pub cost_model: &'a ModelInfo,
    pub config: &'a ExperimentConfig,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Manifest for `out`, whose tables serialize to `files` (name, contents).
pub fn manifest<'a>(out: &'a RunOutput, config_bytes: &[u8], full_scale: bool, files: &[(String, String)]) -> Manifest<'a> {
    Manifest {
        tool: "synmem",
        version: env!("CARGO_PKG_VERSION"),
        core_version: synmem_core::VERSION,
        csv_format: crate::table::FORMAT_VERSION,
        experiment: out.kind.name(),
        config_sha256: sha256_hex(config_bytes),
        seed: out.seed,
        full_scale,
        cells: out.cells,
        diverged_cells: out.diverged,
        cost_model: &out.model,
        config: &out.config,
        outputs: files
            .iter()
            .zip(&out.tables)
            .map(|((name, text), (_, t))| OutputFile { file: name.clone(), sha256: sha256_hex(text.as_bytes()), rows: t.rows.len() })
            .collect(),
    }
}
