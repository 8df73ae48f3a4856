//! Experiment driver behind the `synmem` binary: config parsing, the four experiments,
//! versioned CSV output and the run manifest.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod table;

use std::path::Path;

pub use commands::{run, CliError, RunOptions, RunOutput};
pub use config::{load_config, parse_config, ExperimentConfig, ExperimentKind};
pub use table::{validate_csv, Table, TableKind};

/// Runs `kind` from the config file at `config` and writes every table plus
/// `manifest.json` under `out_dir`.
pub fn run_to_dir(kind: ExperimentKind, config: &Path, out_dir: &Path, opts: &RunOptions) -> Result<RunOutput, CliError> {
    let loaded = load_config(config).map_err(|e| CliError::Config(e.to_string()))?;
    let dir = config.parent().unwrap_or(Path::new("."));
    let out = run(kind, &loaded.config, dir, opts)?;

    let io = |e: std::io::Error, p: &Path| CliError::Io(format!("{}: {e}", p.display()));
    let files: Vec<(String, String)> = out.tables.iter().map(|(n, t)| (n.clone(), t.to_csv())).collect();
    for (name, text) in &files {
        let path = out_dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io(e, parent))?;
        }
        std::fs::write(&path, text).map_err(|e| io(e, &path))?;
    }
    let m = manifest::manifest(&out, &loaded.raw, opts.full_scale, &files);
    let mut json = serde_json::to_string_pretty(&m).map_err(|e| CliError::Io(e.to_string()))?;
    json.push('\n');
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, json).map_err(|e| io(e, &path))?;
    Ok(out)
}
