//! TOML experiment configuration.
//!
//! One file may describe every experiment; each subcommand reads its own section and falls
//! back to defaults for anything missing. Unknown keys are rejected with a line and column.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synmem_core::energy::{CalibrationAnchors, CostModel, GridSpec};
use synmem_core::quant::QuantConfig;
use synmem_core::snn::{LifParams, Precision, TaskConfig, TrainConfig};
use synmem_core::store::{ConvGeometry, Scheme};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FcSweep,
    ConvSweep,
    DensityLeakGrid,
    TrainFrontier,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::FcSweep => "fc-sweep",
            ExperimentKind::ConvSweep => "conv-sweep",
            ExperimentKind::DensityLeakGrid => "density-leak-grid",
            ExperimentKind::TrainFrontier => "train-frontier",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When set, the file may only be run by the matching subcommand.
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cost_model: ModelSection,
    #[serde(default)]
    pub fc_sweep: FcSweep,
    #[serde(default)]
    pub conv_sweep: ConvSweep,
    #[serde(default)]
    pub density_leak_grid: GridSpec,
    #[serde(default)]
    pub train_frontier: Frontier,
}

/// Where the energy constants come from.
///
/// `path` names a TOML file of [`CostModel`] fields (relative paths resolve against the
/// config file); without it the factory constants are used. With `calibrate` the base is
/// then fitted to the conv ratio anchors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub path: Option<PathBuf>,
    pub calibrate: bool,
    pub anchors: CalibrationAnchors,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { path: None, calibrate: true, anchors: CalibrationAnchors::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FcSweep {
    pub n_pre: usize,
    pub n_post: usize,
    pub density: f64,
    pub bits: Vec<u32>,
    pub schemes: Vec<Scheme>,
}

impl Default for FcSweep {
    fn default() -> Self {
        Self {
            n_pre: 728,
            n_post: 128,
            density: 0.75,
            bits: (2..=8).collect(),
            schemes: vec![Scheme::Crossbar, Scheme::Csr, Scheme::Bitmap],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvSweep {
    pub geometry: ConvGeometry,
    pub bits: Vec<u32>,
    pub schemes: Vec<Scheme>,
}

impl Default for ConvSweep {
    fn default() -> Self {
        Self {
            geometry: ConvGeometry { in_h: 28, in_w: 28, k_h: 3, k_w: 3, c_in: 32, c_out: 32 },
            bits: (2..=8).collect(),
            schemes: vec![Scheme::Csr, Scheme::Functional, Scheme::Crossbar],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Frontier {
    pub layers: Vec<usize>,
    pub steps: usize,
    pub epochs: usize,
    pub bits: Vec<u32>,
    pub schemes: Vec<Scheme>,
    /// Quantized step size in weight units.
    pub lr: f64,
    pub b_e: u32,
    pub b_m: u32,
    pub rounding_seed: u64,
    /// Adds a floating point cell next to the quantized ones.
    pub full_precision: bool,
    pub lr_full: f64,
    pub lif: LifParams,
    pub task: TaskConfig,
    pub tau_vr: f64,
    pub w_word: u32,
}

impl Default for Frontier {
    fn default() -> Self {
        let desk = TrainConfig::desk_scale(Precision::Full { lr: 1e-3 });
        Self {
            layers: desk.layers,
            steps: desk.steps,
            epochs: desk.epochs,
            bits: (2..=6).collect(),
            schemes: vec![Scheme::Crossbar, Scheme::Bitmap, Scheme::Csr],
            lr: 0.05,
            b_e: 8,
            b_m: 16,
            rounding_seed: 0,
            full_precision: false,
            lr_full: 1e-3,
            lif: desk.lif,
            task: desk.task,
            tau_vr: desk.tau_vr,
            w_word: desk.w_word,
        }
    }
}

impl Frontier {
    /// Switches to the 700-400-250 network over 250 steps and 10,000 epochs.
    pub fn full_scale(&mut self) {
        let full = TrainConfig::full_scale(Precision::Full { lr: self.lr_full });
        self.layers = full.layers;
        self.steps = full.steps;
        self.epochs = full.epochs;
    }

    /// One trainer config per cell: the quantized widths in order, then full precision.
    pub fn cells(&self, seed: u64) -> Vec<TrainConfig> {
        let mut precisions: Vec<Precision> = self
            .bits
            .iter()
            .map(|&b_w| Precision::Quantized {
                quant: QuantConfig { b_e: self.b_e, b_m: self.b_m, rng_seed: self.rounding_seed, ..QuantConfig::new(b_w) },
                lr: self.lr,
            })
            .collect();
        if self.full_precision {
            precisions.push(Precision::Full { lr: self.lr_full });
        }
        precisions
            .into_iter()
            .map(|precision| TrainConfig {
                layers: self.layers.clone(),
                steps: self.steps,
                epochs: self.epochs,
                lif: self.lif,
                task: self.task.clone(),
                tau_vr: self.tau_vr,
                precision,
                seed,
                w_word: self.w_word,
            })
            .collect()
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Parses config text. `origin` labels diagnostics.
pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ConfigError::Parse { path: origin.to_string(), line, column, message: e.message().to_string() }
    })
}

/// Config as read from disk, with its raw bytes for hashing.
pub struct LoadedConfig {
    pub path: PathBuf,
    pub raw: Vec<u8>,
    pub config: ExperimentConfig,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let origin = path.display().to_string();
    let raw = std::fs::read(path).map_err(|source| ConfigError::Io { path: origin.clone(), source })?;
    let text = String::from_utf8(raw.clone())
        .map_err(|_| ConfigError::Invalid { path: origin.clone(), message: "not valid UTF-8".into() })?;
    let config = parse_config(&text, &origin)?;
    Ok(LoadedConfig { path: path.to_path_buf(), raw, config })
}

impl ExperimentConfig {
    /// Checks the section used by `kind`.
    pub fn validate(&self, kind: ExperimentKind) -> Result<(), String> {
        if let Some(k) = self.experiment {
            if k != kind {
                return Err(format!("config is for `{}`, not `{}`", k.name(), kind.name()));
            }
        }
        let nonempty = |name: &str, len: usize| if len == 0 { Err(format!("`{name}` must not be empty")) } else { Ok(()) };
        match kind {
            ExperimentKind::FcSweep => {
                let s = &self.fc_sweep;
                nonempty("fc_sweep.bits", s.bits.len())?;
                nonempty("fc_sweep.schemes", s.schemes.len())?;
                if s.n_pre == 0 || s.n_post == 0 {
                    return Err("fc_sweep layer dimensions must be positive".into());
                }
                if !(s.density > 0.0 && s.density <= 1.0) {
                    return Err(format!("fc_sweep.density {} outside (0, 1]", s.density));
                }
            }
            ExperimentKind::ConvSweep => {
                let s = &self.conv_sweep;
                nonempty("conv_sweep.bits", s.bits.len())?;
                nonempty("conv_sweep.schemes", s.schemes.len())?;
                s.geometry.validate().map_err(|e| format!("conv_sweep.geometry: {e}"))?;
                if s.schemes.contains(&Scheme::Bitmap) {
                    return Err("conv_sweep.schemes: pb-bmp is not modeled for convolution layers".into());
                }
            }
            ExperimentKind::DensityLeakGrid => {
                self.density_leak_grid.validate().map_err(|e| format!("density_leak_grid: {e}"))?;
            }
            ExperimentKind::TrainFrontier => {
                let s = &self.train_frontier;
                nonempty("train_frontier.schemes", s.schemes.len())?;
                if s.bits.is_empty() && !s.full_precision {
                    return Err("train_frontier needs `bits` or `full_precision = true`".into());
                }
                if s.schemes.contains(&Scheme::Functional) {
                    return Err("train_frontier.schemes: the functional encoding applies to convolution layers only".into());
                }
                for cell in s.cells(self.seed) {
                    cell.validate().map_err(|e| format!("train_frontier: {e}"))?;
                }
            }
        }
        let bits = match kind {
            ExperimentKind::FcSweep => &self.fc_sweep.bits,
            ExperimentKind::ConvSweep => &self.conv_sweep.bits,
            _ => return Ok(()),
        };
        if let Some(b) = bits.iter().find(|&&b| !(2..=synmem_core::quant::MAX_BITS).contains(&b)) {
            return Err(format!("weight width {b} outside 2..={}", synmem_core::quant::MAX_BITS));
        }
        Ok(())
    }

    /// Reads the base cost model named by the config, resolving relative paths against `dir`.
    pub fn base_model(&self, dir: &Path) -> Result<CostModel, String> {
        let Some(p) = &self.cost_model.path else { return Ok(CostModel::factory()) };
        let p = if p.is_absolute() { p.clone() } else { dir.join(p) };
        let text = std::fs::read_to_string(&p).map_err(|e| format!("cost model {}: {e}", p.display()))?;
        let model: CostModel = toml::from_str(&text).map_err(|e| {
            let (line, col) = e.span().map_or((0, 0), |s| line_col(&text, s.start));
            format!("{}:{line}:{col}: {}", p.display(), e.message())
        })?;
        model.validate().map_err(|e| format!("cost model {}: {e}", p.display()))?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let c = parse_config("", "x").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        for k in [ExperimentKind::FcSweep, ExperimentKind::ConvSweep, ExperimentKind::DensityLeakGrid, ExperimentKind::TrainFrontier] {
            c.validate(k).unwrap();
        }
    }

    #[test]
    fn diagnostics_carry_line_and_column() {
        let err = parse_config("seed = 1\n\n[fc_sweep]\nbitz = [2]\n", "cfg.toml").unwrap_err();
        match err {
            ConfigError::Parse { line, column, ref message, .. } => {
                assert_eq!((line, column), (4, 1));
                assert!(message.contains("bitz"), "{message}");
            }
            other => panic!("{other}"),
        }
        assert!(err.to_string().starts_with("cfg.toml:4:1:"));
    }

    #[test]
    fn schemes_use_their_labels() {
        let c = parse_config("[fc_sweep]\nschemes = [\"pb-bmp\", \"cb\"]\nbits = [8]\n", "x").unwrap();
        assert_eq!(c.fc_sweep.schemes, vec![Scheme::Bitmap, Scheme::Crossbar]);
        assert!(parse_config("[fc_sweep]\nschemes = [\"bmp2\"]\n", "x").is_err());
    }

    #[test]
    fn section_checks() {
        let c = parse_config("experiment = \"fc-sweep\"\n[fc_sweep]\nbits = []\n", "x").unwrap();
        assert!(c.validate(ExperimentKind::ConvSweep).unwrap_err().contains("not `conv-sweep`"));
        assert!(c.validate(ExperimentKind::FcSweep).unwrap_err().contains("empty"));
        let c = parse_config("[conv_sweep]\nschemes = [\"pb-bmp\"]\n", "x").unwrap();
        assert!(c.validate(ExperimentKind::ConvSweep).is_err());
        let c = parse_config("[train_frontier]\nbits = [1]\n", "x").unwrap();
        assert!(c.validate(ExperimentKind::TrainFrontier).is_err());
    }

    #[test]
    fn frontier_cells_follow_bits_then_full_precision() {
        let mut f = Frontier { bits: vec![2, 5], full_precision: true, ..Frontier::default() };
        let cells = f.cells(9);
        assert_eq!(cells.len(), 3);
        assert_eq!(cells[1].precision.weight_bits(), Some(5));
        assert_eq!(cells[2].precision, Precision::Full { lr: 1e-3 });
        assert!(cells.iter().all(|c| c.seed == 9));
        f.full_scale();
        assert_eq!((f.layers.as_slice(), f.steps, f.epochs), (&[700, 400, 250][..], 250, 10_000));
    }
}
