//! The four experiments. Each returns in-memory tables; writing them is the caller's job.
//!
//! Cells run on the rayon pool and are collected in configuration order, so output does not
//! depend on scheduling. Every energy figure comes from `synmem_core::energy::pass_energy`;
//! debug builds check that its call counter advanced at least as far as the tables require.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use synmem_core::energy::{
    audit_count, calibrate_defaults, density_energies, grid_point, layer_sweep, leak_reference, pass_energy,
    CostModel, EnergyError, Layer, PassEnergyReport,
};
use synmem_core::rng::derive_seed;
use synmem_core::snn::{train, EpochTraces, SnnError, TrainConfig};
use synmem_core::store::Scheme;
use synmem_core::trace::BankKind;
use thiserror::Error;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::table::{float, Table, TableKind};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("{0}")]
    Energy(#[from] EnergyError),
    #[error("training failed: {0}")]
    Train(SnnError),
    #[error("audit: {0}")]
    Audit(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Calibration(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides the config seed.
    pub seed: Option<u64>,
    /// Full-size frontier network; the sweeps ignore it.
    pub full_scale: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelInfo {
    pub model: CostModel,
    /// Ratios reached by calibration, absent when the base constants are used as is.
    pub calibration: Option<CalibratedRatios>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CalibratedRatios {
    pub conv_forward_ratio: f64,
    pub conv_backward_ratio: f64,
}

pub struct RunOutput {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub model: ModelInfo,
    /// Effective configuration after defaults, seed override and scaling.
    pub config: ExperimentConfig,
    /// `(relative file name, table)` in write order.
    pub tables: Vec<(String, Table)>,
    pub cells: usize,
    pub diverged: usize,
}

impl RunOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn all_diverged(&self) -> bool {
        self.cells > 0 && self.diverged == self.cells
    }
}

/// Base constants from the config, optionally fitted to the calibration anchors.
pub fn resolve_model(cfg: &ExperimentConfig, dir: &Path) -> Result<ModelInfo, CliError> {
    let base = cfg.base_model(dir).map_err(CliError::Config)?;
    if !cfg.cost_model.calibrate {
        return Ok(ModelInfo { model: base, calibration: None });
    }
    let r = calibrate_defaults(&base, &cfg.cost_model.anchors).map_err(|e| CliError::Calibration(e.to_string()))?;
    let ratios = CalibratedRatios { conv_forward_ratio: r.forward_ratio, conv_backward_ratio: r.backward_ratio };
    Ok(ModelInfo { model: r.model, calibration: Some(ratios) })
}

/// Runs `kind` with config `cfg`; `dir` anchors relative paths inside the config.
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig, dir: &Path, opts: &RunOptions) -> Result<RunOutput, CliError> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if opts.full_scale && kind == ExperimentKind::TrainFrontier {
        cfg.train_frontier.full_scale();
    }
    cfg.validate(kind).map_err(CliError::Config)?;
    let model = resolve_model(&cfg, dir)?;

    let before = audit_count();
    let (tables, priced, cells, diverged) = match kind {
        ExperimentKind::FcSweep => {
            let s = &cfg.fc_sweep;
            let layer = Layer::Fc { n_pre: s.n_pre, n_post: s.n_post, density: s.density };
            let t = sweep(TableKind::FcSweep, &layer, &s.bits, &s.schemes, &model.model, cfg.seed)?;
            let n = t.rows.len();
            (vec![("fc-sweep.csv".to_string(), t)], 2 * n as u64, n, 0)
        }
        ExperimentKind::ConvSweep => {
            let s = &cfg.conv_sweep;
            let t = sweep(TableKind::ConvSweep, &Layer::Conv(s.geometry), &s.bits, &s.schemes, &model.model, cfg.seed)?;
            let n = t.rows.len();
            (vec![("conv-sweep.csv".to_string(), t)], 2 * n as u64, n, 0)
        }
        ExperimentKind::DensityLeakGrid => {
            let spec = &cfg.density_leak_grid;
            let t = grid(&cfg, &model.model)?;
            // Four schemes, forward and backward, per density plus the reference crossbar.
            let priced = 8 * spec.densities.len() as u64 + 2;
            let n = t.rows.len();
            (vec![("density-leak-grid.csv".to_string(), t)], priced, n, 0)
        }
        ExperimentKind::TrainFrontier => frontier(&cfg, &model.model)?,
    };
    if cfg!(debug_assertions) {
        let calls = audit_count() - before;
        if calls < priced {
            return Err(CliError::Audit(format!("{priced} energy evaluations expected, {calls} recorded")));
        }
    }
    Ok(RunOutput { kind, seed: cfg.seed, model, config: cfg, tables, cells, diverged })
}

fn sweep(kind: TableKind, layer: &Layer, bits: &[u32], schemes: &[Scheme], model: &CostModel, seed: u64) -> Result<Table, CliError> {
    let cells: Vec<(u32, Scheme)> = bits.iter().flat_map(|&b| schemes.iter().map(move |&s| (b, s))).collect();
    let rows = cells
        .par_iter()
        .map(|&(b, s)| layer_sweep(layer, &[b], &[s], model, seed).map(|mut r| r.remove(0)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(kind);
    for r in rows {
        let (f, b) = (&r.forward.trace, &r.backward.trace);
        t.push(vec![
            r.scheme.label().to_string(),
            r.b_w.to_string(),
            float(r.forward.total_pj()),
            float(r.backward.total_pj()),
            float(r.forward.leakage_pj),
            float(r.backward.leakage_pj),
            total_reads(f).to_string(),
            f.reads_of(BankKind::Weight).to_string(),
            f.logic_evals().to_string(),
            total_reads(b).to_string(),
            b.reads_of(BankKind::Weight).to_string(),
            b.banks().map(|(_, c)| c.writes).sum::<u64>().to_string(),
            b.logic_evals().to_string(),
        ]);
    }
    Ok(t)
}

fn total_reads(t: &synmem_core::trace::AccessTrace) -> u64 {
    t.banks().map(|(_, c)| c.reads).sum()
}

fn grid(cfg: &ExperimentConfig, model: &CostModel) -> Result<Table, CliError> {
    let spec = &cfg.density_leak_grid;
    let reference = leak_reference(spec.n_pre, spec.n_post, spec.b_w, model)?;
    // Same per-density seeds as the serial sweep in synmem-core.
    let energies = spec
        .densities
        .par_iter()
        .enumerate()
        .map(|(k, &d)| density_energies(spec.n_pre, spec.n_post, spec.b_w, d, model, derive_seed(cfg.seed, k as u64)))
        .collect::<Result<Vec<_>, EnergyError>>()?;
    let mut points = Vec::with_capacity(spec.densities.len() * spec.leak_fractions.len());
    for (&d, e) in spec.densities.iter().zip(&energies) {
        for &f in &spec.leak_fractions {
            points.push(grid_point(d, f, e, reference)?);
        }
    }
    let mut t = Table::new(TableKind::DensityLeakGrid);
    for p in points {
        let total = |s: Scheme| p.totals.iter().find(|t| t.0 == s).map_or(f64::NAN, |t| t.1);
        t.push(vec![
            float(p.density),
            float(p.leak_fraction),
            float(p.leak_scale),
            float(total(Scheme::Crossbar)),
            float(total(Scheme::Csr)),
            float(total(Scheme::Bitmap)),
            float(total(Scheme::Functional)),
            p.winner.label().to_string(),
            p.order.to_string(),
        ]);
    }
    Ok(t)
}

fn precision_label(cfg: &TrainConfig) -> (String, u32) {
    match cfg.precision.weight_bits() {
        Some(b) => (format!("b{b}"), b),
        None => ("fp32".to_string(), 32),
    }
}

/// Energy of one epoch's traces: `(forward, backward)` summed over layers.
fn epoch_energy(e: &EpochTraces, model: &CostModel) -> Result<(f64, f64), EnergyError> {
    let price = |ts: &[synmem_core::trace::AccessTrace]| -> Result<f64, EnergyError> {
        ts.iter().map(|t| pass_energy(t, model).map(|r: PassEnergyReport| r.total_pj())).sum()
    };
    Ok((price(&e.forward)?, price(&e.backward)?))
}

type Tables = (Vec<(String, Table)>, u64, usize, usize);

fn frontier(cfg: &ExperimentConfig, model: &CostModel) -> Result<Tables, CliError> {
    let f = &cfg.train_frontier;
    let cells = f.cells(cfg.seed);
    let results: Vec<Result<_, CliError>> = cells
        .par_iter()
        .map(|c| match train::<f64>(c, &f.schemes) {
            Ok(r) => {
                let mut per_scheme = Vec::new();
                for (scheme, epochs) in &r.traces {
                    let energies = epochs.iter().map(|e| epoch_energy(e, model)).collect::<Result<Vec<_>, _>>()?;
                    per_scheme.push((*scheme, energies));
                }
                Ok(Some((r, per_scheme)))
            }
            Err(SnnError::Diverged { epoch }) => {
                eprintln!("warning: {} diverged at epoch {epoch}", precision_label(c).0);
                Ok(None)
            }
            Err(e) => Err(CliError::Train(e)),
        })
        .collect();

    let mut summary = Table::new(TableKind::TrainFrontier);
    let mut tables = Vec::new();
    let (mut priced, mut diverged) = (0, 0);
    for (c, res) in cells.iter().zip(results) {
        let (label, b_w) = precision_label(c);
        let Some((r, per_scheme)) = res? else {
            diverged += 1;
            for s in &f.schemes {
                let nan = float(f64::NAN);
                let mut row = vec![label.clone(), b_w.to_string(), s.label().to_string()];
                row.extend(std::iter::repeat_n(nan, 8));
                row.push("diverged".to_string());
                summary.push(row);
            }
            continue;
        };
        let mut curve = Table::new(TableKind::LearningCurve);
        for (scheme, energies) in &per_scheme {
            priced += 2 * energies.len() as u64 * c.layers.len().saturating_sub(1) as u64;
            let (fwd, bwd) = energies.iter().fold((0.0, 0.0), |a, e| (a.0 + e.0, a.1 + e.1));
            let last = r.curve.last().expect("curve has the initial point");
            summary.push(vec![
                label.clone(),
                b_w.to_string(),
                scheme.label().to_string(),
                float(r.initial_vr()),
                float(r.final_vr()),
                float(r.best_vr()),
                float(r.mean_sparsity()),
                float(last.sparsity),
                float(fwd),
                float(bwd),
                float(fwd + bwd),
                "ok".to_string(),
            ]);
            for rec in &r.curve {
                let (ef, eb) = energies.get(rec.epoch).copied().unwrap_or((0.0, 0.0));
                curve.push(vec![
                    label.clone(),
                    scheme.label().to_string(),
                    rec.epoch.to_string(),
                    float(rec.vr),
                    float(ef),
                    float(eb),
                    float(rec.sparsity),
                ]);
            }
        }
        tables.push((format!("curves/curve-{label}.csv"), curve));
    }
    tables.insert(0, ("train-frontier.csv".to_string(), summary));
    Ok((tables, priced, cells.len(), diverged))
}
