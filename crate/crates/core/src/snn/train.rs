//! Training loop for the pattern-retention task.
//!
//! Each epoch replays the same input, scores the output against the target with the van
//! Rossum distance and applies one gradient step. Memory traffic is recorded per scheme:
//! `steps` forward passes through every layer, `steps` reverse passes through every layer
//! except the first (whose input gradient is never needed) and one write per synapse.
//! Stores are rebuilt each epoch from the nonzero pattern of the weights.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::SynapseMatrix;
use crate::quant::{eta, quantize_error, quantize_weight, sigma, stochastic_round, QuantConfig};
use crate::rng::{derive_seed, seeded, SeededRng};
use crate::store::{BitmapStore, CrossbarStore, CsrStore, FunctionalStore, Scheme, SynapseStore, DEFAULT_BITMAP_WORD};
use crate::trace::AccessTrace;
use crate::Scalar;

use super::{
    bptt_gradients, clean_pattern, generate_poisson_input, generate_target, input_rates, van_rossum_grad, DenseLayer,
    LifParams, Network, SnnError, SpikeMode, SpikeRaster, TaskConfig,
};

/// Word width of the stores that model a full-precision network.
const FULL_PRECISION_BITS: u32 = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum Precision {
    /// Floating point weights, plain gradient descent with step `lr`.
    Full { lr: f64 },
    /// Weights on the `b_w` grid. Gradients are normalized and quantized to `b_e` bits,
    /// scaled by `lr` (in weight units) and stochastically rounded onto the grid.
    Quantized {
        #[serde(flatten)]
        quant: QuantConfig,
        lr: f64,
    },
}

impl Precision {
    pub fn weight_bits(&self) -> Option<u32> {
        match self {
            Precision::Full { .. } => None,
            Precision::Quantized { quant, .. } => Some(quant.b_w),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Neuron counts from input to output, e.g. `[200, 100, 50]`.
    pub layers: Vec<usize>,
    pub steps: usize,
    pub epochs: usize,
    #[serde(default)]
    pub lif: LifParams,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default = "default_tau")]
    pub tau_vr: f64,
    pub precision: Precision,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_word")]
    pub w_word: u32,
}

fn default_tau() -> f64 {
    10.0
}

fn default_word() -> u32 {
    DEFAULT_BITMAP_WORD
}

impl TrainConfig {
    /// 200-100-50 network over 100 steps for 2000 epochs at full precision.
    pub fn desk_scale(precision: Precision) -> Self {
        Self {
            layers: vec![200, 100, 50],
            steps: 100,
            epochs: 2000,
            lif: LifParams::default(),
            task: TaskConfig::default(),
            tau_vr: default_tau(),
            precision,
            seed: 0,
            w_word: DEFAULT_BITMAP_WORD,
        }
    }

    /// 700-400-250 network over 250 steps for 10000 epochs.
    pub fn full_scale(precision: Precision) -> Self {
        Self { layers: vec![700, 400, 250], steps: 250, epochs: 10_000, ..Self::desk_scale(precision) }
    }

    pub fn validate(&self) -> Result<(), SnnError> {
        if self.layers.len() < 2 || self.layers.contains(&0) {
            return Err(SnnError::Topology);
        }
        if self.steps == 0 {
            return Err(SnnError::Param { name: "steps", value: 0.0, reason: "must be at least 1" });
        }
        if !(self.tau_vr > 0.0 && self.tau_vr.is_finite()) {
            return Err(SnnError::Param { name: "tau_vr", value: self.tau_vr, reason: "must be positive" });
        }
        self.lif.validate()?;
        self.task.validate()?;
        let lr = match &self.precision {
            Precision::Full { lr } => *lr,
            Precision::Quantized { quant, lr } => {
                quant.validate()?;
                *lr
            }
        };
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(SnnError::Param { name: "lr", value: lr, reason: "must be finite and nonnegative" });
        }
        if !(1..=64).contains(&self.w_word) {
            return Err(SnnError::Param { name: "w_word", value: self.w_word as f64, reason: "must lie in 1..=64" });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    /// Number of updates applied before this evaluation.
    pub epoch: usize,
    pub vr: f64,
    /// Fraction of exactly zero weights over all layers.
    pub sparsity: f64,
    pub layer_nnz: Vec<usize>,
}

/// Traces of one training epoch, one entry per layer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochTraces {
    pub forward: Vec<AccessTrace>,
    pub backward: Vec<AccessTrace>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult<T> {
    /// `epochs + 1` evaluations, the first before any update.
    pub curve: Vec<EpochRecord>,
    /// Per-scheme traces of every epoch, in the order the schemes were requested.
    pub traces: Vec<(Scheme, Vec<EpochTraces>)>,
    pub network: Network<T>,
}

impl<T> TrainResult<T> {
    pub fn initial_vr(&self) -> f64 {
        self.curve[0].vr
    }

    pub fn final_vr(&self) -> f64 {
        self.curve.last().expect("curve has the initial point").vr
    }

    pub fn best_vr(&self) -> f64 {
        self.curve.iter().map(|r| r.vr).fold(f64::INFINITY, f64::min)
    }

    pub fn mean_sparsity(&self) -> f64 {
        self.curve.iter().map(|r| r.sparsity).sum::<f64>() / self.curve.len() as f64
    }

    /// Accumulated forward plus backward trace of each layer over the whole run.
    pub fn layer_totals(&self, scheme: Scheme) -> Option<Vec<AccessTrace>> {
        let (_, epochs) = self.traces.iter().find(|(s, _)| *s == scheme)?;
        let layers = self.network.layers.len();
        let mut out = vec![AccessTrace::new(); layers];
        for e in epochs {
            for l in 0..layers {
                out[l] += &e.forward[l];
                out[l] += &e.backward[l];
            }
        }
        Some(out)
    }
}

fn init_network<T: Scalar>(cfg: &TrainConfig, rng: &mut SeededRng) -> Result<Network<T>, SnnError> {
    let mut layers = Vec::new();
    for pair in cfg.layers.windows(2) {
        let (n_pre, n_post) = (pair[0], pair[1]);
        let bound = (3.0 / n_pre as f64).sqrt();
        let raw: Vec<f64> = (0..n_pre * n_post).map(|_| rng.random_range(-bound..bound)).collect();
        let layer = match &cfg.precision {
            Precision::Full { .. } => DenseLayer::new(n_pre, n_post, raw.iter().map(|&w| T::lit(w)).collect(), T::one())?,
            Precision::Quantized { quant, .. } => {
                let e: f64 = eta(quant.b_w, n_pre);
                let q = raw.iter().map(|&w| quantize_weight(T::lit(w * e), quant.b_w)).collect();
                DenseLayer::new(n_pre, n_post, q, T::lit(1.0 / e))?
            }
        };
        layers.push(layer);
    }
    Network::new(layers)
}

/// Forward, reverse and update traces of one layer's store. They depend on the weights
/// only through the nonzero count, so they are cached on it.
type LayerTraces = (AccessTrace, AccessTrace, AccessTrace);

fn layer_traces<T: Scalar>(layer: &DenseLayer<T>, scheme: Scheme, b_w: u32, w_word: u32) -> Result<LayerTraces, SnnError> {
    let m = SynapseMatrix::from_nonzero(layer.n_pre, layer.n_post, layer.weights.clone())
        .map_err(|_| SnnError::Dimension { what: "weights", expected: layer.n_pre * layer.n_post, got: layer.weights.len() })?;
    let store: Box<dyn SynapseStore<T>> = match scheme {
        Scheme::Crossbar => Box::new(CrossbarStore::build(&m, b_w)?),
        Scheme::Csr => Box::new(CsrStore::build(&m, b_w)?),
        Scheme::Bitmap => Box::new(BitmapStore::build_with_word(&m, b_w, w_word)?),
        Scheme::Functional => Box::new(FunctionalStore::fully_connected(m.n_pre(), m.n_post(), m.weights(), b_w)?),
    };
    Ok((store.forward_pass_trace(), store.reverse_pass_trace(), store.update_trace()))
}

fn record<T: Scalar>(epoch: usize, vr: f64, net: &Network<T>) -> EpochRecord {
    let layer_nnz: Vec<usize> = net.layers.iter().map(|l| l.nonzero()).collect();
    let total: usize = net.layers.iter().map(|l| l.weights.len()).sum();
    let zeros = total - layer_nnz.iter().sum::<usize>();
    EpochRecord { epoch, vr, sparsity: zeros as f64 / total as f64, layer_nnz }
}

/// Trains a network and records the memory traces each requested scheme would incur.
pub fn train<T: Scalar>(cfg: &TrainConfig, schemes: &[Scheme]) -> Result<TrainResult<T>, SnnError> {
    cfg.validate()?;
    let (n_in, n_out) = (cfg.layers[0], *cfg.layers.last().expect("validated"));
    let rates = input_rates(n_in, cfg.task.rate_min, cfg.task.rate_max, derive_seed(cfg.seed, 0));
    let input: Vec<T> = generate_poisson_input(&rates, cfg.steps, derive_seed(cfg.seed, 1))?.to_values();
    let clean = clean_pattern(n_out, cfg.steps, derive_seed(cfg.seed, 2));
    let target_raster: SpikeRaster = generate_target(&clean, cfg.task.keep_probability, derive_seed(cfg.seed, 3))?;
    let target: Vec<T> = target_raster.to_values();
    let mut net: Network<T> = init_network(cfg, &mut seeded(derive_seed(cfg.seed, 4)))?;

    let (membrane_bits, store_bits, mut rounding) = match &cfg.precision {
        Precision::Full { .. } => (None, FULL_PRECISION_BITS, None),
        Precision::Quantized { quant, .. } => {
            (Some(quant.b_m), quant.b_w, Some(seeded(derive_seed(quant.rng_seed, cfg.seed))))
        }
    };

    let mut cache: HashMap<(usize, Scheme, usize), LayerTraces> = HashMap::new();
    let mut traces: Vec<(Scheme, Vec<EpochTraces>)> = schemes.iter().map(|&s| (s, Vec::new())).collect();
    let mut curve = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let ep = net.run(&input, cfg.steps, &cfg.lif, SpikeMode::Hard, membrane_bits)?;
        let (vr, grad_out) = van_rossum_grad(ep.output(), &target, n_out, cfg.steps, cfg.tau_vr)?;
        let vr = vr.as_f64();
        // Hard spikes keep the distance finite even when weights blow up, so check both.
        if !vr.is_finite() || net.layers.iter().any(|l| l.weights.iter().any(|w| !w.is_finite())) {
            return Err(SnnError::Diverged { epoch });
        }
        curve.push(record(epoch, vr, &net));
        if epoch == cfg.epochs {
            break;
        }

        for (scheme, per_epoch) in &mut traces {
            let mut forward = Vec::with_capacity(net.layers.len());
            let mut backward = Vec::with_capacity(net.layers.len());
            for (l, layer) in net.layers.iter().enumerate() {
                let key = (l, *scheme, layer.nonzero());
                let (fwd, rev, upd) = match cache.entry(key) {
                    Entry::Occupied(e) => &*e.into_mut(),
                    Entry::Vacant(e) => &*e.insert(layer_traces(layer, *scheme, store_bits, cfg.w_word)?),
                };
                forward.push(fwd.scaled(cfg.steps as u64));
                let mut b = if l > 0 { rev.scaled(cfg.steps as u64) } else { AccessTrace::with_banks(upd.banks().map(|(b, _)| *b)) };
                b += upd;
                backward.push(b);
            }
            per_epoch.push(EpochTraces { forward, backward });
        }

        let grads = bptt_gradients(&net, &ep, &grad_out, &cfg.lif)?;
        match &cfg.precision {
            Precision::Full { lr } => {
                let lr = T::lit(*lr);
                for (layer, g) in net.layers.iter_mut().zip(&grads) {
                    for (w, &d) in layer.weights.iter_mut().zip(g) {
                        *w = *w - lr * d;
                    }
                }
            }
            Precision::Quantized { quant, lr } => {
                let rng = rounding.as_mut().expect("quantized runs own a rounding generator");
                let step = sigma::<T>(quant.b_w);
                let lr = T::lit(*lr);
                for (layer, g) in net.layers.iter_mut().zip(&grads) {
                    let normalized = quantize_error(g, quant.b_e)?;
                    for (w, &d) in layer.weights.iter_mut().zip(&normalized) {
                        let delta = stochastic_round(lr * d, step, rng);
                        *w = quantize_weight(*w - delta, quant.b_w);
                    }
                }
            }
        }
    }
    Ok(TrainResult { curve, traces, network: net })
}
