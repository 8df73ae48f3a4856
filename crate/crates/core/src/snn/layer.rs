//! Single-layer update that fetches weights from a synapse store.

use crate::quant::quantize_membrane;
use crate::store::SynapseStore;
use crate::trace::AccessTrace;
use crate::Scalar;

use super::{spike, Dynamics, LifParams, SnnError, SpikeMode};

#[derive(Clone, Debug, PartialEq)]
pub struct LifLayerState<T> {
    pub q: Vec<T>,
    pub p: Vec<T>,
    pub r: Vec<T>,
    pub u: Vec<T>,
    pub s: Vec<T>,
    /// Input spikes of the previous step, the drive of a binary network.
    pub prev_in: Vec<T>,
    /// Membrane potentials of every step so far, time-major.
    pub history: Vec<T>,
    /// Stored membrane precision; `None` keeps full precision.
    pub membrane_bits: Option<u32>,
}

impl<T: Scalar> LifLayerState<T> {
    pub fn new(n_pre: usize, n_post: usize, membrane_bits: Option<u32>) -> Self {
        Self {
            q: vec![T::zero(); n_pre],
            p: vec![T::zero(); n_pre],
            r: vec![T::zero(); n_post],
            u: vec![T::zero(); n_post],
            s: vec![T::zero(); n_post],
            prev_in: vec![T::zero(); n_pre],
            history: Vec::new(),
            membrane_bits,
        }
    }
}

/// Advances one layer by one step. Every presynaptic neuron is looked up in `store`
/// and the lookup traces are returned with the output spikes.
pub fn lif_step<T: Scalar>(
    state: &mut LifLayerState<T>,
    in_spikes: &[T],
    store: &dyn SynapseStore<T>,
    params: &LifParams,
    scale: T,
    mode: SpikeMode,
) -> Result<(Vec<T>, AccessTrace), SnnError> {
    let (n_pre, n_post) = (store.n_pre(), store.n_post());
    if in_spikes.len() != n_pre {
        return Err(SnnError::Dimension { what: "input spikes", expected: n_pre, got: in_spikes.len() });
    }
    if state.p.len() != n_pre || state.u.len() != n_post {
        return Err(SnnError::Dimension { what: "layer state", expected: n_pre, got: state.p.len() });
    }
    let drive = match params.dynamics {
        Dynamics::Lif => &state.p,
        Dynamics::Binary => &state.prev_in,
    };
    let mut acc = vec![T::zero(); n_post];
    let mut trace = store.empty_trace();
    for (pre, &x) in drive.iter().enumerate() {
        let (entries, t) = store.forward_lookup(pre)?;
        trace += &t;
        for (post, w) in entries {
            acc[post] = acc[post] + w * x;
        }
    }
    let delta = T::lit(params.delta);
    for i in 0..n_post {
        let mut u = scale * acc[i];
        if params.dynamics == Dynamics::Lif {
            u = u - delta * state.r[i];
        }
        if let Some(bits) = state.membrane_bits {
            u = quantize_membrane(u, bits);
        }
        state.u[i] = u;
        state.s[i] = spike(u, params, mode);
    }
    state.history.extend_from_slice(&state.u);
    match params.dynamics {
        Dynamics::Lif => {
            let (alpha, beta, gamma) = (T::lit(params.alpha), T::lit(params.beta), T::lit(params.gamma));
            for j in 0..n_pre {
                let q = state.q[j];
                state.q[j] = alpha * q + in_spikes[j];
                state.p[j] = beta * state.p[j] + q;
            }
            for i in 0..n_post {
                state.r[i] = gamma * state.r[i] + state.s[i];
            }
        }
        Dynamics::Binary => state.prev_in.copy_from_slice(in_spikes),
    }
    Ok((state.s.clone(), trace))
}
