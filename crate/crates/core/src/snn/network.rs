//! Dense multi-layer network simulation and backpropagation through time.

use crate::quant::quantize_membrane;
use crate::Scalar;

use super::{spike, surrogate_derivative, Dynamics, LifParams, SnnError, SpikeMode};

/// Fully connected weights, `n_pre x n_post` row-major (presynaptic index first).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T> {
    pub n_pre: usize,
    pub n_post: usize,
    pub weights: Vec<T>,
    /// Multiplies the stored weights at use.
    pub scale: T,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(n_pre: usize, n_post: usize, weights: Vec<T>, scale: T) -> Result<Self, SnnError> {
        if weights.len() != n_pre * n_post {
            return Err(SnnError::Dimension { what: "weights", expected: n_pre * n_post, got: weights.len() });
        }
        Ok(Self { n_pre, n_post, weights, scale })
    }

    pub fn nonzero(&self) -> usize {
        self.weights.iter().filter(|w| **w != T::zero()).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub layers: Vec<DenseLayer<T>>,
}

/// Per-layer record of one episode, time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerHistory<T> {
    /// Presynaptic drive at each step: `P` or the previous input spikes.
    pub drive: Vec<T>,
    pub u: Vec<T>,
    pub s: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode<T> {
    pub steps: usize,
    pub layers: Vec<LayerHistory<T>>,
}

impl<T: Scalar> Episode<T> {
    pub fn output(&self) -> &[T] {
        &self.layers.last().expect("network has layers").s
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<DenseLayer<T>>) -> Result<Self, SnnError> {
        if layers.is_empty() {
            return Err(SnnError::Topology);
        }
        for pair in layers.windows(2) {
            if pair[0].n_post != pair[1].n_pre {
                return Err(SnnError::Dimension { what: "layer input", expected: pair[0].n_post, got: pair[1].n_pre });
            }
        }
        Ok(Self { layers })
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_pre
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().expect("nonempty").n_post
    }

    /// Simulates `steps` steps on a time-major input and records everything BPTT needs.
    pub fn run(
        &self,
        input: &[T],
        steps: usize,
        params: &LifParams,
        mode: SpikeMode,
        membrane_bits: Option<u32>,
    ) -> Result<Episode<T>, SnnError> {
        let n_in = self.n_in();
        if input.len() != n_in * steps {
            return Err(SnnError::Dimension { what: "input raster", expected: n_in * steps, got: input.len() });
        }
        let (alpha, beta, gamma, delta) =
            (T::lit(params.alpha), T::lit(params.beta), T::lit(params.gamma), T::lit(params.delta));
        struct State<T> {
            q: Vec<T>,
            p: Vec<T>,
            r: Vec<T>,
            prev: Vec<T>,
        }
        let mut states: Vec<State<T>> = self
            .layers
            .iter()
            .map(|l| State {
                q: vec![T::zero(); l.n_pre],
                p: vec![T::zero(); l.n_pre],
                r: vec![T::zero(); l.n_post],
                prev: vec![T::zero(); l.n_pre],
            })
            .collect();
        let mut hist: Vec<LayerHistory<T>> = self
            .layers
            .iter()
            .map(|l| LayerHistory {
                drive: Vec::with_capacity(steps * l.n_pre),
                u: Vec::with_capacity(steps * l.n_post),
                s: Vec::with_capacity(steps * l.n_post),
            })
            .collect();
        let mut acc = Vec::new();
        let mut s_in: Vec<T> = Vec::new();
        for n in 0..steps {
            s_in.clear();
            s_in.extend_from_slice(&input[n * n_in..(n + 1) * n_in]);
            for ((layer, st), h) in self.layers.iter().zip(&mut states).zip(&mut hist) {
                let drive = match params.dynamics {
                    Dynamics::Lif => &st.p,
                    Dynamics::Binary => &st.prev,
                };
                h.drive.extend_from_slice(drive);
                acc.clear();
                acc.resize(layer.n_post, T::zero());
                for (pre, &x) in drive.iter().enumerate() {
                    if x == T::zero() {
                        continue;
                    }
                    let row = &layer.weights[pre * layer.n_post..(pre + 1) * layer.n_post];
                    for (a, &w) in acc.iter_mut().zip(row) {
                        *a = *a + w * x;
                    }
                }
                let out_start = h.s.len();
                for i in 0..layer.n_post {
                    let mut u = layer.scale * acc[i];
                    if params.dynamics == Dynamics::Lif {
                        u = u - delta * st.r[i];
                    }
                    if let Some(bits) = membrane_bits {
                        u = quantize_membrane(u, bits);
                    }
                    h.u.push(u);
                    h.s.push(spike(u, params, mode));
                }
                let out = &h.s[out_start..];
                match params.dynamics {
                    Dynamics::Lif => {
                        for j in 0..layer.n_pre {
                            let q = st.q[j];
                            st.q[j] = alpha * q + s_in[j];
                            st.p[j] = beta * st.p[j] + q;
                        }
                        for (r, &s) in st.r.iter_mut().zip(out) {
                            *r = gamma * *r + s;
                        }
                    }
                    Dynamics::Binary => st.prev.copy_from_slice(&s_in),
                }
                s_in.clear();
                s_in.extend_from_slice(out);
            }
        }
        Ok(Episode { steps, layers: hist })
    }
}

/// Gradients of the loss with respect to every stored weight, given `grad_out`, the loss
/// gradient with respect to the output spikes (time-major). The spike step is
/// differentiated through [`surrogate_derivative`]; membrane quantization is treated as
/// the identity.
pub fn bptt_gradients<T: Scalar>(
    net: &Network<T>,
    episode: &Episode<T>,
    grad_out: &[T],
    params: &LifParams,
) -> Result<Vec<Vec<T>>, SnnError> {
    let steps = episode.steps;
    if episode.layers.len() != net.layers.len() {
        return Err(SnnError::History("layer count differs from the network"));
    }
    for (l, h) in net.layers.iter().zip(&episode.layers) {
        if h.drive.len() != steps * l.n_pre || h.u.len() != steps * l.n_post || h.s.len() != steps * l.n_post {
            return Err(SnnError::History("recorded steps differ from the episode length"));
        }
    }
    if grad_out.len() != steps * net.n_out() {
        return Err(SnnError::Dimension { what: "output gradient", expected: steps * net.n_out(), got: grad_out.len() });
    }
    let (alpha, beta, gamma, delta) =
        (T::lit(params.alpha), T::lit(params.beta), T::lit(params.gamma), T::lit(params.delta));
    let lif = params.dynamics == Dynamics::Lif;

    let mut grads: Vec<Vec<T>> = net.layers.iter().map(|l| vec![T::zero(); l.weights.len()]).collect();
    let mut g_s = grad_out.to_vec();
    for (idx, layer) in net.layers.iter().enumerate().rev() {
        let h = &episode.layers[idx];
        let (n_pre, n_post) = (layer.n_pre, layer.n_post);
        let need_input = idx > 0;
        let mut d_in = if need_input { vec![T::zero(); steps * n_pre] } else { Vec::new() };
        let mut lam_r = vec![T::zero(); n_post];
        let mut lam_p = vec![T::zero(); n_pre];
        let mut lam_q = vec![T::zero(); n_pre];
        let mut e = vec![T::zero(); n_post];
        let mut g_x = vec![T::zero(); n_pre];
        let dw = &mut grads[idx];
        for n in (0..steps).rev() {
            for i in 0..n_post {
                let ds = g_s[n * n_post + i] + if lif { lam_r[i] } else { T::zero() };
                e[i] = surrogate_derivative(h.u[n * n_post + i], params) * ds;
                if lif {
                    lam_r[i] = gamma * lam_r[i] - delta * e[i];
                }
            }
            let drive = &h.drive[n * n_pre..(n + 1) * n_pre];
            for pre in 0..n_pre {
                let row = pre * n_post..(pre + 1) * n_post;
                let x = layer.scale * drive[pre];
                if x != T::zero() {
                    for (g, &ei) in dw[row.clone()].iter_mut().zip(&e) {
                        *g = *g + x * ei;
                    }
                }
                if need_input {
                    let w = &layer.weights[row];
                    g_x[pre] = layer.scale * w.iter().zip(&e).map(|(&w, &ei)| w * ei).sum::<T>();
                }
            }
            if need_input {
                if lif {
                    for j in 0..n_pre {
                        d_in[n * n_pre + j] = lam_q[j];
                        lam_q[j] = lam_p[j] + alpha * lam_q[j];
                        lam_p[j] = g_x[j] + beta * lam_p[j];
                    }
                } else if n > 0 {
                    for j in 0..n_pre {
                        d_in[(n - 1) * n_pre + j] = g_x[j];
                    }
                }
            }
        }
        g_s = d_in;
    }
    Ok(grads)
}
