//! Layer-level forward/backward sweeps and the density x leakage grid.
//!
//! A forward pass looks up every presynaptic neuron; a backward pass looks up every
//! postsynaptic neuron in reverse and writes every synapse once.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::SynapseMatrix;
use crate::rng::{derive_seed, seeded};
use crate::store::{
    crossbar_backward_pass, crossbar_forward_pass, BitmapStore, ConvGeometry, CrossbarStore, CsrStore,
    FunctionalStore, Scheme, SynapseStore,
};
use crate::trace::AccessTrace;

use super::{pass_energy, CostModel, EnergyError, PassEnergyReport};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Layer {
    Fc { n_pre: usize, n_post: usize, density: f64 },
    Conv(ConvGeometry),
}

impl Layer {
    /// 728 -> 128 fully connected at 75% density.
    pub fn default_fc() -> Self {
        Layer::Fc { n_pre: 728, n_post: 128, density: 0.75 }
    }

    /// 28x28 input, 3x3 kernel, 32 -> 32 channels.
    pub fn default_conv() -> Self {
        Layer::Conv(ConvGeometry { in_h: 28, in_w: 28, k_h: 3, k_w: 3, c_in: 32, c_out: 32 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub b_w: u32,
    pub forward: PassEnergyReport,
    pub backward: PassEnergyReport,
}

fn row(scheme: Scheme, b_w: u32, fwd: &AccessTrace, bwd: &AccessTrace, model: &CostModel) -> Result<SweepRow, EnergyError> {
    Ok(SweepRow {
        scheme,
        b_w,
        forward: pass_energy(fwd, model)?.with_scheme(scheme),
        backward: pass_energy(bwd, model)?.with_scheme(scheme),
    })
}

fn store_row(store: &dyn SynapseStore<f64>, model: &CostModel) -> Result<SweepRow, EnergyError> {
    row(
        store.scheme(),
        store.weight_bits(),
        &store.forward_pass_trace(),
        &store.backward_pass_trace(),
        model,
    )
}

fn fc_store(
    m: &SynapseMatrix<f64>,
    scheme: Scheme,
    b_w: u32,
    model: &CostModel,
) -> Result<Box<dyn SynapseStore<f64>>, EnergyError> {
    Ok(match scheme {
        Scheme::Crossbar => Box::new(CrossbarStore::build(m, b_w)?),
        Scheme::Csr => Box::new(CsrStore::build(m, b_w)?),
        Scheme::Bitmap => Box::new(BitmapStore::build_with_word(m, b_w, model.w_word)?),
        Scheme::Functional => Box::new(FunctionalStore::fully_connected(m.n_pre(), m.n_post(), m.weights(), b_w)?),
    })
}

fn fc_matrix(n_pre: usize, n_post: usize, density: f64, seed: u64) -> Result<SynapseMatrix<f64>, EnergyError> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(EnergyError::Density(density));
    }
    Ok(SynapseMatrix::random(n_pre, n_post, density, &mut seeded(seed))?)
}

fn conv_kernel(g: &ConvGeometry, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..g.kernel_len()).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// One scheme and width of a fully connected layer with a seeded random mask.
pub fn fc_cell(
    n_pre: usize,
    n_post: usize,
    density: f64,
    scheme: Scheme,
    b_w: u32,
    model: &CostModel,
    seed: u64,
) -> Result<SweepRow, EnergyError> {
    let m = fc_matrix(n_pre, n_post, density, seed)?;
    store_row(fc_store(&m, scheme, b_w, model)?.as_ref(), model)
}

/// One scheme and width of a convolution layer. PB-CSR stores the materialized
/// connectivity; the crossbar baseline is priced from closed-form traces.
pub fn conv_cell(g: &ConvGeometry, scheme: Scheme, b_w: u32, model: &CostModel, seed: u64) -> Result<SweepRow, EnergyError> {
    g.validate()?;
    match scheme {
        Scheme::Crossbar => {
            let (n_pre, n_post) = (g.n_pre(), g.n_post());
            row(
                scheme,
                b_w,
                &crossbar_forward_pass(n_pre, n_post, b_w),
                &crossbar_backward_pass(n_pre, n_post, b_w),
                model,
            )
        }
        Scheme::Functional => store_row(&FunctionalStore::build(*g, &conv_kernel(g, seed), b_w)?, model),
        Scheme::Csr => store_row(&FunctionalStore::build(*g, &conv_kernel(g, seed), b_w)?.to_csr(), model),
        Scheme::Bitmap => Err(EnergyError::Scheme { scheme, layer: "convolution" }),
    }
}

/// Forward and backward energies for every `(b_w, scheme)` pair, ordered by width then scheme.
pub fn layer_sweep(
    layer: &Layer,
    bits: &[u32],
    schemes: &[Scheme],
    model: &CostModel,
    seed: u64,
) -> Result<Vec<SweepRow>, EnergyError> {
    let mut rows = Vec::with_capacity(bits.len() * schemes.len());
    for &b_w in bits {
        for &scheme in schemes {
            rows.push(match layer {
                Layer::Fc { n_pre, n_post, density } => fc_cell(*n_pre, *n_post, *density, scheme, b_w, model, seed)?,
                Layer::Conv(g) => conv_cell(g, scheme, b_w, model, seed)?,
            });
        }
    }
    Ok(rows)
}

/// Active and (unscaled) leakage energy of one forward plus one backward pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SchemeEnergy {
    pub scheme: Scheme,
    pub active_pj: f64,
    pub leakage_pj: f64,
}

impl SchemeEnergy {
    fn from_row(r: &SweepRow) -> Self {
        Self {
            scheme: r.scheme,
            active_pj: r.forward.active_pj + r.backward.active_pj,
            leakage_pj: r.forward.leakage_pj + r.backward.leakage_pj,
        }
    }
}

/// All four schemes on one seeded fully connected instance, in [`Scheme::ALL`] order.
pub fn density_energies(
    n_pre: usize,
    n_post: usize,
    b_w: u32,
    density: f64,
    model: &CostModel,
    seed: u64,
) -> Result<Vec<SchemeEnergy>, EnergyError> {
    let m = fc_matrix(n_pre, n_post, density, seed)?;
    Scheme::ALL
        .iter()
        .map(|&s| Ok(SchemeEnergy::from_row(&store_row(fc_store(&m, s, b_w, model)?.as_ref(), model)?)))
        .collect()
}

/// Reference activity: a crossbar at full density. Returns its (active, leakage) energy.
pub fn leak_reference(n_pre: usize, n_post: usize, b_w: u32, model: &CostModel) -> Result<(f64, f64), EnergyError> {
    let r = row(
        Scheme::Crossbar,
        b_w,
        &crossbar_forward_pass(n_pre, n_post, b_w),
        &crossbar_backward_pass(n_pre, n_post, b_w),
        model,
    )?;
    let e = SchemeEnergy::from_row(&r);
    Ok((e.active_pj, e.leakage_pj))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub density: f64,
    pub leak_fraction: f64,
    /// Leakage multiplier applied to every scheme at this point.
    pub leak_scale: f64,
    pub energies: Vec<SchemeEnergy>,
    pub totals: Vec<(Scheme, f64)>,
    pub winner: Scheme,
    /// `floor(log10(total))` of the winner.
    pub order: i32,
}

/// Scales leakage so that it makes up `leak_fraction` of the reference total, then picks
/// the cheapest scheme (earliest in [`Scheme::ALL`] on ties).
pub fn grid_point(
    density: f64,
    leak_fraction: f64,
    energies: &[SchemeEnergy],
    reference: (f64, f64),
) -> Result<GridPoint, EnergyError> {
    if !(0.0..1.0).contains(&leak_fraction) {
        return Err(EnergyError::LeakFraction(leak_fraction));
    }
    let (a_ref, l_ref) = reference;
    let leak_scale = if leak_fraction == 0.0 {
        0.0
    } else if l_ref > 0.0 {
        leak_fraction / (1.0 - leak_fraction) * a_ref / l_ref
    } else {
        return Err(EnergyError::Constant("a_leak"));
    };
    let totals: Vec<(Scheme, f64)> = energies
        .iter()
        .map(|e| (e.scheme, e.active_pj + leak_scale * e.leakage_pj))
        .collect();
    let &(winner, best) = totals
        .iter()
        .fold(None, |acc: Option<&(Scheme, f64)>, t| match acc {
            Some(a) if a.1 <= t.1 => Some(a),
            _ => Some(t),
        })
        .expect("at least one scheme");
    Ok(GridPoint {
        density,
        leak_fraction,
        leak_scale,
        energies: energies.to_vec(),
        totals,
        winner,
        order: best.log10().floor() as i32,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub n_pre: usize,
    pub n_post: usize,
    pub b_w: u32,
    pub densities: Vec<f64>,
    pub leak_fractions: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_pre: 728,
            n_post: 128,
            b_w: 8,
            densities: linspace(0.05, 1.0, 10),
            leak_fractions: linspace(0.0, 0.9, 10),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if self.densities.len() < 2 || self.leak_fractions.len() < 2 {
            return Err(EnergyError::GridResolution);
        }
        if let Some(&d) = self.densities.iter().find(|&&d| !(d > 0.0 && d <= 1.0)) {
            return Err(EnergyError::Density(d));
        }
        if let Some(&f) = self.leak_fractions.iter().find(|&&f| !(0.0..1.0).contains(&f)) {
            return Err(EnergyError::LeakFraction(f));
        }
        Ok(())
    }
}

/// Full grid, density-major. Density `k` uses the mask seed `derive_seed(seed, k)`.
pub fn sweep_density_leakage(spec: &GridSpec, model: &CostModel, seed: u64) -> Result<Vec<GridPoint>, EnergyError> {
    spec.validate()?;
    let reference = leak_reference(spec.n_pre, spec.n_post, spec.b_w, model)?;
    let mut out = Vec::with_capacity(spec.densities.len() * spec.leak_fractions.len());
    for (k, &d) in spec.densities.iter().enumerate() {
        let energies = density_energies(spec.n_pre, spec.n_post, spec.b_w, d, model, derive_seed(seed, k as u64))?;
        for &f in &spec.leak_fractions {
            out.push(grid_point(d, f, &energies, reference)?);
        }
    }
    Ok(out)
}
